#include "efbg/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "efbg/checkpoint.hpp"
#include "efbg/dataset.hpp"
#include "efbg/error.hpp"
#include "efbg/log.hpp"
#include "efbg/simulator.hpp"

#ifndef EFBG_PRESETS_DIR
#define EFBG_PRESETS_DIR "presets"
#endif

namespace efbg::cli {

using nlohmann::json;

namespace {

std::string file_digest(const std::vector<std::uint8_t>& bytes) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << fnv1a64(bytes);
  return out.str();
}

std::unique_ptr<Model> make_model(const RunConfig& c, std::size_t output_dim, std::uint64_t seed) {
  if (c.siamese.enabled) return std::make_unique<SiameseModel>(c.architecture, seed);
  return std::make_unique<RegressionModel>(c.architecture, output_dim, c.dropout, seed);
}

std::unique_ptr<Trainer> make_trainer(const RunConfig& c, Model& model, const TrainingData& data, const Split& split,
                                      const TrainOptions& options) {
  if (c.siamese.enabled) {
    return std::make_unique<SiameseTrainer>(static_cast<SiameseModel&>(model), data, split, c.optimizer,
                                            c.siamese_options(), options);
  }
  return std::make_unique<RegressionTrainer>(model, data, split, c.optimizer, c.loss, c.huber_delta, options);
}

Dataset load_config_dataset(const RunConfig& c) {
  if (c.dataset.empty()) throw ConfigError("config.dataset is not set");
  return read_dataset(c.dataset);
}

}  // namespace

json cmd_generate(std::size_t n, std::uint64_t seed, const fs::path& out, const GeneratorConfig& generator) {
  if (n == 0) throw ConfigError("--n must be positive");
  const Dataset ds = generate_dataset(n, seed, generator);
  const auto bytes = encode_dataset(ds);
  write_file_bytes(out, bytes);
  json gen = generator;
  json side = {{"n_samples", n},
               {"seed", seed},
               {"generator", gen},
               {"config_digest", digest_hex(gen)},
               {"file_digest", file_digest(bytes)}};
  write_text_file(sidecar_path(out), side.dump(2) + "\n");
  return side;
}

TrainOutcome cmd_train(const RunConfig& config, const fs::path& out_checkpoint, std::ostream* progress) {
  config.validate();
  const Dataset ds = load_config_dataset(config);
  const Split split = config.make_split(ds.n_samples);
  const TrainingData data = prepare_training_data(ds, split.train, config.input, config.output);
  auto model = make_model(config, data.output.output_dim(), derive_seed(config.seed, 0x6d6f64656cULL));
  auto trainer = make_trainer(config, *model, data, split, config.training);

  TrainOutcome out;
  out.history = fit(*trainer, config.training, [&](const EpochRecord& r) {
    if (!progress) return;
    *progress << "epoch " << r.epoch << " loss " << r.train_loss << " val_rmse_mm " << r.val_rmse;
    if (!std::isnan(r.genuine_mean)) *progress << " genuine " << r.genuine_mean << " imposter " << r.imposter_mean;
    *progress << " (" << r.seconds << " s)\n" << std::flush;
  });

  const json cfg = run_config_to_json(config);
  json extra = {{"config", cfg},
                {"config_digest", digest_hex(cfg)},
                {"best_epoch", out.history.best_epoch},
                {"best_val_rmse_mm", out.history.best_val_rmse},
                {"epochs_run", out.history.epochs.size()}};
  save_checkpoint(out_checkpoint, *model, data.input, data.output, extra);
  out.manifest = load_checkpoint(out_checkpoint).manifest;

  out.history_path = out_checkpoint;
  out.history_path += ".history.csv";
  std::ostringstream h;
  out.history.write(h, false);
  write_text_file(out.history_path, h.str());
  return out;
}

fs::path presets_dir() {
  if (const char* env = std::getenv("EFBG_PRESETS")) return env;
  return EFBG_PRESETS_DIR;
}

SearchSpace load_space(const std::string& name_or_path) {
  fs::path p = name_or_path;
  if (!fs::exists(p)) p = presets_dir() / (name_or_path + ".json");
  std::ifstream in(p);
  if (!in) throw IoError("search space '" + name_or_path + "' not found (looked for " + p.string() + ")");
  try {
    return SearchSpace::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

namespace {

class ConfigRunner final : public TrialRunner {
 public:
  ConfigRunner(const RunConfig& base, const TrainingData& data, const Split& split)
      : base_(base), data_(data), split_(split) {}

  double run(const TrialSpec& trial, std::size_t from, std::size_t to) override {
    auto it = live_.find(trial.id);
    if (it == live_.end() || it->second.trainer->epochs_done() != from) {
      // Rebuild from scratch; trials are hermetic, so this reproduces the state.
      State s;
      s.config = base_;
      apply_trial(s.config, trial.config);
      s.config.training.seed = trial.seed;
      s.model = make_model(s.config, data_.output.output_dim(), derive_seed(trial.seed, 0x6d6f64656cULL));
      s.trainer = make_trainer(s.config, *s.model, data_, split_, s.config.training);
      live_.erase(trial.id);
      it = live_.emplace(trial.id, std::move(s)).first;
    }
    double objective = 0.0;
    while (it->second.trainer->epochs_done() < to) objective = it->second.trainer->run_epoch().val_rmse;
    log::info("trial " + std::to_string(trial.id) + " epochs " + std::to_string(to) + " val_rmse_mm " +
              std::to_string(objective));
    return objective;
  }

  void release(std::size_t id) override { live_.erase(id); }

 private:
  struct State {
    RunConfig config;
    std::unique_ptr<Model> model;
    std::unique_ptr<Trainer> trainer;
  };
  const RunConfig& base_;
  const TrainingData& data_;
  const Split& split_;
  std::map<std::size_t, State> live_;
};

}  // namespace

TuneOutcome cmd_tune(const RunConfig& config, const std::string& space_name, const fs::path& ledger, bool resume) {
  config.validate();
  const SearchSpace space = load_space(space_name.empty() ? config.hyperband.space : space_name);
  const Dataset ds = load_config_dataset(config);
  const Split split = config.make_split(ds.n_samples);
  const TrainingData data = prepare_training_data(ds, split.train, config.input, config.output);

  HyperbandOptions opt;
  opt.max_epochs = config.hyperband.max_epochs;
  opt.eta = config.hyperband.eta;
  opt.seed = config.seed;
  if (resume && fs::exists(ledger)) {
    std::ifstream in(ledger);
    opt.replay = read_ledger(in);
  }
  std::ofstream out(ledger, resume ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot write trial ledger '" + ledger.string() + "'");
  opt.ledger = &out;

  ConfigRunner runner(config, data, split);
  TuneOutcome t;
  t.result = run_hyperband(space, runner, opt);
  t.best = config;
  if (!t.result.ranked.empty() && t.result.ranked.front().status == TrialStatus::Ok) {
    apply_trial(t.best, t.result.ranked.front().trial.config);
  }
  return t;
}

EvalOutcome cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const std::string& split_name,
                     const std::optional<fs::path>& report) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = read_dataset(dataset);
  RunConfig cfg;
  if (ck.manifest.contains("config")) cfg = parse_run_config(ck.manifest["config"]);
  const Split split = cfg.make_split(ds.n_samples);
  std::vector<std::size_t> rows;
  if (split_name == "test") rows = split.test;
  else if (split_name == "val") rows = split.val;
  else if (split_name == "train") rows = split.train;
  else if (split_name == "all") for (std::size_t i = 0; i < ds.n_samples; ++i) rows.push_back(i);
  else throw ConfigError("unknown split '" + split_name + "' (expected train, val, test or all)");
  if (rows.empty()) throw DomainError("split '" + split_name + "' is empty");

  const RowMatrix spectra = spectra_matrix(ds), targets = targets_matrix(ds);
  RowMatrix s(static_cast<Eigen::Index>(rows.size()), spectra.cols());
  RowMatrix anchors(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.row(static_cast<Eigen::Index>(i)) = spectra.row(static_cast<Eigen::Index>(rows[i]));
    anchors.row(static_cast<Eigen::Index>(i)) = targets.block(static_cast<Eigen::Index>(rows[i]), 0, 1, 3);
  }
  const RowMatrix pred = predict_shapes(*ck.model, ck.input, ck.output, s, anchors);
  const bool exclude_first = ck.output.method == OutputMethod::M4;

  EvalOutcome e;
  e.sample_ids = rows;
  std::vector<double> tips, rmses;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    e.reports.push_back(evaluate_shape(row_to_chain(targets.row(static_cast<Eigen::Index>(rows[i]))),
                                       row_to_chain(pred.row(static_cast<Eigen::Index>(i))), exclude_first));
    tips.push_back(e.reports.back().tip_error);
    rmses.push_back(e.reports.back().rmse);
  }
  e.tip_error = summarize(tips);
  e.rmse = summarize(rmses);
  if (report) {
    std::ostringstream out;
    write_report(out, e.reports, e.sample_ids);
    write_text_file(*report, out.str());
  }
  return e;
}

PairsOutcome cmd_pairs(const fs::path& dataset, std::size_t budget, std::uint64_t seed,
                       const std::optional<fs::path>& out) {
  const Dataset ds = read_dataset(dataset);
  const auto raw = pairwise_rmse(targets_matrix(ds), budget, seed);
  PairsOutcome p;
  p.sampled = raw.size();
  p.thresholds = compute_thresholds(raw);
  const auto labeled = label_pairs(raw, p.thresholds);
  p.counts = count_labels(labeled);
  if (out) {
    std::ostringstream o;
    o.precision(17);
    o << "# sampled_pairs," << p.sampled << "\n# t_low_mm," << p.thresholds.t_low << "\n# t_high_mm,"
      << p.thresholds.t_high << "\n# band_mm," << p.thresholds.band_halfwidth() << "\n# genuine,"
      << p.counts.genuine << "\n# imposter," << p.counts.imposter << "\na,b,rmse_mm,label\n";
    for (const auto& q : labeled) o << q.a << ',' << q.b << ',' << q.rmse << ',' << int(q.label) << '\n';
    write_text_file(*out, o.str());
  }
  return p;
}

}  // namespace efbg::cli
