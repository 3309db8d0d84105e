// efbg: dataset generation, training, tuning, evaluation and pair diagnostics.
// Failures print one line "error <kind> <code>: <message>" to stderr and exit
// with the error kind's code.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "efbg/commands.hpp"
#include "efbg/error.hpp"
#include "efbg/log.hpp"

namespace {

using namespace efbg;
namespace fs = std::filesystem;

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

void print_box(const char* label, const BoxStats& b) {
  std::cout << std::fixed << std::setprecision(3) << label << ": median " << b.median << " mm, q1 " << b.q1
            << " mm, q3 " << b.q3 << " mm, mean " << b.mean << " mm, outliers " << b.outliers.size() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-FBG shape sensing: simulate spectra, train CNN and Siamese shape regressors"};
  app.require_subcommand(1);
  std::string log_level;
  app.add_option("--log", log_level, "quiet, warn, info or debug (default: $EFBG_LOG or warn)")
      ->check(CLI::IsMember({"quiet", "warn", "info", "debug"}));

  // generate
  auto* gen = app.add_subcommand("generate", "Simulate a dataset file and its JSON sidecar");
  std::size_t n = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_config;
  gen->add_option("--n", n, "Number of samples")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output dataset path")->required();
  gen->add_option("--config", gen_config, "Run configuration whose 'generator' section is used");

  // train
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  std::string train_config, train_out;
  train->add_option("--config", train_config, "Run configuration JSON")->required();
  train->add_option("--out-checkpoint", train_out, "Checkpoint path")->required();

  // tune
  auto* tune = app.add_subcommand("tune", "Hyperband search over a preset space");
  std::string tune_config, tune_space, tune_ledger;
  bool tune_resume = false;
  tune->add_option("--config", tune_config, "Run configuration JSON")->required();
  tune->add_option("--space", tune_space, "layers, training, siamese or a space file (default: config)");
  tune->add_option("--out-ledger", tune_ledger, "Line-delimited trial ledger")->required();
  tune->add_flag("--resume", tune_resume, "Reuse evaluations recorded in an existing ledger");

  // eval
  auto* eval = app.add_subcommand("eval", "Shape error report for a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--dataset", eval_data, "Dataset path")->required();
  eval->add_option("--split", eval_split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval->add_option("--out", eval_out, "Per-sample report table (CSV)");

  // pairs
  auto* pairs = app.add_subcommand("pairs", "Pair thresholds and labeled-pair diagnostics");
  std::string pairs_data, pairs_out;
  std::size_t budget = 2000000;
  std::uint64_t pairs_seed = 0;
  pairs->add_option("--dataset", pairs_data, "Dataset path")->required();
  pairs->add_option("--budget", budget, "Number of sampled pairs");
  pairs->add_option("--seed", pairs_seed, "Sampling seed");
  pairs->add_option("--out", pairs_out, "Labeled pair table (CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (log_level == "quiet") log::set_level(log::Level::Quiet);
  if (log_level == "warn") log::set_level(log::Level::Warn);
  if (log_level == "info") log::set_level(log::Level::Info);
  if (log_level == "debug") log::set_level(log::Level::Debug);

  try {
    if (*gen) {
      GeneratorConfig g;
      if (!gen_config.empty()) g = load_run_config(gen_config).generator;
      const auto side = cli::cmd_generate(n, gen_seed, gen_out, g);
      std::cout << "wrote " << gen_out << " (" << n << " samples, digest " << side["file_digest"].get<std::string>()
                << ")\n";
    } else if (*train) {
      const RunConfig cfg = load_run_config(train_config);
      const auto r = cli::cmd_train(cfg, train_out, &std::cerr);
      std::cout << "best epoch " << r.history.best_epoch << " of " << r.history.epochs.size()
                << ", validation rmse " << r.history.best_val_rmse << " mm\n"
                << "wrote " << train_out << " and " << r.history_path.string() << '\n';
    } else if (*tune) {
      const RunConfig cfg = load_run_config(tune_config);
      const auto t = cli::cmd_tune(cfg, tune_space, tune_ledger, tune_resume);
      std::cout << "rank,trial,bracket,epochs,objective_mm,status,config\n";
      std::size_t rank = 1;
      for (const auto& r : t.result.ranked) {
        std::cout << rank++ << ',' << r.trial.id << ',' << r.trial.bracket << ',' << r.epochs_trained << ','
                  << r.objective << ',' << to_string(r.status) << ",\"" << r.trial.config.dump() << "\"\n";
      }
    } else if (*eval) {
      const auto e = cli::cmd_eval(eval_ckpt, eval_data, eval_split, optional_path(eval_out));
      std::cout << e.reports.size() << " samples (" << eval_split << ")\n";
      print_box("tip error", e.tip_error);
      print_box("shape rmse", e.rmse);
    } else if (*pairs) {
      const auto p = cli::cmd_pairs(pairs_data, budget, pairs_seed, optional_path(pairs_out));
      std::cout << std::setprecision(6) << "pairs " << p.sampled << ", t_low " << p.thresholds.t_low
                << " mm, t_high " << p.thresholds.t_high << " mm, genuine " << p.counts.genuine << ", imposter "
                << p.counts.imposter << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error " << to_string(e.kind()) << ' ' << static_cast<int>(e.kind()) << ": " << one_line(e.what()) << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error internal 1: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
