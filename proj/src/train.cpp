#include "efbg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <tuple>

#include "efbg/error.hpp"
#include "efbg/log.hpp"
#include "efbg/metrics.hpp"
#include "efbg/random.hpp"

namespace efbg {

Split split_indices(std::size_t n, std::uint64_t seed, double train_fraction, double val_fraction) {
  if (n < 10) throw DomainError("split needs at least 10 samples, got " + std::to_string(n));
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || !(train_fraction + val_fraction < 1.0)) {
    throw ConfigError("split fractions must be positive and leave a non-empty test share");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x73706c6974ULL));
  rng.shuffle(idx.begin(), idx.end());
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n) + 1e-9));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

RowMatrix spectra_matrix(const Dataset& ds) {
  RowMatrix m(static_cast<Eigen::Index>(ds.n_samples), static_cast<Eigen::Index>(kInputSize));
  for (std::size_t i = 0; i < ds.n_samples * kInputSize; ++i) m.data()[i] = ds.spectra[i];
  return m;
}

RowMatrix targets_matrix(const Dataset& ds) {
  RowMatrix m(static_cast<Eigen::Index>(ds.n_samples), static_cast<Eigen::Index>(kTargetSize));
  for (std::size_t i = 0; i < ds.n_samples * kTargetSize; ++i) m.data()[i] = ds.targets[i];
  return m;
}

namespace {

RowMatrix gather(const RowMatrix& m, const std::vector<std::size_t>& rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

FTensor gather_tensor(const RowMatrix& m, const std::vector<std::size_t>& rows) {
  const auto d = static_cast<std::size_t>(m.cols());
  FTensor t(ad::Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = m.row(static_cast<Eigen::Index>(rows[i])).data();
    for (std::size_t j = 0; j < d; ++j) t.data[i * d + j] = static_cast<float>(src[j]);
  }
  return t;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string where(std::size_t epoch, std::size_t batch) {
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
}

void step_with_context(Optimizer& opt, std::size_t epoch, std::size_t batch) {
  try {
    opt.step();
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(e.what()) + " (" + where(epoch, batch) + ")");
  }
}

}  // namespace

RowMatrix TrainingData::anchors(const std::vector<std::size_t>& rows) const {
  RowMatrix a(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = targets.block(static_cast<Eigen::Index>(rows[i]), 0, 1, 3);
  return a;
}

TrainingData prepare_training_data(const Dataset& ds, const std::vector<std::size_t>& train_rows, InputMethod input,
                                   OutputMethod output) {
  if (train_rows.empty()) throw DomainError("no training rows to fit transforms on");
  TrainingData d;
  const RowMatrix spectra = spectra_matrix(ds);
  d.targets = targets_matrix(ds);
  d.input = InputTransform::fit(input, gather(spectra, train_rows));
  d.output = fit_output(output, gather(d.targets, train_rows));
  d.inputs = d.input.apply(spectra);
  d.outputs = apply_output(d.output, d.targets);
  return d;
}

RowMatrix predict_rows(Model& model, const TrainingData& data, const std::vector<std::size_t>& rows,
                       std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t dim = model.output_dim();
  RowMatrix z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t stop = std::min(rows.size(), start + batch_size);
    const std::vector<std::size_t> batch(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                         rows.begin() + static_cast<std::ptrdiff_t>(stop));
    FTape tape;
    FVar y = model.forward(tape, make_input_batch(data.inputs, batch, model.extractor_config()), ad::Mode::Infer);
    const auto& v = y.value().data;
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j) z(static_cast<Eigen::Index>(start + i), static_cast<Eigen::Index>(j)) = v[i * dim + j];
  }
  return invert_output(data.output, z, data.anchors(rows));
}

double validation_rmse(Model& model, const TrainingData& data, const std::vector<std::size_t>& rows,
                       std::size_t batch_size) {
  if (rows.empty()) throw DomainError("validation split is empty");
  const RowMatrix pred = predict_rows(model, data, rows, batch_size);
  const bool exclude_first = data.output.method == OutputMethod::M4;
  double sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sum += shape_rmse(row_to_chain(data.targets.row(static_cast<Eigen::Index>(rows[i]))),
                      row_to_chain(pred.row(static_cast<Eigen::Index>(i))), exclude_first);
  }
  return sum / static_cast<double>(rows.size());
}

void TrainHistory::write(std::ostream& out, bool with_time, char delimiter) const {
  const bool siamese = std::any_of(epochs.begin(), epochs.end(), [](const EpochRecord& r) {
    return !std::isnan(r.genuine_mean) || !std::isnan(r.imposter_mean);
  });
  out << "epoch" << delimiter << "train_loss" << delimiter << "val_rmse_mm";
  if (with_time) out << delimiter << "seconds";
  if (siamese) out << delimiter << "genuine_mean" << delimiter << "imposter_mean";
  out << '\n';
  const auto old = out.precision(17);
  for (const auto& r : epochs) {
    out << r.epoch << delimiter << r.train_loss << delimiter << r.val_rmse;
    if (with_time) out << delimiter << r.seconds;
    if (siamese) out << delimiter << r.genuine_mean << delimiter << r.imposter_mean;
    out << '\n';
  }
  out << "# best_epoch" << delimiter << best_epoch << '\n';
  out << "# best_val_rmse_mm" << delimiter << best_val_rmse << '\n';
  out.precision(old);
}

// ---- regression ------------------------------------------------------------

RegressionTrainer::RegressionTrainer(Model& model, const TrainingData& data, const Split& split,
                                     const OptimizerConfig& optimizer, RegressionLoss loss, double huber_delta,
                                     const TrainOptions& options)
    : model_(model),
      data_(data),
      split_(split),
      optimizer_(optimizer, model.parameters()),
      loss_(loss),
      delta_(huber_delta),
      options_(options) {
  if (options.batch_size == 0) throw ConfigError("training.batch_size must be positive");
  if (split.train.empty()) throw DomainError("training split is empty");
  if (static_cast<std::size_t>(data.outputs.cols()) != model.output_dim()) {
    throw ConfigError("output transform " + std::string(to_string(data.output.method)) + " yields " +
                      std::to_string(data.outputs.cols()) + " values but the model predicts " +
                      std::to_string(model.output_dim()));
  }
}

EpochRecord RegressionTrainer::run_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t epoch = ++epoch_;
  std::vector<std::size_t> order = split_.train;
  Rng rng(derive_seed(options_.seed, 0x65706f6368ULL + epoch));
  rng.shuffle(order.begin(), order.end());

  double loss_sum = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += options_.batch_size, ++batch_index) {
    const std::size_t stop = std::min(order.size(), start + options_.batch_size);
    const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                        order.begin() + static_cast<std::ptrdiff_t>(stop));
    optimizer_.zero_grad();
    FTape tape;
    const std::uint64_t drop_seed = derive_seed(derive_seed(options_.seed, epoch), batch_index);
    FVar y = model_.forward(tape, make_input_batch(data_.inputs, rows, model_.extractor_config()), ad::Mode::Train,
                            drop_seed);
    FVar loss = ad::regression_loss(loss_, y, gather_tensor(data_.outputs, rows), delta_);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw TrainingError("non-finite training loss at " + where(epoch, batch_index));
    tape.backward(loss);
    step_with_context(optimizer_, epoch, batch_index);
    loss_sum += value * static_cast<double>(rows.size());
  }

  EpochRecord r;
  r.epoch = epoch;
  r.train_loss = loss_sum / static_cast<double>(order.size());
  r.val_rmse = validation_rmse(model_, data_, split_.val, options_.batch_size);
  r.seconds = seconds_since(t0);
  return r;
}

// ---- siamese ---------------------------------------------------------------

MinedPairs mine_pairs(const RowMatrix& targets, const std::vector<std::size_t>& rows, std::size_t budget,
                      std::uint64_t seed, double band, bool relative_band) {
  const RowMatrix sub = gather(targets, rows);
  const auto raw = pairwise_rmse(sub, budget, seed);
  MinedPairs m;
  m.thresholds = compute_thresholds(raw, band, relative_band);
  m.pairs = label_pairs(raw, m.thresholds);
  for (auto& p : m.pairs) {
    p.a = static_cast<std::uint32_t>(rows[p.a]);
    p.b = static_cast<std::uint32_t>(rows[p.b]);
  }
  return m;
}

namespace {

// Validation pairs per class; enough for a stable mean without dominating epoch time.
constexpr std::size_t kValPairsPerClass = 256;

std::vector<LabeledPair> validation_pairs(const RowMatrix& targets, const std::vector<std::size_t>& rows,
                                          const PairThresholds& t, std::size_t budget, std::uint64_t seed) {
  if (rows.size() < 2) return {};
  const RowMatrix sub = gather(targets, rows);
  std::vector<LabeledPair> genuine, imposter;
  for (const auto& p : label_pairs(pairwise_rmse(sub, budget, seed), t)) {
    LabeledPair q = p;
    q.a = static_cast<std::uint32_t>(rows[p.a]);
    q.b = static_cast<std::uint32_t>(rows[p.b]);
    (q.label == 0 ? genuine : imposter).push_back(q);
  }
  Rng rng(derive_seed(seed, 1));
  rng.shuffle(genuine.begin(), genuine.end());
  rng.shuffle(imposter.begin(), imposter.end());
  genuine.resize(std::min(genuine.size(), kValPairsPerClass));
  imposter.resize(std::min(imposter.size(), kValPairsPerClass));
  genuine.insert(genuine.end(), imposter.begin(), imposter.end());
  return genuine;
}

void pair_rows(const std::vector<LabeledPair>& batch, std::vector<std::size_t>& a, std::vector<std::size_t>& b,
               std::vector<float>& labels) {
  a.clear();
  b.clear();
  labels.clear();
  for (const auto& p : batch) {
    a.push_back(p.a);
    b.push_back(p.b);
    labels.push_back(static_cast<float>(p.label));
  }
}

}  // namespace

SiameseTrainer::SiameseTrainer(SiameseModel& model, const TrainingData& data, const Split& split,
                               const OptimizerConfig& optimizer, const SiameseOptions& siamese,
                               const TrainOptions& options)
    : model_(model),
      data_(data),
      split_(split),
      optimizer_(optimizer, model.parameters()),
      siamese_(siamese),
      options_(options) {
  siamese.loss.validate();
  if (options.batch_size < 2 || options.batch_size % 2 != 0) {
    throw ConfigError("siamese training needs an even batch size >= 2");
  }
  if (data.output.method != OutputMethod::M4) {
    throw ConfigError("siamese training predicts relative coordinates; output_method must be M4");
  }
  train_pairs_ = mine_pairs(data.targets, split.train, siamese.pair_budget, derive_seed(options.seed, 0x70616972ULL),
                            siamese.band, siamese.relative_band);
  const auto counts = count_labels(train_pairs_.pairs);
  log::info("siamese pairs: " + std::to_string(counts.genuine) + " genuine, " + std::to_string(counts.imposter) +
            " imposter");
  val_pairs_ = validation_pairs(data.targets, split.val, train_pairs_.thresholds, siamese.pair_budget,
                                derive_seed(options.seed, 0x76616cULL));
}

EpochRecord SiameseTrainer::run_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t epoch = ++epoch_;
  const auto batches =
      build_pair_epoch(train_pairs_.pairs, options_.batch_size, derive_seed(options_.seed, 0x65706f6368ULL + epoch));

  double loss_sum = 0.0;
  std::size_t seen = 0;
  std::vector<std::size_t> a, b;
  std::vector<float> labels;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    if (batches[bi].size() < 2) continue;  // the distance head normalizes over the batch
    pair_rows(batches[bi], a, b, labels);
    optimizer_.zero_grad();
    FTape tape;
    const auto& cfg = model_.extractor_config();
    SiameseOutputs out =
        model_.forward_siamese(tape, make_input_batch(data_.inputs, a, cfg), make_input_batch(data_.inputs, b, cfg),
                               ad::Mode::Train);
    FVar loss = ad::composite_loss(labels, out.y_pred, gather_tensor(data_.outputs, a), out.y_a,
                                   gather_tensor(data_.outputs, b), out.y_b, siamese_.loss);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw TrainingError("non-finite training loss at " + where(epoch, bi));
    tape.backward(loss);
    step_with_context(optimizer_, epoch, bi);
    loss_sum += value * static_cast<double>(labels.size());
    seen += labels.size();
  }

  EpochRecord r;
  r.epoch = epoch;
  r.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
  r.val_rmse = validation_rmse(model_, data_, split_.val, options_.batch_size);
  std::tie(r.genuine_mean, r.imposter_mean) = pair_output_means(model_, data_, val_pairs_, options_.batch_size);
  r.seconds = seconds_since(t0);
  return r;
}

std::pair<double, double> pair_output_means(SiameseModel& model, const TrainingData& data,
                                            const std::vector<LabeledPair>& pairs, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  std::vector<std::size_t> a, b;
  std::vector<float> labels;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t stop = std::min(pairs.size(), start + batch_size);
    const std::vector<LabeledPair> batch(pairs.begin() + static_cast<std::ptrdiff_t>(start),
                                         pairs.begin() + static_cast<std::ptrdiff_t>(stop));
    pair_rows(batch, a, b, labels);
    FTape tape;
    const auto& cfg = model.extractor_config();
    SiameseOutputs out = model.forward_siamese(tape, make_input_batch(data.inputs, a, cfg),
                                               make_input_batch(data.inputs, b, cfg), ad::Mode::Infer);
    const auto& v = out.y_pred.value().data;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      sum[batch[i].label] += v[i];
      ++count[batch[i].label];
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {count[0] ? sum[0] / static_cast<double>(count[0]) : nan,
          count[1] ? sum[1] / static_cast<double>(count[1]) : nan};
}

// ---- early stopping --------------------------------------------------------

TrainHistory fit(Trainer& trainer, const TrainOptions& options, const EpochCallback& on_epoch) {
  TrainHistory h;
  std::vector<FTensor> best;
  std::size_t wait = 0;
  for (std::size_t e = 0; e < options.epochs; ++e) {
    const EpochRecord r = trainer.run_epoch();
    h.epochs.push_back(r);
    if (on_epoch) on_epoch(r);
    if (r.val_rmse < h.best_val_rmse) {
      h.best_val_rmse = r.val_rmse;
      h.best_epoch = r.epoch;
      best = trainer.model().snapshot();
      wait = 0;
    } else if (options.early_stopping && ++wait >= std::max<std::size_t>(options.patience, 1)) {
      h.stopped_early = true;
      break;
    }
  }
  if (!best.empty()) trainer.model().restore(best);
  return h;
}

}  // namespace efbg
