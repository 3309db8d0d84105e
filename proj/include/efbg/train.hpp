#pragma once

// Training orchestration: dataset splits, transform fitting on the training
// rows, minibatch epochs for the regression and Siamese models, validation
// in absolute millimetres, and early stopping with best-weight restore.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include "efbg/dataset.hpp"
#include "efbg/loss.hpp"
#include "efbg/model.hpp"
#include "efbg/optim.hpp"
#include "efbg/pairs.hpp"
#include "efbg/preprocess.hpp"

namespace efbg {

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Fisher-Yates shuffle by seed, then floor(train n), floor(val n), remainder.
Split split_indices(std::size_t n, std::uint64_t seed, double train_fraction = 0.8,
                    double val_fraction = 0.1);

/// Network-ready views of a dataset. Transforms are fitted on the training
/// rows only and then applied to every row.
struct TrainingData {
  RowMatrix inputs;   // n x 375, transformed
  RowMatrix outputs;  // n x output_dim, transformed
  RowMatrix targets;  // n x 63, absolute mm
  InputTransform input;
  OutputTransformParams output;

  std::size_t size() const noexcept { return static_cast<std::size_t>(targets.rows()); }
  /// First-marker positions, the anchors relative targets are rebuilt from.
  RowMatrix anchors(const std::vector<std::size_t>& rows) const;
};

RowMatrix spectra_matrix(const Dataset& ds);
RowMatrix targets_matrix(const Dataset& ds);

TrainingData prepare_training_data(const Dataset& ds, const std::vector<std::size_t>& train_rows,
                                   InputMethod input, OutputMethod output);

/// Predictions for `rows` in absolute coordinates (n x 63).
RowMatrix predict_rows(Model& model, const TrainingData& data, const std::vector<std::size_t>& rows,
                       std::size_t batch_size = 64);

/// Mean over `rows` of the per-sample shape RMSE in mm. The first marker is
/// excluded for relative targets, whose anchor is ground truth.
double validation_rmse(Model& model, const TrainingData& data, const std::vector<std::size_t>& rows,
                       std::size_t batch_size = 64);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_rmse = 0.0;  // mm
  double seconds = 0.0;
  // Siamese only: mean distance-head output on the validation pairs.
  double genuine_mean = std::numeric_limits<double>::quiet_NaN();
  double imposter_mean = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based, 0 when nothing ran
  double best_val_rmse = std::numeric_limits<double>::infinity();
  bool stopped_early = false;

  /// Delimited table, one row per epoch. Wall time is omitted when
  /// `with_time` is false so histories can be compared byte for byte.
  void write(std::ostream& out, bool with_time = true, char delimiter = ',') const;
};

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::size_t patience = 20;  // consecutive non-improving epochs before stopping
  bool early_stopping = true;
  std::uint64_t seed = 0;
};

/// A resumable training loop: each call to run_epoch trains one epoch and
/// evaluates it. State (model, optimizer moments, epoch counter) persists
/// between calls.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual EpochRecord run_epoch() = 0;
  virtual Model& model() = 0;
  std::size_t epochs_done() const noexcept { return epoch_; }

 protected:
  std::size_t epoch_ = 0;
};

class RegressionTrainer final : public Trainer {
 public:
  RegressionTrainer(Model& model, const TrainingData& data, const Split& split, const OptimizerConfig& optimizer,
                    RegressionLoss loss, double huber_delta, const TrainOptions& options);

  EpochRecord run_epoch() override;
  Model& model() override { return model_; }

 private:
  Model& model_;
  const TrainingData& data_;
  const Split& split_;
  Optimizer optimizer_;
  RegressionLoss loss_;
  double delta_;
  TrainOptions options_;
};

struct SiameseOptions {
  CompositeLossParams loss;
  std::size_t pair_budget = 2000000;
  double band = 0.01;
  bool relative_band = true;
};

/// Mines labeled pairs among `rows` (returned as dataset indices) using
/// thresholds estimated from those same rows.
struct MinedPairs {
  PairThresholds thresholds;
  std::vector<LabeledPair> pairs;
};
MinedPairs mine_pairs(const RowMatrix& targets, const std::vector<std::size_t>& rows, std::size_t budget,
                      std::uint64_t seed, double band = 0.01, bool relative_band = true);

class SiameseTrainer final : public Trainer {
 public:
  /// Pairs are mined on the training split; validation pairs reuse the
  /// training thresholds on the validation split.
  SiameseTrainer(SiameseModel& model, const TrainingData& data, const Split& split,
                 const OptimizerConfig& optimizer, const SiameseOptions& siamese, const TrainOptions& options);

  EpochRecord run_epoch() override;
  Model& model() override { return model_; }

  const MinedPairs& train_pairs() const noexcept { return train_pairs_; }
  const std::vector<LabeledPair>& val_pairs() const noexcept { return val_pairs_; }

 private:
  SiameseModel& model_;
  const TrainingData& data_;
  const Split& split_;
  Optimizer optimizer_;
  SiameseOptions siamese_;
  TrainOptions options_;
  MinedPairs train_pairs_;
  std::vector<LabeledPair> val_pairs_;
};

/// Mean distance-head output over genuine and imposter pairs (inference mode).
std::pair<double, double> pair_output_means(SiameseModel& model, const TrainingData& data,
                                            const std::vector<LabeledPair>& pairs, std::size_t batch_size = 64);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs epochs until the budget is spent or validation RMSE fails to improve
/// for `patience` consecutive epochs, then restores the best weights.
TrainHistory fit(Trainer& trainer, const TrainOptions& options, const EpochCallback& on_epoch = {});

}  // namespace efbg
