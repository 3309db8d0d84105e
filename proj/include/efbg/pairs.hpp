#pragma once

// Genuine/imposter pair mining from the distribution of pairwise shape RMSE.
// Genuine pairs (label 0) lie below the 1st percentile; imposter pairs
// (label 1) lie within a band around the 25th percentile.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "efbg/preprocess.hpp"

namespace efbg {

struct PairRmse {
  std::uint32_t a = 0;
  std::uint32_t b = 0;  // a < b
  double rmse = 0.0;    // mm
};

/// Root-mean-square of the 21 per-marker distances between two target rows.
double target_rmse(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y);

/// Uniformly samples `budget` distinct unordered pairs (all pairs when the
/// budget covers them) and returns them ordered by (a, b).
std::vector<PairRmse> pairwise_rmse(const RowMatrix& targets, std::size_t budget, std::uint64_t seed);

struct PairThresholds {
  double t_low = 0.0;   // 1st percentile, mm
  double t_high = 0.0;  // 25th percentile, mm
  double band = 0.01;
  bool relative_band = true;  // band * t_high when true, else band in mm

  double band_halfwidth() const { return relative_band ? band * t_high : band; }
};

inline constexpr std::size_t kMinThresholdValues = 100;

PairThresholds compute_thresholds(std::span<const PairRmse> pairs, double band = 0.01,
                                  bool relative_band = true);

struct LabeledPair {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::uint8_t label = 0;  // 0 genuine, 1 imposter
  double rmse = 0.0;
};

/// Label 0 iff rmse < t_low; label 1 iff |rmse - t_high| <= band half-width;
/// every other pair is dropped.
std::vector<LabeledPair> label_pairs(std::span<const PairRmse> pairs, const PairThresholds& t);

/// Same rule for a single value; -1 when the pair is discarded.
int pair_label(double rmse, const PairThresholds& t);

/// Class-balanced, shuffled batches. Both classes are shuffled, the majority
/// class is truncated to the minority size, and each batch holds
/// batch_size / 2 pairs of each label in shuffled order.
std::vector<std::vector<LabeledPair>> build_pair_epoch(std::span<const LabeledPair> pairs,
                                                       std::size_t batch_size, std::uint64_t seed);

struct PairCounts {
  std::size_t genuine = 0;
  std::size_t imposter = 0;
};
PairCounts count_labels(std::span<const LabeledPair> pairs);

}  // namespace efbg
