#include "efbg/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "efbg/error.hpp"
#include "efbg/log.hpp"
#include "efbg/metrics.hpp"
#include "efbg/random.hpp"

namespace efbg {

double target_rmse(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  if (x.size() != y.size() || x.size() % 3 != 0 || x.size() == 0) {
    throw ShapeError("target rows must hold the same number of 3-D markers");
  }
  const Eigen::Index markers = x.size() / 3;
  double s = 0.0;
  for (Eigen::Index k = 0; k < markers; ++k) {
    const double dx = x(3 * k) - y(3 * k), dy = x(3 * k + 1) - y(3 * k + 1), dz = x(3 * k + 2) - y(3 * k + 2);
    s += dx * dx + dy * dy + dz * dz;
  }
  return std::sqrt(s / static_cast<double>(markers));
}

namespace {

// Linear index over pairs (a, b), a < b, in row-major order.
std::pair<std::uint32_t, std::uint32_t> unrank_pair(std::uint64_t r, std::uint64_t n) {
  // Row a starts at a*n - a*(a+1)/2.
  auto start = [n](std::uint64_t a) { return a * n - a * (a + 1) / 2; };
  const double nd = static_cast<double>(n);
  auto a = static_cast<std::uint64_t>(
      std::floor(nd - 0.5 - std::sqrt((nd - 0.5) * (nd - 0.5) - 2.0 * static_cast<double>(r))));
  while (a > 0 && start(a) > r) --a;
  while (start(a + 1) <= r) ++a;
  const std::uint64_t b = a + 1 + (r - start(a));
  return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
}

}  // namespace

std::vector<PairRmse> pairwise_rmse(const RowMatrix& targets, std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw ConfigError("pair budget must be positive");
  const auto n = static_cast<std::uint64_t>(targets.rows());
  if (n < 2) throw DomainError("pair mining needs at least two samples");
  if (n > UINT32_MAX) throw DomainError("too many samples for pair indices");
  const std::uint64_t total = n * (n - 1) / 2;

  std::vector<std::uint64_t> ranks;
  if (budget >= total) {
    ranks.resize(total);
    for (std::uint64_t r = 0; r < total; ++r) ranks[r] = r;
  } else {
    // Floyd's sampling of `budget` distinct ranks from [0, total).
    Rng rng(seed);
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(budget * 2);
    for (std::uint64_t j = total - budget; j < total; ++j) {
      const std::uint64_t t = rng.below(j + 1);
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    ranks.assign(chosen.begin(), chosen.end());
    std::sort(ranks.begin(), ranks.end());
  }

  std::vector<PairRmse> out(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    const auto [a, b] = unrank_pair(ranks[i], n);
    out[i] = {a, b, target_rmse(targets.row(a), targets.row(b))};
  }
  return out;
}

PairThresholds compute_thresholds(std::span<const PairRmse> pairs, double band, bool relative_band) {
  if (pairs.size() < kMinThresholdValues) {
    throw DomainError("threshold estimation needs at least " + std::to_string(kMinThresholdValues) +
                      " pairwise RMSE values, got " + std::to_string(pairs.size()));
  }
  if (!(band >= 0.0)) throw ConfigError("pair band must be non-negative");
  std::vector<double> v;
  v.reserve(pairs.size());
  for (const auto& p : pairs) v.push_back(p.rmse);
  std::sort(v.begin(), v.end());
  PairThresholds t;
  t.t_low = percentile_sorted(v, 1.0);
  t.t_high = percentile_sorted(v, 25.0);
  t.band = band;
  t.relative_band = relative_band;
  if (!(t.t_low > 0.0 && t.t_low < t.t_high)) {
    throw DomainError("degenerate pair thresholds: t_low = " + std::to_string(t.t_low) +
                      " mm, t_high = " + std::to_string(t.t_high) + " mm");
  }
  log::info("pair thresholds from " + std::to_string(v.size()) + " values: t_low " + std::to_string(t.t_low) +
            " mm, t_high " + std::to_string(t.t_high) + " mm (standard error ~ 1/sqrt(n) = " +
            std::to_string(1.0 / std::sqrt(static_cast<double>(v.size()))) + ")");
  return t;
}

int pair_label(double rmse, const PairThresholds& t) {
  if (rmse < t.t_low) return 0;
  if (std::abs(rmse - t.t_high) <= t.band_halfwidth()) return 1;
  return -1;
}

std::vector<LabeledPair> label_pairs(std::span<const PairRmse> pairs, const PairThresholds& t) {
  std::vector<LabeledPair> out;
  for (const auto& p : pairs) {
    const int l = pair_label(p.rmse, t);
    if (l >= 0) out.push_back({p.a, p.b, static_cast<std::uint8_t>(l), p.rmse});
  }
  return out;
}

PairCounts count_labels(std::span<const LabeledPair> pairs) {
  PairCounts c;
  for (const auto& p : pairs) (p.label == 0 ? c.genuine : c.imposter)++;
  return c;
}

std::vector<std::vector<LabeledPair>> build_pair_epoch(std::span<const LabeledPair> pairs, std::size_t batch_size,
                                                       std::uint64_t seed) {
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("pair batch size must be even and >= 2");
  std::vector<LabeledPair> genuine, imposter;
  for (const auto& p : pairs) (p.label == 0 ? genuine : imposter).push_back(p);
  if (genuine.empty() || imposter.empty()) {
    throw DomainError("pair epoch needs both classes (genuine " + std::to_string(genuine.size()) + ", imposter " +
                      std::to_string(imposter.size()) + "); enlarge the pair budget");
  }
  Rng rng(seed);
  rng.shuffle(genuine.begin(), genuine.end());
  rng.shuffle(imposter.begin(), imposter.end());
  const std::size_t m = std::min(genuine.size(), imposter.size());
  const std::size_t half = batch_size / 2;
  std::vector<std::vector<LabeledPair>> batches;
  for (std::size_t start = 0; start < m; start += half) {
    const std::size_t stop = std::min(m, start + half);
    std::vector<LabeledPair> batch;
    batch.reserve(2 * (stop - start));
    for (std::size_t i = start; i < stop; ++i) {
      batch.push_back(genuine[i]);
      batch.push_back(imposter[i]);
    }
    rng.shuffle(batch.begin(), batch.end());
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace efbg
