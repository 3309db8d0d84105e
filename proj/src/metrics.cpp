#include "efbg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>

#include "efbg/error.hpp"

namespace efbg {

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw DomainError("percentile rank must lie in [0, 100]");
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::span<const double> values, double q) {
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  return percentile_sorted(s, q);
}

namespace {

void require_same_count(const MarkerChain& a, const MarkerChain& b) {
  if (a.positions.size() != b.positions.size() || a.positions.empty()) {
    throw LengthMismatchError("chains hold " + std::to_string(a.positions.size()) + " and " +
                              std::to_string(b.positions.size()) + " markers");
  }
}

}  // namespace

double tip_error(const MarkerChain& truth, const MarkerChain& pred) {
  require_same_count(truth, pred);
  return (truth.positions.back() - pred.positions.back()).norm();
}

std::vector<double> marker_distances(const MarkerChain& truth, const MarkerChain& pred, bool exclude_first) {
  require_same_count(truth, pred);
  std::vector<double> d;
  for (std::size_t k = exclude_first ? 1 : 0; k < truth.positions.size(); ++k) {
    d.push_back((truth.positions[k] - pred.positions[k]).norm());
  }
  if (d.empty()) throw LengthMismatchError("no markers left after excluding the first");
  return d;
}

double shape_rmse(const MarkerChain& truth, const MarkerChain& pred, bool exclude_first) {
  require_same_count(truth, pred);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t k = exclude_first ? 1 : 0; k < truth.positions.size(); ++k, ++n) {
    s += (truth.positions[k] - pred.positions[k]).squaredNorm();
  }
  if (n == 0) throw LengthMismatchError("no markers left after excluding the first");
  return std::sqrt(s / static_cast<double>(n));
}

BoxStats summarize(std::span<const double> values) {
  if (values.empty()) throw DomainError("summarize: no values");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  BoxStats b;
  b.count = s.size();
  b.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  b.median = percentile_sorted(s, 50.0);
  b.q1 = percentile_sorted(s, 25.0);
  b.q3 = percentile_sorted(s, 75.0);
  b.iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * b.iqr, hi = b.q3 + 1.5 * b.iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : s) {
    if (v < lo || v > hi) {
      b.outliers.push_back(v);
      continue;
    }
    b.whisker_low = std::min(b.whisker_low, v);
    b.whisker_high = std::max(b.whisker_high, v);
  }
  return b;
}

ShapeErrorReport evaluate_shape(const MarkerChain& truth, const MarkerChain& pred, bool exclude_first) {
  return {tip_error(truth, pred), shape_rmse(truth, pred, exclude_first),
          marker_distances(truth, pred, exclude_first)};
}

void write_report(std::ostream& out, std::span<const ShapeErrorReport> reports,
                  std::span<const std::size_t> sample_ids, char delimiter) {
  if (reports.size() != sample_ids.size()) {
    throw LengthMismatchError("report rows and sample ids differ in count");
  }
  const std::size_t markers = reports.empty() ? 0 : reports.front().per_marker.size();
  const std::size_t first_marker = markers < kMarkerCount ? kMarkerCount - markers + 1 : 1;
  out << "sample" << delimiter << "tip_error_mm" << delimiter << "rmse_mm";
  for (std::size_t k = 0; k < markers; ++k) out << delimiter << "marker" << first_marker + k << "_mm";
  out << '\n' << std::setprecision(9);
  std::vector<double> tips, rmses;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    out << sample_ids[i] << delimiter << r.tip_error << delimiter << r.rmse;
    for (double d : r.per_marker) out << delimiter << d;
    out << '\n';
    tips.push_back(r.tip_error);
    rmses.push_back(r.rmse);
  }
  if (reports.empty()) return;
  out << "# metric" << delimiter << "count" << delimiter << "mean" << delimiter << "median" << delimiter << "q1"
      << delimiter << "q3" << delimiter << "iqr" << delimiter << "whisker_low" << delimiter << "whisker_high"
      << delimiter << "outliers\n";
  for (const auto& [name, vals] : {std::pair{"tip_error_mm", &tips}, std::pair{"rmse_mm", &rmses}}) {
    const auto b = summarize(*vals);
    out << "# " << name << delimiter << b.count << delimiter << b.mean << delimiter << b.median << delimiter << b.q1
        << delimiter << b.q3 << delimiter << b.iqr << delimiter << b.whisker_low << delimiter << b.whisker_high
        << delimiter << b.outliers.size() << '\n';
  }
}

}  // namespace efbg
