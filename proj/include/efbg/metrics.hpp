#pragma once

// Shape-error metrics and box-plot statistics. Percentiles use linear
// interpolation between order statistics: rank q/100 * (n - 1).

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "efbg/geometry.hpp"

namespace efbg {

double percentile(std::span<const double> values, double q);
/// Same, for data already sorted ascending.
double percentile_sorted(std::span<const double> sorted, double q);

/// Distance between the last markers.
double tip_error(const MarkerChain& truth, const MarkerChain& pred);
/// sqrt(mean over included markers of squared marker distance).
double shape_rmse(const MarkerChain& truth, const MarkerChain& pred, bool exclude_first = false);
std::vector<double> marker_distances(const MarkerChain& truth, const MarkerChain& pred,
                                     bool exclude_first = false);

struct BoxStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double whisker_low = 0.0;   // smallest value >= q1 - 1.5 iqr
  double whisker_high = 0.0;  // largest value <= q3 + 1.5 iqr
  std::vector<double> outliers;
};

BoxStats summarize(std::span<const double> values);

struct ShapeErrorReport {
  double tip_error = 0.0;
  double rmse = 0.0;
  std::vector<double> per_marker;
};

ShapeErrorReport evaluate_shape(const MarkerChain& truth, const MarkerChain& pred, bool exclude_first);

/// Delimited table: one row per sample, then "#"-prefixed aggregate rows for
/// tip error and RMSE.
void write_report(std::ostream& out, std::span<const ShapeErrorReport> reports,
                  std::span<const std::size_t> sample_ids, char delimiter = ',');

}  // namespace efbg
