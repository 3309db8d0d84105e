#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace efbg {

using Vec3 = Eigen::Vector3d;

inline constexpr std::size_t kMarkerCount = 21;
inline constexpr double kSensorLength = 300.0;  // mm
inline constexpr double kMarkerSpacing = 15.0;  // mm, 300 / 20

/// Constant-curvature piece of the sensor. Curvature bends the centerline
/// toward `bend_direction`, an angle in the plane normal to the running
/// tangent measured from the first transported frame axis.
struct Segment {
  double arc_length = 0.0;      // mm
  double curvature = 0.0;       // 1/mm
  double bend_direction = 0.0;  // rad, [0, 2pi)
};

struct ShapeParams {
  std::vector<Segment> segments;
  double total_length = kSensorLength;
  double max_curvature = 0.02;
  /// Position of the sensor base; the base tangent is +z.
  Vec3 base = Vec3::Zero();

  /// Throws DomainError / LengthMismatchError when an invariant is violated.
  void validate() const;
};

/// A straight sensor of the given length split into `segments` equal pieces.
ShapeParams straight_shape(std::size_t segments = 5, double length = kSensorLength);

struct MarkerChain {
  std::vector<Vec3> positions;
  double marker_spacing = kMarkerSpacing;
};

struct RelativeChain {
  std::vector<Vec3> deltas;
};

/// Local curvature and bend direction at arc length `s` (the segment that
/// contains s; the later segment at a shared boundary).
Segment segment_at(const ShapeParams& params, double s);

/// Places marker k at arc length k * spacing along the curve built from
/// closed-form constant-curvature arcs in a parallel-transport frame.
MarkerChain integrate_shape(const ShapeParams& params, std::size_t n_markers = kMarkerCount,
                            double spacing = kMarkerSpacing);

RelativeChain to_relative(const MarkerChain& chain);
MarkerChain from_relative(const RelativeChain& rel, const Vec3& anchor,
                          double spacing = kMarkerSpacing);

}  // namespace efbg
