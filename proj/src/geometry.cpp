#include "efbg/geometry.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <string>

#include "efbg/error.hpp"

namespace efbg {

namespace {

constexpr double kLengthTol = 1e-9;

// Frame transported along the centerline: tangent plus two normal axes.
struct Frame {
  Vec3 position = Vec3::Zero();
  Vec3 tangent = Vec3::UnitZ();
  Vec3 d1 = Vec3::UnitX();
  Vec3 d2 = Vec3::UnitY();
};

Vec3 bend_normal(const Frame& f, double direction) {
  return std::cos(direction) * f.d1 + std::sin(direction) * f.d2;
}

// Offset after travelling arc length s on an arc of curvature k.
Vec3 arc_offset(const Frame& f, const Vec3& normal, double k, double s) {
  if (k == 0.0) return s * f.tangent;
  const double half = 0.5 * k * s;
  const double along = std::sin(k * s) / k;
  const double across = 2.0 * std::sin(half) * std::sin(half) / k;
  return along * f.tangent + across * normal;
}

Frame advance(const Frame& f, const Segment& seg, double s) {
  Frame out = f;
  const Vec3 normal = bend_normal(f, seg.bend_direction);
  out.position = f.position + arc_offset(f, normal, seg.curvature, s);
  if (seg.curvature == 0.0) return out;
  // Rotation about the binormal carries tangent toward the bend normal.
  const Vec3 binormal = f.tangent.cross(normal).normalized();
  const Eigen::AngleAxisd rot(seg.curvature * s, binormal);
  out.tangent = (rot * f.tangent).normalized();
  out.d1 = rot * f.d1;
  out.d2 = rot * f.d2;
  return out;
}

}  // namespace

void ShapeParams::validate() const {
  if (segments.empty()) throw DomainError("shape has no segments");
  if (!(max_curvature >= 0.0) || !std::isfinite(max_curvature)) {
    throw DomainError("max curvature must be a finite non-negative value");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    const auto where = "segment " + std::to_string(i) + ": ";
    if (!(seg.arc_length > 0.0) || !std::isfinite(seg.arc_length)) {
      throw DomainError(where + "arc length must be positive");
    }
    if (!(seg.curvature >= 0.0) || !std::isfinite(seg.curvature)) {
      throw DomainError(where + "curvature must be non-negative");
    }
    if (seg.curvature > max_curvature) {
      throw DomainError(where + "curvature " + std::to_string(seg.curvature) +
                        " exceeds bound " + std::to_string(max_curvature));
    }
    if (!(seg.bend_direction >= 0.0 && seg.bend_direction < 2.0 * std::numbers::pi)) {
      throw DomainError(where + "bend direction must lie in [0, 2pi)");
    }
    total += seg.arc_length;
  }
  if (std::abs(total - total_length) > kLengthTol * std::max(1.0, total_length)) {
    throw LengthMismatchError("segment arc lengths sum to " + std::to_string(total) +
                              " mm, expected " + std::to_string(total_length) + " mm");
  }
}

ShapeParams straight_shape(std::size_t segments, double length) {
  ShapeParams p;
  p.total_length = length;
  p.segments.assign(segments, Segment{length / static_cast<double>(segments), 0.0, 0.0});
  return p;
}

Segment segment_at(const ShapeParams& params, double s) {
  double start = 0.0;
  for (const auto& seg : params.segments) {
    if (s < start + seg.arc_length) return seg;
    start += seg.arc_length;
  }
  return params.segments.back();
}

MarkerChain integrate_shape(const ShapeParams& params, std::size_t n_markers, double spacing) {
  params.validate();
  if (n_markers < 2) throw DomainError("need at least two markers");
  if (!(spacing > 0.0)) throw DomainError("marker spacing must be positive");
  const double needed = spacing * static_cast<double>(n_markers - 1);
  if (needed > params.total_length + kLengthTol * std::max(1.0, params.total_length)) {
    throw LengthMismatchError("markers span " + std::to_string(needed) +
                              " mm but the shape is only " + std::to_string(params.total_length) +
                              " mm long");
  }

  MarkerChain chain;
  chain.marker_spacing = spacing;
  chain.positions.reserve(n_markers);

  Frame frame;
  frame.position = params.base;
  double seg_start = 0.0;
  std::size_t seg_idx = 0;
  for (std::size_t k = 0; k < n_markers; ++k) {
    const double s = spacing * static_cast<double>(k);
    // Move the frame to the segment holding s; the last segment absorbs
    // rounding at the far end.
    while (seg_idx + 1 < params.segments.size() &&
           s >= seg_start + params.segments[seg_idx].arc_length) {
      frame = advance(frame, params.segments[seg_idx], params.segments[seg_idx].arc_length);
      seg_start += params.segments[seg_idx].arc_length;
      ++seg_idx;
    }
    const auto& seg = params.segments[seg_idx];
    const Vec3 normal = bend_normal(frame, seg.bend_direction);
    chain.positions.push_back(frame.position + arc_offset(frame, normal, seg.curvature, s - seg_start));
  }
  return chain;
}

RelativeChain to_relative(const MarkerChain& chain) {
  RelativeChain rel;
  if (chain.positions.size() < 2) return rel;
  rel.deltas.reserve(chain.positions.size() - 1);
  for (std::size_t k = 0; k + 1 < chain.positions.size(); ++k) {
    rel.deltas.push_back(chain.positions[k + 1] - chain.positions[k]);
  }
  return rel;
}

MarkerChain from_relative(const RelativeChain& rel, const Vec3& anchor, double spacing) {
  MarkerChain chain;
  chain.marker_spacing = spacing;
  chain.positions.reserve(rel.deltas.size() + 1);
  Vec3 p = anchor;
  chain.positions.push_back(p);
  for (const auto& d : rel.deltas) {
    p += d;
    chain.positions.push_back(p);
  }
  return chain;
}

}  // namespace efbg
