#include "doctest.h"

#include <cmath>
#include <numbers>

#include "efbg/error.hpp"
#include "efbg/geometry.hpp"
#include "efbg/random.hpp"

using namespace efbg;

namespace {

ShapeParams constant_curvature(double kappa, double theta, std::size_t segments = 1) {
  ShapeParams p = straight_shape(segments);
  for (auto& s : p.segments) {
    s.curvature = kappa;
    s.bend_direction = theta;
  }
  return p;
}

ShapeParams random_shape(Rng& rng) {
  ShapeParams p = straight_shape(5);
  for (auto& s : p.segments) {
    s.curvature = rng.uniform(0.0, 0.02);
    s.bend_direction = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return p;
}

}  // namespace

TEST_CASE("straight shape places markers on the z axis") {
  const auto chain = integrate_shape(straight_shape(5));
  REQUIRE(chain.positions.size() == 21);
  for (std::size_t k = 0; k < 21; ++k) {
    CHECK(chain.positions[k].x() == 0.0);
    CHECK(chain.positions[k].y() == 0.0);
    CHECK(chain.positions[k].z() == doctest::Approx(15.0 * k).epsilon(1e-15));
  }
}

TEST_CASE("single arc gives the closed-form chord and a common center") {
  const auto chain = integrate_shape(constant_curvature(0.01, 0.0));
  const double chord = 2.0 * 100.0 * std::sin(15.0 / 200.0);
  const Vec3 center(100.0, 0.0, 0.0);
  for (std::size_t k = 0; k + 1 < 21; ++k) {
    CHECK(std::abs((chain.positions[k + 1] - chain.positions[k]).norm() - chord) < 1e-9);
  }
  for (const auto& p : chain.positions) CHECK(std::abs((p - center).norm() - 100.0) < 1e-9);
}

TEST_CASE("constant curvature split across segments stays on one circle") {
  const double theta = 1.0;
  const auto chain = integrate_shape(constant_curvature(0.008, theta, 5));
  const double r = 1.0 / 0.008;
  const Vec3 center(r * std::cos(theta), r * std::sin(theta), 0.0);
  for (const auto& p : chain.positions) CHECK(std::abs((p - center).norm() - r) < 1e-9);
}

TEST_CASE("integration is deterministic and chords never exceed spacing") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_shape(rng);
    const auto a = integrate_shape(p);
    const auto b = integrate_shape(p);
    for (std::size_t k = 0; k < 21; ++k) CHECK(a.positions[k] == b.positions[k]);
    for (std::size_t k = 0; k + 1 < 21; ++k) {
      CHECK((a.positions[k + 1] - a.positions[k]).norm() <= 15.0 + 1e-12);
    }
  }
}

TEST_CASE("chord equals spacing only for straight pieces") {
  auto p = straight_shape(5);
  p.segments[2].curvature = 0.015;
  const auto c = integrate_shape(p);
  // Markers 0..4 lie in the straight first segment; 8..9 inside the bent one.
  CHECK(std::abs((c.positions[1] - c.positions[0]).norm() - 15.0) < 1e-12);
  CHECK((c.positions[9] - c.positions[8]).norm() < 15.0 - 1e-6);
}

TEST_CASE("invalid shapes are rejected") {
  auto p = straight_shape(5);
  p.segments[0].curvature = 0.05;
  CHECK_THROWS_AS(integrate_shape(p), DomainError);
  auto q = straight_shape(5);
  q.segments[0].arc_length = 10.0;
  CHECK_THROWS_AS(integrate_shape(q), LengthMismatchError);
  CHECK_THROWS_AS(integrate_shape(straight_shape(5), 21, 16.0), LengthMismatchError);
  CHECK_THROWS_AS(integrate_shape(straight_shape(5), 1, 15.0), DomainError);
}

TEST_CASE("relative coordinates") {
  SUBCASE("straight chain gives constant deltas") {
    const auto rel = to_relative(integrate_shape(straight_shape(5)));
    REQUIRE(rel.deltas.size() == 20);
    for (const auto& d : rel.deltas) CHECK((d - Vec3(0, 0, 15)).norm() < 1e-12);
  }
  SUBCASE("zero deltas reproduce the anchor") {
    RelativeChain rel;
    rel.deltas.assign(20, Vec3::Zero());
    const auto c = from_relative(rel, Vec3(1, 2, 3));
    REQUIRE(c.positions.size() == 21);
    for (const auto& p : c.positions) CHECK(p == Vec3(1, 2, 3));
  }
  SUBCASE("constant deltas from the origin give the straight chain") {
    RelativeChain rel;
    rel.deltas.assign(20, Vec3(0, 0, 15));
    const auto c = from_relative(rel, Vec3::Zero());
    const auto s = integrate_shape(straight_shape(5));
    for (std::size_t k = 0; k < 21; ++k) CHECK((c.positions[k] - s.positions[k]).norm() < 1e-12);
  }
  SUBCASE("round trip and telescoping on random chains") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      MarkerChain c;
      for (int k = 0; k < 21; ++k) c.positions.emplace_back(rng.uniform(-200, 200), rng.uniform(-200, 200), rng.uniform(-200, 200));
      const auto rel = to_relative(c);
      Vec3 sum = Vec3::Zero();
      for (const auto& d : rel.deltas) sum += d;
      CHECK((sum - (c.positions.back() - c.positions.front())).norm() < 1e-12);
      const auto back = from_relative(rel, c.positions.front());
      for (std::size_t k = 0; k < 21; ++k) CHECK((back.positions[k] - c.positions[k]).norm() < 1e-12);
    }
  }
}
