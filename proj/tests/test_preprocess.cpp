#include "doctest.h"

#include <Eigen/Eigenvalues>

#include <cmath>

#include "efbg/error.hpp"
#include "efbg/preprocess.hpp"
#include "efbg/random.hpp"

using namespace efbg;

namespace {

RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Correlated rows: x = z A + b.
RowMatrix correlated(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  RowMatrix a = random_matrix(cols, cols, rng);
  RowMatrix z = random_matrix(rows, cols, rng);
  RowMatrix x = z * a;
  for (Eigen::Index j = 0; j < cols; ++j) x.col(j).array() += rng.uniform(-5, 5);
  return x;
}

Eigen::MatrixXd population_cov(const RowMatrix& x) {
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const RowMatrix c = x.rowwise() - mu;
  return (c.transpose() * c) / static_cast<double>(x.rows());
}

double rel_err(const RowMatrix& a, const RowMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

// Chains around a common shape with per-marker anisotropic scatter.
RowMatrix marker_clouds(Eigen::Index rows, Rng& rng) {
  RowMatrix t(rows, 63);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int k = 0; k < 21; ++k) {
      const double a = rng.normal(), b = rng.normal(), c = rng.normal();
      t(i, 3 * k) = 2.0 * k + (1 + 0.2 * k) * a + 0.3 * b;
      t(i, 3 * k + 1) = -k + 0.5 * b + 0.1 * c * k;
      t(i, 3 * k + 2) = 15.0 * k + 0.7 * c + 0.2 * a;
    }
  }
  return t;
}

}  // namespace

TEST_CASE("1-D z-scaling") {
  SUBCASE("two values") {
    RowMatrix x(1, 2);
    x << 1, 3;
    const auto p = fit_zscale1d(x);
    CHECK(p.mu == 2.0);
    CHECK(p.sigma == 1.0);
    RowMatrix three(1, 1);
    three << 3;
    CHECK(apply_zscale1d(p, three)(0, 0) == 1.0);
  }
  SUBCASE("standardized data is a fixed point") {
    Rng rng(1);
    RowMatrix x = random_matrix(40, 5, rng);
    x.array() -= x.mean();
    x /= std::sqrt(x.array().square().mean());
    const auto p = fit_zscale1d(x);
    CHECK(std::abs(p.mu) < 1e-12);
    CHECK(std::abs(p.sigma - 1.0) < 1e-12);
    CHECK(rel_err(apply_zscale1d(p, x), x) < 1e-12);
  }
  SUBCASE("fitted data has mean 0 and std 1, inverse is exact") {
    Rng rng(2);
    RowMatrix x = correlated(100, 7, rng);
    const auto p = fit_zscale1d(x);
    const RowMatrix z = apply_zscale1d(p, x);
    CHECK(std::abs(z.mean()) < 1e-9);
    CHECK(std::abs(std::sqrt(z.array().square().mean()) - 1.0) < 1e-9);
    CHECK(rel_err(invert_zscale1d(p, z), x) < 1e-12);
  }
  SUBCASE("constant data") {
    RowMatrix x = RowMatrix::Constant(5, 3, 4.0);
    CHECK_THROWS_AS(fit_zscale1d(x), DegenerateScaleError);
  }
}

TEST_CASE("whitening") {
  SUBCASE("axis-aligned 2-D toy") {
    // Four points with covariance diag(4, 0.25) and zero mean.
    RowMatrix x(4, 2);
    x << 2, 0.5, -2, -0.5, 2, -0.5, -2, 0.5;
    const auto p = fit_whiten(x);
    CHECK(std::abs(p.forward(0, 0) - 0.5) < 1e-12);
    CHECK(std::abs(p.forward(1, 1) - 2.0) < 1e-12);
    CHECK(std::abs(p.forward(0, 1)) < 1e-12);
    const RowMatrix z = apply_whiten(p, x);
    CHECK((population_cov(z) - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("identity covariance leaves data shifted only") {
    RowMatrix x(4, 2);
    x << 1, 0, -1, 0, 0, 1, 0, -1;
    x.array() += 3.0;
    x *= 1.0;
    // Scale so the population covariance is the identity.
    x = (x.array() - 3.0) * std::sqrt(2.0) + 3.0;
    const auto p = fit_whiten(x);
    const RowMatrix z = apply_whiten(p, x);
    CHECK(rel_err(z, (x.array() - 3.0).matrix()) < 1e-12);
  }
  SUBCASE("random correlated data is whitened and inverted exactly") {
    Rng rng(5);
    RowMatrix x = correlated(600, 20, rng);
    const auto p = fit_whiten(x);
    const RowMatrix z = apply_whiten(p, x);
    CHECK((population_cov(z) - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(z.colwise().mean().cwiseAbs().maxCoeff() < 1e-8);
    CHECK(rel_err(invert_whiten(p, z), x) < 1e-8);
    const Eigen::MatrixXd utu = p.eigvecs.transpose() * p.eigvecs;
    CHECK((utu - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(p.eigvals.minCoeff() >= 0.0);
  }
  SUBCASE("rank-deficient data is clamped rather than overflowing") {
    Rng rng(6);
    RowMatrix x = random_matrix(5, 10, rng);
    const auto p = fit_whiten(x);
    CHECK(p.clamped > 0);
    CHECK(p.forward.allFinite());
    CHECK(rel_err(invert_whiten(p, apply_whiten(p, x)), x) < 1e-6);
  }
  SUBCASE("non-finite input") {
    Rng rng(7);
    RowMatrix x = random_matrix(30, 3, rng);
    x(2, 1) = std::nan("");
    CHECK_THROWS_AS(fit_whiten(x), DomainError);
  }
}

TEST_CASE("fitting depends only on the rows it is given") {
  Rng rng(8);
  RowMatrix train = correlated(200, 6, rng);
  const auto a = fit_whiten(train);
  RowMatrix more(300, 6);
  more.topRows(200) = train;
  more.bottomRows(100) = correlated(100, 6, rng);
  const auto b = fit_whiten(more.topRows(200));
  CHECK(a.forward == b.forward);
  CHECK(a.mu == b.mu);
}

TEST_CASE("output transforms") {
  Rng rng(9);
  const RowMatrix t = marker_clouds(300, rng);
  for (auto m : {OutputMethod::M1, OutputMethod::M2, OutputMethod::M3, OutputMethod::M4}) {
    CAPTURE(to_string(m));
    const auto p = fit_output(m, t);
    const RowMatrix z = apply_output(p, t);
    CHECK(static_cast<std::size_t>(z.cols()) == p.output_dim());
    const RowMatrix anchors = t.leftCols(3);
    CHECK(rel_err(invert_output(p, z, anchors), t) < 1e-9);
  }
  SUBCASE("M3 clouds are uncorrelated with unit variance") {
    const auto p = fit_output(OutputMethod::M3, t);
    const RowMatrix z = apply_output(p, t);
    for (int k = 0; k < 21; ++k) {
      const Eigen::MatrixXd c = population_cov(z.middleCols(3 * k, 3));
      CHECK((c - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  SUBCASE("M4 needs anchors") {
    const auto p = fit_output(OutputMethod::M4, t);
    CHECK(p.output_dim() == 60);
    CHECK_THROWS_AS(invert_output(p, apply_output(p, t)), ConfigError);
  }
}

TEST_CASE("M2 divides each cloud by its own mean radius") {
  RowMatrix t = RowMatrix::Zero(2, 63);
  for (int k = 0; k < 21; ++k) {
    t(0, 3 * k) = 10.0 * k + 3.0;
    t(1, 3 * k) = 10.0 * k - 3.0;
    t(0, 3 * k + 2) = t(1, 3 * k + 2) = 15.0 * k;
  }
  const auto p = fit_output(OutputMethod::M2, t);
  for (int k = 0; k < 21; ++k) CHECK(p.marker_radius[k] == doctest::Approx(3.0).epsilon(1e-15));
  const RowMatrix z = apply_output(p, t);
  CHECK(z(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(z(1, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(std::abs(z(0, 1)) < 1e-15);
}

TEST_CASE("M1 is the identity on centered clouds of unit mean radius") {
  RowMatrix t = RowMatrix::Zero(2, 63);
  for (int k = 0; k < 21; ++k) {
    t(0, 3 * k + 1) = 1.0;
    t(1, 3 * k + 1) = -1.0;
  }
  const auto p = fit_output(OutputMethod::M1, t);
  CHECK(p.mean_radius == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rel_err(apply_output(p, t), t) < 1e-15);
}

TEST_CASE("M2 rejects a marker that never moves") {
  Rng rng(10);
  RowMatrix t = marker_clouds(20, rng);
  t.col(0).setConstant(0.0);
  t.col(1).setConstant(0.0);
  t.col(2).setConstant(0.0);
  CHECK_THROWS_AS(fit_output(OutputMethod::M2, t), DegenerateScaleError);
  const auto p = fit_output(OutputMethod::M3, t);
  CHECK(p.clamped_markers >= 1);
}

TEST_CASE("transform parameters survive json") {
  Rng rng(12);
  const RowMatrix x = correlated(50, 4, rng);
  const auto in = InputTransform::fit(InputMethod::Whiten, x);
  nlohmann::json j = in;
  const auto back = j.get<InputTransform>();
  CHECK(back.apply(x) == in.apply(x));
  const RowMatrix t = marker_clouds(40, rng);
  for (auto m : {OutputMethod::M1, OutputMethod::M2, OutputMethod::M3, OutputMethod::M4}) {
    const auto p = fit_output(m, t);
    nlohmann::json jo = p;
    const auto q = jo.get<OutputTransformParams>();
    CHECK(apply_output(q, t) == apply_output(p, t));
  }
}
