#include "efbg/preprocess.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

#include "efbg/error.hpp"
#include "efbg/json_util.hpp"
#include "efbg/log.hpp"

namespace efbg {

namespace {

constexpr std::size_t kXYZ = 3;

void require_finite(const RowMatrix& x, const char* what) {
  if (!x.allFinite()) throw DomainError(std::string(what) + ": non-finite input");
}

std::size_t marker_count(const RowMatrix& targets) {
  if (targets.cols() % kXYZ != 0 || targets.cols() == 0) {
    throw ShapeError("targets must hold (x, y, z) triples per marker, got " +
                     std::to_string(targets.cols()) + " columns");
  }
  return static_cast<std::size_t>(targets.cols()) / kXYZ;
}

Vec3 marker(const RowMatrix& m, Eigen::Index row, std::size_t k) {
  const auto c = static_cast<Eigen::Index>(k * kXYZ);
  return {m(row, c), m(row, c + 1), m(row, c + 2)};
}

void set_marker(RowMatrix& m, Eigen::Index row, std::size_t k, const Vec3& v) {
  const auto c = static_cast<Eigen::Index>(k * kXYZ);
  m(row, c) = v[0];
  m(row, c + 1) = v[1];
  m(row, c + 2) = v[2];
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw FormatError("matrix size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  return m;
}

std::vector<double> vec_to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vec_from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// ---- 1-D z-scaling ---------------------------------------------------------

ZScale1DParams fit_zscale1d(const RowMatrix& x) {
  require_finite(x, "fit_zscale1d");
  if (x.size() < 2) throw DegenerateScaleError("z-scaling needs at least two values");
  const double n = static_cast<double>(x.size());
  const double mu = x.sum() / n;
  const double var = (x.array() - mu).square().sum() / n;
  if (!(var > 0.0)) throw DegenerateScaleError("z-scaling of constant data");
  return {mu, std::sqrt(var)};
}

RowMatrix apply_zscale1d(const ZScale1DParams& p, const RowMatrix& x) {
  return (x.array() - p.mu) / p.sigma;
}

RowMatrix invert_zscale1d(const ZScale1DParams& p, const RowMatrix& z) {
  return z.array() * p.sigma + p.mu;
}

// ---- whitening -------------------------------------------------------------

void WhitenParams::rebuild() {
  const Eigen::VectorXd inv_sqrt = eigvals.array().rsqrt();
  const Eigen::VectorXd sqrt = eigvals.array().sqrt();
  forward = eigvecs * inv_sqrt.asDiagonal() * eigvecs.transpose();
  inverse = eigvecs * sqrt.asDiagonal() * eigvecs.transpose();
}

WhitenParams fit_whiten(const RowMatrix& x) {
  require_finite(x, "fit_whiten");
  if (x.rows() < 2) throw DegenerateScaleError("whitening needs at least two samples");
  const auto d = x.cols();
  if (x.rows() <= d) {
    log::warn("whitening " + std::to_string(d) + "-dim data from only " +
              std::to_string(x.rows()) + " samples; covariance is rank deficient");
  }
  WhitenParams p;
  p.mu = x.colwise().mean().transpose();
  const RowMatrix centered = x.rowwise() - p.mu.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw DomainError("fit_whiten: eigendecomposition failed");
  p.eigvecs = eig.eigenvectors();
  p.eigvals = eig.eigenvalues();
  const double top = p.eigvals.maxCoeff();
  if (!(top > 0.0)) throw DegenerateScaleError("whitening of constant data");
  const double floor = kWhitenClamp * top;
  for (Eigen::Index i = 0; i < p.eigvals.size(); ++i) {
    if (p.eigvals[i] < floor) {
      p.eigvals[i] = floor;
      ++p.clamped;
    }
  }
  p.rebuild();
  return p;
}

RowMatrix apply_whiten(const WhitenParams& p, const RowMatrix& x) {
  require_finite(x, "apply_whiten");
  // forward is symmetric, so row-wise (x - mu) W^T = (x - mu) W.
  return (x.rowwise() - p.mu.transpose()) * p.forward;
}

RowMatrix invert_whiten(const WhitenParams& p, const RowMatrix& z) {
  RowMatrix x = z * p.inverse;
  x.rowwise() += p.mu.transpose();
  return x;
}

InputTransform InputTransform::fit(InputMethod method, const RowMatrix& x) {
  InputTransform t;
  t.method = method;
  if (method == InputMethod::ZScale1D) {
    t.zscale = fit_zscale1d(x);
  } else {
    t.whiten = fit_whiten(x);
  }
  return t;
}

RowMatrix InputTransform::apply(const RowMatrix& x) const {
  return method == InputMethod::ZScale1D ? apply_zscale1d(zscale, x) : apply_whiten(whiten, x);
}

RowMatrix InputTransform::invert(const RowMatrix& z) const {
  return method == InputMethod::ZScale1D ? invert_zscale1d(zscale, z) : invert_whiten(whiten, z);
}

// ---- output ----------------------------------------------------------------

std::size_t OutputTransformParams::output_dim() const {
  return method == OutputMethod::M4 ? (kMarkerCount - 1) * kXYZ : kMarkerCount * kXYZ;
}

OutputTransformParams fit_output(OutputMethod method, const RowMatrix& targets) {
  require_finite(targets, "fit_output");
  const std::size_t markers = marker_count(targets);
  OutputTransformParams p;
  p.method = method;
  if (method == OutputMethod::M4) return p;
  if (targets.rows() < 2) throw DegenerateScaleError("output scaling needs at least two samples");

  const auto n = targets.rows();
  p.marker_mean.assign(markers, Vec3::Zero());
  for (Eigen::Index r = 0; r < n; ++r)
    for (std::size_t k = 0; k < markers; ++k) p.marker_mean[k] += marker(targets, r, k);
  for (auto& m : p.marker_mean) m /= static_cast<double>(n);

  if (method == OutputMethod::M1 || method == OutputMethod::M2) {
    p.marker_radius.assign(markers, 0.0);
    for (Eigen::Index r = 0; r < n; ++r)
      for (std::size_t k = 0; k < markers; ++k)
        p.marker_radius[k] += (marker(targets, r, k) - p.marker_mean[k]).norm();
    for (auto& rk : p.marker_radius) rk /= static_cast<double>(n);
    double total = 0.0;
    for (double rk : p.marker_radius) total += rk;
    p.mean_radius = total / static_cast<double>(markers);
    if (method == OutputMethod::M1) {
      p.marker_radius.clear();
      if (!(p.mean_radius > 0.0)) throw DegenerateScaleError("M1: mean point-cloud radius is zero");
    } else {
      for (std::size_t k = 0; k < markers; ++k) {
        if (!(p.marker_radius[k] > 0.0)) {
          throw DegenerateScaleError("M2: point cloud of marker " + std::to_string(k + 1) +
                                     " has zero radius");
        }
      }
    }
    return p;
  }

  // M3: per-cloud ZCA whitening.
  for (std::size_t k = 0; k < markers; ++k) {
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (Eigen::Index r = 0; r < n; ++r) {
      const Vec3 d = marker(targets, r, k) - p.marker_mean[k];
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d vals = eig.eigenvalues();
    const double floor = std::max(kWhitenClamp * vals.maxCoeff(), 1e-12);
    bool clamped = false;
    for (int i = 0; i < 3; ++i) {
      if (vals[i] < floor) {
        vals[i] = floor;
        clamped = true;
      }
    }
    if (clamped) {
      ++p.clamped_markers;
      log::warn("M3: covariance of marker " + std::to_string(k + 1) +
                " is singular; eigenvalues clamped");
    }
    const auto& u = eig.eigenvectors();
    p.whitener.push_back(u * vals.array().rsqrt().matrix().asDiagonal() * u.transpose());
    p.unwhitener.push_back(u * vals.array().sqrt().matrix().asDiagonal() * u.transpose());
  }
  return p;
}

RowMatrix apply_output(const OutputTransformParams& p, const RowMatrix& targets) {
  const std::size_t markers = marker_count(targets);
  const auto n = targets.rows();
  if (p.method == OutputMethod::M4) {
    RowMatrix out(n, static_cast<Eigen::Index>((markers - 1) * kXYZ));
    for (Eigen::Index r = 0; r < n; ++r)
      for (std::size_t k = 0; k + 1 < markers; ++k)
        set_marker(out, r, k, marker(targets, r, k + 1) - marker(targets, r, k));
    return out;
  }
  if (markers != p.marker_mean.size()) throw ShapeError("marker count differs from fitted transform");
  RowMatrix out(n, targets.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < markers; ++k) {
      const Vec3 c = marker(targets, r, k) - p.marker_mean[k];
      Vec3 v;
      switch (p.method) {
        case OutputMethod::M1: v = c / p.mean_radius; break;
        case OutputMethod::M2: v = c / p.marker_radius[k]; break;
        default: v = p.whitener[k] * c; break;
      }
      set_marker(out, r, k, v);
    }
  }
  return out;
}

RowMatrix invert_output(const OutputTransformParams& p, const RowMatrix& z,
                        const RowMatrix& anchors) {
  const std::size_t markers = marker_count(z);
  const auto n = z.rows();
  if (p.method == OutputMethod::M4) {
    if (anchors.rows() != n || anchors.cols() != 3) {
      throw ConfigError("M4 inversion needs one (x, y, z) anchor per sample");
    }
    RowMatrix out(n, static_cast<Eigen::Index>((markers + 1) * kXYZ));
    for (Eigen::Index r = 0; r < n; ++r) {
      Vec3 pos(anchors(r, 0), anchors(r, 1), anchors(r, 2));
      set_marker(out, r, 0, pos);
      for (std::size_t k = 0; k < markers; ++k) {
        pos += marker(z, r, k);
        set_marker(out, r, k + 1, pos);
      }
    }
    return out;
  }
  if (markers != p.marker_mean.size()) throw ShapeError("marker count differs from fitted transform");
  RowMatrix out(n, z.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < markers; ++k) {
      const Vec3 v = marker(z, r, k);
      Vec3 c;
      switch (p.method) {
        case OutputMethod::M1: c = v * p.mean_radius; break;
        case OutputMethod::M2: c = v * p.marker_radius[k]; break;
        default: c = p.unwhitener[k] * v; break;
      }
      set_marker(out, r, k, c + p.marker_mean[k]);
    }
  }
  return out;
}

// ---- names & json ----------------------------------------------------------

const char* to_string(InputMethod m) { return m == InputMethod::ZScale1D ? "zscale1d" : "whiten"; }

const char* to_string(OutputMethod m) {
  switch (m) {
    case OutputMethod::M1: return "M1";
    case OutputMethod::M2: return "M2";
    case OutputMethod::M3: return "M3";
    case OutputMethod::M4: return "M4";
  }
  return "?";
}

InputMethod parse_input_method(const std::string& s) {
  if (s == "zscale1d") return InputMethod::ZScale1D;
  if (s == "whiten") return InputMethod::Whiten;
  throw SchemaError("unknown input transform '" + s + "' (expected zscale1d or whiten)");
}

OutputMethod parse_output_method(const std::string& s) {
  if (s == "M1") return OutputMethod::M1;
  if (s == "M2") return OutputMethod::M2;
  if (s == "M3") return OutputMethod::M3;
  if (s == "M4") return OutputMethod::M4;
  throw SchemaError("unknown output method '" + s + "' (expected M1..M4)");
}

void to_json(nlohmann::json& j, const InputTransform& t) {
  j = {{"method", to_string(t.method)}};
  if (t.method == InputMethod::ZScale1D) {
    j["mu"] = t.zscale.mu;
    j["sigma"] = t.zscale.sigma;
  } else {
    j["mu"] = vec_to_std(t.whiten.mu);
    j["eigvals"] = vec_to_std(t.whiten.eigvals);
    j["eigvecs"] = matrix_json(t.whiten.eigvecs);
    j["clamped"] = t.whiten.clamped;
  }
}

void from_json(const nlohmann::json& j, InputTransform& t) {
  t = InputTransform{};
  t.method = parse_input_method(j.at("method").get<std::string>());
  if (t.method == InputMethod::ZScale1D) {
    t.zscale.mu = j.at("mu").get<double>();
    t.zscale.sigma = j.at("sigma").get<double>();
  } else {
    t.whiten.mu = vec_from_std(j.at("mu").get<std::vector<double>>());
    t.whiten.eigvals = vec_from_std(j.at("eigvals").get<std::vector<double>>());
    t.whiten.eigvecs = matrix_from_json(j.at("eigvecs"));
    t.whiten.clamped = j.at("clamped").get<std::size_t>();
    t.whiten.rebuild();
  }
}

void to_json(nlohmann::json& j, const OutputTransformParams& p) {
  j = {{"method", to_string(p.method)}};
  if (p.method == OutputMethod::M4) return;
  std::vector<double> means;
  for (const auto& m : p.marker_mean) means.insert(means.end(), {m[0], m[1], m[2]});
  j["marker_mean"] = means;
  if (p.method == OutputMethod::M1) j["mean_radius"] = p.mean_radius;
  if (p.method == OutputMethod::M2) j["marker_radius"] = p.marker_radius;
  if (p.method == OutputMethod::M3) {
    auto list = nlohmann::json::array();
    for (const auto& w : p.whitener) list.push_back(matrix_json(w));
    j["whitener"] = list;
    auto inv = nlohmann::json::array();
    for (const auto& w : p.unwhitener) inv.push_back(matrix_json(w));
    j["unwhitener"] = inv;
    j["clamped_markers"] = p.clamped_markers;
  }
}

void from_json(const nlohmann::json& j, OutputTransformParams& p) {
  p = OutputTransformParams{};
  p.method = parse_output_method(j.at("method").get<std::string>());
  if (p.method == OutputMethod::M4) return;
  const auto means = j.at("marker_mean").get<std::vector<double>>();
  for (std::size_t k = 0; k + 2 < means.size(); k += 3) p.marker_mean.emplace_back(means[k], means[k + 1], means[k + 2]);
  if (p.method == OutputMethod::M1) p.mean_radius = j.at("mean_radius").get<double>();
  if (p.method == OutputMethod::M2) p.marker_radius = j.at("marker_radius").get<std::vector<double>>();
  if (p.method == OutputMethod::M3) {
    for (const auto& m : j.at("whitener")) p.whitener.push_back(matrix_from_json(m));
    for (const auto& m : j.at("unwhitener")) p.unwhitener.push_back(matrix_from_json(m));
    p.clamped_markers = j.at("clamped_markers").get<std::size_t>();
  }
}

}  // namespace efbg
