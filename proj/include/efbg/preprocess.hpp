#pragma once

// Input scalings (1-D z-scaling, ZCA whitening) and output rescalings M1-M4.
// Every transform is fitted on training rows only, uses population
// statistics in double precision, and has an exact inverse.

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "efbg/geometry.hpp"

namespace efbg {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---- input -----------------------------------------------------------------

struct ZScale1DParams {
  double mu = 0.0;
  double sigma = 1.0;
};

/// Treats every element of `x` as one observation.
ZScale1DParams fit_zscale1d(const RowMatrix& x);
RowMatrix apply_zscale1d(const ZScale1DParams& p, const RowMatrix& x);
RowMatrix invert_zscale1d(const ZScale1DParams& p, const RowMatrix& z);

struct WhitenParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd eigvecs;  // U, columns are eigenvectors
  Eigen::VectorXd eigvals;  // D after clamping
  std::size_t clamped = 0;  // eigenvalues raised to the floor

  /// U D^-1/2 U^T and U D^1/2 U^T, rebuilt from U and D.
  Eigen::MatrixXd forward;
  Eigen::MatrixXd inverse;

  void rebuild();
};

inline constexpr double kWhitenClamp = 1e-10;  // relative to the largest eigenvalue

/// Rows are samples. Z = U D^-1/2 U^T (x - mu).
WhitenParams fit_whiten(const RowMatrix& x);
RowMatrix apply_whiten(const WhitenParams& p, const RowMatrix& x);
RowMatrix invert_whiten(const WhitenParams& p, const RowMatrix& z);

enum class InputMethod { ZScale1D, Whiten };

struct InputTransform {
  InputMethod method = InputMethod::ZScale1D;
  ZScale1DParams zscale;
  WhitenParams whiten;

  static InputTransform fit(InputMethod method, const RowMatrix& x);
  RowMatrix apply(const RowMatrix& x) const;
  RowMatrix invert(const RowMatrix& z) const;
};

// ---- output ----------------------------------------------------------------

enum class OutputMethod { M1, M2, M3, M4 };

struct OutputTransformParams {
  OutputMethod method = OutputMethod::M4;
  std::vector<Vec3> marker_mean;          // M1-M3
  double mean_radius = 1.0;               // M1
  std::vector<double> marker_radius;      // M2
  std::vector<Eigen::Matrix3d> whitener;  // M3, cov^-1/2 per marker
  std::vector<Eigen::Matrix3d> unwhitener;
  std::size_t clamped_markers = 0;        // M3 markers with a clamped eigenvalue

  /// 60 for M4 (relative deltas), else 63.
  std::size_t output_dim() const;
};

/// Rows are samples with 21 markers as (x, y, z) triples.
OutputTransformParams fit_output(OutputMethod method, const RowMatrix& targets);
RowMatrix apply_output(const OutputTransformParams& p, const RowMatrix& targets);
/// For M4, `anchors` (rows x 3) supplies the true first-marker positions;
/// other methods ignore it.
RowMatrix invert_output(const OutputTransformParams& p, const RowMatrix& z,
                        const RowMatrix& anchors = {});

const char* to_string(InputMethod m);
const char* to_string(OutputMethod m);
InputMethod parse_input_method(const std::string& s);
OutputMethod parse_output_method(const std::string& s);

void to_json(nlohmann::json& j, const InputTransform& t);
void from_json(const nlohmann::json& j, InputTransform& t);
void to_json(nlohmann::json& j, const OutputTransformParams& p);
void from_json(const nlohmann::json& j, OutputTransformParams& p);

}  // namespace efbg
