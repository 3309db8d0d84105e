#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "efbg/autodiff.hpp"

namespace efbg {

/// Weights of the Siamese objective.
struct CompositeLossParams {
  double alpha = 0.7;   // contrastive share
  double margin = 0.5;  // M
  double delta = 2.2;   // knee of the modified Huber term

  void validate() const;
};

/// 0.5 a^2 / delta for |a| <= delta, else 0.5 delta + (|a| - delta).
double huber_mod(double a, double delta);
double huber_mod_slope(double a, double delta);

/// (1 - y_true) y_pred^2 + y_true max(0, margin - y_pred)^2
double contrastive(double y_true, double y_pred, double margin);

enum class RegressionLoss { MAE, MSE, MSLE, Huber, MAPE, CosineSimilarity, HuberMod };

RegressionLoss parse_regression_loss(const std::string& name);
const char* to_string(RegressionLoss loss);

namespace ad {

/// mean over all elements of huber_mod(target - pred).
template <typename T>
Var<T> huber_mod_loss(Var<T> pred, const Tensor<T>& target, double delta);

/// Batch mean of the contrastive term; labels hold 0 (genuine) or 1 (imposter).
template <typename T>
Var<T> contrastive_loss(Var<T> y_pred, const std::vector<T>& labels, double margin);

/// mean_i[ alpha * contrastive_i + (1 - alpha) * (H(yA_i - ya_i) + H(yB_i - yb_i)) ]
/// with H the modified Huber averaged over the coordinates of one sample.
template <typename T>
Var<T> composite_loss(const std::vector<T>& labels, Var<T> y_pred, const Tensor<T>& y_A,
                      Var<T> y_a, const Tensor<T>& y_B, Var<T> y_b,
                      const CompositeLossParams& params);

template <typename T>
Var<T> mse_loss(Var<T> pred, const Tensor<T>& target);
template <typename T>
Var<T> mae_loss(Var<T> pred, const Tensor<T>& target);
/// Predictions and targets are clipped at 1e-7 before log1p, as is customary.
template <typename T>
Var<T> msle_loss(Var<T> pred, const Tensor<T>& target);
/// Textbook Huber: 0.5 a^2 for |a| <= delta, else delta (|a| - 0.5 delta).
template <typename T>
Var<T> huber_loss(Var<T> pred, const Tensor<T>& target, double delta);
/// 100 * mean |(y - p) / y| over elements with y != 0; zero targets are
/// skipped and counted in *excluded.
template <typename T>
Var<T> mape_loss(Var<T> pred, const Tensor<T>& target, std::size_t* excluded = nullptr);
/// Negated row-wise cosine similarity, averaged over the batch.
template <typename T>
Var<T> cosine_similarity_loss(Var<T> pred, const Tensor<T>& target);

template <typename T>
Var<T> regression_loss(RegressionLoss kind, Var<T> pred, const Tensor<T>& target, double delta);

}  // namespace ad

}  // namespace efbg
