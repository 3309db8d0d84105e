#include "efbg/loss.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "efbg/error.hpp"
#include "efbg/log.hpp"

namespace efbg {

void CompositeLossParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  if (!(margin > 0.0)) throw DomainError("margin must be positive");
  if (!(delta > 0.0)) throw DomainError("delta must be positive");
}

double huber_mod(double a, double delta) {
  if (!(delta > 0.0)) throw DomainError("huber_mod: delta must be positive");
  const double m = std::abs(a);
  return m <= delta ? 0.5 * a * a / delta : 0.5 * delta + (m - delta);
}

double huber_mod_slope(double a, double delta) {
  if (!(delta > 0.0)) throw DomainError("huber_mod: delta must be positive");
  if (std::abs(a) <= delta) return a / delta;
  return a > 0.0 ? 1.0 : -1.0;
}

double contrastive(double y_true, double y_pred, double margin) {
  const double push = std::max(0.0, margin - y_pred);
  return (1.0 - y_true) * y_pred * y_pred + y_true * push * push;
}

RegressionLoss parse_regression_loss(const std::string& name) {
  if (name == "mae" || name == "mean_absolute_error") return RegressionLoss::MAE;
  if (name == "mse" || name == "mean_squared_error") return RegressionLoss::MSE;
  if (name == "msle" || name == "mean_squared_logarithmic_error") return RegressionLoss::MSLE;
  if (name == "huber" || name == "huber_loss") return RegressionLoss::Huber;
  if (name == "mape" || name == "mean_absolute_percentage_error") return RegressionLoss::MAPE;
  if (name == "cosine_similarity") return RegressionLoss::CosineSimilarity;
  if (name == "huber_mod") return RegressionLoss::HuberMod;
  throw SchemaError("unknown loss '" + name + "'");
}

const char* to_string(RegressionLoss loss) {
  switch (loss) {
    case RegressionLoss::MAE: return "mae";
    case RegressionLoss::MSE: return "mse";
    case RegressionLoss::MSLE: return "msle";
    case RegressionLoss::Huber: return "huber";
    case RegressionLoss::MAPE: return "mape";
    case RegressionLoss::CosineSimilarity: return "cosine_similarity";
    case RegressionLoss::HuberMod: return "huber_mod";
  }
  return "?";
}

namespace ad {

namespace {

constexpr double kMsleClip = 1e-7;

template <typename T>
void require_match(const Var<T>& pred, const Tensor<T>& target, const char* op) {
  if (pred.shape() != target.shape) {
    throw ShapeError(std::string(op) + ": prediction " + to_string(pred.shape()) +
                     " does not match target " + to_string(target.shape));
  }
}

// mean_i f(target_i, pred_i); df returns d f / d pred.
template <typename T, typename F, typename DF>
Var<T> elementwise_mean(Var<T> pred, const Tensor<T>& target, F f, DF df) {
  const auto& p = pred.value();
  const std::size_t n = p.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += f(static_cast<double>(target[i]), static_cast<double>(p[i]));
  Tape<T>& tape = *pred.tape;
  const auto pi = pred.id;
  auto tgt = std::make_shared<std::vector<T>>(target.data);
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(s / static_cast<double>(n))),
                     tape.requires_grad(pi), [=](Tape<T>& t, std::size_t self) {
                       const double g = t.grad(self)[0] / static_cast<double>(n);
                       const auto& pv = t.value(pi);
                       auto& dp = t.grad(pi);
                       for (std::size_t i = 0; i < n; ++i) {
                         dp[i] += static_cast<T>(g * df(static_cast<double>((*tgt)[i]),
                                                        static_cast<double>(pv[i])));
                       }
                     });
}

}  // namespace

template <typename T>
Var<T> huber_mod_loss(Var<T> pred, const Tensor<T>& target, double delta) {
  require_match(pred, target, "huber_mod_loss");
  if (!(delta > 0.0)) throw DomainError("huber_mod: delta must be positive");
  return elementwise_mean(
      pred, target, [delta](double y, double p) { return huber_mod(y - p, delta); },
      [delta](double y, double p) { return -huber_mod_slope(y - p, delta); });
}

template <typename T>
Var<T> contrastive_loss(Var<T> y_pred, const std::vector<T>& labels, double margin) {
  if (y_pred.value().size() != labels.size()) {
    throw ShapeError("contrastive_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(y_pred.value().size()) + " predictions");
  }
  Tensor<T> lab(y_pred.shape(), labels);
  return elementwise_mean(
      y_pred, lab, [margin](double y, double p) { return contrastive(y, p, margin); },
      [margin](double y, double p) {
        return 2.0 * (1.0 - y) * p - 2.0 * y * std::max(0.0, margin - p);
      });
}

template <typename T>
Var<T> composite_loss(const std::vector<T>& labels, Var<T> y_pred, const Tensor<T>& y_A,
                      Var<T> y_a, const Tensor<T>& y_B, Var<T> y_b,
                      const CompositeLossParams& params) {
  params.validate();
  require_match(y_a, y_A, "composite_loss");
  require_match(y_b, y_B, "composite_loss");
  if (y_A.rank() != 2 || y_A.shape != y_B.shape) {
    throw ShapeError("composite_loss: y_A and y_B must be matching [batch, d] tensors");
  }
  const std::size_t batch = y_A.shape[0], d = y_A.shape[1];
  if (y_pred.value().size() != batch || labels.size() != batch) {
    throw ShapeError("composite_loss: y_pred and labels must hold one value per pair");
  }
  const double alpha = params.alpha, margin = params.margin, delta = params.delta;
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double c = contrastive(labels[i], y_pred.value()[i], margin);
    double ha = 0.0, hb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      ha += huber_mod(static_cast<double>(y_A[i * d + j]) - y_a.value()[i * d + j], delta);
      hb += huber_mod(static_cast<double>(y_B[i * d + j]) - y_b.value()[i * d + j], delta);
    }
    total += alpha * c + (1.0 - alpha) * (ha + hb) / static_cast<double>(d);
  }
  Tape<T>& tape = *y_pred.tape;
  const auto pi = y_pred.id, ai = y_a.id, bi = y_b.id;
  auto lab = std::make_shared<std::vector<T>>(labels);
  auto ta = std::make_shared<std::vector<T>>(y_A.data);
  auto tb = std::make_shared<std::vector<T>>(y_B.data);
  const bool rg = tape.requires_grad(pi) || tape.requires_grad(ai) || tape.requires_grad(bi);
  return tape.record(
      Tensor<T>(Shape{1}, static_cast<T>(total / static_cast<double>(batch))), rg,
      [=](Tape<T>& t, std::size_t self) {
        const double g = t.grad(self)[0] / static_cast<double>(batch);
        if (t.requires_grad(pi)) {
          auto& dp = t.grad(pi);
          const auto& pv = t.value(pi);
          for (std::size_t i = 0; i < batch; ++i) {
            const double y = (*lab)[i], p = pv[i];
            const double dc = 2.0 * (1.0 - y) * p - 2.0 * y * std::max(0.0, margin - p);
            dp[i] += static_cast<T>(g * alpha * dc);
          }
        }
        const double gh = g * (1.0 - alpha) / static_cast<double>(d);
        auto arm = [&](std::size_t id, const std::vector<T>& truth) {
          if (!t.requires_grad(id)) return;
          auto& dv = t.grad(id);
          const auto& v = t.value(id);
          for (std::size_t k = 0; k < batch * d; ++k) {
            dv[k] -= static_cast<T>(gh * huber_mod_slope(static_cast<double>(truth[k]) - v[k], delta));
          }
        };
        arm(ai, *ta);
        arm(bi, *tb);
      });
}

template <typename T>
Var<T> mse_loss(Var<T> pred, const Tensor<T>& target) {
  require_match(pred, target, "mse_loss");
  return elementwise_mean(
      pred, target, [](double y, double p) { return (y - p) * (y - p); },
      [](double y, double p) { return 2.0 * (p - y); });
}

template <typename T>
Var<T> mae_loss(Var<T> pred, const Tensor<T>& target) {
  require_match(pred, target, "mae_loss");
  return elementwise_mean(
      pred, target, [](double y, double p) { return std::abs(y - p); },
      [](double y, double p) { return p > y ? 1.0 : (p < y ? -1.0 : 0.0); });
}

template <typename T>
Var<T> msle_loss(Var<T> pred, const Tensor<T>& target) {
  require_match(pred, target, "msle_loss");
  return elementwise_mean(
      pred, target,
      [](double y, double p) {
        const double d = std::log1p(std::max(p, kMsleClip)) - std::log1p(std::max(y, kMsleClip));
        return d * d;
      },
      [](double y, double p) {
        if (p < kMsleClip) return 0.0;
        const double d = std::log1p(p) - std::log1p(std::max(y, kMsleClip));
        return 2.0 * d / (1.0 + p);
      });
}

template <typename T>
Var<T> huber_loss(Var<T> pred, const Tensor<T>& target, double delta) {
  require_match(pred, target, "huber_loss");
  if (!(delta > 0.0)) throw DomainError("huber: delta must be positive");
  return elementwise_mean(
      pred, target,
      [delta](double y, double p) {
        const double a = std::abs(y - p);
        return a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta);
      },
      [delta](double y, double p) {
        const double a = p - y;
        return std::abs(a) <= delta ? a : (a > 0 ? delta : -delta);
      });
}

template <typename T>
Var<T> mape_loss(Var<T> pred, const Tensor<T>& target, std::size_t* excluded) {
  require_match(pred, target, "mape_loss");
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i] != T{0}) used.push_back(i);
  const std::size_t skipped = target.size() - used.size();
  if (excluded) *excluded = skipped;
  if (skipped > 0) {
    log::warn("mape: " + std::to_string(skipped) + " zero-valued targets excluded");
  }
  const double n = used.empty() ? 1.0 : static_cast<double>(used.size());
  double s = 0.0;
  for (auto i : used) s += std::abs((static_cast<double>(target[i]) - pred.value()[i]) / target[i]);
  Tape<T>& tape = *pred.tape;
  const auto pi = pred.id;
  auto tgt = std::make_shared<std::vector<T>>(target.data);
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(used));
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(100.0 * s / n)), tape.requires_grad(pi),
                     [=](Tape<T>& t, std::size_t self) {
                       const double g = 100.0 * t.grad(self)[0] / n;
                       const auto& pv = t.value(pi);
                       auto& dp = t.grad(pi);
                       for (auto i : *idx) {
                         const double y = (*tgt)[i];
                         const double r = (pv[i] - y) / std::abs(y);
                         dp[i] += static_cast<T>(g * (r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) / std::abs(y));
                       }
                     });
}

template <typename T>
Var<T> cosine_similarity_loss(Var<T> pred, const Tensor<T>& target) {
  require_match(pred, target, "cosine_similarity_loss");
  if (target.rank() != 2) throw ShapeError("cosine_similarity_loss: expected [batch, d]");
  const std::size_t batch = target.shape[0], d = target.shape[1];
  constexpr double eps = 1e-12;
  auto cosines = std::make_shared<std::vector<double>>(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double u = target[i * d + j], v = pred.value()[i * d + j];
      uv += u * v;
      uu += u * u;
      vv += v * v;
    }
    (*cosines)[i] = uv / (std::sqrt(std::max(uu, eps)) * std::sqrt(std::max(vv, eps)));
    total += (*cosines)[i];
  }
  Tape<T>& tape = *pred.tape;
  const auto pi = pred.id;
  auto tgt = std::make_shared<std::vector<T>>(target.data);
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(-total / static_cast<double>(batch))),
                     tape.requires_grad(pi), [=](Tape<T>& t, std::size_t self) {
                       const double g = -t.grad(self)[0] / static_cast<double>(batch);
                       const auto& pv = t.value(pi);
                       auto& dp = t.grad(pi);
                       for (std::size_t i = 0; i < batch; ++i) {
                         double uu = 0, vv = 0;
                         for (std::size_t j = 0; j < d; ++j) {
                           uu += static_cast<double>((*tgt)[i * d + j]) * (*tgt)[i * d + j];
                           vv += static_cast<double>(pv[i * d + j]) * pv[i * d + j];
                         }
                         const double nu = std::sqrt(std::max(uu, eps)), nv = std::sqrt(std::max(vv, eps));
                         const double c = (*cosines)[i];
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dc = (*tgt)[i * d + j] / (nu * nv) - c * pv[i * d + j] / (nv * nv);
                           dp[i * d + j] += static_cast<T>(g * dc);
                         }
                       }
                     });
}

template <typename T>
Var<T> regression_loss(RegressionLoss kind, Var<T> pred, const Tensor<T>& target, double delta) {
  switch (kind) {
    case RegressionLoss::MAE: return mae_loss(pred, target);
    case RegressionLoss::MSE: return mse_loss(pred, target);
    case RegressionLoss::MSLE: return msle_loss(pred, target);
    case RegressionLoss::Huber: return huber_loss(pred, target, delta);
    case RegressionLoss::MAPE: return mape_loss(pred, target);
    case RegressionLoss::CosineSimilarity: return cosine_similarity_loss(pred, target);
    case RegressionLoss::HuberMod: return huber_mod_loss(pred, target, delta);
  }
  throw ConfigError("unhandled loss");
}

#define EFBG_INSTANTIATE(T)                                                                    \
  template Var<T> huber_mod_loss(Var<T>, const Tensor<T>&, double);                            \
  template Var<T> contrastive_loss(Var<T>, const std::vector<T>&, double);                     \
  template Var<T> composite_loss(const std::vector<T>&, Var<T>, const Tensor<T>&, Var<T>,      \
                                 const Tensor<T>&, Var<T>, const CompositeLossParams&);        \
  template Var<T> mse_loss(Var<T>, const Tensor<T>&);                                          \
  template Var<T> mae_loss(Var<T>, const Tensor<T>&);                                          \
  template Var<T> msle_loss(Var<T>, const Tensor<T>&);                                         \
  template Var<T> huber_loss(Var<T>, const Tensor<T>&, double);                                \
  template Var<T> mape_loss(Var<T>, const Tensor<T>&, std::size_t*);                           \
  template Var<T> cosine_similarity_loss(Var<T>, const Tensor<T>&);                            \
  template Var<T> regression_loss(RegressionLoss, Var<T>, const Tensor<T>&, double);

EFBG_INSTANTIATE(float)
EFBG_INSTANTIATE(double)

#undef EFBG_INSTANTIATE

}  // namespace ad

}  // namespace efbg
