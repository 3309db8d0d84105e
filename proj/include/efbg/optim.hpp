#pragma once

// First-order optimizers with decoupled weight decay. Updates are computed in
// single precision with a fixed element order, so a step is a pure function
// of (weights, gradients, config, state).

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "efbg/autodiff.hpp"

namespace efbg {

enum class OptimizerKind { SGDW, AdamW, RMSprop };

OptimizerKind parse_optimizer_kind(const std::string& name);
const char* to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::RMSprop;
  double learning_rate = 1e-3;
  double momentum = 0.0;  // SGDW and RMSprop; AdamW uses beta1
  double weight_decay = 0.0;
  double rho = 0.9;  // RMSprop accumulator decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  /// RMSprop, lr 1e-4, momentum 0.9, rho 0.7.
  static OptimizerConfig siamese_default();
  void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

/// Per-tensor optimizer memory. Buffers are sized lazily on the first step.
struct SlotState {
  std::vector<float> first;   // SGDW/RMSprop momentum, AdamW m
  std::vector<float> second;  // RMSprop accumulator, AdamW v
  std::uint64_t steps = 0;
};

/// Throws TrainingError naming `name` when any gradient entry is NaN or Inf.
void check_finite(std::span<const float> grad, std::string_view name);

// vel = momentum * vel - lr * g; w += vel
void sgdw_step(std::span<float> w, std::span<const float> g, const OptimizerConfig& c,
               SlotState& s, std::string_view name = "param");
// Bias-corrected Adam moments; momentum is ignored.
void adamw_step(std::span<float> w, std::span<const float> g, const OptimizerConfig& c,
                SlotState& s, std::string_view name = "param");
// v = rho v + (1 - rho) g^2; inc = lr g / sqrt(v + eps);
// mom = momentum * mom + inc; w -= mom   (w -= inc when momentum is 0)
void rmsprop_step(std::span<float> w, std::span<const float> g, const OptimizerConfig& c,
                  SlotState& s, std::string_view name = "param");

/// Every rule first applies w -= lr * weight_decay * w.
void optimizer_step(std::span<float> w, std::span<const float> g, const OptimizerConfig& c,
                    SlotState& s, std::string_view name = "param");

/// Drives one rule over a fixed list of parameters.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<ad::Parameter<float>*> params);

  /// Validates every gradient before touching any weight, then updates the
  /// trainable parameters in list order.
  void step();
  void zero_grad();

  const OptimizerConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<ad::Parameter<float>*> params_;
  std::vector<SlotState> slots_;
  std::uint64_t steps_ = 0;
};

}  // namespace efbg
