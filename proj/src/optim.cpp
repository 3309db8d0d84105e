#include "efbg/optim.hpp"

#include <cmath>

#include "efbg/error.hpp"
#include "efbg/json_util.hpp"

namespace efbg {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgdw" || name == "SGDW") return OptimizerKind::SGDW;
  if (name == "adamw" || name == "AdamW") return OptimizerKind::AdamW;
  if (name == "rmsprop" || name == "RMSprop") return OptimizerKind::RMSprop;
  throw SchemaError("unknown optimizer '" + name + "' (expected sgdw, adamw or rmsprop)");
}

const char* to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGDW: return "sgdw";
    case OptimizerKind::AdamW: return "adamw";
    case OptimizerKind::RMSprop: return "rmsprop";
  }
  return "?";
}

OptimizerConfig OptimizerConfig::siamese_default() {
  OptimizerConfig c;
  c.kind = OptimizerKind::RMSprop;
  c.learning_rate = 1e-4;
  c.momentum = 0.9;
  c.rho = 0.7;
  return c;
}

void OptimizerConfig::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v < 1.0; };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("optimizer.learning_rate must be positive");
  if (!in01(momentum)) throw ConfigError("optimizer.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!in01(rho)) throw ConfigError("optimizer.rho must lie in [0, 1)");
  if (!in01(beta1) || !in01(beta2)) throw ConfigError("optimizer betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be positive");
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"kind", to_string(c.kind)},   {"learning_rate", c.learning_rate},
       {"momentum", c.momentum},      {"weight_decay", c.weight_decay},
       {"rho", c.rho},                {"beta1", c.beta1},
       {"beta2", c.beta2},            {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  constexpr std::string_view ctx = "optimizer";
  reject_unknown_keys(j, {"kind", "learning_rate", "momentum", "weight_decay", "rho", "beta1",
                          "beta2", "epsilon"},
                      ctx);
  std::string kind = to_string(c.kind);
  read_opt(j, "kind", kind, ctx);
  c.kind = parse_optimizer_kind(kind);
  read_opt(j, "learning_rate", c.learning_rate, ctx);
  read_opt(j, "momentum", c.momentum, ctx);
  read_opt(j, "weight_decay", c.weight_decay, ctx);
  read_opt(j, "rho", c.rho, ctx);
  read_opt(j, "beta1", c.beta1, ctx);
  read_opt(j, "beta2", c.beta2, ctx);
  read_opt(j, "epsilon", c.epsilon, ctx);
}

void check_finite(std::span<const float> grad, std::string_view name) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw TrainingError("non-finite gradient in parameter '" + std::string(name) + "' at element " +
                          std::to_string(i));
    }
  }
}

namespace {

void prepare(std::span<float> w, std::span<const float> g, SlotState& s, std::string_view name,
             bool needs_second) {
  if (w.size() != g.size()) {
    throw ShapeError("optimizer: parameter '" + std::string(name) + "' has " +
                     std::to_string(w.size()) + " weights but " + std::to_string(g.size()) +
                     " gradients");
  }
  check_finite(g, name);
  if (s.first.empty()) s.first.assign(w.size(), 0.0f);
  if (needs_second && s.second.empty()) s.second.assign(w.size(), 0.0f);
  if (s.first.size() != w.size() || (needs_second && s.second.size() != w.size())) {
    throw ShapeError("optimizer: state for '" + std::string(name) + "' does not match its shape");
  }
}

void decay(std::span<float> w, const OptimizerConfig& c) {
  if (c.weight_decay == 0.0) return;
  const float f = static_cast<float>(c.learning_rate * c.weight_decay);
  for (auto& x : w) x -= f * x;
}

}  // namespace

void sgdw_step(std::span<float> w, std::span<const float> g, const OptimizerConfig& c,
               SlotState& s, std::string_view name) {
  prepare(w, g, s, name, false);
  decay(w, c);
  const float lr = static_cast<float>(c.learning_rate);
  const float mu = static_cast<float>(c.momentum);
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.first[i] = mu * s.first[i] - lr * g[i];
    w[i] += s.first[i];
  }
  ++s.steps;
}

void adamw_step(std::span<float> w, std::span<const float> g, const OptimizerConfig& c,
                SlotState& s, std::string_view name) {
  prepare(w, g, s, name, true);
  decay(w, c);
  ++s.steps;
  const double t = static_cast<double>(s.steps);
  const float b1 = static_cast<float>(c.beta1), b2 = static_cast<float>(c.beta2);
  const float lr_t = static_cast<float>(c.learning_rate * std::sqrt(1.0 - std::pow(c.beta2, t)) /
                                        (1.0 - std::pow(c.beta1, t)));
  const float eps = static_cast<float>(c.epsilon);
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.first[i] = b1 * s.first[i] + (1.0f - b1) * g[i];
    s.second[i] = b2 * s.second[i] + (1.0f - b2) * g[i] * g[i];
    w[i] -= lr_t * s.first[i] / (std::sqrt(s.second[i]) + eps);
  }
}

void rmsprop_step(std::span<float> w, std::span<const float> g, const OptimizerConfig& c,
                  SlotState& s, std::string_view name) {
  prepare(w, g, s, name, true);
  decay(w, c);
  const float lr = static_cast<float>(c.learning_rate);
  const float rho = static_cast<float>(c.rho);
  const float mu = static_cast<float>(c.momentum);
  const float eps = static_cast<float>(c.epsilon);
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.second[i] = rho * s.second[i] + (1.0f - rho) * g[i] * g[i];
    const float inc = lr * g[i] / std::sqrt(s.second[i] + eps);
    if (mu > 0.0f) {
      s.first[i] = mu * s.first[i] + inc;
      w[i] -= s.first[i];
    } else {
      w[i] -= inc;
    }
  }
  ++s.steps;
}

void optimizer_step(std::span<float> w, std::span<const float> g, const OptimizerConfig& c,
                    SlotState& s, std::string_view name) {
  switch (c.kind) {
    case OptimizerKind::SGDW: return sgdw_step(w, g, c, s, name);
    case OptimizerKind::AdamW: return adamw_step(w, g, c, s, name);
    case OptimizerKind::RMSprop: return rmsprop_step(w, g, c, s, name);
  }
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<ad::Parameter<float>*> params)
    : config_(config), params_(std::move(params)), slots_(params_.size()) {
  config_.validate();
}

void Optimizer::step() {
  for (const auto* p : params_) {
    if (p->trainable) check_finite(p->grad.data, p->name);
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* p = params_[i];
    if (!p->trainable) continue;
    optimizer_step(p->value.data, p->grad.data, config_, slots_[i], p->name);
  }
  ++steps_;
}

void Optimizer::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace efbg
