#pragma once

// Central finite-difference oracle for the double-precision tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "efbg/autodiff.hpp"
#include "efbg/random.hpp"

namespace efbg::testing {

using DParam = ad::Parameter<double>;
using DVar = ad::Var<double>;
using DTape = ad::Tape<double>;
using Builder = std::function<DVar(DTape&, std::vector<DVar>&)>;

inline ad::Tensor<double> random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  ad::Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline double evaluate(std::vector<DParam>& params, const Builder& build, bool backward) {
  DTape tape;
  std::vector<DVar> vars;
  for (auto& p : params) vars.push_back(tape.parameter(p));
  DVar out = build(tape, vars);
  if (backward) tape.backward(out);
  return out.value()[0];
}

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs = 0.0;
};

/// Compares the analytic gradient of a scalar builder against central
/// differences with step h * max(1, |x|).
inline GradCheck check_gradients(std::vector<DParam>& params, const Builder& build, double h = 1e-4) {
  for (auto& p : params) p.zero_grad();
  evaluate(params, build, true);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0, max_abs = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double x0 = p.value[i];
      const double step = h * std::max(1.0, std::abs(x0));
      p.value[i] = x0 + step;
      const double fp = evaluate(params, build, false);
      p.value[i] = x0 - step;
      const double fm = evaluate(params, build, false);
      p.value[i] = x0;
      const double num = (fp - fm) / (2.0 * step);
      const double ana = p.grad[i];
      diff2 += (ana - num) * (ana - num);
      a2 += ana * ana;
      n2 += num * num;
      max_abs = std::max(max_abs, std::abs(ana - num));
    }
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-30});
  return {std::sqrt(diff2) / denom, max_abs};
}

}  // namespace efbg::testing
