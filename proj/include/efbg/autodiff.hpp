#pragma once

// Reverse-mode differentiation over dense row-major tensors. Instantiated for
// float (training) and double (gradient checking).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "efbg/error.hpp"

namespace efbg::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    }
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool empty() const noexcept { return data.empty(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T{0}); }
};

enum class Mode { Train, Infer };

/// Running statistics for one batch-normalization layer.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, T{0}), running_var(Shape{channels}, T{1}) {}
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape; }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Var<T> constant(Tensor<T> value);
  Var<T> parameter(Parameter<T>& p);
  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-allocated on first use.
  Tensor<T>& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Propagates d(root)/d(node) to every node in reverse creation order, then
  /// adds parameter-leaf gradients into their Parameter::grad.
  void backward(Var<T> root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

// ---- layer ops --------------------------------------------------------------

/// x [batch, ch_in, len], w [ch_out, ch_in, k], b [ch_out] -> [batch, ch_out, len].
/// Stride 1, zero "same" padding with floor((k-1)/2) on the left.
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b);

/// Ceil-mode max pooling with window == stride == pool_size along the last axis.
template <typename T>
Var<T> maxpool1d(Var<T> x, std::size_t pool_size);

/// Per-channel normalization for [batch, ch] or [batch, ch, len] inputs.
template <typename T>
Var<T> batchnorm1d(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, Mode mode);

template <typename T>
Var<T> sigmoid(Var<T> x);

/// x [batch, in], w [out, in], b [out] -> [batch, out].
template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b);

/// Inverted dropout; identity in inference mode or at rate 0.
template <typename T>
Var<T> dropout(Var<T> x, double rate, Mode mode, std::uint64_t seed);

/// Row-wise sqrt(sum((a - b)^2) + 1e-12) for [batch, d] inputs -> [batch, 1].
template <typename T>
Var<T> euclid_dist(Var<T> a, Var<T> b);

template <typename T>
Var<T> flatten(Var<T> x);

template <typename T>
Var<T> sum(Var<T> x);

/// sum(x * weights) with a constant weight tensor; used by gradient checks.
template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights);

inline constexpr double kEuclidEps = 1e-12;

}  // namespace efbg::ad
