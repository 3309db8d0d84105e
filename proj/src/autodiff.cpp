#include "efbg/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <sstream>

#include "efbg/random.hpp"

namespace efbg::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ']';
  return out.str();
}

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

void require(bool ok, const std::string& op, const std::string& detail) {
  if (!ok) throw ShapeError(op + ": " + detail);
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---- tape ------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, p.trainable});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad ? std::move(backward) : BackwardFn{},
                        nullptr, requires_grad});
  return {this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor<T>(node.value.shape);
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
  if (root.tape != this || root.id >= nodes_.size()) {
    throw ShapeError("backward: root does not belong to this tape");
  }
  if (nodes_[root.id].value.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " +
                     to_string(nodes_[root.id].value.shape));
  }
  for (auto& node : nodes_) node.grad = Tensor<T>{};
  grad(root.id)[0] = T{1};
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.grad.empty() || !node.requires_grad) continue;
    if (node.backward) node.backward(*this, i);
  }
  for (auto& node : nodes_) {
    if (node.param == nullptr || node.grad.empty() || !node.param->trainable) continue;
    auto& pg = node.param->grad;
    if (pg.shape != node.grad.shape) pg = Tensor<T>(node.grad.shape);
    add_into(pg, node.grad);
  }
}

// ---- conv1d ----------------------------------------------------------------

namespace {

// col[(ci*k + j), b*len + l] = x[b, ci, l + j - pad_left]
template <typename T>
void im2col(const T* x, std::size_t batch, std::size_t ch, std::size_t len, std::size_t k,
            std::size_t pad_left, MatRM<T>& col) {
  const std::size_t cols = batch * len;
  col.resize(static_cast<Eigen::Index>(ch * k), static_cast<Eigen::Index>(cols));
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      T* row = col.data() + (c * k + j) * cols;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* src = x + (b * ch + c) * len;
        T* dst = row + b * len;
        for (std::size_t l = 0; l < len; ++l) {
          const auto pos = static_cast<std::ptrdiff_t>(l + j) - static_cast<std::ptrdiff_t>(pad_left);
          dst[l] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) ? src[pos] : T{0};
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const MatRM<T>& col, std::size_t batch, std::size_t ch, std::size_t len,
                std::size_t k, std::size_t pad_left, T* dx) {
  const std::size_t cols = batch * len;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      const T* row = col.data() + (c * k + j) * cols;
      for (std::size_t b = 0; b < batch; ++b) {
        T* dst = dx + (b * ch + c) * len;
        const T* src = row + b * len;
        for (std::size_t l = 0; l < len; ++l) {
          const auto pos = static_cast<std::ptrdiff_t>(l + j) - static_cast<std::ptrdiff_t>(pad_left);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[pos] += src[l];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 3 && ws.size() == 3 && b.shape().size() == 1, "conv1d",
          "expected x [batch, ch_in, len], w [ch_out, ch_in, k], b [ch_out]; got x " +
              to_string(xs) + ", w " + to_string(ws) + ", b " + to_string(b.shape()));
  require(xs[1] == ws[1] && b.shape()[0] == ws[0], "conv1d",
          "channel mismatch between x " + to_string(xs) + " and w " + to_string(ws));
  const std::size_t batch = xs[0], ci = xs[1], len = xs[2], co = ws[0], k = ws[2];
  const std::size_t pad_left = (k - 1) / 2;
  require(k >= 1 && k <= len + (k - 1), "conv1d", "kernel larger than padded input");

  auto col = std::make_shared<MatRM<T>>();
  im2col(x.value().data.data(), batch, ci, len, k, pad_left, *col);
  CMapRM<T> W(w.value().data.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci * k));
  MatRM<T> out = W * *col;

  Tensor<T> y(Shape{batch, co, len});
  const T* bias = b.value().data.data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t o = 0; o < co; ++o) {
      const T* src = out.data() + o * batch * len + bi * len;
      T* dst = y.data.data() + (bi * co + o) * len;
      for (std::size_t l = 0; l < len; ++l) dst[l] = src[l] + bias[o];
    }
  }

  Tape<T>& tape = *x.tape;
  const bool rg = tape.requires_grad(x.id) || tape.requires_grad(w.id) || tape.requires_grad(b.id);
  const auto xi = x.id, wi = w.id, bi_ = b.id;
  return tape.record(std::move(y), rg, [=](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad(self);
    MatRM<T> dout(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(batch * len));
    for (std::size_t bb = 0; bb < batch; ++bb)
      for (std::size_t o = 0; o < co; ++o) {
        const T* src = dy.data.data() + (bb * co + o) * len;
        T* dst = dout.data() + o * batch * len + bb * len;
        std::copy(src, src + len, dst);
      }
    if (t.requires_grad(wi)) {
      MapRM<T> dW(t.grad(wi).data.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci * k));
      dW.noalias() += dout * col->transpose();
    }
    if (t.requires_grad(bi_)) {
      auto& db = t.grad(bi_);
      for (std::size_t o = 0; o < co; ++o) db[o] += dout.row(static_cast<Eigen::Index>(o)).sum();
    }
    if (t.requires_grad(xi)) {
      CMapRM<T> Wb(t.value(wi).data.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci * k));
      MatRM<T> dcol = Wb.transpose() * dout;
      col2im_add(dcol, batch, ci, len, k, pad_left, t.grad(xi).data.data());
    }
  });
}

// ---- maxpool1d -------------------------------------------------------------

template <typename T>
Var<T> maxpool1d(Var<T> x, std::size_t pool_size) {
  const auto& xs = x.shape();
  require(xs.size() == 3, "maxpool1d", "expected [batch, ch, len], got " + to_string(xs));
  require(pool_size >= 2, "maxpool1d", "pool size must be >= 2");
  const std::size_t rows = xs[0] * xs[1], len = xs[2];
  const std::size_t out_len = (len + pool_size - 1) / pool_size;
  Tensor<T> y(Shape{xs[0], xs[1], out_len});
  auto argmax = std::make_shared<std::vector<std::size_t>>(rows * out_len);
  const T* xd = x.value().data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < out_len; ++j) {
      const std::size_t lo = j * pool_size, hi = std::min(len, lo + pool_size);
      std::size_t best = lo;
      for (std::size_t l = lo + 1; l < hi; ++l)
        if (xd[r * len + l] > xd[r * len + best]) best = l;
      (*argmax)[r * out_len + j] = r * len + best;
      y[r * out_len + j] = xd[r * len + best];
    }
  }
  Tape<T>& tape = *x.tape;
  const auto xi = x.id;
  return tape.record(std::move(y), tape.requires_grad(xi), [=](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad(self);
    auto& dx = t.grad(xi);
    for (std::size_t i = 0; i < argmax->size(); ++i) dx[(*argmax)[i]] += dy[i];
  });
}

// ---- batchnorm1d -----------------------------------------------------------

template <typename T>
Var<T> batchnorm1d(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, Mode mode) {
  const auto& xs = x.shape();
  require(xs.size() == 2 || xs.size() == 3, "batchnorm1d",
          "expected [batch, ch] or [batch, ch, len], got " + to_string(xs));
  const std::size_t batch = xs[0], ch = xs[1], len = xs.size() == 3 ? xs[2] : 1;
  require(gamma.shape() == Shape{ch} && beta.shape() == Shape{ch}, "batchnorm1d",
          "gamma/beta must have shape [" + std::to_string(ch) + "]");
  if (state.running_mean.size() != ch) state = BatchNormState<T>(ch);
  if (mode == Mode::Train && batch * len < 2) {
    throw ShapeError("batchnorm1d: training mode needs at least 2 values per channel, got " +
                     std::to_string(batch * len));
  }

  const T* xd = x.value().data.data();
  const T* g = gamma.value().data.data();
  const T* be = beta.value().data.data();
  const double count = static_cast<double>(batch * len);

  auto xhat = std::make_shared<std::vector<T>>(x.value().size());
  auto inv_std = std::make_shared<std::vector<T>>(ch);
  Tensor<T> y(xs);
  for (std::size_t c = 0; c < ch; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l) s += xd[(b * ch + c) * len + l];
      mean = s / count;
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const double d = xd[(b * ch + c) * len + l] - mean;
          ss += d * d;
        }
      var = ss / count;
      const T m = state.momentum;
      state.running_mean[c] = m * state.running_mean[c] + (T{1} - m) * static_cast<T>(mean);
      state.running_var[c] = m * state.running_var[c] + (T{1} - m) * static_cast<T>(var);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + static_cast<double>(state.eps));
    (*inv_std)[c] = static_cast<T>(is);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = (b * ch + c) * len + l;
        const T xh = static_cast<T>((xd[i] - mean) * is);
        (*xhat)[i] = xh;
        y[i] = g[c] * xh + be[c];
      }
  }

  Tape<T>& tape = *x.tape;
  const auto xi = x.id, gi = gamma.id, bi = beta.id;
  const bool rg = tape.requires_grad(xi) || tape.requires_grad(gi) || tape.requires_grad(bi);
  const bool train = mode == Mode::Train;
  return tape.record(std::move(y), rg, [=](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad(self);
    const T* gv = t.value(gi).data.data();
    for (std::size_t c = 0; c < ch; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t i = (b * ch + c) * len + l;
          sum_dy += dy[i];
          sum_dy_xhat += static_cast<double>(dy[i]) * (*xhat)[i];
        }
      if (t.requires_grad(gi)) t.grad(gi)[c] += static_cast<T>(sum_dy_xhat);
      if (t.requires_grad(bi)) t.grad(bi)[c] += static_cast<T>(sum_dy);
      if (!t.requires_grad(xi)) continue;
      auto& dx = t.grad(xi);
      const double scale = static_cast<double>(gv[c]) * (*inv_std)[c];
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t i = (b * ch + c) * len + l;
          if (train) {
            dx[i] += static_cast<T>(scale * (dy[i] - sum_dy / count -
                                             (*xhat)[i] * sum_dy_xhat / count));
          } else {
            dx[i] += static_cast<T>(scale * dy[i]);
          }
        }
    }
  });
}

// ---- elementwise / dense ---------------------------------------------------

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T v = xv[i];
    if (v >= T{0}) {
      y[i] = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T{1} + e);
    }
  }
  Tape<T>& tape = *x.tape;
  const auto xi = x.id;
  return tape.record(std::move(y), tape.requires_grad(xi), [=](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad(self);
    const auto& yv = t.value(self);
    auto& dx = t.grad(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * yv[i] * (T{1} - yv[i]);
  });
}

template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 2 && ws.size() == 2 && b.shape().size() == 1, "dense",
          "expected x [batch, in], w [out, in], b [out]; got x " + to_string(xs) + ", w " +
              to_string(ws) + ", b " + to_string(b.shape()));
  require(xs[1] == ws[1] && b.shape()[0] == ws[0], "dense",
          "feature mismatch between x " + to_string(xs) + " and w " + to_string(ws));
  const auto batch = static_cast<Eigen::Index>(xs[0]);
  const auto in = static_cast<Eigen::Index>(xs[1]);
  const auto out = static_cast<Eigen::Index>(ws[0]);
  Tensor<T> y(Shape{xs[0], ws[0]});
  CMapRM<T> X(x.value().data.data(), batch, in);
  CMapRM<T> W(w.value().data.data(), out, in);
  MapRM<T> Y(y.data.data(), batch, out);
  Y.noalias() = X * W.transpose();
  const T* bias = b.value().data.data();
  for (Eigen::Index r = 0; r < batch; ++r)
    for (Eigen::Index o = 0; o < out; ++o) Y(r, o) += bias[o];

  Tape<T>& tape = *x.tape;
  const auto xi = x.id, wi = w.id, bi = b.id;
  const bool rg = tape.requires_grad(xi) || tape.requires_grad(wi) || tape.requires_grad(bi);
  return tape.record(std::move(y), rg, [=](Tape<T>& t, std::size_t self) {
    CMapRM<T> dY(t.grad(self).data.data(), batch, out);
    if (t.requires_grad(xi)) {
      CMapRM<T> Wv(t.value(wi).data.data(), out, in);
      MapRM<T> dX(t.grad(xi).data.data(), batch, in);
      dX.noalias() += dY * Wv;
    }
    if (t.requires_grad(wi)) {
      CMapRM<T> Xv(t.value(xi).data.data(), batch, in);
      MapRM<T> dW(t.grad(wi).data.data(), out, in);
      dW.noalias() += dY.transpose() * Xv;
    }
    if (t.requires_grad(bi)) {
      auto& db = t.grad(bi);
      for (Eigen::Index o = 0; o < out; ++o) db[static_cast<std::size_t>(o)] += dY.col(o).sum();
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> x, double rate, Mode mode, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw DomainError("dropout: rate must be in [0, 1)");
  if (mode == Mode::Infer || rate == 0.0) return x;
  Rng rng(seed);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(x.value().size());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? T{0} : scale;
    y[i] = x.value()[i] * (*mask)[i];
  }
  Tape<T>& tape = *x.tape;
  const auto xi = x.id;
  return tape.record(std::move(y), tape.requires_grad(xi), [=](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad(self);
    auto& dx = t.grad(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (*mask)[i];
  });
}

template <typename T>
Var<T> euclid_dist(Var<T> a, Var<T> b) {
  require(a.shape().size() == 2 && a.shape() == b.shape(), "euclid_dist",
          "expected matching [batch, d] inputs, got " + to_string(a.shape()) + " and " +
              to_string(b.shape()));
  const std::size_t batch = a.shape()[0], d = a.shape()[1];
  Tensor<T> y(Shape{batch, 1});
  for (std::size_t r = 0; r < batch; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = static_cast<double>(a.value()[r * d + j]) - b.value()[r * d + j];
      s += diff * diff;
    }
    y[r] = static_cast<T>(std::sqrt(s + kEuclidEps));
  }
  Tape<T>& tape = *a.tape;
  const auto ai = a.id, bi = b.id;
  const bool rg = tape.requires_grad(ai) || tape.requires_grad(bi);
  return tape.record(std::move(y), rg, [=](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad(self);
    const auto& yv = t.value(self);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    const bool ga = t.requires_grad(ai), gb = t.requires_grad(bi);
    for (std::size_t r = 0; r < batch; ++r) {
      const T s = dy[r] / yv[r];
      for (std::size_t j = 0; j < d; ++j) {
        const T g = s * (av[r * d + j] - bv[r * d + j]);
        if (ga) t.grad(ai)[r * d + j] += g;
        if (gb) t.grad(bi)[r * d + j] -= g;
      }
    }
  });
}

template <typename T>
Var<T> flatten(Var<T> x) {
  const auto& xs = x.shape();
  require(!xs.empty(), "flatten", "scalar input");
  Tensor<T> y(Shape{xs[0], xs[0] == 0 ? 0 : x.value().size() / xs[0]}, x.value().data);
  Tape<T>& tape = *x.tape;
  const auto xi = x.id;
  return tape.record(std::move(y), tape.requires_grad(xi), [=](Tape<T>& t, std::size_t self) {
    add_into(t.grad(xi), t.grad(self));
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  double s = 0.0;
  for (auto v : x.value().data) s += v;
  Tape<T>& tape = *x.tape;
  const auto xi = x.id;
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(s)), tape.requires_grad(xi),
                     [=](Tape<T>& t, std::size_t self) {
                       const T g = t.grad(self)[0];
                       for (auto& v : t.grad(xi).data) v += g;
                     });
}

template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights) {
  require(weights.size() == x.value().size(), "weighted_sum", "weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += static_cast<double>(x.value()[i]) * weights[i];
  Tape<T>& tape = *x.tape;
  const auto xi = x.id;
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(s)), tape.requires_grad(xi),
                     [=](Tape<T>& t, std::size_t self) {
                       const T g = t.grad(self)[0];
                       auto& dx = t.grad(xi);
                       for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * weights[i];
                     });
}

#define EFBG_INSTANTIATE(T)                                                                  \
  template class Tape<T>;                                                                    \
  template Var<T> conv1d(Var<T>, Var<T>, Var<T>);                                            \
  template Var<T> maxpool1d(Var<T>, std::size_t);                                            \
  template Var<T> batchnorm1d(Var<T>, Var<T>, Var<T>, BatchNormState<T>&, Mode);             \
  template Var<T> sigmoid(Var<T>);                                                           \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                             \
  template Var<T> dropout(Var<T>, double, Mode, std::uint64_t);                              \
  template Var<T> euclid_dist(Var<T>, Var<T>);                                               \
  template Var<T> flatten(Var<T>);                                                           \
  template Var<T> sum(Var<T>);                                                               \
  template Var<T> weighted_sum(Var<T>, const Tensor<T>&);

EFBG_INSTANTIATE(float)
EFBG_INSTANTIATE(double)

#undef EFBG_INSTANTIATE

}  // namespace efbg::ad
