#include "doctest.h"

#include <cmath>

#include "efbg/autodiff.hpp"
#include "efbg/error.hpp"
#include "efbg/random.hpp"
#include "support/gradcheck.hpp"

using namespace efbg;
using namespace efbg::ad;
using efbg::testing::check_gradients;
using efbg::testing::DParam;
using efbg::testing::DTape;
using efbg::testing::DVar;
using efbg::testing::random_tensor;

TEST_CASE("conv1d forward") {
  SUBCASE("unit kernel is the identity") {
    Tape<float> t;
    Tensor<float> x(Shape{2, 1, 5}, std::vector<float>{1, 2, 3, 4, 5, -1, -2, -3, -4, -5});
    auto y = conv1d(t.constant(x), t.constant(Tensor<float>(Shape{1, 1, 1}, 1.0f)),
                    t.constant(Tensor<float>(Shape{1}, 0.0f)));
    CHECK(y.value().data == x.data);
  }
  SUBCASE("same padding keeps length; left pad is (k-1)/2") {
    Tape<double> t;
    Tensor<double> x(Shape{1, 1, 6}, std::vector<double>{1, 2, 3, 4, 5, 6});
    Tensor<double> w(Shape{1, 1, 4}, std::vector<double>{1, 10, 100, 1000});
    auto y = conv1d(t.constant(x), t.constant(w), t.constant(Tensor<double>(Shape{1}, 0.0)));
    REQUIRE(y.shape() == Shape{1, 1, 6});
    // Window for output 0 covers x[-1..2].
    CHECK(y.value()[0] == 0 * 1 + 1 * 10 + 2 * 100 + 3 * 1000);
    CHECK(y.value()[5] == 5 * 1 + 6 * 10);
  }
  SUBCASE("length 125 survives kernel 10") {
    Tape<float> t;
    Rng rng(1);
    Tensor<float> x(Shape{2, 3, 125}, 0.5f);
    auto y = conv1d(t.constant(x), t.constant(Tensor<float>(Shape{4, 3, 10}, 0.1f)),
                    t.constant(Tensor<float>(Shape{4}, 0.0f)));
    CHECK(y.shape() == Shape{2, 4, 125});
  }
  SUBCASE("shape mismatch names both shapes") {
    Tape<float> t;
    try {
      conv1d(t.constant(Tensor<float>(Shape{1, 2, 8})), t.constant(Tensor<float>(Shape{1, 3, 2})),
             t.constant(Tensor<float>(Shape{1})));
      FAIL("expected a shape error");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[1, 2, 8]") != std::string::npos);
      CHECK(msg.find("[1, 3, 2]") != std::string::npos);
    }
  }
}

TEST_CASE("maxpool1d") {
  Tape<float> t;
  auto y = maxpool1d(t.constant(Tensor<float>(Shape{1, 1, 4}, std::vector<float>{3, 1, 4, 2})), 2);
  CHECK(y.value().data == std::vector<float>{3, 4});
  std::size_t len = 125;
  for (std::size_t p : {2, 2, 2, 3}) {
    auto z = maxpool1d(t.constant(Tensor<float>(Shape{1, 1, len})), p);
    len = z.shape()[2];
  }
  CHECK(len == 6);
  auto tail = maxpool1d(t.constant(Tensor<float>(Shape{1, 1, 5}, std::vector<float>{1, 2, 3, 4, 9})), 2);
  CHECK(tail.value().data == std::vector<float>{2, 4, 9});
}

TEST_CASE("maxpool gradient reaches only the argmax") {
  DTape t;
  DParam x("x", Tensor<double>(Shape{1, 1, 6}, std::vector<double>{1, 5, 2, 0, 7, 3}));
  auto y = sum(maxpool1d(t.parameter(x), 3));
  t.backward(y);
  CHECK(x.grad.data == std::vector<double>{0, 1, 0, 0, 1, 0});
}

TEST_CASE("batchnorm") {
  SUBCASE("normalized batch passes through") {
    Tape<double> t;
    BatchNormState<double> st(1);
    Tensor<double> x(Shape{4, 1}, std::vector<double>{-1, 1, -1, 1});
    auto y = batchnorm1d(t.constant(x), t.constant(Tensor<double>(Shape{1}, 1.0)),
                         t.constant(Tensor<double>(Shape{1}, 0.0)), st, Mode::Train);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y.value()[i] - x[i]) < 1e-5);
  }
  SUBCASE("constant channel maps to zero") {
    Tape<float> t;
    BatchNormState<float> st(2);
    Tensor<float> x(Shape{3, 2, 4}, 7.0f);
    auto y = batchnorm1d(t.constant(x), t.constant(Tensor<float>(Shape{2}, 1.0f)),
                         t.constant(Tensor<float>(Shape{2}, 0.0f)), st, Mode::Train);
    for (float v : y.value().data) CHECK(v == 0.0f);
  }
  SUBCASE("running statistics update and are used at inference") {
    Tape<double> t;
    BatchNormState<double> st(1);
    Tensor<double> x(Shape{2, 1}, std::vector<double>{1, 3});
    batchnorm1d(t.constant(x), t.constant(Tensor<double>(Shape{1}, 1.0)),
                t.constant(Tensor<double>(Shape{1}, 0.0)), st, Mode::Train);
    CHECK(st.running_mean[0] == doctest::Approx(0.1 * 2.0));
    // Population variance of {1, 3} is 1, the same value used to normalize.
    CHECK(st.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
    auto y = batchnorm1d(t.constant(Tensor<double>(Shape{1, 1}, std::vector<double>{0.2})),
                         t.constant(Tensor<double>(Shape{1}, 1.0)), t.constant(Tensor<double>(Shape{1}, 0.0)),
                         st, Mode::Infer);
    CHECK(y.value()[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("training needs two values per channel") {
    Tape<float> t;
    BatchNormState<float> st(1);
    CHECK_NOTHROW(batchnorm1d(t.constant(Tensor<float>(Shape{1, 1, 3})), t.constant(Tensor<float>(Shape{1}, 1.0f)),
                              t.constant(Tensor<float>(Shape{1})), st, Mode::Train));
    CHECK_THROWS(batchnorm1d(t.constant(Tensor<float>(Shape{1, 1, 1})), t.constant(Tensor<float>(Shape{1}, 1.0f)),
                             t.constant(Tensor<float>(Shape{1})), st, Mode::Train));
  }
}

TEST_CASE("elementwise and reduction ops") {
  Tape<float> t;
  auto s = sigmoid(t.constant(Tensor<float>(Shape{1}, 0.0f)));
  CHECK(s.value()[0] == 0.5f);
  Rng rng(3);
  Tensor<float> v(Shape{3, 8});
  for (auto& e : v.data) e = static_cast<float>(rng.normal());
  auto d = euclid_dist(t.constant(v), t.constant(v));
  REQUIRE(d.shape() == Shape{3, 1});
  for (float e : d.value().data) CHECK(e <= 1e-6f);
  auto dr = dropout(t.constant(v), 0.5, Mode::Infer, 1);
  CHECK(dr.value().data == v.data);
  auto dt = dropout(t.constant(v), 0.5, Mode::Train, 1);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK((dt.value()[i] == 0.0f || dt.value()[i] == 2.0f * v[i]));
}

TEST_CASE("backward semantics") {
  DParam a("a", Tensor<double>(Shape{2, 3}, 0.5));
  DParam b("b", Tensor<double>(Shape{4}, -1.0));
  DTape t;
  auto loss = weighted_sum(flatten(t.parameter(a)), Tensor<double>(Shape{6}, 1.0));
  auto total = sum(t.parameter(b));
  (void)loss;
  SUBCASE("sum of parameters gives unit gradients") {
    t.backward(total);
    for (double g : b.grad.data) CHECK(g == 1.0);
  }
  SUBCASE("two backward calls double the gradient") {
    t.backward(total);
    t.backward(total);
    for (double g : b.grad.data) CHECK(g == 2.0);
  }
  SUBCASE("non-scalar root") {
    CHECK_THROWS_AS(t.backward(t.parameter(a)), ShapeError);
  }
}

TEST_CASE("forward passes are bit-deterministic") {
  Rng rng(4);
  Tensor<float> x(Shape{3, 2, 9}), w(Shape{4, 2, 3}), b(Shape{4});
  for (auto* tt : {&x, &w, &b})
    for (auto& e : tt->data) e = static_cast<float>(rng.normal());
  auto run = [&] {
    Tape<float> t;
    BatchNormState<float> st(4);
    auto y = conv1d(t.constant(x), t.constant(w), t.constant(b));
    y = batchnorm1d(sigmoid(y), t.constant(Tensor<float>(Shape{4}, 1.0f)), t.constant(Tensor<float>(Shape{4})), st,
                    Mode::Train);
    return maxpool1d(y, 2).value().data;
  };
  CHECK(run() == run());
}

namespace {

struct Dims {
  std::size_t batch, ci, co, len, k;
};

Dims random_dims(Rng& rng) {
  return {2 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3), 4 + rng.below(5), 1 + rng.below(4)};
}

}  // namespace

TEST_CASE("conv1d gradient matches finite differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const auto d = random_dims(rng);
    std::vector<DParam> ps{{"x", random_tensor({d.batch, d.ci, d.len}, rng)},
                           {"w", random_tensor({d.co, d.ci, d.k}, rng)},
                           {"b", random_tensor({d.co}, rng)}};
    const auto wts = random_tensor({d.batch * d.co * d.len}, rng);
    auto r = check_gradients(ps, [&](DTape&, std::vector<DVar>& v) {
      return weighted_sum(flatten(conv1d(v[0], v[1], v[2])), wts);
    });
    CHECK(r.rel_error < 1e-6);
  }
}

TEST_CASE("batchnorm gradient matches finite differences") {
  Rng rng(2025);
  for (int trial = 0; trial < 5; ++trial) {
    const auto d = random_dims(rng);
    std::vector<DParam> ps{{"x", random_tensor({d.batch, d.co, d.len}, rng)},
                           {"g", random_tensor({d.co}, rng, 0.5, 1.5)},
                           {"b", random_tensor({d.co}, rng)}};
    const auto wts = random_tensor({d.batch * d.co * d.len}, rng);
    auto r = check_gradients(ps, [&](DTape&, std::vector<DVar>& v) {
      BatchNormState<double> st(d.co);
      return weighted_sum(flatten(batchnorm1d(v[0], v[1], v[2], st, Mode::Train)), wts);
    });
    CHECK(r.rel_error < 1e-6);
  }
}

TEST_CASE("dense, sigmoid and euclid_dist gradients match finite differences") {
  Rng rng(2026);
  for (int trial = 0; trial < 5; ++trial) {
    const auto d = random_dims(rng);
    const std::size_t in = d.ci + 2;
    std::vector<DParam> ps{{"x", random_tensor({d.batch, in}, rng)},
                           {"y", random_tensor({d.batch, in}, rng)},
                           {"w", random_tensor({d.co, in}, rng)},
                           {"b", random_tensor({d.co}, rng)}};
    const auto wts = random_tensor({d.batch}, rng);
    auto r = check_gradients(ps, [&](DTape&, std::vector<DVar>& v) {
      auto a = sigmoid(dense(v[0], v[2], v[3]));
      auto b = sigmoid(dense(v[1], v[2], v[3]));
      return weighted_sum(flatten(euclid_dist(a, b)), wts);
    });
    CHECK(r.rel_error < 1e-6);
  }
}

TEST_CASE("conv -> sigmoid -> dense composition gradient matches finite differences") {
  Rng rng(2027);
  for (int trial = 0; trial < 5; ++trial) {
    const auto d = random_dims(rng);
    std::vector<DParam> ps{{"x", random_tensor({d.batch, d.ci, d.len}, rng)},
                           {"w", random_tensor({d.co, d.ci, d.k}, rng)},
                           {"b", random_tensor({d.co}, rng)},
                           {"d", random_tensor({2, d.co * d.len}, rng)},
                           {"e", random_tensor({2}, rng)}};
    const auto wts = random_tensor({d.batch * 2}, rng);
    auto r = check_gradients(ps, [&](DTape&, std::vector<DVar>& v) {
      auto h = flatten(sigmoid(conv1d(v[0], v[1], v[2])));
      return weighted_sum(flatten(dense(h, v[3], v[4])), wts);
    });
    CHECK(r.rel_error < 1e-6);
  }
}

TEST_CASE("maxpool and dropout gradients match finite differences") {
  Rng rng(2028);
  for (int trial = 0; trial < 5; ++trial) {
    const auto d = random_dims(rng);
    std::vector<DParam> ps{{"x", random_tensor({d.batch, d.co, d.len}, rng)}};
    const std::size_t pool = 2 + rng.below(2);
    const std::size_t out_len = (d.len + pool - 1) / pool;
    const auto wts = random_tensor({d.batch * d.co * out_len}, rng);
    auto r = check_gradients(ps, [&](DTape&, std::vector<DVar>& v) {
      return weighted_sum(flatten(dropout(maxpool1d(v[0], pool), 0.3, Mode::Train, 17)), wts);
    });
    CHECK(r.rel_error < 1e-6);
  }
}

TEST_CASE("no NaN on random valid inputs") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<float> t;
    BatchNormState<float> st(4);
    Tensor<float> x(Shape{4, 3, 20}), w(Shape{4, 3, 5}), b(Shape{4});
    for (auto* tt : {&x, &w, &b})
      for (auto& e : tt->data) e = static_cast<float>(10.0 * rng.normal());
    auto y = maxpool1d(batchnorm1d(sigmoid(conv1d(t.constant(x), t.constant(w), t.constant(b))),
                                   t.constant(Tensor<float>(Shape{4}, 1.0f)), t.constant(Tensor<float>(Shape{4})),
                                   st, Mode::Train),
                       3);
    for (float v : y.value().data) CHECK(std::isfinite(v));
  }
}
