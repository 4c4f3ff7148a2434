// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "lesionaid/checkpoint.hpp"
#include "lesionaid/gradcheck.hpp"
#include "lesionaid/ops.hpp"
#include "lesionaid/optim.hpp"
#include "support/suites.hpp"

using namespace lesionaid;

namespace {

std::vector<double> values(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

TensorD random_d(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(std::move(shape), std::move(v), true);
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("construction checks and shape bookkeeping") {
  auto t = TensorF::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(TensorF::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(TensorF::from({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}), NumericalError);
}

TEST_CASE("matmul examples") {
  auto i = TensorD::from({2, 2}, {1, 0, 0, 1});
  auto a = TensorD::from({2, 2}, {3, 4, 5, 6});
  CHECK(values(matmul(i, a)) == values(a));
  CHECK(matmul(TensorD::from({1, 2}, {1, 2}), TensorD::from({2, 1}, {3, 4})).item() == 11.0);
  CHECK_THROWS_AS(matmul(TensorD::zeros({2, 3}), TensorD::zeros({2, 3})), ShapeError);
}

TEST_CASE("identity times random matrix is exact") {
  Rng rng(4);
  auto a = random_d({6, 5}, rng, -100, 100);
  std::vector<double> eye(36, 0.0);
  for (int k = 0; k < 6; ++k) eye[k * 7] = 1.0;
  CHECK(values(matmul(TensorD::from({6, 6}, eye), a)) == values(a));
}

TEST_CASE("matmul gradient matches central differences") {
  Rng rng(1);
  auto a = random_d({5, 4}, rng), b = random_d({4, 3}, rng);
  auto w = random_d({5, 3}, rng);
  CHECK(grad_check([=] { return sum(mul(matmul(a, b), w)); }, {a, b}) < 1e-6);
}

TEST_CASE("softmax examples") {
  auto s = values(softmax(TensorD::from({2}, {0, 0})));
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));
  auto big = values(softmax(TensorD::from({3}, {1000, 1000, 1000})));
  for (double v : big) CHECK(v == doctest::Approx(1.0 / 3.0));
  auto ln2 = values(softmax(TensorD::from({2}, {0, std::numbers::ln2})));
  CHECK(ln2[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(ln2[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax slices are distributions for random inputs") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = TensorF::from({4, 9}, [&] {
      std::vector<float> v(36);
      for (auto& e : v) e = static_cast<float>(rng.uniform(-30, 30));
      return v;
    }());
    auto s = softmax(x);
    for (int r = 0; r < 4; ++r) {
      double total = 0;
      for (int c = 0; c < 9; ++c) {
        const float p = s.data()[r * 9 + c];
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
        total += p;
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layer_norm examples and statistics") {
  auto one = TensorD::full({4}, 1.0), zero = TensorD::zeros({4});
  for (double v : values(layer_norm(TensorD::from({4}, {5, 5, 5, 5}), one, zero))) CHECK(v == 0.0);
  auto two = values(layer_norm(TensorD::from({2}, {1, 3}), TensorD::full({2}, 1.0), TensorD::zeros({2})));
  CHECK(two[0] == doctest::Approx(-1).epsilon(1e-4));
  CHECK(two[1] == doctest::Approx(1).epsilon(1e-4));

  Rng rng(2);
  auto x = random_d({3, 16}, rng, -5, 5);
  auto y = values(layer_norm(x, TensorD::full({16}, 1.0), TensorD::zeros({16})));
  for (int r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (int c = 0; c < 16; ++c) m += y[r * 16 + c] / 16;
    for (int c = 0; c < 16; ++c) v += (y[r * 16 + c] - m) * (y[r * 16 + c] - m) / 16;
    CHECK(std::abs(m) < 1e-9);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("activation examples") {
  CHECK(gelu(TensorD::scalar(0)).item() == 0.0);
  CHECK(relu(TensorD::scalar(-3)).item() == 0.0);
  CHECK(leaky_relu(TensorD::scalar(-3)).item() == doctest::Approx(-0.6));
  const double x = 1.3;
  const double expected = 0.5 * x * (1 + std::tanh(std::sqrt(2 / std::numbers::pi) * (x + 0.044715 * x * x * x)));
  CHECK(gelu(TensorD::scalar(x)).item() == doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(parse_activation("swish"), ConfigError);
  CHECK(parse_activation("leaky_relu") == Activation::kLeakyRelu);
}

TEST_CASE("gelu gradient at the listed points") {
  for (double x0 : {-2.0, -0.5, 0.5, 2.0}) {
    auto x = TensorD::scalar(x0, true);
    CHECK(grad_check([=] { return gelu(x); }, {x}) < 1e-6);
  }
}

TEST_CASE("convolution examples") {
  auto ones = TensorD::full({1, 1, 3, 3}, 1.0);
  CHECK(conv2d(ones, ones, TensorD(), 1, 0).item() == 9.0);
  auto up = conv_transpose2d(TensorD::zeros({1, 2, 4, 4}), TensorD::zeros({2, 3, 4, 4}), TensorD(), 2, 1);
  CHECK(up.shape() == Shape{1, 3, 8, 8});
  CHECK_THROWS_AS(conv2d(TensorD::zeros({1, 1, 4, 4}), TensorD::zeros({1, 1, 3, 3}), TensorD(), 2, 0), ShapeError);
  CHECK_THROWS_AS(conv2d(TensorD::zeros({1, 1, 2, 2}), TensorD::zeros({1, 1, 3, 3}), TensorD(), 1, 0), ShapeError);
}

TEST_CASE("convolution matches a direct loop") {
  Rng rng(6);
  auto x = random_d({1, 2, 5, 4}, rng), w = random_d({3, 2, 3, 3}, rng);
  auto y = conv2d(x, w, TensorD(), 1, 1);
  REQUIRE(y.shape() == Shape{1, 3, 5, 4});
  for (int f = 0; f < 3; ++f)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int c = 0; c < 2; ++c)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
              const int yi = i + u - 1, xj = j + v - 1;
              if (yi < 0 || yi >= 5 || xj < 0 || xj >= 4) continue;
              s += x.data()[(c * 5 + yi) * 4 + xj] * w.data()[((f * 2 + c) * 3 + u) * 3 + v];
            }
        CHECK(y.data()[(f * 5 + i) * 4 + j] == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  // <conv(x, w), y> == <x, conv_transpose(y, w)> with the kernel axes swapped.
  Rng rng(12);
  auto x = random_d({1, 2, 8, 8}, rng), w = random_d({3, 2, 4, 4}, rng), y = random_d({1, 3, 4, 4}, rng);
  const double lhs = sum(mul(conv2d(x, w, TensorD(), 2, 1), y)).item();
  const double rhs = sum(mul(x, conv_transpose2d(y, w, TensorD(), 2, 1))).item();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("every op passes the gradient check") {
  for (const auto& [name, err] : testing::op_gradcheck_errors()) {
    INFO(name, " error ", err);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("grad_check on sum is exact") {
  Rng rng(3);
  auto x = random_d({7}, rng);
  CHECK(grad_check([=] { return sum(x); }, {x}) < 1e-10);
  x.zero_grad();
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("forward results are bit-identical across runs") {
  Rng a(21), b(21);
  auto x1 = random_d({3, 4, 8}, a), x2 = random_d({3, 4, 8}, b);
  Rng ia(5), ib(5);
  const AttentionShape shape{2, 4, AttentionKind::kDotProduct};
  auto l1 = init_encoder_layer<double>(8, 16, shape, ia);
  auto l2 = init_encoder_layer<double>(8, 16, shape, ib);
  CHECK(values(encoder_layer(x1, l1, shape)) == values(encoder_layer(x2, l2, shape)));
}

TEST_CASE("backward keeps gradients of intermediates and honours no-grad") {
  auto x = TensorD::from({2}, {1, 2}, true);
  auto y = mul(x, x);
  sum(y).backward();
  CHECK(values(TensorD::from({2}, {x.grad()[0], x.grad()[1]})) == std::vector<double>{2, 4});
  CHECK(y.has_grad());
  {
    NoGradGuard guard;
    auto z = mul(x, x);
    CHECK_FALSE(z.requires_grad());
  }
  CHECK(GradMode::enabled());
}

TEST_CASE("non-finite forward results raise") {
  auto big = TensorF::from({1}, {3e38f});
  CHECK_THROWS_AS(scale(big, 10.0f), NumericalError);
  auto z = TensorD::from({2}, {0.0, 1.0});
  CHECK_THROWS_AS(mul(TensorD::from({1}, {1e308}), TensorD::from({1}, {1e308})), NumericalError);
  (void)z;
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto w = TensorD::from({3}, {1, -2, 3}, true);
    AdamState<double> st;
    std::vector<std::vector<double>> g{{0, 0, 0}};
    std::vector<TensorD> ps{w};
    adam_step<double>(ps, g, st);
    CHECK(values(w) == std::vector<double>{1, -2, 3});
    CHECK(st.step == 1);
  }
  SUBCASE("first step has magnitude lr") {
    auto w = TensorD::from({1}, {1.0}, true);
    Adam<double> opt({w}, {0.1, 0.9, 0.999, 1e-8});
    sum(mul(w, w)).backward();
    opt.step();
    CHECK(w.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(opt.state().step == 1);
  }
  SUBCASE("converges on a quadratic") {
    auto w = TensorD::from({1}, {0.0}, true);
    Adam<double> opt({w}, {0.1, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      auto d = add_scalar(w, -3.0);
      sum(mul(d, d)).backward();
      opt.step();
    }
    CHECK(std::abs(w.data()[0] - 3.0) < 1e-2);
  }
  SUBCASE("mismatched gradients raise") {
    auto w = TensorD::from({2}, {1, 2}, true);
    AdamState<double> st;
    std::vector<std::vector<double>> g{{0, 0, 0}};
    std::vector<TensorD> ps{w};
    CHECK_THROWS_AS(adam_step<double>(ps, g, st), ShapeError);
  }
  SUBCASE("step increments by one per update") {
    auto w = TensorD::from({1}, {1.0}, true);
    Adam<double> opt({w}, kClassifierAdam);
    for (std::uint64_t i = 1; i <= 5; ++i) {
      opt.zero_grad();
      sum(mul(w, w)).backward();
      opt.step();
      CHECK(opt.state().step == i);
      CHECK(opt.state().first_moment.at(0).size() == w.numel());
    }
  }
}

TEST_CASE("checkpoint layout is bit-exact") {
  Checkpoint ck;
  const std::vector<float> f{1.0f, -2.5f};
  ck.put<float>("ab", {2}, f);
  const std::vector<double> d{0.5};
  ck.put<double>("c", {1, 1}, d);
  const auto bytes = ck.serialize();
  const std::vector<std::uint8_t> expected = {
      'L', 'S', 'N', 'A', 'I', 'D', '0', '1', 2, 0, 0, 0,
      2, 0, 'a', 'b', 0, 1, 2, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0,
      1, 0, 'c', 1, 2, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xe0, 0x3f};
  CHECK(bytes == expected);
  const Checkpoint back = Checkpoint::deserialize(bytes);
  CHECK(back.get<float>("ab", {2}) == f);
  CHECK(back.get<double>("c", {1, 1}) == d);
  CHECK_THROWS_AS(back.get<float>("ab", {3}), CheckpointError);
  CHECK_THROWS_AS(back.at("missing"), CheckpointError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(Checkpoint::deserialize(bad), CheckpointError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(Checkpoint::deserialize(bad), CheckpointError);
}

TEST_CASE("rng streams replay and split independently") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng root(1);
  CHECK(root.split(1).next_u64() != root.split(2).next_u64());
  CHECK(root.split(3).next_u64() == root.split(3).next_u64());
  Rng n(9);
  double m = 0, v = 0;
  const int count = 20000;
  for (int i = 0; i < count; ++i) {
    const double x = n.normal();
    m += x / count;
    v += x * x / count;
  }
  CHECK(std::abs(m) < 0.03);
  CHECK(std::abs(v - 1.0) < 0.05);
}

}  // TEST_SUITE
