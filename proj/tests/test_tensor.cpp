// Copyright 2026 The GRaD-Nav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "gradnav/rng.hpp"
#include "gradnav/tensor.hpp"

using namespace gradnav;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("elementwise add") {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = Tensor::from({2}, {3, 4});
  Tensor c = add(a, b);
  CHECK(c.at(0) == 4.0);
  CHECK(c.at(1) == 6.0);
}

TEST_CASE("matmul identity maps any 3-vector to itself") {
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(7);
  for (int trial = 0; trial < 4; ++trial) {
    Tensor x = random_tensor(rng, {3}, -5.0, 5.0);
    Tensor y = matmul(eye, x);
    REQUIRE(y.shape() == Shape{3});
    for (int i = 0; i < 3; ++i) CHECK(y.at(i) == x.at(i));
  }
}

TEST_CASE("tanh at origin has value 0 and derivative 1") {
  Tensor x = Tensor::from({1}, {0.0}, true);
  Tensor y = tanh(x);
  CHECK(y.value() == 0.0);
  y.backward();
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("backward of x^2 at x=3 gives 6") {
  Tensor x = Tensor::from({1}, {3.0}, true);
  Tensor loss = square(x);
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("gradient of sum(A*x) equals column sums of A") {
  Rng rng(11);
  Tensor A = random_tensor(rng, {4, 3}, -2.0, 2.0);
  Tensor x = random_tensor(rng, {3}, -1.0, 1.0);
  x.set_requires_grad(true);
  Tensor loss = sum(matmul(A, x));
  loss.backward();
  for (int j = 0; j < 3; ++j) {
    double col = 0.0;
    for (int i = 0; i < 4; ++i) col += A.at(i * 3 + j);
    CHECK(x.grad()[j] == doctest::Approx(col).epsilon(1e-12));
  }
}

TEST_CASE("two-layer tanh network matches finite differences to 1e-6") {
  Rng rng(23);
  Tensor w1 = random_tensor(rng, {4, 5});
  Tensor b1 = random_tensor(rng, {5});
  Tensor w2 = random_tensor(rng, {5, 1});
  auto f = [&](const Tensor& x) {
    Tensor h = tanh(add(matmul(x, w1), b1));
    return sum(matmul(h, w2));
  };
  Tensor x = random_tensor(rng, {2, 4});
  CHECK(check_gradient(f, x, 1e-6) < 1e-6);
  // Parameters get the same treatment.
  auto f_w1 = [&](const Tensor& w) {
    Tensor h = tanh(add(matmul(x, w), b1));
    return sum(matmul(h, w2));
  };
  CHECK(check_gradient(f_w1, w1, 1e-6) < 1e-6);
}

TEST_CASE("check_gradient on sum of squares") {
  Tensor x = Tensor::from({3}, {1, 2, 3});
  auto f = [](const Tensor& t) { return sum(square(t)); };
  CHECK(check_gradient(f, x, 1e-6) < 1e-8);
}

TEST_CASE("check_gradient on a constant is exactly zero") {
  Tensor x = Tensor::from({3}, {1, 2, 3});
  auto f = [](const Tensor&) { return Tensor::scalar(5.0); };
  CHECK(check_gradient(f, x, 1e-6) == 0.0);
}

TEST_CASE("check_gradient on quaternion normalize + sum") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> q(4);
    double norm = 0.0;
    for (double& v : q) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : q) v /= norm;
    Tensor x = Tensor::from({4}, q);
    auto f = [](const Tensor& t) {
      Tensor n = sqrt(sum(square(t)));
      return sum(div(t, n));
    };
    CHECK(check_gradient(f, x, 1e-6) < 1e-5);
  }
}

TEST_CASE("every op's adjoint matches central finite differences") {
  Rng rng(101);
  const double kTol = 1e-5;
  const double kStep = 1e-6;
  std::vector<Shape> shapes = {{3}, {2, 3}, {4, 1}, {2, 2, 2}};

  for (const Shape& shape : shapes) {
    for (int draw = 0; draw < 3; ++draw) {
      Tensor w = random_tensor(rng, shape, 0.5, 1.5);  // adjoint spreader
      Tensor other = random_tensor(rng, shape, 0.4, 1.6);
      auto weighted = [&](Tensor t) { return sum(mul(t, w)); };

      Tensor x = random_tensor(rng, shape, 0.4, 1.6);
      std::vector<std::function<Tensor(const Tensor&)>> checks = {
          [&](const Tensor& t) { return weighted(add(t, other)); },
          [&](const Tensor& t) { return weighted(sub(other, t)); },
          [&](const Tensor& t) { return weighted(mul(t, other)); },
          [&](const Tensor& t) { return weighted(div(other, t)); },
          [&](const Tensor& t) { return weighted(tanh(t)); },
          [&](const Tensor& t) { return weighted(exp(t)); },
          [&](const Tensor& t) { return weighted(log(t)); },
          [&](const Tensor& t) { return weighted(sqrt(t)); },
          [&](const Tensor& t) { return weighted(square(t)); },
          [&](const Tensor& t) { return weighted(neg(t)); },
          [&](const Tensor& t) { return weighted(add_scalar(t, 0.7)); },
          [&](const Tensor& t) { return weighted(mul_scalar(t, -1.3)); },
          [&](const Tensor& t) { return weighted(relu(add_scalar(t, 0.5))); },
          [&](const Tensor& t) { return weighted(clamp(t, -10.0, 10.0)); },
          [&](const Tensor& t) { return weighted(maximum(t, mul_scalar(other, 0.1))); },
          [&](const Tensor& t) { return weighted(minimum(t, mul_scalar(other, 3.0))); },
          [&](const Tensor& t) { return mean(square(t)); },
          [&](const Tensor& t) { return sum(sum_axis(mul(t, w), 0)); },
          [&](const Tensor& t) { return sum(mean_axis(mul(t, w), -1)); },
          [&](const Tensor& t) { return sum(slice(t, 0, 0, t.dim(0) - 1)); },
          [&](const Tensor& t) {
            return weighted(reshape(concat({slice(t, 0, 0, 1),
                                            slice(t, 0, 1, t.dim(0) - 1)}, 0),
                                    t.shape()));
          },
      };
      for (const auto& f : checks) CHECK(check_gradient(f, x, kStep) < kTol);
    }
  }

  // Broadcasting paths.
  for (int draw = 0; draw < 3; ++draw) {
    Tensor big = random_tensor(rng, {3, 4}, 0.4, 1.6);
    Tensor small = random_tensor(rng, {3, 1}, 0.4, 1.6);
    Tensor row = random_tensor(rng, {4}, 0.4, 1.6);
    auto f1 = [&](const Tensor& t) { return sum(mul(big, t)); };
    CHECK(check_gradient(f1, small, kStep) < kTol);
    auto f2 = [&](const Tensor& t) { return sum(div(t, small)); };
    CHECK(check_gradient(f2, big, kStep) < kTol);
    auto f3 = [&](const Tensor& t) { return sum(add(big, t)); };
    CHECK(check_gradient(f3, row, kStep) < kTol);
  }

  // matmul, quaternion product, argmin/argmax reductions.
  for (int draw = 0; draw < 3; ++draw) {
    Tensor A = random_tensor(rng, {3, 4});
    Tensor B = random_tensor(rng, {4, 2});
    auto fa = [&](const Tensor& t) { return sum(square(matmul(t, B))); };
    auto fb = [&](const Tensor& t) { return sum(square(matmul(A, t))); };
    CHECK(check_gradient(fa, A, kStep) < kTol);
    CHECK(check_gradient(fb, B, kStep) < kTol);

    Tensor qa = random_tensor(rng, {2, 4});
    Tensor qb = random_tensor(rng, {2, 4});
    auto fq = [&](const Tensor& t) { return sum(square(quat_mul(t, qb))); };
    auto fq2 = [&](const Tensor& t) { return sum(square(quat_mul(qa, t))); };
    CHECK(check_gradient(fq, qa, kStep) < kTol);
    CHECK(check_gradient(fq2, qb, kStep) < kTol);

    Tensor m = random_tensor(rng, {3, 4});
    auto fmin = [&](const Tensor& t) { return sum(min_axis(t, 1)); };
    auto fmax = [&](const Tensor& t) { return sum(max_axis(t, 0)); };
    CHECK(check_gradient(fmin, m, kStep) < kTol);
    CHECK(check_gradient(fmax, m, kStep) < kTol);

    Tensor mask = Tensor::from({3}, {1, 0, 1});
    Tensor wa = random_tensor(rng, {3});
    auto fw = [&](const Tensor& t) { return sum(square(where(mask, t, wa))); };
    CHECK(check_gradient(fw, wa, kStep) < kTol);
  }

  // Convolution and pooling.
  for (int draw = 0; draw < 2; ++draw) {
    Tensor x = random_tensor(rng, {2, 2, 5, 5});
    Tensor k = random_tensor(rng, {3, 2, 3, 3});
    Tensor bias = random_tensor(rng, {3});
    auto fx = [&](const Tensor& t) {
      return sum(square(conv2d(t, k, bias, 2, 1)));
    };
    auto fk = [&](const Tensor& t) {
      return sum(square(conv2d(x, t, bias, 2, 1)));
    };
    auto fbias = [&](const Tensor& t) {
      return sum(square(conv2d(x, k, t, 2, 1)));
    };
    auto fpool = [&](const Tensor& t) { return sum(square(global_avg_pool(t))); };
    CHECK(check_gradient(fx, x, kStep) < kTol);
    CHECK(check_gradient(fk, k, kStep) < kTol);
    CHECK(check_gradient(fbias, bias, kStep) < kTol);
    CHECK(check_gradient(fpool, x, kStep) < kTol);
  }
}

TEST_CASE("backward of a two-step composition equals the manual chain-rule product") {
  Rng rng(57);
  Tensor w = random_tensor(rng, {4});
  Tensor a0 = random_tensor(rng, {4});
  Tensor a1 = random_tensor(rng, {4});
  Tensor coeffs = random_tensor(rng, {4});
  auto step = [&](const Tensor& s, const Tensor& a) {
    return tanh(add(mul(s, w), a));
  };

  // One pass through both steps.
  Tensor s0 = random_tensor(rng, {4});
  s0.set_requires_grad(true);
  Tensor s1 = step(s0, a0);
  Tensor s2 = step(s1, a1);
  Tensor loss = sum(mul(s2, coeffs));
  loss.backward();
  std::vector<double> one_pass(s0.grad().begin(), s0.grad().end());

  // Manual two-step product: adjoint of s1 first, then pull through step 1.
  Tensor s1_leaf = s1.detach();
  s1_leaf.set_requires_grad(true);
  Tensor loss2 = sum(mul(step(s1_leaf, a1), coeffs));
  loss2.backward();
  Tensor adj1 = Tensor::from({4}, std::vector<double>(s1_leaf.grad().begin(),
                                                      s1_leaf.grad().end()));
  Tensor s0b = s0.detach();
  s0b.set_requires_grad(true);
  Tensor surrogate = sum(mul(step(s0b, a0), adj1));
  surrogate.backward();

  for (int i = 0; i < 4; ++i)
    CHECK(one_pass[i] == doctest::Approx(s0b.grad()[i]).epsilon(1e-12));
}

TEST_CASE("tape replay with identical inputs is bit-identical") {
  Rng rng(91);
  Tensor x = random_tensor(rng, {3, 3});
  Tensor y = random_tensor(rng, {3, 3});
  auto run = [&]() {
    Tensor xr = x.clone();
    xr.set_requires_grad(true);
    Tensor loss = sum(mul(tanh(matmul(xr, y)), y));
    loss.backward();
    std::vector<double> out(loss.values().begin(), loss.values().end());
    out.insert(out.end(), xr.grad().begin(), xr.grad().end());
    return out;
  };
  auto first = run();
  auto second = run();
  CHECK(bitwise_equal(first, second));
}

TEST_CASE("gradient accumulation is additive across backward passes") {
  Tensor x = Tensor::from({1}, {3.0}, true);
  Tensor loss = square(x);
  loss.backward();
  double once = x.grad()[0];
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0 * once).epsilon(1e-15));
  x.zero_grad();
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(once).epsilon(1e-15));
}

TEST_CASE("shape mismatch names the offending shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  bool named_both = false;
  try {
    add(a, b);
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    named_both = msg.find("[2,3]") != std::string::npos &&
                 msg.find("[4,5]") != std::string::npos;
  }
  CHECK(named_both);
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tensor x = Tensor::zeros({3}, true);
  Tensor y = square(x);
  CHECK_THROWS_AS(y.backward(), std::invalid_argument);
}

TEST_CASE("no-grad scope suppresses graph recording") {
  Tensor x = Tensor::from({1}, {2.0}, true);
  NoGradGuard guard;
  Tensor y = square(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("global norm clipping scales gradients in place") {
  Tensor a = Tensor::from({2}, {0.0, 0.0}, true);
  Tensor loss = sum(mul(a, Tensor::from({2}, {3.0, 4.0})));
  loss.backward();
  std::vector<Tensor> params{a};
  CHECK(global_grad_norm(params) == doctest::Approx(5.0));
  clip_grad_norm(params, 1.0);
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("graph footprint counts doubles reachable through the tape") {
  Tensor x = Tensor::zeros({4}, true);
  Tensor y = tanh(x);
  Tensor z = sum(y);
  CHECK(graph_value_count(z) == 4 + 4 + 1);
}
