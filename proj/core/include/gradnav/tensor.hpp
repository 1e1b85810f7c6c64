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

#ifndef GRADNAV_TENSOR_HPP_
#define GRADNAV_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gradnav {

// Dense row-major double tensor with reverse-mode autodiff.
//
// Every op records a node on an implicit dynamic tape (the DAG hanging off
// the produced tensors) whenever gradients are enabled and an input requires
// them. backward() walks that DAG once in reverse topological order and
// accumulates d(loss)/d(tensor) additively into each reachable tensor that
// has requires_grad set.

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int64_t dim(int axis) const;
  int64_t numel() const;

  std::span<const double> values() const;
  // Mutable access to the raw buffer. Only meaningful for leaf tensors
  // (optimizer updates, environment state scratch); mutating a tensor that
  // sits inside a recorded graph invalidates gradients.
  std::span<double> values_mut();
  double value() const;  // scalar tensors only
  double at(int64_t flat_index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool requires_grad);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  // Value copy detached from any recorded graph; never requires grad.
  Tensor detach() const;
  // Deep copy of values (leaf), preserving requires_grad.
  Tensor clone() const;

  // Reverse pass from a scalar. Accumulates into .grad of every reachable
  // tensor with requires_grad; calling twice without zero_grad doubles them.
  void backward() const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  friend Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl);
  std::shared_ptr<detail::TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Grad mode

bool grad_enabled();

// RAII guard that disables tape recording in its scope.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Elementwise ops (NumPy-style broadcasting over trailing dimensions)

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// mask is treated as a constant selector (nonzero -> a, zero -> b).
Tensor where(const Tensor& mask, const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Linear algebra / reductions / layout

// 2-D x 2-D matrix product; a rank-1 right operand is treated as a column.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor min_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor max_axis(const Tensor& a, int axis, bool keepdim = false);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t length);
Tensor reshape(const Tensor& a, Shape shape);

// Hamilton product of scalar-first quaternions, batched over leading dims;
// both operands must share a shape whose last extent is 4.
Tensor quat_mul(const Tensor& a, const Tensor& b);

// x: [B, Cin, H, W], w: [Cout, Cin, kh, kw], bias: [Cout] (may be empty).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad);
// [B, C, H, W] -> [B, C]
Tensor global_avg_pool(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }

// ---------------------------------------------------------------------------
// Utilities

// Max over coordinates of |analytic - central difference| /
// (|central difference| + 1e-12) for a scalar-valued f at x.
double check_gradient(const std::function<Tensor(const Tensor&)>& f,
                      const Tensor& x, double step);

double global_grad_norm(std::span<const Tensor> params);
// Scales gradients in place so their global norm is at most max_norm.
void clip_grad_norm(std::span<Tensor> params, double max_norm);

bool all_finite(const Tensor& t);

// Number of doubles held by value buffers reachable from root through the
// recorded graph (window footprint telemetry).
int64_t graph_value_count(const Tensor& root);

}  // namespace gradnav

#endif  // GRADNAV_TENSOR_HPP_
