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

#include "gradnav/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace gradnav {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until populated
  std::shared_ptr<Node> producer;
};

// Adjoint slots for a node's inputs; nullptr where no gradient is needed.
using AdjSlots = std::vector<std::vector<double>*>;

struct Node {
  const char* op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::weak_ptr<TensorImpl> output;
  std::function<void(const TensorImpl& out, const std::vector<double>& out_adj,
                     const AdjSlots& in_adj)>
      backward;
};

}  // namespace detail

using detail::AdjSlots;
using detail::Node;
using detail::TensorImpl;

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("tensor: " + msg);
}

void check_defined(const Tensor& t, const char* who) {
  if (!t.defined()) fail(std::string(who) + ": undefined tensor operand");
}

bool any_requires_grad(const std::vector<Tensor>& inputs) {
  for (const auto& t : inputs)
    if (t.defined() && t.requires_grad()) return true;
  return false;
}

using BackwardFn =
    std::function<void(const TensorImpl&, const std::vector<double>&,
                       const AdjSlots&)>;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_tensor(std::shared_ptr<TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

namespace {

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    fail("value buffer length " + std::to_string(values.size()) +
         " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return make_tensor(std::move(impl));
}

// Wraps a computed result, recording a tape node when gradients are live.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  if (g_grad_enabled && any_requires_grad(inputs)) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.impl_ptr());
    node->output = impl;
    node->backward = std::move(backward);
    impl->producer = std::move(node);
  }
  return make_tensor(std::move(impl));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor basics

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return make_leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return make_leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  return make_leaf(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return make_leaf({1}, {value}, false); }

const Shape& Tensor::shape() const {
  if (!impl_) fail("shape() on undefined tensor");
  return impl_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int64_t Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    fail("dim axis out of range for " + shape_str(s));
  return s[axis];
}

int64_t Tensor::numel() const {
  return impl_ ? static_cast<int64_t>(impl_->values.size()) : 0;
}

std::span<const double> Tensor::values() const {
  if (!impl_) fail("values() on undefined tensor");
  return impl_->values;
}

std::span<double> Tensor::values_mut() {
  if (!impl_) fail("values_mut() on undefined tensor");
  return impl_->values;
}

double Tensor::value() const {
  if (numel() != 1)
    fail("value() requires a scalar tensor, got shape " + shape_str(shape()));
  return impl_->values[0];
}

double Tensor::at(int64_t flat_index) const {
  if (!impl_ || flat_index < 0 ||
      flat_index >= static_cast<int64_t>(impl_->values.size()))
    fail("at(): index out of range");
  return impl_->values[flat_index];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool requires_grad) {
  if (!impl_) fail("set_requires_grad on undefined tensor");
  impl_->requires_grad = requires_grad;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) fail("grad() on undefined tensor");
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (!impl_) fail("grad_mut() on undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  if (!impl_) fail("detach() on undefined tensor");
  return make_leaf(impl_->shape, impl_->values, false);
}

Tensor Tensor::clone() const {
  if (!impl_) fail("clone() on undefined tensor");
  return make_leaf(impl_->shape, impl_->values, impl_->requires_grad);
}

// ---------------------------------------------------------------------------
// Backward engine

void Tensor::backward() const {
  if (!impl_) fail("backward() on undefined tensor");
  if (numel() != 1)
    fail("backward() requires a scalar loss, got shape " +
         shape_str(impl_->shape));

  // Reverse topological order via iterative DFS over producer nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_input;
  };
  std::vector<Frame> stack;
  if (impl_->producer) {
    visited.insert(impl_->producer.get());
    stack.push_back({impl_->producer.get(), 0});
  }
  std::vector<TensorImpl*> touched;
  std::unordered_set<TensorImpl*> touched_set;
  auto touch = [&](TensorImpl* t) {
    if (touched_set.insert(t).second) touched.push_back(t);
  };
  touch(impl_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_input < f.node->inputs.size()) {
      TensorImpl* in = f.node->inputs[f.next_input].get();
      ++f.next_input;
      touch(in);
      Node* child = in->producer.get();
      if (child && visited.insert(child).second)
        stack.push_back({child, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Per-pass adjoints, kept apart from the persistent .grad buffers so that
  // repeated backward calls accumulate additively.
  std::unordered_map<TensorImpl*, std::vector<double>> adjoint;
  adjoint[impl_.get()] = {1.0};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto out = node->output.lock();
    if (!out) continue;
    auto found = adjoint.find(out.get());
    if (found == adjoint.end()) continue;
    AdjSlots slots(node->inputs.size(), nullptr);
    for (size_t i = 0; i < node->inputs.size(); ++i) {
      TensorImpl* in = node->inputs[i].get();
      if (!in->requires_grad) continue;
      auto& slot = adjoint[in];
      if (slot.empty()) slot.assign(in->values.size(), 0.0);
      slots[i] = &slot;
    }
    node->backward(*out, found->second, slots);
  }

  for (TensorImpl* t : touched) {
    if (!t->requires_grad) continue;
    auto found = adjoint.find(t);
    if (found == adjoint.end()) continue;
    if (t->grad.empty()) t->grad.assign(t->values.size(), 0.0);
    for (size_t i = 0; i < t->grad.size(); ++i) t->grad[i] += found->second[i];
  }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers

namespace {

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (size_t i = 0; i < rank; ++i) {
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      fail(std::string(op) + ": shapes " + shape_str(a) + " and " +
           shape_str(b) + " are not broadcast-compatible");
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

// Maps a flat index in the output to a flat index in a broadcast input.
struct BroadcastIndex {
  bool identity = true;
  std::vector<int64_t> out_stride;
  std::vector<int64_t> out_dim;
  std::vector<int64_t> in_stride;

  int64_t map(int64_t flat) const {
    if (identity) return flat;
    int64_t idx = 0;
    for (size_t k = 0; k < out_dim.size(); ++k)
      idx += ((flat / out_stride[k]) % out_dim[k]) * in_stride[k];
    return idx;
  }
};

BroadcastIndex make_bindex(const Shape& out, const Shape& in) {
  BroadcastIndex b;
  if (in == out) return b;
  b.identity = false;
  size_t rank = out.size();
  b.out_stride.assign(rank, 1);
  b.out_dim = std::vector<int64_t>(out.begin(), out.end());
  // Row-major strides of the output.
  for (size_t i = rank; i-- > 0;) {
    b.out_stride[i] = (i + 1 < rank) ? b.out_stride[i + 1] * out[i + 1] : 1;
  }
  // Strides of the input aligned to trailing dims; 0 where broadcast.
  std::vector<int64_t> in_full(rank, 1);
  size_t offset = rank - in.size();
  for (size_t i = 0; i < in.size(); ++i) in_full[offset + i] = in[i];
  std::vector<int64_t> stride(rank, 0);
  int64_t acc = 1;
  for (size_t i = rank; i-- > 0;) {
    stride[i] = (in_full[i] == 1) ? 0 : acc;
    acc *= in_full[i];
  }
  b.in_stride = std::move(stride);
  return b;
}

template <class Fwd, class Partials>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b,
                          Fwd fwd, Partials partials) {
  check_defined(a, op);
  check_defined(b, op);
  Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
  int64_t n = shape_numel(out_shape);
  BroadcastIndex ia = make_bindex(out_shape, a.shape());
  BroadcastIndex ib = make_bindex(out_shape, b.shape());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(n);
  if (ia.identity && ib.identity) {
    for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (int64_t i = 0; i < n; ++i)
      out[i] = fwd(av[ia.map(i)], bv[ib.map(i)]);
  }
  return make_result(
      op, std::move(out_shape), std::move(out), {a, b},
      [ia, ib, partials](const TensorImpl& out_impl,
                         const std::vector<double>& g, const AdjSlots& adj) {
        const double* av = out_impl.producer->inputs[0]->values.data();
        const double* bv = out_impl.producer->inputs[1]->values.data();
        const double* yv = out_impl.values.data();
        double* ga = adj[0] ? adj[0]->data() : nullptr;
        double* gb = adj[1] ? adj[1]->data() : nullptr;
        int64_t n = static_cast<int64_t>(out_impl.values.size());
        for (int64_t i = 0; i < n; ++i) {
          int64_t j = ia.map(i);
          int64_t k = ib.map(i);
          double da = 0, db = 0;
          partials(av[j], bv[k], yv[i], g[i], da, db);
          if (ga) ga[j] += da;
          if (gb) gb[k] += db;
        }
      });
}

template <class Fwd, class Bwd>
Tensor unary_elementwise(const char* op, const Tensor& a, Fwd fwd, Bwd bwd) {
  check_defined(a, op);
  int64_t n = a.numel();
  const double* av = a.values().data();
  std::vector<double> out(n);
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  return make_result(
      op, a.shape(), std::move(out), {a},
      [bwd](const TensorImpl& out_impl, const std::vector<double>& g,
            const AdjSlots& adj) {
        if (!adj[0]) return;
        const double* xv = out_impl.producer->inputs[0]->values.data();
        const double* yv = out_impl.values.data();
        double* gx = adj[0]->data();
        int64_t n = static_cast<int64_t>(out_impl.values.size());
        for (int64_t i = 0; i < n; ++i) gx[i] += bwd(xv[i], yv[i], g[i]);
      });
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double, double g, double& da, double& db) {
        if (x >= y)
          da = g;
        else
          db = g;
      });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double, double g, double& da, double& db) {
        if (x <= y)
          da = g;
        else
          db = g;
      });
}

Tensor neg(const Tensor& a) {
  return unary_elementwise(
      "neg", a, [](double x) { return -x; },
      [](double, double, double g) { return -g; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      "add_scalar", a, [s](double x) { return x + s; },
      [](double, double, double g) { return g; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      "mul_scalar", a, [s](double x) { return x * s; },
      [s](double, double, double g) { return g * s; });
}

Tensor tanh(const Tensor& a) {
  return unary_elementwise(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y, double g) { return g * (1.0 - y * y); });
}

Tensor exp(const Tensor& a) {
  return unary_elementwise(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& a) {
  return unary_elementwise(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double, double g) { return g / x; });
}

Tensor sqrt(const Tensor& a) {
  // Subgradient 0 at exactly 0 keeps norms of coincident points finite.
  return unary_elementwise(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double x, double y, double g) {
        return x > 0.0 ? g * 0.5 / y : 0.0;
      });
}

Tensor square(const Tensor& a) {
  return unary_elementwise(
      "square", a, [](double x) { return x * x; },
      [](double x, double, double g) { return 2.0 * x * g; });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double, double g) { return x > 0.0 ? g : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) fail("clamp: lo > hi");
  return unary_elementwise(
      "clamp", a,
      [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double, double g) {
        return (x > lo && x < hi) ? g : 0.0;
      });
}

Tensor where(const Tensor& mask, const Tensor& a, const Tensor& b) {
  check_defined(mask, "where");
  check_defined(a, "where");
  check_defined(b, "where");
  Shape out_shape = broadcast_shape("where", mask.shape(),
                                    broadcast_shape("where", a.shape(),
                                                    b.shape()));
  int64_t n = shape_numel(out_shape);
  BroadcastIndex im = make_bindex(out_shape, mask.shape());
  BroadcastIndex ia = make_bindex(out_shape, a.shape());
  BroadcastIndex ib = make_bindex(out_shape, b.shape());
  const double* mv = mask.values().data();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(n);
  for (int64_t i = 0; i < n; ++i)
    out[i] = mv[im.map(i)] != 0.0 ? av[ia.map(i)] : bv[ib.map(i)];
  return make_result(
      "where", std::move(out_shape), std::move(out), {mask, a, b},
      [im, ia, ib](const TensorImpl& out_impl, const std::vector<double>& g,
                   const AdjSlots& adj) {
        const double* mv = out_impl.producer->inputs[0]->values.data();
        double* ga = adj[1] ? adj[1]->data() : nullptr;
        double* gb = adj[2] ? adj[2]->data() : nullptr;
        int64_t n = static_cast<int64_t>(out_impl.values.size());
        for (int64_t i = 0; i < n; ++i) {
          if (mv[im.map(i)] != 0.0) {
            if (ga) ga[ia.map(i)] += g[i];
          } else {
            if (gb) gb[ib.map(i)] += g[i];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Matrix multiply (Eigen-backed kernel)

namespace {
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  bool vector_rhs = b.rank() == 1;
  if (a.rank() != 2 || (b.rank() != 2 && !vector_rhs))
    fail("matmul: expected 2-D operands, got " + shape_str(a.shape()) +
         " and " + shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1);
  int64_t n = vector_rhs ? 1 : b.dim(1);
  if (k != b.dim(0))
    fail("matmul: inner dimensions differ for " + shape_str(a.shape()) +
         " and " + shape_str(b.shape()));
  std::vector<double> out(m * n);
  {
    ConstMatMap A(a.values().data(), m, k);
    ConstMatMap B(b.values().data(), k, n);
    MatMap C(out.data(), m, n);
    // Row-by-row so a batched product is bit-identical to stacked
    // single-row products.
    for (int64_t i = 0; i < m; ++i) C.row(i).noalias() = A.row(i) * B;
  }
  Shape out_shape = vector_rhs ? Shape{m} : Shape{m, n};
  return make_result(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [m, k, n](const TensorImpl& out_impl, const std::vector<double>& g,
                const AdjSlots& adj) {
        ConstMatMap A(out_impl.producer->inputs[0]->values.data(), m, k);
        ConstMatMap B(out_impl.producer->inputs[1]->values.data(), k, n);
        ConstMatMap G(g.data(), m, n);
        if (adj[0]) {
          MatMap GA(adj[0]->data(), m, k);
          for (int64_t i = 0; i < m; ++i)
            GA.row(i).noalias() += G.row(i) * B.transpose();
        }
        if (adj[1]) {
          MatMap GB(adj[1]->data(), k, n);
          GB.noalias() += A.transpose() * G;
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  const double* av = a.values().data();
  double acc = 0.0;
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += av[i];
  return make_result(
      "sum", {1}, {acc}, {a},
      [](const TensorImpl&, const std::vector<double>& g,
         const AdjSlots& adj) {
        if (!adj[0]) return;
        for (double& d : *adj[0]) d += g[0];
      });
}

Tensor mean(const Tensor& a) {
  check_defined(a, "mean");
  int64_t n = a.numel();
  if (n == 0) fail("mean of empty tensor");
  const double* av = a.values().data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += av[i];
  double inv = 1.0 / static_cast<double>(n);
  return make_result(
      "mean", {1}, {acc * inv}, {a},
      [inv](const TensorImpl&, const std::vector<double>& g,
            const AdjSlots& adj) {
        if (!adj[0]) return;
        double gi = g[0] * inv;
        for (double& d : *adj[0]) d += gi;
      });
}

namespace {

// Decomposes a shape around `axis` into outer x axis x inner blocks.
struct AxisBlocks {
  int64_t outer = 1, axis = 1, inner = 1;
};

AxisBlocks axis_blocks(const Shape& shape, int axis) {
  AxisBlocks b;
  b.axis = shape[axis];
  for (int i = 0; i < axis; ++i) b.outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) b.inner *= shape[i];
  return b;
}

int normalize_axis(const char* op, const Shape& shape, int axis) {
  int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    fail(std::string(op) + ": axis out of range for " + shape_str(shape));
  return axis;
}

Shape reduced_shape(const Shape& shape, int axis, bool keepdim) {
  Shape out = shape;
  if (keepdim)
    out[axis] = 1;
  else
    out.erase(out.begin() + axis);
  if (out.empty()) out = {1};
  return out;
}

}  // namespace

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) {
  check_defined(a, "sum_axis");
  axis = normalize_axis("sum_axis", a.shape(), axis);
  AxisBlocks blk = axis_blocks(a.shape(), axis);
  std::vector<double> out(blk.outer * blk.inner, 0.0);
  const double* av = a.values().data();
  for (int64_t o = 0; o < blk.outer; ++o)
    for (int64_t x = 0; x < blk.axis; ++x)
      for (int64_t i = 0; i < blk.inner; ++i)
        out[o * blk.inner + i] += av[(o * blk.axis + x) * blk.inner + i];
  return make_result(
      "sum_axis", reduced_shape(a.shape(), axis, keepdim), std::move(out), {a},
      [blk](const TensorImpl&, const std::vector<double>& g,
            const AdjSlots& adj) {
        if (!adj[0]) return;
        double* ga = adj[0]->data();
        for (int64_t o = 0; o < blk.outer; ++o)
          for (int64_t x = 0; x < blk.axis; ++x)
            for (int64_t i = 0; i < blk.inner; ++i)
              ga[(o * blk.axis + x) * blk.inner + i] += g[o * blk.inner + i];
      });
}

Tensor mean_axis(const Tensor& a, int axis, bool keepdim) {
  check_defined(a, "mean_axis");
  int na = normalize_axis("mean_axis", a.shape(), axis);
  double inv = 1.0 / static_cast<double>(a.shape()[na]);
  return mul_scalar(sum_axis(a, axis, keepdim), inv);
}

namespace {

template <class Better>
Tensor arg_reduce(const char* op, const Tensor& a, int axis, bool keepdim,
                  Better better) {
  check_defined(a, op);
  axis = normalize_axis(op, a.shape(), axis);
  AxisBlocks blk = axis_blocks(a.shape(), axis);
  std::vector<double> out(blk.outer * blk.inner);
  auto arg = std::make_shared<std::vector<int64_t>>(blk.outer * blk.inner);
  const double* av = a.values().data();
  for (int64_t o = 0; o < blk.outer; ++o)
    for (int64_t i = 0; i < blk.inner; ++i) {
      int64_t best_idx = (o * blk.axis + 0) * blk.inner + i;
      double best = av[best_idx];
      for (int64_t x = 1; x < blk.axis; ++x) {
        int64_t idx = (o * blk.axis + x) * blk.inner + i;
        if (better(av[idx], best)) {
          best = av[idx];
          best_idx = idx;
        }
      }
      out[o * blk.inner + i] = best;
      (*arg)[o * blk.inner + i] = best_idx;
    }
  return make_result(
      op, reduced_shape(a.shape(), axis, keepdim), std::move(out), {a},
      [arg](const TensorImpl&, const std::vector<double>& g,
            const AdjSlots& adj) {
        if (!adj[0]) return;
        double* ga = adj[0]->data();
        for (size_t i = 0; i < arg->size(); ++i) ga[(*arg)[i]] += g[i];
      });
}

}  // namespace

Tensor min_axis(const Tensor& a, int axis, bool keepdim) {
  return arg_reduce("min_axis", a, axis, keepdim,
                    [](double c, double b) { return c < b; });
}

Tensor max_axis(const Tensor& a, int axis, bool keepdim) {
  return arg_reduce("max_axis", a, axis, keepdim,
                    [](double c, double b) { return c > b; });
}

// ---------------------------------------------------------------------------
// Layout ops

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail("concat: no inputs");
  for (const auto& p : parts) check_defined(p, "concat");
  Shape base = parts[0].shape();
  int naxis = normalize_axis("concat", base, axis);
  int64_t total_axis = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(base.size()))
      fail("concat: rank mismatch between " + shape_str(base) + " and " +
           shape_str(p.shape()));
    for (int d = 0; d < p.rank(); ++d)
      if (d != naxis && p.shape()[d] != base[d])
        fail("concat: shape mismatch between " + shape_str(base) + " and " +
             shape_str(p.shape()));
    total_axis += p.shape()[naxis];
  }
  Shape out_shape = base;
  out_shape[naxis] = total_axis;
  AxisBlocks blk = axis_blocks(out_shape, naxis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<int64_t> axis_sizes;
  int64_t offset = 0;
  for (const auto& p : parts) {
    int64_t pa = p.shape()[naxis];
    axis_sizes.push_back(pa);
    const double* pv = p.values().data();
    for (int64_t o = 0; o < blk.outer; ++o)
      for (int64_t x = 0; x < pa; ++x)
        for (int64_t i = 0; i < blk.inner; ++i)
          out[(o * blk.axis + offset + x) * blk.inner + i] =
              pv[(o * pa + x) * blk.inner + i];
    offset += pa;
  }
  return make_result(
      "concat", std::move(out_shape), std::move(out), parts,
      [blk, axis_sizes](const TensorImpl&, const std::vector<double>& g,
                        const AdjSlots& adj) {
        int64_t offset = 0;
        for (size_t pi = 0; pi < axis_sizes.size(); ++pi) {
          int64_t pa = axis_sizes[pi];
          if (adj[pi]) {
            double* gp = adj[pi]->data();
            for (int64_t o = 0; o < blk.outer; ++o)
              for (int64_t x = 0; x < pa; ++x)
                for (int64_t i = 0; i < blk.inner; ++i)
                  gp[(o * pa + x) * blk.inner + i] +=
                      g[(o * blk.axis + offset + x) * blk.inner + i];
          }
          offset += pa;
        }
      });
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t length) {
  check_defined(a, "slice");
  int naxis = normalize_axis("slice", a.shape(), axis);
  int64_t extent = a.shape()[naxis];
  if (start < 0 || length < 0 || start + length > extent)
    fail("slice: range [" + std::to_string(start) + "," +
         std::to_string(start + length) + ") out of bounds for axis extent " +
         std::to_string(extent));
  AxisBlocks blk = axis_blocks(a.shape(), naxis);
  Shape out_shape = a.shape();
  out_shape[naxis] = length;
  std::vector<double> out(shape_numel(out_shape));
  const double* av = a.values().data();
  for (int64_t o = 0; o < blk.outer; ++o)
    for (int64_t x = 0; x < length; ++x)
      for (int64_t i = 0; i < blk.inner; ++i)
        out[(o * length + x) * blk.inner + i] =
            av[(o * blk.axis + start + x) * blk.inner + i];
  return make_result(
      "slice", std::move(out_shape), std::move(out), {a},
      [blk, start, length](const TensorImpl&, const std::vector<double>& g,
                           const AdjSlots& adj) {
        if (!adj[0]) return;
        double* ga = adj[0]->data();
        for (int64_t o = 0; o < blk.outer; ++o)
          for (int64_t x = 0; x < length; ++x)
            for (int64_t i = 0; i < blk.inner; ++i)
              ga[(o * blk.axis + start + x) * blk.inner + i] +=
                  g[(o * length + x) * blk.inner + i];
      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_defined(a, "reshape");
  if (shape_numel(shape) != a.numel())
    fail("reshape: cannot view " + shape_str(a.shape()) + " as " +
         shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(
      "reshape", std::move(shape), std::move(out), {a},
      [](const TensorImpl&, const std::vector<double>& g,
         const AdjSlots& adj) {
        if (!adj[0]) return;
        double* ga = adj[0]->data();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      });
}

// ---------------------------------------------------------------------------
// Quaternion product

Tensor quat_mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "quat_mul");
  check_defined(b, "quat_mul");
  if (a.shape() != b.shape() || a.shape().empty() || a.shape().back() != 4)
    fail("quat_mul: operands must share a shape ending in 4, got " +
         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  int64_t count = a.numel() / 4;
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(a.numel());
  for (int64_t q = 0; q < count; ++q) {
    const double* p = av + q * 4;
    const double* r = bv + q * 4;
    double* y = out.data() + q * 4;
    y[0] = p[0] * r[0] - p[1] * r[1] - p[2] * r[2] - p[3] * r[3];
    y[1] = p[0] * r[1] + p[1] * r[0] + p[2] * r[3] - p[3] * r[2];
    y[2] = p[0] * r[2] - p[1] * r[3] + p[2] * r[0] + p[3] * r[1];
    y[3] = p[0] * r[3] + p[1] * r[2] - p[2] * r[1] + p[3] * r[0];
  }
  return make_result(
      "quat_mul", a.shape(), std::move(out), {a, b},
      [count](const TensorImpl& out_impl, const std::vector<double>& g,
              const AdjSlots& adj) {
        const double* av = out_impl.producer->inputs[0]->values.data();
        const double* bv = out_impl.producer->inputs[1]->values.data();
        for (int64_t q = 0; q < count; ++q) {
          const double* p = av + q * 4;
          const double* r = bv + q * 4;
          const double* gy = g.data() + q * 4;
          if (adj[0]) {
            double* gp = adj[0]->data() + q * 4;
            gp[0] += gy[0] * r[0] + gy[1] * r[1] + gy[2] * r[2] + gy[3] * r[3];
            gp[1] += -gy[0] * r[1] + gy[1] * r[0] - gy[2] * r[3] + gy[3] * r[2];
            gp[2] += -gy[0] * r[2] + gy[1] * r[3] + gy[2] * r[0] - gy[3] * r[1];
            gp[3] += -gy[0] * r[3] - gy[1] * r[2] + gy[2] * r[1] + gy[3] * r[0];
          }
          if (adj[1]) {
            double* gr = adj[1]->data() + q * 4;
            gr[0] += gy[0] * p[0] + gy[1] * p[1] + gy[2] * p[2] + gy[3] * p[3];
            gr[1] += -gy[0] * p[1] + gy[1] * p[0] + gy[2] * p[3] - gy[3] * p[2];
            gr[2] += -gy[0] * p[2] - gy[1] * p[3] + gy[2] * p[0] + gy[3] * p[1];
            gr[3] += -gy[0] * p[3] + gy[1] * p[2] - gy[2] * p[1] + gy[3] * p[0];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM forward; column buffers are recomputed in the
// backward pass instead of being saved, keeping long BPTT graphs slim)

namespace {

struct ConvDims {
  int64_t batch, cin, h, w, cout, kh, kw, ho, wo;
  int stride, pad;
};

void im2col(const double* x, const ConvDims& d, double* col) {
  // col: [cin*kh*kw, ho*wo]
  for (int64_t c = 0; c < d.cin; ++c)
    for (int64_t ky = 0; ky < d.kh; ++ky)
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        double* row = col + ((c * d.kh + ky) * d.kw + kx) * (d.ho * d.wo);
        for (int64_t oy = 0; oy < d.ho; ++oy) {
          int64_t iy = oy * d.stride + ky - d.pad;
          for (int64_t ox = 0; ox < d.wo; ++ox) {
            int64_t ix = ox * d.stride + kx - d.pad;
            row[oy * d.wo + ox] =
                (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                    ? x[(c * d.h + iy) * d.w + ix]
                    : 0.0;
          }
        }
      }
}

void col2im_add(const double* col, const ConvDims& d, double* gx) {
  for (int64_t c = 0; c < d.cin; ++c)
    for (int64_t ky = 0; ky < d.kh; ++ky)
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        const double* row = col + ((c * d.kh + ky) * d.kw + kx) * (d.ho * d.wo);
        for (int64_t oy = 0; oy < d.ho; ++oy) {
          int64_t iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          for (int64_t ox = 0; ox < d.wo; ++ox) {
            int64_t ix = ox * d.stride + kx - d.pad;
            if (ix < 0 || ix >= d.w) continue;
            gx[(c * d.h + iy) * d.w + ix] += row[oy * d.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad) {
  check_defined(x, "conv2d");
  check_defined(w, "conv2d");
  if (x.rank() != 4 || w.rank() != 4)
    fail("conv2d: expected x [B,C,H,W] and w [Cout,Cin,kh,kw], got " +
         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (x.dim(1) != w.dim(1))
    fail("conv2d: channel mismatch between " + shape_str(x.shape()) + " and " +
         shape_str(w.shape()));
  if (stride < 1) fail("conv2d: stride must be >= 1");
  ConvDims d;
  d.batch = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho < 1 || d.wo < 1) fail("conv2d: kernel larger than padded input");
  bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != d.cout))
    fail("conv2d: bias shape " + shape_str(bias.shape()) +
         " does not match Cout " + std::to_string(d.cout));

  int64_t k = d.cin * d.kh * d.kw;
  int64_t hw = d.ho * d.wo;
  std::vector<double> col(k * hw);
  std::vector<double> out(d.batch * d.cout * hw);
  const double* xv = x.values().data();
  ConstMatMap W2(w.values().data(), d.cout, k);
  for (int64_t b = 0; b < d.batch; ++b) {
    im2col(xv + b * d.cin * d.h * d.w, d, col.data());
    ConstMatMap C(col.data(), k, hw);
    MatMap O(out.data() + b * d.cout * hw, d.cout, hw);
    O.noalias() = W2 * C;
    if (has_bias) {
      const double* bv = bias.values().data();
      for (int64_t c = 0; c < d.cout; ++c)
        for (int64_t i = 0; i < hw; ++i) out[(b * d.cout + c) * hw + i] += bv[c];
    }
  }

  std::vector<Tensor> inputs = has_bias ? std::vector<Tensor>{x, w, bias}
                                        : std::vector<Tensor>{x, w};
  return make_result(
      "conv2d", {d.batch, d.cout, d.ho, d.wo}, std::move(out), inputs,
      [d, k, hw, has_bias](const TensorImpl& out_impl,
                           const std::vector<double>& g, const AdjSlots& adj) {
        const double* xv = out_impl.producer->inputs[0]->values.data();
        const double* wv = out_impl.producer->inputs[1]->values.data();
        std::vector<double> col(k * hw);
        std::vector<double> dcol(k * hw);
        ConstMatMap W2(wv, d.cout, k);
        for (int64_t b = 0; b < d.batch; ++b) {
          ConstMatMap G(g.data() + b * d.cout * hw, d.cout, hw);
          if (adj[0] || adj[1]) im2col(xv + b * d.cin * d.h * d.w, d, col.data());
          if (adj[1]) {
            MatMap GW(adj[1]->data(), d.cout, k);
            ConstMatMap C(col.data(), k, hw);
            GW.noalias() += G * C.transpose();
          }
          if (adj[0]) {
            MatMap DC(dcol.data(), k, hw);
            DC.noalias() = W2.transpose() * G;
            col2im_add(dcol.data(), d, adj[0]->data() + b * d.cin * d.h * d.w);
          }
          if (has_bias && adj[2]) {
            double* gb = adj[2]->data();
            for (int64_t c = 0; c < d.cout; ++c) {
              double acc = 0.0;
              const double* gr = g.data() + (b * d.cout + c) * hw;
              for (int64_t i = 0; i < hw; ++i) acc += gr[i];
              gb[c] += acc;
            }
          }
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  check_defined(x, "global_avg_pool");
  if (x.rank() != 4)
    fail("global_avg_pool: expected [B,C,H,W], got " + shape_str(x.shape()));
  int64_t batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(batch * ch);
  const double* xv = x.values().data();
  double inv = 1.0 / static_cast<double>(hw);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      const double* p = xv + (b * ch + c) * hw;
      for (int64_t i = 0; i < hw; ++i) acc += p[i];
      out[b * ch + c] = acc * inv;
    }
  return make_result(
      "global_avg_pool", {batch, ch}, std::move(out), {x},
      [batch, ch, hw, inv](const TensorImpl&, const std::vector<double>& g,
                           const AdjSlots& adj) {
        if (!adj[0]) return;
        double* gx = adj[0]->data();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t c = 0; c < ch; ++c) {
            double gi = g[b * ch + c] * inv;
            double* p = gx + (b * ch + c) * hw;
            for (int64_t i = 0; i < hw; ++i) p[i] += gi;
          }
      });
}

// ---------------------------------------------------------------------------
// Utilities

double check_gradient(const std::function<Tensor(const Tensor&)>& f,
                      const Tensor& x, double step) {
  Tensor probe = x.detach();
  probe.set_requires_grad(true);
  Tensor y = f(probe);
  if (y.numel() != 1)
    fail("check_gradient: f must be scalar-valued, got shape " +
         shape_str(y.shape()));
  y.backward();
  std::vector<double> analytic(x.numel(), 0.0);
  if (probe.has_grad()) {
    auto g = probe.grad();
    analytic.assign(g.begin(), g.end());
  }

  NoGradGuard no_grad;
  Tensor xp = x.detach();
  double max_err = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double orig = xp.values()[i];
    xp.values_mut()[i] = orig + step;
    double fp = f(xp).value();
    xp.values_mut()[i] = orig - step;
    double fm = f(xp).value();
    xp.values_mut()[i] = orig;
    double cd = (fp - fm) / (2.0 * step);
    double err = std::abs(analytic[i] - cd) / (std::abs(cd) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

double global_grad_norm(std::span<const Tensor> params) {
  double acc = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) acc += g * g;
  }
  return std::sqrt(acc);
}

void clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  double scale = max_norm / (norm + 1e-6);
  for (Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.grad_mut()) g *= scale;
  }
}

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

int64_t graph_value_count(const Tensor& root) {
  if (!root.defined()) return 0;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<const TensorImpl*> stack{root.impl()};
  seen.insert(root.impl());
  int64_t count = 0;
  while (!stack.empty()) {
    const TensorImpl* t = stack.back();
    stack.pop_back();
    count += static_cast<int64_t>(t->values.size());
    if (t->producer) {
      for (const auto& in : t->producer->inputs)
        if (seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  return count;
}

}  // namespace gradnav
