// Copyright 2026 The MDC Authors. All Rights Reserved.
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

#include "mdc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mdc/simd/kernels.hpp"

namespace mdc {

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  }
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::wrap(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

double Var::item() const {
  if (value().size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return value()[0];
}

void Var::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0.0);
}

void accumulate(Tensor& dst, const Tensor& src) {
  simd::axpy(src.size(), 1.0, src.data(), dst.data());
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool any = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                               [](const Var& v) { return v.defined() && v.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.shared());
    node->backward = std::move(backward);
  }
  return Var::wrap(std::move(node));
}

void backward(const Var& root, double seed) {
  if (!root.requires_grad()) return;
  if (root.size() != 1) throw ShapeError("backward() needs a scalar root");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

namespace {

inline bool wants(const Node& self, size_t i) {
  return self.inputs[i] && self.inputs[i]->requires_grad;
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

void check_same(const Var& a, const Var& b, const char* what) {
  require_same_shape(a.value(), b.value(), what);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tensor out(a.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) accumulate(self.inputs[0]->grad_buffer(), self.grad);
    if (wants(self, 1)) accumulate(self.inputs[1]->grad_buffer(), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tensor out(a.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) accumulate(self.inputs[0]->grad_buffer(), self.grad);
    if (wants(self, 1)) {
      simd::axpy(self.grad.size(), -1.0, self.grad.data(), self.inputs[1]->grad_buffer().data());
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Tensor out(a.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (wants(self, 0)) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  check_same(a, b, "div");
  Tensor out(a.shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& bv = self.inputs[1]->value;
    if (wants(self, 0)) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bv[i];
    }
    if (wants(self, 1)) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / bv[i];
    }
  });
}

Var add_scalar(const Var& a, double s) {
  return make_op(map_unary(a.value(), [s](double x) { return x + s; }), {a}, [](Node& self) {
    accumulate(self.inputs[0]->grad_buffer(), self.grad);
  });
}

Var mul_scalar(const Var& a, double s) {
  return make_op(map_unary(a.value(), [s](double x) { return x * s; }), {a}, [s](Node& self) {
    simd::axpy(self.grad.size(), s, self.grad.data(), self.inputs[0]->grad_buffer().data());
  });
}

Var square(const Var& a) {
  return make_op(map_unary(a.value(), [](double x) { return x * x; }), {a}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    Tensor& g = self.inputs[0]->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * av[i] * self.grad[i];
  });
}

Var abs(const Var& a) {
  return make_op(map_unary(a.value(), [](double x) { return std::fabs(x); }), {a},
                 [](Node& self) {
                   const Tensor& av = self.inputs[0]->value;
                   Tensor& g = self.inputs[0]->grad_buffer();
                   for (size_t i = 0; i < g.size(); ++i) {
                     g[i] += av[i] > 0.0 ? self.grad[i] : (av[i] < 0.0 ? -self.grad[i] : 0.0);
                   }
                 });
}

Var pow_scalar(const Var& a, double e) {
  return make_op(map_unary(a.value(), [e](double x) { return std::pow(x, e); }), {a},
                 [e](Node& self) {
                   const Tensor& av = self.inputs[0]->value;
                   Tensor& g = self.inputs[0]->grad_buffer();
                   for (size_t i = 0; i < g.size(); ++i) {
                     g[i] += self.grad[i] * e * std::pow(av[i], e - 1.0);
                   }
                 });
}

Var clamp_min(const Var& a, double lo) {
  return make_op(map_unary(a.value(), [lo](double x) { return x > lo ? x : lo; }), {a},
                 [lo](Node& self) {
                   const Tensor& av = self.inputs[0]->value;
                   Tensor& g = self.inputs[0]->grad_buffer();
                   for (size_t i = 0; i < g.size(); ++i) {
                     if (av[i] > lo) g[i] += self.grad[i];
                   }
                 });
}

Var leaky_relu(const Var& a, double slope) {
  return make_op(map_unary(a.value(), [slope](double x) { return x > 0.0 ? x : slope * x; }),
                 {a}, [slope](Node& self) {
                   const Tensor& av = self.inputs[0]->value;
                   Tensor& g = self.inputs[0]->grad_buffer();
                   for (size_t i = 0; i < g.size(); ++i) {
                     g[i] += av[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
                   }
                 });
}

Var sigmoid(const Var& a) {
  auto f = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return make_op(map_unary(a.value(), f), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return make_op(Tensor({1}, acc), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double s = self.grad[0];
    for (size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.size());
  return mul_scalar(sum(a), 1.0 / n);
}

Var channel_mean(const Var& a) {
  const int c = a.dim(0);
  const size_t inner = a.size() / static_cast<size_t>(c);
  Tensor out({c});
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    const double* p = a.value().data() + ch * inner;
    for (size_t i = 0; i < inner; ++i) acc += p[i];
    out[ch] = acc / static_cast<double>(inner);
  }
  return make_op(std::move(out), {a}, [c, inner](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch) {
      const double s = self.grad[ch] / static_cast<double>(inner);
      double* p = g.data() + ch * inner;
      for (size_t i = 0; i < inner; ++i) p[i] += s;
    }
  });
}

Var select(const Var& a, size_t index) {
  if (index >= a.size()) throw ShapeError("select index out of range");
  return make_op(Tensor({1}, a.value()[index]), {a}, [index](Node& self) {
    self.inputs[0]->grad_buffer()[index] += self.grad[0];
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Shape shape = parts[0].shape();
  int rows = 0;
  for (const auto& p : parts) {
    Shape tail(p.shape().begin() + 1, p.shape().end());
    Shape ref(shape.begin() + 1, shape.end());
    if (tail != ref) throw ShapeError("concat: trailing dims differ");
    rows += p.dim(0);
  }
  shape[0] = rows;
  Tensor out(shape);
  std::vector<size_t> offsets;
  size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().data(), p.value().data() + p.size(), out.data() + off);
    off += p.size();
  }
  return make_op(std::move(out), parts, [offsets](Node& self) {
    for (size_t i = 0; i < self.inputs.size(); ++i) {
      if (!wants(self, i)) continue;
      Tensor& g = self.inputs[i]->grad_buffer();
      simd::axpy(g.size(), 1.0, self.grad.data() + offsets[i], g.data());
    }
  });
}

Var slice(const Var& a, int begin, int end) {
  if (begin < 0 || end > a.dim(0) || begin >= end) throw ShapeError("slice out of range");
  Shape shape = a.shape();
  const size_t inner = a.size() / static_cast<size_t>(shape[0]);
  shape[0] = end - begin;
  Tensor out(shape);
  const size_t off = static_cast<size_t>(begin) * inner;
  std::copy(a.value().data() + off, a.value().data() + off + out.size(), out.data());
  return make_op(std::move(out), {a}, [off](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    simd::axpy(self.grad.size(), 1.0, self.grad.data(), g.data() + off);
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op(std::move(out), {a}, [](Node& self) {
    accumulate(self.inputs[0]->grad_buffer(), self.grad);
  });
}

Var log_softmax0(const Var& a) {
  const int l = a.dim(0);
  const size_t inner = a.size() / static_cast<size_t>(l);
  Tensor out(a.shape());
  const double* x = a.value().data();
  for (size_t p = 0; p < inner; ++p) {
    double mx = x[p];
    for (int j = 1; j < l; ++j) mx = std::max(mx, x[j * inner + p]);
    double s = 0.0;
    for (int j = 0; j < l; ++j) s += std::exp(x[j * inner + p] - mx);
    const double lse = mx + std::log(s);
    for (int j = 0; j < l; ++j) out[j * inner + p] = x[j * inner + p] - lse;
  }
  return make_op(std::move(out), {a}, [l, inner](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (size_t p = 0; p < inner; ++p) {
      double gs = 0.0;
      for (int j = 0; j < l; ++j) gs += self.grad[j * inner + p];
      for (int j = 0; j < l; ++j) {
        g[j * inner + p] += self.grad[j * inner + p] - std::exp(self.value[j * inner + p]) * gs;
      }
    }
  });
}

}  // namespace mdc
