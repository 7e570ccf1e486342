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

#ifndef MDC_AUTOGRAD_HPP_
#define MDC_AUTOGRAD_HPP_

// Minimal reverse-mode differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Operations on Vars build the
// graph only when at least one input requires a gradient; otherwise the
// result is a detached constant and no intermediates are retained.

#include <functional>
#include <memory>
#include <vector>

#include "mdc/tensor.hpp"

namespace mdc {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Allocates the gradient buffer on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Direct write access, used by optimizers on leaf parameters.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }
  size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  // Value of a single-element tensor.
  double item() const;

  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad();

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  static Var wrap(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

// Builds a result node. `backward` receives the result node; it reads
// node.grad and accumulates into node.inputs[i]->grad_buffer() for inputs
// that require gradients. Dropped when no input requires a gradient.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Reverse sweep from a scalar root, seeding d(root)/d(root) = seed.
// Gradients accumulate into every reachable node that requires one.
void backward(const Var& root, double seed = 1.0);

// While alive, ops on this thread record no graph. Used for inference.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// Accumulates src into dst (same size).
void accumulate(Tensor& dst, const Tensor& src);

// ---- elementwise -------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var square(const Var& a);
Var abs(const Var& a);
// x^e for x > 0.
Var pow_scalar(const Var& a, double e);
// max(x, lo); subgradient 0 below the floor.
Var clamp_min(const Var& a, double lo);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);

// ---- reductions / layout -----------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
// [C, ...] -> [C]: mean over everything but the leading axis.
Var channel_mean(const Var& a);
// Single element of a flat tensor as a [1] tensor.
Var select(const Var& a, size_t index);
// Concatenates along axis 0; trailing dims must agree.
Var concat(const std::vector<Var>& parts);
// Rows [begin, end) along axis 0.
Var slice(const Var& a, int begin, int end);
Var reshape(const Var& a, Shape shape);
// log-softmax along axis 0 of a [L, ...] tensor.
Var log_softmax0(const Var& a);

// ---- convolution -------------------------------------------------------
struct ConvGeom {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

// x [Cin, H, W], w [Cout, Cin, kh, kw], b [Cout] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, ConvGeom g);
// Transposed convolution. x [Cin, H, W], w [Cin, Cout, k, k];
// output spatial size (H - 1) * stride - 2 * pad + k.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// 3x3x3 convolution, stride 1, zero padding 1. x [Cin, D, H, W],
// w [Cout, Cin, 3, 3, 3]. Masking is the caller's business.
Var conv3d(const Var& x, const Var& w, const Var& b);

// Separable correlation with a 1-D kernel along both spatial axes, "valid"
// extent. x [C, H, W] -> [C, H - t + 1, W - t + 1].
Var filter_valid(const Var& x, const std::vector<double>& taps);
// 2x2 mean pooling with floor on odd sizes.
Var avg_pool2(const Var& x);

}  // namespace mdc

#endif  // MDC_AUTOGRAD_HPP_
