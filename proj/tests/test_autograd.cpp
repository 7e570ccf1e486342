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

#include <gtest/gtest.h>

#include <random>

#include "mdc/autograd.hpp"
#include "test_util.hpp"

namespace mdc {
namespace {

using testing::max_grad_error;
using testing::random_tensor;

// Direct-loop reference convolution, no lowering.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeom g) {
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * g.pad - g.dilation * (k - 1) - 1) / g.stride + 1;
  const int wo = (wd + 2 * g.pad - g.dilation * (k - 1) - 1) / g.stride + 1;
  Tensor y({cout, ho, wo});
  for (int co = 0; co < cout; ++co) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        double acc = b[co];
        for (int ci = 0; ci < cin; ++ci) {
          for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
              const int yy = i * g.stride - g.pad + u * g.dilation;
              const int xx = j * g.stride - g.pad + v * g.dilation;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              acc += w[((co * cin + ci) * k + u) * k + v] * x.at(ci, yy, xx);
            }
          }
        }
        y.at(co, i, j) = acc;
      }
    }
  }
  return y;
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(Autograd, ElementwiseGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  Var a(random_tensor({2, 3, 4}, rng, 0.2, 1.5), true);
  Var b(random_tensor({2, 3, 4}, rng, 0.2, 1.5), true);
  auto loss = [](const std::vector<Var>& v) {
    Var t = add(mul(v[0], v[1]), div(v[0], v[1]));
    t = sub(t, square(v[1]));
    t = add(t, pow_scalar(v[0], 0.7));
    t = add(t, sigmoid(mul_scalar(v[1], 2.0)));
    t = add(t, leaky_relu(add_scalar(v[0], -0.8), 0.2));
    t = add(t, abs(add_scalar(v[1], -0.9)));
    t = add(t, clamp_min(v[0], 0.5));
    return sum(mul(t, t));
  };
  EXPECT_LT(max_grad_error({a, b}, loss), 1e-6);
}

TEST(Autograd, ReductionsAndLayoutGradients) {
  std::mt19937_64 rng(2);
  Var a(random_tensor({4, 3, 5}, rng), true);
  Var b(random_tensor({2, 3, 5}, rng), true);
  auto loss = [](const std::vector<Var>& v) {
    Var c = concat({v[0], v[1]});                  // [6,3,5]
    Var s = slice(c, 1, 5);                        // [4,3,5]
    Var r = reshape(s, {4, 15});
    Var lp = log_softmax0(r);
    Var cm = channel_mean(mul(c, c));              // [6]
    return add(add(sum(mul(lp, lp)), mean(cm)), select(cm, 2));
  };
  EXPECT_LT(max_grad_error({a, b}, loss), 1e-6);
}

TEST(Autograd, LogSoftmaxNormalizesAlongFirstAxis) {
  std::mt19937_64 rng(3);
  Var x(random_tensor({5, 7}, rng, -30, 30));
  const Tensor lp = log_softmax0(x).value();
  for (int j = 0; j < 7; ++j) {
    double s = 0;
    for (int i = 0; i < 5; ++i) s += std::exp(lp[i * 7 + j]);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Autograd, Conv2dMatchesDirectLoops) {
  std::mt19937_64 rng(4);
  for (ConvGeom g : {ConvGeom{1, 1, 1}, ConvGeom{2, 2, 1}, ConvGeom{4, 2, 1}, ConvGeom{1, 3, 3},
                     ConvGeom{1, 0, 2}}) {
    const int k = g.stride == 1 && g.pad == 1 ? 3 : 5;
    const Tensor x = random_tensor({3, 17, 14}, rng);
    const Tensor w = random_tensor({4, 3, k, k}, rng);
    const Tensor b = random_tensor({4}, rng);
    const Tensor got = conv2d(Var(x), Var(w), Var(b), g).value();
    const Tensor want = naive_conv2d(x, w, b, g);
    ASSERT_EQ(got.shape(), want.shape());
    for (size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Autograd, Conv2dGradients) {
  std::mt19937_64 rng(5);
  Var x(random_tensor({2, 9, 8}, rng), true);
  Var w(random_tensor({3, 2, 5, 5}, rng), true);
  Var b(random_tensor({3}, rng), true);
  for (ConvGeom g : {ConvGeom{1, 2, 1}, ConvGeom{2, 2, 1}, ConvGeom{1, 4, 2}}) {
    auto loss = [g](const std::vector<Var>& v) {
      Var y = conv2d(v[0], v[1], v[2], g);
      return sum(mul(y, y));
    };
    EXPECT_LT(max_grad_error({x, w, b}, loss), 1e-6);
  }
}

TEST(Autograd, ConvTransposeIsAdjointOfStridedConv) {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({3, 12, 10}, rng);  // conv input
  const Tensor w = random_tensor({5, 3, 4, 4}, rng);  // [cout, cin] for conv
  const Tensor y = random_tensor({5, 6, 5}, rng);     // conv output
  const Tensor zb3({3}), zb5({5});
  const Tensor cx = conv2d(Var(x), Var(w), Var(zb5), {2, 1, 1}).value();
  ASSERT_EQ(cx.shape(), y.shape());
  // The same array read as [cin', cout'] = [5, 3] drives the transpose.
  const Tensor ty = conv_transpose2d(Var(y), Var(w), Var(zb3), 2, 1).value();
  ASSERT_EQ(ty.shape(), x.shape());
  EXPECT_NEAR(inner(cx, y), inner(x, ty), 1e-10);
}

TEST(Autograd, ConvTransposeGradients) {
  std::mt19937_64 rng(7);
  Var x(random_tensor({3, 4, 5}, rng), true);
  Var w(random_tensor({3, 2, 4, 4}, rng), true);
  Var b(random_tensor({2}, rng), true);
  auto loss = [](const std::vector<Var>& v) {
    Var y = conv_transpose2d(v[0], v[1], v[2], 2, 1);
    return sum(mul(y, y));
  };
  EXPECT_LT(max_grad_error({x, w, b}, loss), 1e-6);
}

TEST(Autograd, Conv3dMatchesDirectLoopsAndGradients) {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({2, 3, 4, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Tensor got = conv3d(Var(x), Var(w), Var(b)).value();
  ASSERT_EQ(got.shape(), (Shape{3, 3, 4, 5}));
  for (int co = 0; co < 3; ++co) {
    for (int z = 0; z < 3; ++z) {
      for (int y = 0; y < 4; ++y) {
        for (int xx = 0; xx < 5; ++xx) {
          double acc = b[co];
          for (int ci = 0; ci < 2; ++ci) {
            for (int t = 0; t < 27; ++t) {
              const int sz = z + t / 9 - 1, sy = y + (t / 3) % 3 - 1, sx = xx + t % 3 - 1;
              if (sz < 0 || sz >= 3 || sy < 0 || sy >= 4 || sx < 0 || sx >= 5) continue;
              acc += w[(co * 2 + ci) * 27 + t] * x[((ci * 3 + sz) * 4 + sy) * 5 + sx];
            }
          }
          ASSERT_NEAR(got[((co * 3 + z) * 4 + y) * 5 + xx], acc, 1e-12);
        }
      }
    }
  }
  Var vx(x, true), vw(w, true), vb(b, true);
  auto loss = [](const std::vector<Var>& v) {
    Var y = conv3d(v[0], v[1], v[2]);
    return sum(mul(y, y));
  };
  EXPECT_LT(max_grad_error({vx, vw, vb}, loss), 1e-6);
}

TEST(Autograd, FilterValidAndPooling) {
  std::mt19937_64 rng(9);
  const std::vector<double> taps = {0.25, 0.5, 0.25};
  const Tensor x = random_tensor({2, 6, 7}, rng);
  const Tensor f = filter_valid(Var(x), taps).value();
  ASSERT_EQ(f.shape(), (Shape{2, 4, 5}));
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 5; ++j) {
        double acc = 0;
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) acc += taps[a] * taps[b] * x.at(c, i + a, j + b);
        }
        ASSERT_NEAR(f.at(c, i, j), acc, 1e-14);
      }
    }
  }
  const Tensor p = avg_pool2(Var(x)).value();
  ASSERT_EQ(p.shape(), (Shape{2, 3, 3}));  // floor of odd width
  EXPECT_NEAR(p.at(1, 2, 1),
              0.25 * (x.at(1, 4, 2) + x.at(1, 4, 3) + x.at(1, 5, 2) + x.at(1, 5, 3)), 1e-15);
  Var v(x, true);
  auto loss = [&](const std::vector<Var>& in) {
    Var y = add(sum(square(filter_valid(in[0], taps))), sum(square(avg_pool2(in[0]))));
    return y;
  };
  EXPECT_LT(max_grad_error({v}, loss), 1e-6);
}

TEST(Autograd, GradientsAccumulateAcrossBackwardCalls) {
  Var a(Tensor({2}, std::vector<double>{1.0, 2.0}), true);
  backward(sum(mul_scalar(a, 3.0)));
  backward(sum(mul_scalar(a, 3.0)), 0.5);
  EXPECT_DOUBLE_EQ(a.grad()[0], 4.5);
  a.zero_grad();
  EXPECT_DOUBLE_EQ(a.grad()[1], 0.0);
}

TEST(Autograd, NoGradGuardSkipsGraph) {
  Var a(Tensor({1}, 2.0), true);
  {
    NoGradGuard ng;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(mul(a, a).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(mul(a, a).requires_grad());
}

TEST(Autograd, ShapeMismatchThrows) {
  Var a(Tensor({2, 3})), b(Tensor({3, 2}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(reshape(a, {5}), ShapeError);
}

}  // namespace
}  // namespace mdc
