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

#include "mdc/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mdc/errors.hpp"

namespace mdc::metrics {
namespace {

constexpr double kC1 = (kK1 * 1.0) * (kK1 * 1.0);
constexpr double kC2 = (kK2 * 1.0) * (kK2 * 1.0);
// Floor applied to per-scale terms before the fractional power.
constexpr double kTermFloor = 1e-6;

struct ScaleStats {
  Var cs;    // [C] mean contrast-structure
  Var ssim;  // [C] mean SSIM
};

ScaleStats scale_stats(const Var& x, const Var& y, const std::vector<double>& taps) {
  Var mx = filter_valid(x, taps);
  Var my = filter_valid(y, taps);
  Var mxx = mul(mx, mx);
  Var myy = mul(my, my);
  Var mxy = mul(mx, my);
  Var sxx = sub(filter_valid(mul(x, x), taps), mxx);
  Var syy = sub(filter_valid(mul(y, y), taps), myy);
  Var sxy = sub(filter_valid(mul(x, y), taps), mxy);
  Var cs_map = div(add_scalar(mul_scalar(sxy, 2.0), kC2), add_scalar(add(sxx, syy), kC2));
  Var l_map = div(add_scalar(mul_scalar(mxy, 2.0), kC1), add_scalar(add(mxx, myy), kC1));
  return {channel_mean(cs_map), channel_mean(mul(l_map, cs_map))};
}

void check_pair(const Var& x, const Var& y) {
  require_same_shape(x.value(), y.value(), "ssim");
  if (x.value().rank() != 3) throw ShapeError("ssim expects [C,H,W] images");
}

}  // namespace

void ScaleWeights::validate() const {
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw ConfigError("scale weight must be non-negative");
    s += v;
  }
  if (std::fabs(s - 1.0) > 5e-4) throw ConfigError("scale weights must sum to 1");
}

ScaleWeights area_weights() {
  ScaleWeights sw;
  double total = 0.0;
  for (int s = 0; s < kScales; ++s) total += std::pow(4.0, -s);
  for (int s = 0; s < kScales; ++s) sw.w[s] = std::pow(4.0, -s) / total;
  return sw;
}

std::vector<double> gaussian_taps(int size) {
  std::vector<double> taps(static_cast<size_t>(size));
  const int half = size / 2;
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    taps[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    s += taps[i];
  }
  for (double& t : taps) t /= s;
  return taps;
}

int window_for(int side) {
  int w = std::min(kWindow, side);
  if (w % 2 == 0) --w;
  return std::max(w, 1);
}

Var ssim(const Var& x, const Var& y) {
  check_pair(x, y);
  if (x.dim(1) < kWindow || x.dim(2) < kWindow) {
    throw ShapeError("ssim: image smaller than the 11x11 window");
  }
  return mean(scale_stats(x, y, gaussian_taps(kWindow)).ssim);
}

double ssim(const Tensor& x, const Tensor& y) { return ssim(Var(x), Var(y)).item(); }

Var multiscale_ssim(const Var& x, const Var& y, const ScaleWeights& weights) {
  check_pair(x, y);
  weights.validate();
  if (std::min(x.dim(1), x.dim(2)) < kMinMultiscaleSide) {
    throw ShapeError("multi-scale SSIM needs images of at least 16x16 for 5 scales");
  }
  Var cx = x, cy = y;
  Var product;
  for (int s = 0; s < kScales; ++s) {
    if (s > 0) {
      cx = avg_pool2(cx);
      cy = avg_pool2(cy);
    }
    const int side = std::min(cx.dim(1), cx.dim(2));
    ScaleStats st = scale_stats(cx, cy, gaussian_taps(window_for(side)));
    Var term = s + 1 < kScales ? st.cs : st.ssim;
    term = pow_scalar(clamp_min(term, kTermFloor), weights.w[s]);
    product = product.defined() ? mul(product, term) : term;
  }
  return mean(product);
}

double mr_ssim(const Tensor& x, const Tensor& y, const ScaleWeights& weights) {
  return multiscale_ssim(Var(x), Var(y), weights).item();
}

double ms_ssim(const Tensor& x, const Tensor& y) { return mr_ssim(x, y, kMsWeights); }

const ScaleWeights& weights_for(StructuralVariant v) {
  return v == StructuralVariant::kMs ? kMsWeights : kMrWeights;
}

Var mae_recon_loss(const Var& x, const Var& ya, const Var& yb, const Var& y) {
  require_same_shape(x.value(), ya.value(), "mae_recon_loss");
  require_same_shape(x.value(), yb.value(), "mae_recon_loss");
  require_same_shape(x.value(), y.value(), "mae_recon_loss");
  const double pixels = static_cast<double>(x.dim(1)) * x.dim(2);
  Var total = add(add(sum(abs(sub(x, ya))), sum(abs(sub(x, yb)))), sum(abs(sub(x, y))));
  return mul_scalar(total, 1.0 / pixels);
}

Var structural_loss(const Var& x, const Var& ya, const Var& yb, const Var& y,
                    const ScaleWeights& weights) {
  Var s = add(add(multiscale_ssim(x, ya, weights), multiscale_ssim(x, yb, weights)),
              multiscale_ssim(x, y, weights));
  return mul_scalar(s, -1.0);
}

Var distance_loss(const Var& ya, const Var& yb, const ScaleWeights& weights) {
  return multiscale_ssim(ya, yb, weights);
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw ConfigError("loss hyper-parameters must be non-negative");
  }
}

Objective total_loss(const Var& x, const Var& ya, const Var& yb, const Var& y, const Var& rate_a,
                     const Var& rate_b, const Var& d_reg, const LossWeights& lw,
                     const ScaleWeights& weights) {
  lw.validate();
  Objective out;
  Var l1 = mae_recon_loss(x, ya, yb, y);
  Var mr = structural_loss(x, ya, yb, y, weights);
  Var dist = distance_loss(ya, yb, weights);
  Var total = add(add(l1, mr), mul_scalar(dist, lw.alpha));
  out.parts.d_l1 = l1.item();
  out.parts.d_mr = mr.item();
  out.parts.d_distance = dist.item();
  if (d_reg.defined()) {
    total = add(total, mul_scalar(d_reg, lw.beta));
    out.parts.d_reg = d_reg.item();
  }
  if (rate_a.defined()) {
    total = add(total, mul_scalar(rate_a, lw.gamma));
    out.parts.rate_a = rate_a.item();
  }
  if (rate_b.defined()) {
    total = add(total, mul_scalar(rate_b, lw.gamma));
    out.parts.rate_b = rate_b.item();
  }
  out.total = total;
  out.parts.total = total.item();
  return out;
}

LossBreakdown total_loss(const Tensor& x, const Tensor& ya, const Tensor& yb, const Tensor& y,
                         double rate_a, double rate_b, double d_reg, const LossWeights& lw,
                         const ScaleWeights& weights) {
  if (rate_a < 0.0 || rate_b < 0.0 || d_reg < 0.0) {
    throw ConfigError("rates and regularizer must be non-negative");
  }
  return total_loss(Var(x), Var(ya), Var(yb), Var(y), Var(Tensor({1}, rate_a)),
                    Var(Tensor({1}, rate_b)), Var(Tensor({1}, d_reg)), lw, weights)
      .parts;
}

}  // namespace mdc::metrics
