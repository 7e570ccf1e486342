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

#ifndef MDC_METRICS_HPP_
#define MDC_METRICS_HPP_

// SSIM family metrics and the multiple-description training objective.
// Images are [3, H, W] tensors with values in [0, 1].

#include <array>
#include <vector>

#include "mdc/autograd.hpp"

namespace mdc::metrics {

// Per-scale exponents of the multi-scale product, finest scale first.
struct ScaleWeights {
  std::array<double, 5> w{};

  // Non-negative, summing to 1 within 5e-4 (published tables are rounded).
  void validate() const;
};

// Pixel-count proportional weights as published (rounded to 3 decimals).
inline constexpr ScaleWeights kMrWeights{{0.750, 0.188, 0.047, 0.012, 0.003}};
// Standard perceptually calibrated multi-scale SSIM weights.
inline constexpr ScaleWeights kMsWeights{{0.0448, 0.2856, 0.3001, 0.2363, 0.1333}};

// 4^-s / sum_t 4^-t for s = 0..4, unrounded.
ScaleWeights area_weights();

inline constexpr int kWindow = 11;
inline constexpr double kWindowSigma = 1.5;
inline constexpr double kK1 = 0.01;
inline constexpr double kK2 = 0.03;
inline constexpr int kScales = 5;
// Smallest image side accepted by the multi-scale metrics.
inline constexpr int kMinMultiscaleSide = 16;

// Normalized Gaussian taps, sigma = 1.5, truncated to `size` (odd).
std::vector<double> gaussian_taps(int size);
// Window used at a scale whose smaller side is `side`: the largest odd
// size not exceeding min(11, side).
int window_for(int side);

// Single-scale SSIM, 11x11 Gaussian window, averaged over channels.
Var ssim(const Var& x, const Var& y);
double ssim(const Tensor& x, const Tensor& y);

// Five-scale product of mean contrast-structure terms at scales 1..4 and
// mean SSIM at scale 5, each raised to its weight; averaged over channels.
Var multiscale_ssim(const Var& x, const Var& y, const ScaleWeights& weights);
double mr_ssim(const Tensor& x, const Tensor& y, const ScaleWeights& weights = kMrWeights);
double ms_ssim(const Tensor& x, const Tensor& y);

enum class StructuralVariant { kMr, kMs };
const ScaleWeights& weights_for(StructuralVariant v);

// Sum over the three reconstructions of sum_i |X_i - Y_i|_1 / (H * W).
Var mae_recon_loss(const Var& x, const Var& ya, const Var& yb, const Var& y);
// -f(X, Ya) - f(X, Yb) - f(X, Y).
Var structural_loss(const Var& x, const Var& ya, const Var& yb, const Var& y,
                    const ScaleWeights& weights = kMrWeights);
// f(Ya, Yb).
Var distance_loss(const Var& ya, const Var& yb, const ScaleWeights& weights = kMrWeights);

struct LossWeights {
  double alpha = 0.1;
  double beta = 2e-4;
  double gamma = 0.1;

  void validate() const;
};

struct LossBreakdown {
  double d_l1 = 0.0;
  double d_mr = 0.0;
  double d_distance = 0.0;
  double d_reg = 0.0;
  double rate_a = 0.0;  // bits per pixel of description A
  double rate_b = 0.0;
  double total = 0.0;

  double recompose(const LossWeights& lw) const {
    return (d_l1 + d_mr) + lw.alpha * d_distance + lw.beta * d_reg + lw.gamma * (rate_a + rate_b);
  }
};

struct Objective {
  Var total;
  LossBreakdown parts;
};

// Assembles the compressive loss. Undefined rate / regularizer Vars count
// as zero. Rates are expected in bits per pixel.
Objective total_loss(const Var& x, const Var& ya, const Var& yb, const Var& y, const Var& rate_a,
                     const Var& rate_b, const Var& d_reg, const LossWeights& lw,
                     const ScaleWeights& weights = kMrWeights);

LossBreakdown total_loss(const Tensor& x, const Tensor& ya, const Tensor& yb, const Tensor& y,
                         double rate_a, double rate_b, double d_reg, const LossWeights& lw,
                         const ScaleWeights& weights = kMrWeights);

}  // namespace mdc::metrics

#endif  // MDC_METRICS_HPP_
