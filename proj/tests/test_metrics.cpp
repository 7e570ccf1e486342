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


#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "mdc/errors.hpp"
#include "mdc/metrics.hpp"
#include "reference_ssim.hpp"
#include "test_util.hpp"

namespace mdc::metrics {
namespace {

using testing::max_grad_error;
using testing::random_tensor;

using reference::channel;
using reference::ref_multiscale;
using reference::ref_stats;

Tensor smooth_pair_member(int h, int w, std::mt19937_64& rng, double noise) {
  Tensor t({3, h, w});
  std::normal_distribution<double> n(0.0, noise);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t.at(c, y, x) = std::clamp(
            0.5 + 0.3 * std::sin(0.21 * x + 0.4 * c) * std::cos(0.13 * y) + n(rng), 0.0, 1.0);
  return t;
}

// ---- weights ---------------------------------------------------------------

TEST(ScaleWeights, AreaWeightsMatchPublishedRounding) {
  const auto aw = area_weights();
  double total = 0.0;
  for (int s = 0; s < 5; ++s) total += std::pow(0.25, s);
  for (int s = 0; s < 5; ++s) {
    EXPECT_NEAR(aw.w[s], std::pow(0.25, s) / total, 1e-15);
    // The published table trims the first entry so the list sums to 1.
    EXPECT_NEAR(aw.w[s], kMrWeights.w[s], 1e-3);
  }
  EXPECT_NEAR(aw.w[0], 1.0 / 1.33203125, 1e-15);
}

TEST(ScaleWeights, PublishedTablesValidate) {
  EXPECT_NO_THROW(kMrWeights.validate());
  EXPECT_NO_THROW(kMsWeights.validate());
  EXPECT_NO_THROW(area_weights().validate());
  EXPECT_THROW((ScaleWeights{{0.5, 0.5, 0.5, 0.0, 0.0}}.validate()), ConfigError);
  EXPECT_THROW((ScaleWeights{{1.2, -0.2, 0.0, 0.0, 0.0}}.validate()), ConfigError);
}

TEST(Gaussian, TapsNormalizedAndSymmetric) {
  for (int size : {1, 3, 7, 11}) {
    auto t = gaussian_taps(size);
    double s = 0.0;
    for (double v : t) s += v;
    EXPECT_NEAR(s, 1.0, 1e-15);
    for (int i = 0; i < size; ++i) EXPECT_DOUBLE_EQ(t[i], t[size - 1 - i]);
  }
  EXPECT_EQ(window_for(64), 11);
  EXPECT_EQ(window_for(8), 7);
  EXPECT_EQ(window_for(4), 3);
  EXPECT_EQ(window_for(1), 1);
}

// ---- single-scale SSIM -----------------------------------------------------

TEST(Ssim, IdentityIsOne) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({3, 24, 20}, rng, 0.0, 1.0);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-6);
  EXPECT_NEAR(ssim(Tensor({3, 16, 16}, 0.5), Tensor({3, 16, 16}, 0.5)), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
  // Zero variance leaves only the luminance factor.
  const double c1 = 1e-4;
  const double expect = (2 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  EXPECT_NEAR(ssim(Tensor({3, 16, 16}, 0.2), Tensor({3, 16, 16}, 0.8)), expect, 1e-12);
}

TEST(Ssim, MatchesReferenceAndRejectsSmallInput) {
  std::mt19937_64 rng(4);
  Tensor x = smooth_pair_member(20, 18, rng, 0.05);
  Tensor y = smooth_pair_member(20, 18, rng, 0.05);
  double ref = 0.0;
  for (int c = 0; c < 3; ++c) ref += ref_stats(channel(x, c), channel(y, c)).second / 3.0;
  EXPECT_NEAR(ssim(x, y), ref, 1e-12);
  EXPECT_THROW(ssim(Tensor({3, 10, 20}), Tensor({3, 10, 20})), ShapeError);
  EXPECT_THROW(ssim(Tensor({3, 16, 16}), Tensor({3, 16, 17})), ShapeError);
}

// ---- multi-scale -----------------------------------------------------------

TEST(MultiScale, IdentityIsOne) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
  EXPECT_NEAR(mr_ssim(x, x), 1.0, 1e-12);
  EXPECT_NEAR(ms_ssim(x, x), 1.0, 1e-12);
}

TEST(MultiScale, MatchesIndependentReference) {
  std::mt19937_64 rng(6);
  for (auto [h, w] : {std::pair{64, 64}, std::pair{48, 40}, std::pair{17, 33}}) {
    Tensor x = smooth_pair_member(h, w, rng, 0.08);
    Tensor y = smooth_pair_member(h, w, rng, 0.08);
    EXPECT_NEAR(ms_ssim(x, y), ref_multiscale(x, y, kMsWeights.w), 1e-10) << h << "x" << w;
    EXPECT_NEAR(mr_ssim(x, y), ref_multiscale(x, y, kMrWeights.w), 1e-10) << h << "x" << w;
  }
}

TEST(MultiScale, DegradesWithNoiseAndRejectsTinyImages) {
  std::mt19937_64 rng(7);
  Tensor x = smooth_pair_member(64, 64, rng, 0.0);
  double prev = 1.0;
  for (double sd : {0.02, 0.08, 0.2}) {
    std::mt19937_64 r2(8);
    Tensor y = x;
    std::normal_distribution<double> n(0.0, sd);
    for (double& v : y.storage()) v = std::clamp(v + n(r2), 0.0, 1.0);
    const double s = ms_ssim(x, y);
    EXPECT_LT(s, prev);
    prev = s;
  }
  EXPECT_THROW(mr_ssim(Tensor({3, 15, 40}), Tensor({3, 15, 40})), ShapeError);
}

TEST(MultiScale, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  Var x(smooth_pair_member(16, 16, rng, 0.1), true);
  Var y(smooth_pair_member(16, 16, rng, 0.1), true);
  for (const auto* w : {&kMrWeights, &kMsWeights}) {
    const double err = max_grad_error({x, y}, [&](const std::vector<Var>& in) {
      return multiscale_ssim(in[0], in[1], *w);
    }, 1e-5, 48, 1e-6);
    EXPECT_LT(err, 1e-4);
  }
}

// ---- loss terms ------------------------------------------------------------

TEST(Loss, MaeOnConstantImages) {
  Var x(Tensor({3, 8, 8}, 0.0)), half(Tensor({3, 8, 8}, 0.5));
  EXPECT_NEAR(mae_recon_loss(x, x, x, x).item(), 0.0, 0.0);
  EXPECT_NEAR(mae_recon_loss(x, half, x, x).item(), 1.5, 1e-15);
  // Normalizing by H*W makes the value area independent.
  Var x2(Tensor({3, 16, 32}, 0.0)), half2(Tensor({3, 16, 32}, 0.5));
  EXPECT_NEAR(mae_recon_loss(x2, half2, x2, x2).item(), 1.5, 1e-15);
}

TEST(Loss, StructuralAndDistanceTerms) {
  std::mt19937_64 rng(10);
  Tensor x = smooth_pair_member(32, 32, rng, 0.05);
  Tensor ya = smooth_pair_member(32, 32, rng, 0.1);
  Tensor yb = smooth_pair_member(32, 32, rng, 0.1);
  Tensor y = smooth_pair_member(32, 32, rng, 0.1);
  EXPECT_NEAR(structural_loss(Var(x), Var(x), Var(x), Var(x)).item(), -3.0, 1e-12);
  Tensor inv = x;
  for (double& v : inv.storage()) v = 1.0 - v;
  EXPECT_GT(structural_loss(Var(x), Var(x), Var(inv), Var(inv)).item(), -3.0);
  const double oracle =
      -(ref_multiscale(x, ya, kMrWeights.w) + ref_multiscale(x, yb, kMrWeights.w) +
        ref_multiscale(x, y, kMrWeights.w));
  EXPECT_NEAR(structural_loss(Var(x), Var(ya), Var(yb), Var(y)).item(), oracle, 1e-10);

  EXPECT_NEAR(distance_loss(Var(ya), Var(ya)).item(), 1.0, 1e-12);
  EXPECT_EQ(distance_loss(Var(ya), Var(yb)).item(), mr_ssim(ya, yb));
  EXPECT_NEAR(distance_loss(Var(ya), Var(yb)).item(), distance_loss(Var(yb), Var(ya)).item(),
              1e-12);
}

TEST(Loss, TotalAssemblesParts) {
  const LossWeights lw;
  EXPECT_EQ(lw.alpha, 0.1);
  EXPECT_EQ(lw.beta, 2e-4);
  EXPECT_EQ(lw.gamma, 0.1);
  Tensor x({3, 32, 32}, 0.3);
  auto id = total_loss(x, x, x, x, 0.0, 0.0, 0.0, lw);
  EXPECT_NEAR(id.total, -3.0 + lw.alpha, 1e-12);

  std::mt19937_64 rng(11);
  Tensor ya = smooth_pair_member(32, 32, rng, 0.1), yb = smooth_pair_member(32, 32, rng, 0.1);
  auto p = total_loss(x, ya, yb, x, 0.4, 0.7, 12.0, lw);
  EXPECT_NEAR(p.total, p.recompose(lw), 1e-9);
  EXPECT_EQ(p.rate_a, 0.4);
  EXPECT_EQ(p.d_reg, 12.0);
  EXPECT_GE(p.d_mr, -3.0);
  EXPECT_LE(p.d_mr, 3.0);

  const LossWeights no_rate{0.1, 2e-4, 0.0};
  EXPECT_EQ(total_loss(x, ya, yb, x, 0.0, 0.0, 1.0, no_rate).total,
            total_loss(x, ya, yb, x, 5.0, 9.0, 1.0, no_rate).total);
  EXPECT_THROW(total_loss(x, ya, yb, x, -1.0, 0.0, 0.0, lw), ConfigError);
  EXPECT_THROW(total_loss(x, ya, yb, x, 0.0, 0.0, 0.0, LossWeights{-0.1, 0, 0}), ConfigError);
}

TEST(Loss, TotalGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  Var x(smooth_pair_member(16, 16, rng, 0.05));
  Var ya(smooth_pair_member(16, 16, rng, 0.1), true), yb(smooth_pair_member(16, 16, rng, 0.1), true);
  Var y(smooth_pair_member(16, 16, rng, 0.1), true);
  Var ra(Tensor({1}, 0.3), true), rb(Tensor({1}, 0.2), true), reg(Tensor({1}, 4.0), true);
  const double err = max_grad_error({ya, yb, y, ra, rb, reg}, [&](const std::vector<Var>& in) {
    return total_loss(x, in[0], in[1], in[2], in[3], in[4], in[5], LossWeights{}).total;
  }, 1e-5, 32, 1e-6);
  EXPECT_LT(err, 1e-4);
}

}  // namespace
}  // namespace mdc::metrics
