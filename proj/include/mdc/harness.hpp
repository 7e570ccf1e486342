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

#ifndef MDC_HARNESS_HPP_
#define MDC_HARNESS_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mdc/bitstream.hpp"
#include "mdc/networks.hpp"
#include "mdc/training.hpp"

namespace mdc::harness {

using bitstream::CodingMode;
using bitstream::EncodedDescription;

inline constexpr int kMinImageSide = 32;
inline constexpr double kFallbackGray = 0.5;

enum class DecodeMode { kCentral = 0, kSideA = 1, kSideB = 2, kNone = 3 };
const char* mode_name(DecodeMode m);

struct EncodedPair {
  EncodedDescription a, b;
};

// Reflect-pads to a multiple of 8, runs the encoder and both quantizers and
// codes each index tensor. Deterministic for a fixed model and input.
EncodedPair encode_image(const Tensor& img, const nn::Model& model,
                         CodingMode mode = CodingMode::kArithmetic);

struct Decoded {
  Tensor image;
  DecodeMode mode = DecodeMode::kNone;
};

// Either pointer may be null. With neither description the result is a
// flat gray image of fallback_h x fallback_w.
Decoded decode_any(const EncodedDescription* a, const EncodedDescription* b,
                   const nn::Model& model, int fallback_h = 0, int fallback_w = 0);

// All three reconstructions computed in memory without a bitstream.
struct Reconstructions {
  Tensor central, side_a, side_b;
  quant::IndexTensor va, vb;
  double est_bits_a = 0, est_bits_b = 0;
};
Reconstructions reconstruct_all(const Tensor& img, const nn::Model& model);

// ---- erasure channel ---------------------------------------------------

struct ChannelConfig {
  double p_loss_a = 0.1;
  double p_loss_b = 0.1;
  int64_t trials = 100000;
  uint64_t seed = 1;

  void validate() const;
};

struct ModeStats {
  int64_t count = 0;
  double frequency = 0.0;
  double expected_frequency = 0.0;
  double frequency_se = 0.0;  // binomial standard error at the expected rate
};

struct Statistic {
  double mean = 0.0;
  double se = 0.0;
  double expected = 0.0;  // closed form
};

struct ChannelReport {
  int64_t trials = 0;
  std::array<ModeStats, 4> modes;        // indexed by DecodeMode
  std::array<double, 4> mr{}, ms{};      // per-mode quality of the decode
  Statistic mean_mr, mean_ms;            // over trials
};

// Per-mode qualities are supplied directly; the model-based overload
// derives them from the image first.
ChannelReport simulate_channel(const std::array<double, 4>& mr, const std::array<double, 4>& ms,
                               const ChannelConfig& ch);
ChannelReport simulate_channel(const Tensor& img, const nn::Model& model, const ChannelConfig& ch);

double expected_distortion(double d_central, double d_side_a, double d_side_b, double d_none,
                           double p_a, double p_b);

// ---- evaluation --------------------------------------------------------

struct RDPoint {
  std::string name;
  double bpp = 0.0;          // all description bytes, headers included
  double payload_bpp = 0.0;  // payload bytes only
  double side_ms_ssim = 0.0, side_mr_ssim = 0.0;
  double central_ms_ssim = 0.0, central_mr_ssim = 0.0;
};

struct EvalResult {
  std::vector<RDPoint> images;
  RDPoint mean;
};

EvalResult evaluate_images(const std::vector<Tensor>& images, const std::vector<std::string>& names,
                           const nn::Model& model, CodingMode mode = CodingMode::kArithmetic);
// Images failing to load or smaller than kMinImageSide are skipped with a
// warning. Throws ConfigError when nothing is left.
EvalResult evaluate_dataset(const std::string& dir, const nn::Model& model,
                            CodingMode mode = CodingMode::kArithmetic);

inline constexpr const char* kRdCsvHeader =
    "image,bpp,payload_bpp,side_ms_ssim,side_mr_ssim,central_ms_ssim,central_mr_ssim";
void write_rd_csv(const std::string& path, const EvalResult& r);
std::vector<RDPoint> read_rd_csv(const std::string& path);

// Writes rd_ms_ssim.svg and rd_mr_ssim.svg (bpp against quality, side and
// central series). Returns the written paths.
std::vector<std::string> plot_rd(const std::string& csv_path, const std::string& out_dir);

}  // namespace mdc::harness

#endif  // MDC_HARNESS_HPP_
