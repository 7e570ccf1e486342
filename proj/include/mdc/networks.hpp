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

#ifndef MDC_NETWORKS_HPP_
#define MDC_NETWORKS_HPP_

// Encoder, side/central decoders and the two context models, plus the
// model container and its checkpoint format.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mdc/autograd.hpp"
#include "mdc/quant.hpp"
#include "mdc/symbol_model.hpp"

namespace mdc::nn {

inline constexpr double kLeakySlope = 0.2;
inline constexpr int kDownsample = 8;

struct EncoderConfig {
  int base_channels = 64;
  int feature_channels = 8;  // K
  std::array<int, 3> dilations{1, 2, 3};
};

struct DecoderConfig {
  int resconv_per_block = 16;
};

struct EntropyNetConfig {
  int channels = 24;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  EntropyNetConfig entropy;
  int levels = 8;  // L
  double sigma = 1.0;
  uint64_t seed = 1;

  void validate() const;
};

struct NamedParam {
  std::string name;
  Var var;
  bool conv_weight = false;  // contributes to the L2 regularizer
};

using ParamList = std::vector<NamedParam>;

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int cin, int cout, int k, ConvGeom geom, std::mt19937_64& rng,
         ParamList& params, double init_scale = 1.0);
  Var operator()(const Var& x) const { return conv2d(x, w_, b_, geom_); }

 private:
  Var w_, b_;
  ConvGeom geom_;
};

// 4x4 transposed convolution, stride 2, padding 1: exact 2x upsampling.
class Deconv2d {
 public:
  Deconv2d() = default;
  Deconv2d(const std::string& name, int cin, int cout, std::mt19937_64& rng, ParamList& params,
           double init_scale = 1.0);
  Var operator()(const Var& x) const { return conv_transpose2d(x, w_, b_, 2, 1); }

 private:
  Var w_, b_;
};

enum class MaskType { kA, kB };

// 3x3x3 convolution whose taps only reach raster-earlier positions (type A)
// or earlier-or-equal positions (type B).
class MaskedConv3d {
 public:
  MaskedConv3d() = default;
  MaskedConv3d(const std::string& name, int cin, int cout, MaskType type, std::mt19937_64& rng,
               ParamList& params, double init_scale = 1.0);
  Var operator()(const Var& x) const;

  // Tap t = (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1) is usable.
  static bool tap_allowed(MaskType type, int t);

  // Evaluates the layer at one position of a [Cin, D, H, W] volume.
  void eval_at(const double* in, int d, int h, int w, int z, int y, int x, double* out) const;
  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  Var w_, b_;
  Var mask_;
  MaskType type_ = MaskType::kB;
  int cin_ = 0, cout_ = 0;
};

struct EncoderOutput {
  Var z;   // [K, H/8, W/8]
  Var da;  // [1, H/8, W/8], sigmoid
  Var db;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng, ParamList& params);
  // x is [3, H, W] with H and W divisible by 8.
  EncoderOutput operator()(const Var& x) const;

 private:
  Conv2d stem_;
  std::array<std::array<Conv2d, 3>, 3> hdc_;
  std::array<Conv2d, 3> down_;
  Conv2d skip4_, skip2_;
  std::array<Conv2d, 3> agg_;
  Conv2d head_z_, head_da_, head_db_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::string& name, int in_channels, int base_channels, const DecoderConfig& cfg,
          std::mt19937_64& rng, ParamList& params);
  // q is [in_channels, M, N]; returns [3, 8M, 8N] in [0, 1].
  Var operator()(const Var& q) const;
  int in_channels() const { return in_channels_; }

 private:
  int in_channels_ = 0;
  Deconv2d up1_, up2_, up3_;
  std::vector<Conv2d> block1_, block2_;
};

struct RateEstimate {
  Var bits;      // [1]
  Tensor probs;  // [L, M, N, K]
};

class EntropyNet {
 public:
  EntropyNet() = default;
  EntropyNet(const std::string& name, int levels, const EntropyNetConfig& cfg,
             std::mt19937_64& rng, ParamList& params);

  // assignments: [L, M, N, K] (one-hot or soft). Returns log-probabilities
  // of the same shape.
  Var log_probs(const Var& assignments) const;
  RateEstimate rate(const Var& assignments) const;
  int levels() const { return levels_; }

 private:
  friend class ContextCursor;
  int levels_ = 0;
  MaskedConv3d in_, r1a_, r1b_, r2a_, r2b_, out_;
};

// Incremental raster-order evaluation of an EntropyNet: each query costs
// one position per layer. Identical probabilities are produced on the
// encode and decode side because both run this exact code path.
class ContextCursor : public SymbolModel {
 public:
  ContextCursor(const EntropyNet& net, int m, int n, int k);
  int levels() const override { return net_.levels_; }
  size_t positions() const override { return vol_; }
  void probabilities(size_t pos, std::span<double> out) override;
  void commit(size_t pos, int symbol) override;

 private:
  const EntropyNet& net_;
  int m_, n_, k_;
  size_t vol_;
  size_t next_ = 0;
  std::vector<double> in_, h_, t1_, h2_, t2_, a3_;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const ParamList& params() const { return params_; }
  size_t parameter_count() const;
  uint32_t checksum() const;
  // CRC32 over the context model and centers used for description 0 or 1.
  uint32_t description_checksum(int desc) const;

  const Encoder& encoder() const { return encoder_; }
  const Decoder& side_decoder(int desc) const { return desc == 0 ? dec_a_ : dec_b_; }
  const Decoder& central_decoder() const { return dec_c_; }
  const EntropyNet& entropy_net(int desc) const { return desc == 0 ? ent_a_ : ent_b_; }
  const Var& centers(int desc) const { return desc == 0 ? centers_a_ : centers_b_; }
  quant::CenterVector center_vector(int desc) const;

  // Sum of squared convolution weights.
  Var regularizer() const;

  Var find(const std::string& name) const;

 private:
  ModelConfig cfg_;
  ParamList params_;
  Encoder encoder_;
  Decoder dec_a_, dec_b_, dec_c_;
  EntropyNet ent_a_, ent_b_;
  Var centers_a_, centers_b_;
};

// Everything one training/evaluation forward pass produces.
struct PipelineOutput {
  EncoderOutput enc;
  quant::QuantizedBranch qa, qb;
  Var ya, yb, y;
  Var bits_a, bits_b;
};

PipelineOutput forward_pipeline(const Model& model, const Var& x, quant::QuantMode mode,
                                bool with_rate = true);

// ---- checkpoint container ----------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes);
// Writes to `path` through a temporary file and rename.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void write_model(const Model& model, Checkpoint& ckpt);
ModelConfig model_config_from(const Checkpoint& ckpt);
std::unique_ptr<Model> read_model(const Checkpoint& ckpt);
void load_params(Model& model, const Checkpoint& ckpt);

}  // namespace mdc::nn

#endif  // MDC_NETWORKS_HPP_
