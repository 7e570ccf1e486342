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

#include "mdc/networks.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mdc/errors.hpp"

namespace mdc::nn {
namespace {

// Init gain for residual branches and the decoder output layer. A small
// output layer starts every decoder near flat gray instead of noise.
constexpr double kSmallInit = 0.1;

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> nd(0.0, stddev);
  for (double& v : t.storage()) v = nd(rng);
  return t;
}

Var lrelu(const Var& x) { return leaky_relu(x, kLeakySlope); }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ModelConfig::validate() const {
  if (encoder.base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (encoder.feature_channels < 1) throw ConfigError("feature_channels must be >= 1");
  for (int d : encoder.dilations) {
    if (d < 1) throw ConfigError("dilation rates must be >= 1");
  }
  if (decoder.resconv_per_block < 0) throw ConfigError("resconv_per_block must be >= 0");
  if (entropy.channels < 1) throw ConfigError("entropy channels must be >= 1");
  if (levels < 2 || levels > 65535) throw ConfigError("levels must be in [2, 65535]");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
}

// ---- layers ------------------------------------------------------------

Conv2d::Conv2d(const std::string& name, int cin, int cout, int k, ConvGeom geom,
               std::mt19937_64& rng, ParamList& params, double init_scale)
    : geom_(geom) {
  const double stddev = init_scale * std::sqrt(2.0 / (cin * k * k));
  w_ = Var(normal_tensor({cout, cin, k, k}, stddev, rng), true);
  b_ = Var(Tensor({cout}), true);
  params.push_back({name + ".w", w_, true});
  params.push_back({name + ".b", b_, false});
}

Deconv2d::Deconv2d(const std::string& name, int cin, int cout, std::mt19937_64& rng,
                   ParamList& params, double init_scale) {
  // Each output pixel sees cin * 4 taps of the 4x4 stride-2 kernel.
  const double stddev = init_scale * std::sqrt(2.0 / (cin * 4));
  w_ = Var(normal_tensor({cin, cout, 4, 4}, stddev, rng), true);
  b_ = Var(Tensor({cout}), true);
  params.push_back({name + ".w", w_, true});
  params.push_back({name + ".b", b_, false});
}

bool MaskedConv3d::tap_allowed(MaskType type, int t) {
  // Lexicographic comparison of (dz, dy, dx) with the origin is the same
  // as comparing t with the center tap 13.
  return type == MaskType::kA ? t < 13 : t <= 13;
}

MaskedConv3d::MaskedConv3d(const std::string& name, int cin, int cout, MaskType type,
                           std::mt19937_64& rng, ParamList& params, double init_scale)
    : type_(type), cin_(cin), cout_(cout) {
  const int taps = type == MaskType::kA ? 13 : 14;
  const double stddev = init_scale * std::sqrt(2.0 / (cin * taps));
  Tensor w = normal_tensor({cout, cin, 3, 3, 3}, stddev, rng);
  Tensor mask({cout, cin, 3, 3, 3});
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = tap_allowed(type, static_cast<int>(i % 27)) ? 1.0 : 0.0;
    w[i] *= mask[i];
  }
  w_ = Var(std::move(w), true);
  b_ = Var(Tensor({cout}), true);
  mask_ = Var(std::move(mask));
  params.push_back({name + ".w", w_, true});
  params.push_back({name + ".b", b_, false});
}

Var MaskedConv3d::operator()(const Var& x) const { return conv3d(x, mul(w_, mask_), b_); }

void MaskedConv3d::eval_at(const double* in, int d, int h, int w, int z, int y, int x,
                           double* out) const {
  const double* wv = w_.value().data();
  const double* bv = b_.value().data();
  const size_t vol = static_cast<size_t>(d) * h * w;
  const int last = type_ == MaskType::kA ? 12 : 13;
  for (int co = 0; co < cout_; ++co) {
    double acc = bv[co];
    for (int ci = 0; ci < cin_; ++ci) {
      const double* wrow = wv + (static_cast<size_t>(co) * cin_ + ci) * 27;
      const double* plane = in + static_cast<size_t>(ci) * vol;
      for (int t = 0; t <= last; ++t) {
        const int sz = z + t / 9 - 1, sy = y + (t / 3) % 3 - 1, sx = x + t % 3 - 1;
        if (sz < 0 || sz >= d || sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
        acc += wrow[t] * plane[(static_cast<size_t>(sz) * h + sy) * w + sx];
      }
    }
    out[co] = acc;
  }
}

// ---- encoder -----------------------------------------------------------

Encoder::Encoder(const EncoderConfig& cfg, std::mt19937_64& rng, ParamList& params) {
  const int b = cfg.base_channels;
  stem_ = Conv2d("encoder.stem", 3, b, 3, {1, 1, 1}, rng, params);
  for (int blk = 0; blk < 3; ++blk) {
    for (int j = 0; j < 3; ++j) {
      const int d = cfg.dilations[j];
      hdc_[blk][j] = Conv2d("encoder.hdc" + std::to_string(blk + 1) + "." + std::to_string(j),
                            b, b, 3, {1, d, d}, rng, params);
    }
    down_[blk] = Conv2d("encoder.down" + std::to_string(blk + 1), b, b, 5, {2, 2, 1}, rng,
                        params);
  }
  skip4_ = Conv2d("encoder.skip4", b, b, 5, {4, 2, 1}, rng, params);
  skip2_ = Conv2d("encoder.skip2", b, b, 5, {2, 2, 1}, rng, params);
  agg_[0] = Conv2d("encoder.agg0", 3 * b, b, 3, {1, 1, 1}, rng, params);
  agg_[1] = Conv2d("encoder.agg1", b, b, 3, {1, 1, 1}, rng, params);
  agg_[2] = Conv2d("encoder.agg2", b, b, 3, {1, 1, 1}, rng, params);
  head_z_ = Conv2d("encoder.head_z", b, cfg.feature_channels, 3, {1, 1, 1}, rng, params);
  head_da_ = Conv2d("encoder.head_da", b, 1, 3, {1, 1, 1}, rng, params);
  head_db_ = Conv2d("encoder.head_db", b, 1, 3, {1, 1, 1}, rng, params);
}

EncoderOutput Encoder::operator()(const Var& x) const {
  if (x.value().rank() != 3 || x.dim(0) != 3) {
    throw ShapeError("encoder expects a [3,H,W] image, got " + shape_str(x.shape()));
  }
  if (x.dim(1) % kDownsample != 0 || x.dim(2) % kDownsample != 0) {
    throw ShapeError("encoder input dims must be divisible by 8");
  }
  Var h = lrelu(stem_(x));
  std::array<Var, 3> scales;
  for (int blk = 0; blk < 3; ++blk) {
    for (int j = 0; j < 3; ++j) h = lrelu(hdc_[blk][j](h));
    h = lrelu(down_[blk](h));
    scales[blk] = h;
  }
  Var from1 = lrelu(skip4_(scales[0]));
  Var from2 = lrelu(skip2_(scales[1]));
  Var a = concat({scales[2], from1, from2});
  for (const auto& conv : agg_) a = lrelu(conv(a));
  EncoderOutput out;
  out.z = head_z_(a);
  out.da = sigmoid(head_da_(a));
  out.db = sigmoid(head_db_(a));
  if (!all_finite(out.z.value())) throw Divergence("encoder produced non-finite features");
  return out;
}

// ---- decoder -----------------------------------------------------------

Decoder::Decoder(const std::string& name, int in_channels, int base_channels,
                 const DecoderConfig& cfg, std::mt19937_64& rng, ParamList& params)
    : in_channels_(in_channels) {
  up1_ = Deconv2d(name + ".up1", in_channels, base_channels, rng, params);
  for (int i = 0; i < cfg.resconv_per_block; ++i) {
    block1_.emplace_back(name + ".res1." + std::to_string(i), base_channels, base_channels, 3,
                         ConvGeom{1, 1, 1}, rng, params, kSmallInit);
  }
  up2_ = Deconv2d(name + ".up2", base_channels, base_channels, rng, params);
  for (int i = 0; i < cfg.resconv_per_block; ++i) {
    block2_.emplace_back(name + ".res2." + std::to_string(i), base_channels, base_channels, 3,
                         ConvGeom{1, 1, 1}, rng, params, kSmallInit);
  }
  up3_ = Deconv2d(name + ".up3", base_channels, 3, rng, params, kSmallInit);
}

Var Decoder::operator()(const Var& q) const {
  if (q.value().rank() != 3 || q.dim(0) != in_channels_) {
    throw ShapeError("decoder expects " + std::to_string(in_channels_) + " input channels, got " +
                     shape_str(q.shape()));
  }
  Var h = lrelu(up1_(q));
  for (const auto& conv : block1_) h = add(h, lrelu(conv(h)));
  h = lrelu(up2_(h));
  for (const auto& conv : block2_) h = add(h, lrelu(conv(h)));
  return sigmoid(up3_(h));
}

// ---- context model -----------------------------------------------------

EntropyNet::EntropyNet(const std::string& name, int levels, const EntropyNetConfig& cfg,
                       std::mt19937_64& rng, ParamList& params)
    : levels_(levels) {
  const int c = cfg.channels;
  in_ = MaskedConv3d(name + ".in", levels, c, MaskType::kA, rng, params);
  r1a_ = MaskedConv3d(name + ".res1a", c, c, MaskType::kB, rng, params);
  r1b_ = MaskedConv3d(name + ".res1b", c, c, MaskType::kB, rng, params, kSmallInit);
  r2a_ = MaskedConv3d(name + ".res2a", c, c, MaskType::kB, rng, params);
  r2b_ = MaskedConv3d(name + ".res2b", c, c, MaskType::kB, rng, params, kSmallInit);
  out_ = MaskedConv3d(name + ".out", c, levels, MaskType::kB, rng, params);
}

Var EntropyNet::log_probs(const Var& assignments) const {
  if (assignments.value().rank() != 4 || assignments.dim(0) != levels_) {
    throw ShapeError("context model expects [L,M,N,K] assignments, got " +
                     shape_str(assignments.shape()));
  }
  Var h = lrelu(in_(assignments));
  Var h2 = add(h, r1b_(lrelu(r1a_(h))));
  Var h3 = add(h2, r2b_(lrelu(r2a_(h2))));
  return log_softmax0(out_(lrelu(h3)));
}

RateEstimate EntropyNet::rate(const Var& assignments) const {
  Var lp = log_probs(assignments);
  RateEstimate r;
  r.bits = mul_scalar(sum(mul(assignments, lp)), -1.0 / std::numbers::ln2);
  r.probs = Tensor(lp.shape());
  for (size_t i = 0; i < r.probs.size(); ++i) r.probs[i] = std::exp(lp.value()[i]);
  return r;
}

ContextCursor::ContextCursor(const EntropyNet& net, int m, int n, int k)
    : net_(net), m_(m), n_(n), k_(k), vol_(static_cast<size_t>(m) * n * k) {
  const int c = net.in_.cout();
  in_.assign(static_cast<size_t>(net.levels_) * vol_, 0.0);
  h_.assign(static_cast<size_t>(c) * vol_, 0.0);
  t1_.assign(h_.size(), 0.0);
  h2_.assign(h_.size(), 0.0);
  t2_.assign(h_.size(), 0.0);
  a3_.assign(h_.size(), 0.0);
}

void ContextCursor::probabilities(size_t pos, std::span<double> out) {
  if (pos != next_) throw std::logic_error("context cursor must be queried in raster order");
  if (out.size() != static_cast<size_t>(net_.levels_)) {
    throw std::invalid_argument("probability buffer has wrong size");
  }
  const int z = static_cast<int>(pos / (static_cast<size_t>(n_) * k_));
  const int y = static_cast<int>((pos / k_) % n_);
  const int x = static_cast<int>(pos % k_);
  const int c = net_.in_.cout();
  std::vector<double> tmp(static_cast<size_t>(std::max(c, net_.levels_)));
  auto store = [&](std::vector<double>& vol, const double* v, bool act) {
    for (int ch = 0; ch < c; ++ch) {
      const double a = v[ch];
      vol[ch * vol_ + pos] = act ? (a > 0.0 ? a : kLeakySlope * a) : a;
    }
  };
  net_.in_.eval_at(in_.data(), m_, n_, k_, z, y, x, tmp.data());
  store(h_, tmp.data(), true);
  net_.r1a_.eval_at(h_.data(), m_, n_, k_, z, y, x, tmp.data());
  store(t1_, tmp.data(), true);
  net_.r1b_.eval_at(t1_.data(), m_, n_, k_, z, y, x, tmp.data());
  for (int ch = 0; ch < c; ++ch) h2_[ch * vol_ + pos] = h_[ch * vol_ + pos] + tmp[ch];
  net_.r2a_.eval_at(h2_.data(), m_, n_, k_, z, y, x, tmp.data());
  store(t2_, tmp.data(), true);
  net_.r2b_.eval_at(t2_.data(), m_, n_, k_, z, y, x, tmp.data());
  for (int ch = 0; ch < c; ++ch) {
    const double a = h2_[ch * vol_ + pos] + tmp[ch];
    a3_[ch * vol_ + pos] = a > 0.0 ? a : kLeakySlope * a;
  }
  net_.out_.eval_at(a3_.data(), m_, n_, k_, z, y, x, tmp.data());
  double mx = tmp[0];
  for (int j = 1; j < net_.levels_; ++j) mx = std::max(mx, tmp[j]);
  double s = 0.0;
  for (int j = 0; j < net_.levels_; ++j) {
    out[j] = std::exp(tmp[j] - mx);
    s += out[j];
  }
  for (int j = 0; j < net_.levels_; ++j) out[j] /= s;
}

void ContextCursor::commit(size_t pos, int symbol) {
  if (pos != next_) throw std::logic_error("context cursor must be committed in raster order");
  if (symbol < 0 || symbol >= net_.levels_) throw CorruptData("symbol out of range");
  in_[symbol * vol_ + pos] = 1.0;
  ++next_;
}

// ---- model -------------------------------------------------------------

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const int b = cfg_.encoder.base_channels;
  const int k = cfg_.encoder.feature_channels;
  encoder_ = Encoder(cfg_.encoder, rng, params_);
  dec_a_ = Decoder("dec_a", k, b, cfg_.decoder, rng, params_);
  dec_b_ = Decoder("dec_b", k, b, cfg_.decoder, rng, params_);
  dec_c_ = Decoder("dec_c", 2 * k, b, cfg_.decoder, rng, params_);
  ent_a_ = EntropyNet("ent_a", cfg_.levels, cfg_.entropy, rng, params_);
  ent_b_ = EntropyNet("ent_b", cfg_.levels, cfg_.entropy, rng, params_);
  const auto init = quant::CenterVector::uniform(cfg_.levels, cfg_.sigma);
  centers_a_ = Var(Tensor({cfg_.levels}, init.centers), true);
  centers_b_ = Var(Tensor({cfg_.levels}, init.centers), true);
  params_.push_back({"centers_a", centers_a_, false});
  params_.push_back({"centers_b", centers_b_, false});
}

size_t Model::parameter_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

uint32_t Model::checksum() const {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& p : params_) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(p.var.value().data()),
                static_cast<uInt>(p.var.size() * sizeof(double)));
  }
  return static_cast<uint32_t>(crc);
}

uint32_t Model::description_checksum(int desc) const {
  const std::string prefix = desc == 0 ? "ent_a." : "ent_b.";
  const std::string centers = desc == 0 ? "centers_a" : "centers_b";
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0 || p.name == centers) {
      crc = crc32(crc, reinterpret_cast<const Bytef*>(p.var.value().data()),
                  static_cast<uInt>(p.var.size() * sizeof(double)));
    }
  }
  return static_cast<uint32_t>(crc);
}

quant::CenterVector Model::center_vector(int desc) const {
  return quant::to_center_vector(centers(desc), cfg_.sigma);
}

Var Model::regularizer() const {
  Var total;
  for (const auto& p : params_) {
    if (!p.conv_weight) continue;
    Var s = sum(square(p.var));
    total = total.defined() ? add(total, s) : s;
  }
  return total;
}

Var Model::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.var;
  }
  throw std::out_of_range("no parameter named " + name);
}

PipelineOutput forward_pipeline(const Model& model, const Var& x, quant::QuantMode mode,
                                bool with_rate) {
  const int k = model.config().encoder.feature_channels;
  const double sigma = model.config().sigma;
  PipelineOutput out;
  out.enc = model.encoder()(x);
  Var za = mul(out.enc.z, quant::expand_importance(out.enc.da, k));
  Var zb = mul(out.enc.z, quant::expand_importance(out.enc.db, k));
  out.qa = quant::quantize_branch(za, model.centers(0), sigma, mode);
  out.qb = quant::quantize_branch(zb, model.centers(1), sigma, mode);
  out.ya = model.side_decoder(0)(out.qa.values);
  out.yb = model.side_decoder(1)(out.qb.values);
  out.y = model.central_decoder()(concat({out.qa.values, out.qb.values}));
  if (with_rate) {
    out.bits_a = model.entropy_net(0).rate(out.qa.assignments).bits;
    out.bits_b = model.entropy_net(1).rate(out.qb.assignments).bits;
  }
  return out;
}

// ---- checkpoint container ----------------------------------------------
//
// Layout (all integers little-endian, values IEEE-754 binary64 LE):
//   "MDCK" | u32 version=1 | u32 meta_len | meta (key = value lines)
//   u32 tensor_count | { u16 name_len | name | u8 rank | u32 dims[rank] |
//   f64 data[numel] }* | u32 crc32 of every preceding byte

namespace {

constexpr char kCkptMagic[4] = {'M', 'D', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  void need(size_t n) const {
    if (pos_ + n > b_.size()) throw CorruptData("checkpoint truncated");
  }
  const std::vector<uint8_t>& b_;
  size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<uint8_t> out(kCkptMagic, kCkptMagic + 4);
  put_le<uint32_t>(out, kCkptVersion);
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata may not contain '=' keys or newlines");
    }
    meta += k + " = " + v + "\n";
  }
  put_le<uint32_t>(out, static_cast<uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put_le<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& nt : ckpt.tensors) {
    put_le<uint16_t>(out, static_cast<uint16_t>(nt.name.size()));
    out.insert(out.end(), nt.name.begin(), nt.name.end());
    out.push_back(static_cast<uint8_t>(nt.tensor.rank()));
    for (int d : nt.tensor.shape()) put_le<uint32_t>(out, static_cast<uint32_t>(d));
    for (double v : nt.tensor.values()) {
      uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_le<uint64_t>(out, bits);
    }
  }
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data(), static_cast<uInt>(out.size()));
  put_le<uint32_t>(out, static_cast<uint32_t>(crc));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
    throw CorruptData("not a model checkpoint");
  }
  const size_t body = bytes.size() - 4;
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(bytes[body + i]) << (8 * i);
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(body));
  if (static_cast<uint32_t>(crc) != stored) throw CorruptData("checkpoint checksum mismatch");

  Reader r(bytes);
  r.bytes(4);
  if (r.get<uint32_t>() != kCkptVersion) throw CorruptData("unsupported checkpoint version");
  Checkpoint ckpt;
  std::istringstream meta(r.bytes(r.get<uint32_t>()));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw CorruptData("malformed checkpoint metadata");
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 3);
  }
  const uint32_t count = r.get<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.bytes(r.get<uint16_t>());
    const int rank = r.get<uint8_t>();
    Shape shape(static_cast<size_t>(rank));
    for (int& d : shape) d = static_cast<int>(r.get<uint32_t>());
    const size_t numel = shape_numel(shape);
    if (numel * 8 > body - r.pos()) throw CorruptData("checkpoint truncated");
    std::vector<double> data(numel);
    for (double& v : data) {
      const uint64_t bits = r.get<uint64_t>();
      std::memcpy(&v, &bits, sizeof v);
    }
    nt.tensor = Tensor(std::move(shape), std::move(data));
    ckpt.tensors.push_back(std::move(nt));
  }
  if (r.pos() != body) throw CorruptData("trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::vector<uint8_t> bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void write_model(const Model& model, Checkpoint& ckpt) {
  const ModelConfig& c = model.config();
  ckpt.meta["model.base_channels"] = std::to_string(c.encoder.base_channels);
  ckpt.meta["model.feature_channels"] = std::to_string(c.encoder.feature_channels);
  ckpt.meta["model.dilations"] = std::to_string(c.encoder.dilations[0]) + "," +
                                 std::to_string(c.encoder.dilations[1]) + "," +
                                 std::to_string(c.encoder.dilations[2]);
  ckpt.meta["model.resconv_per_block"] = std::to_string(c.decoder.resconv_per_block);
  ckpt.meta["model.entropy_channels"] = std::to_string(c.entropy.channels);
  ckpt.meta["model.levels"] = std::to_string(c.levels);
  ckpt.meta["model.sigma"] = fmt_double(c.sigma);
  ckpt.meta["model.seed"] = std::to_string(c.seed);
  ckpt.meta["model.checksum"] = std::to_string(model.checksum());
  for (const auto& p : model.params()) ckpt.tensors.push_back({"param/" + p.name, p.var.value()});
}

ModelConfig model_config_from(const Checkpoint& ckpt) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) throw CorruptData("checkpoint lacks " + key);
    return it->second;
  };
  try {
    ModelConfig c;
    c.encoder.base_channels = std::stoi(get("model.base_channels"));
    c.encoder.feature_channels = std::stoi(get("model.feature_channels"));
    std::istringstream dil(get("model.dilations"));
    std::string part;
    for (int i = 0; i < 3; ++i) {
      if (!std::getline(dil, part, ',')) throw CorruptData("bad model.dilations");
      c.encoder.dilations[i] = std::stoi(part);
    }
    c.decoder.resconv_per_block = std::stoi(get("model.resconv_per_block"));
    c.entropy.channels = std::stoi(get("model.entropy_channels"));
    c.levels = std::stoi(get("model.levels"));
    c.sigma = std::stod(get("model.sigma"));
    c.seed = std::stoull(get("model.seed"));
    return c;
  } catch (const std::logic_error&) {
    throw CorruptData("malformed model configuration in checkpoint");
  }
}

void load_params(Model& model, const Checkpoint& ckpt) {
  for (const auto& p : model.params()) {
    const Tensor* t = ckpt.find("param/" + p.name);
    if (!t) throw CorruptData("checkpoint lacks parameter " + p.name);
    if (t->shape() != p.var.shape()) throw CorruptData("shape mismatch for parameter " + p.name);
    if (!all_finite(*t)) throw CorruptData("non-finite values in parameter " + p.name);
    Var v = p.var;
    v.mutable_value() = *t;
  }
}

std::unique_ptr<Model> read_model(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model>(model_config_from(ckpt));
  load_params(*model, ckpt);
  auto it = ckpt.meta.find("model.checksum");
  if (it != ckpt.meta.end() && it->second != std::to_string(model->checksum())) {
    throw CorruptData("model checksum mismatch");
  }
  return model;
}

}  // namespace mdc::nn
