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
#include <cstdio>
#include <filesystem>
#include <random>

#include "gtest/gtest.h"
#include "mdc/errors.hpp"
#include "mdc/networks.hpp"
#include "test_util.hpp"

namespace mdc::nn {
namespace {

using testing::random_tensor;

ModelConfig small_config(int k = 4, int l = 5) {
  ModelConfig c;
  c.encoder.base_channels = 6;
  c.encoder.feature_channels = k;
  c.decoder.resconv_per_block = 2;
  c.entropy.channels = 6;
  c.levels = l;
  c.seed = 11;
  return c;
}

Tensor one_hot_volume(const quant::IndexTensor& v, int levels) {
  Tensor t({levels, v.m(), v.n(), v.k()});
  for (int m = 0; m < v.m(); ++m)
    for (int n = 0; n < v.n(); ++n)
      for (int k = 0; k < v.k(); ++k)
        t[((static_cast<size_t>(v[v.offset(m, n, k)]) * v.m() + m) * v.n() + n) * v.k() + k] =
            1.0;
  return t;
}

quant::IndexTensor random_indices(int m, int n, int k, int levels, std::mt19937_64& rng) {
  quant::IndexTensor v(m, n, k);
  std::uniform_int_distribution<int> d(0, levels - 1);
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<uint16_t>(d(rng));
  return v;
}

// Probability of level l at raster position pos from an [L,M,N,K] volume.
double prob_at(const Tensor& probs, int l, size_t pos) {
  return probs[static_cast<size_t>(l) * (probs.size() / probs.dim(0)) + pos];
}

void zero_entropy_net(Model& model, int desc) {
  const std::string prefix = desc == 0 ? "ent_a." : "ent_b.";
  for (const auto& p : model.params()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    Var v = p.var;
    for (double& x : v.mutable_value().values()) x = 0.0;
  }
}

// ---- shapes ---------------------------------------------------------------

TEST(Encoder, OutputShapes) {
  Model model(small_config(8, 8));
  NoGradGuard ng;
  for (int side : {160, 64}) {
    auto out = model.encoder()(Var(Tensor({3, side, side}, 0.3)));
    EXPECT_EQ(out.z.shape(), (Shape{8, side / 8, side / 8}));
    EXPECT_EQ(out.da.shape(), (Shape{1, side / 8, side / 8}));
    EXPECT_EQ(out.db.shape(), (Shape{1, side / 8, side / 8}));
    for (double v : out.da.value().values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(model.encoder()(Var(Tensor({3, 60, 64}))), ShapeError);
  EXPECT_THROW(model.encoder()(Var(Tensor({1, 64, 64}))), ShapeError);
}

TEST(Encoder, DeterministicForward) {
  Model model(small_config());
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({3, 32, 40}, rng, 0.0, 1.0);
  NoGradGuard ng;
  auto a = model.encoder()(Var(x)), b = model.encoder()(Var(x));
  EXPECT_EQ(a.z.value().storage(), b.z.value().storage());
  EXPECT_EQ(a.da.value().storage(), b.da.value().storage());
}

TEST(Decoder, ShapesAndDegenerateInput) {
  Model model(small_config(8, 8));
  NoGradGuard ng;
  Tensor y = model.side_decoder(0)(Var(Tensor({8, 20, 20}))).value();
  EXPECT_EQ(y.shape(), (Shape{3, 160, 160}));
  for (double v : y.values()) {
    ASSERT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(model.central_decoder().in_channels(), 16);
  EXPECT_EQ(model.central_decoder()(Var(Tensor({16, 3, 5}))).shape(), (Shape{3, 24, 40}));
  EXPECT_THROW(model.side_decoder(1)(Var(Tensor({16, 4, 4}))), ShapeError);
}

TEST(Pipeline, RoundTripRestoresSpatialDims) {
  Model model(small_config());
  std::mt19937_64 rng(2);
  NoGradGuard ng;
  for (auto [h, w] : {std::pair{16, 16}, std::pair{24, 40}, std::pair{64, 32}}) {
    auto out = forward_pipeline(model, Var(random_tensor({3, h, w}, rng, 0.0, 1.0)),
                                quant::QuantMode::kHard);
    for (const Var* y : {&out.ya, &out.yb, &out.y}) EXPECT_EQ(y->shape(), (Shape{3, h, w}));
    EXPECT_EQ(out.qa.indices.m(), h / 8);
    EXPECT_EQ(out.qa.indices.n(), w / 8);
    EXPECT_GE(out.bits_a.item(), 0.0);
  }
}

// ---- entropy net ------------------------------------------------------------

TEST(MaskedConv, TapMasks) {
  int allowed_a = 0, allowed_b = 0;
  for (int t = 0; t < 27; ++t) {
    allowed_a += MaskedConv3d::tap_allowed(MaskType::kA, t);
    allowed_b += MaskedConv3d::tap_allowed(MaskType::kB, t);
  }
  EXPECT_EQ(allowed_a, 13);
  EXPECT_EQ(allowed_b, 14);
  EXPECT_FALSE(MaskedConv3d::tap_allowed(MaskType::kA, 13));
  EXPECT_TRUE(MaskedConv3d::tap_allowed(MaskType::kB, 13));
  EXPECT_FALSE(MaskedConv3d::tap_allowed(MaskType::kB, 14));
}

TEST(EntropyNet, UniformPredictionCostsLog2L) {
  Model model(small_config(2, 8));
  zero_entropy_net(model, 0);
  std::mt19937_64 rng(3);
  auto v = random_indices(4, 4, 2, 8, rng);
  NoGradGuard ng;
  auto r = model.entropy_net(0).rate(Var(one_hot_volume(v, 8)));
  EXPECT_NEAR(r.bits.item(), 96.0, 1e-9);
  for (double p : r.probs.values()) EXPECT_NEAR(p, 0.125, 1e-15);
}

TEST(EntropyNet, ConfidentPredictionCostsNothing) {
  Model model(small_config(2, 4));
  zero_entropy_net(model, 1);
  Var out_b = model.find("ent_b.out.b");
  out_b.mutable_value()[2] = 60.0;
  quant::IndexTensor v(3, 3, 2);
  for (size_t i = 0; i < v.size(); ++i) v[i] = 2;
  NoGradGuard ng;
  EXPECT_LT(model.entropy_net(1).rate(Var(one_hot_volume(v, 4))).bits.item(), 1e-20);
}

TEST(EntropyNet, Causality) {
  Model model(small_config(3, 5));
  std::mt19937_64 rng(4);
  NoGradGuard ng;
  const auto& net = model.entropy_net(0);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_indices(4, 5, 3, 5, rng);
    const size_t p = std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng);
    auto w = v;
    w[p] = static_cast<uint16_t>((v[p] + 1 + rng() % 4) % 5);
    Tensor before = net.rate(Var(one_hot_volume(v, 5))).probs;
    Tensor after = net.rate(Var(one_hot_volume(w, 5))).probs;
    bool later_changed = false;
    for (size_t pos = 0; pos < v.size(); ++pos) {
      for (int l = 0; l < 5; ++l) {
        if (pos <= p) {
          ASSERT_EQ(prob_at(before, l, pos), prob_at(after, l, pos)) << "pos " << pos;
        } else if (prob_at(before, l, pos) != prob_at(after, l, pos)) {
          later_changed = true;
        }
      }
    }
    if (p + 1 < v.size()) {
      EXPECT_TRUE(later_changed) << "perturbation at " << p;
    }
  }
}

TEST(ContextCursor, MatchesFullNetwork) {
  Model model(small_config(3, 6));
  std::mt19937_64 rng(5);
  auto v = random_indices(3, 4, 3, 6, rng);
  NoGradGuard ng;
  Tensor full = model.entropy_net(1).rate(Var(one_hot_volume(v, 6))).probs;
  ContextCursor cur(model.entropy_net(1), 3, 4, 3);
  EXPECT_EQ(cur.positions(), v.size());
  std::vector<double> p(6);
  for (size_t pos = 0; pos < v.size(); ++pos) {
    cur.probabilities(pos, p);
    double s = 0.0;
    for (int l = 0; l < 6; ++l) {
      EXPECT_NEAR(p[l], prob_at(full, l, pos), 1e-12);
      s += p[l];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    cur.commit(pos, v[pos]);
  }
}

TEST(ContextCursor, EnforcesRasterOrder) {
  Model model(small_config(2, 3));
  ContextCursor cur(model.entropy_net(0), 2, 2, 2);
  std::vector<double> p(3);
  EXPECT_THROW(cur.probabilities(1, p), std::logic_error);
  cur.probabilities(0, p);
  EXPECT_THROW(cur.commit(1, 0), std::logic_error);
}

// ---- model / checkpoint -----------------------------------------------------

TEST(Model, ParameterNamesAndChecksums) {
  Model a(small_config()), b(small_config());
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NO_THROW(a.find("centers_a"));
  EXPECT_NO_THROW(a.find("encoder.stem.w"));
  EXPECT_THROW(a.find("nope"), std::out_of_range);
  const uint32_t da = a.description_checksum(0), db = a.description_checksum(1);
  EXPECT_NE(da, db);
  // Touching a decoder weight changes the model CRC but not the entropy side.
  Var w = a.find("dec_a.up1.w");
  w.mutable_value()[0] += 1.0;
  EXPECT_NE(a.checksum(), b.checksum());
  EXPECT_EQ(a.description_checksum(0), da);
  Var c = a.find("centers_b");
  c.mutable_value()[0] += 0.01;
  EXPECT_NE(a.description_checksum(1), db);
}

TEST(Model, RegularizerIsSumOfSquaredConvWeights) {
  Model model(small_config());
  double expect = 0.0;
  for (const auto& p : model.params()) {
    if (p.name.size() > 2 && p.name.compare(p.name.size() - 2, 2, ".w") == 0) {
      for (double v : p.var.value().values()) expect += v * v;
    }
  }
  EXPECT_NEAR(model.regularizer().item(), expect, 1e-9 * expect);
}

TEST(Checkpoint, RoundTripPreservesModel) {
  ModelConfig cfg = small_config();
  cfg.sigma = 2.5;
  Model model(cfg);
  Checkpoint ck;
  ck.meta["note"] = "hello";
  write_model(model, ck);
  auto back = read_model(decode_checkpoint(encode_checkpoint(ck)));
  EXPECT_EQ(back->checksum(), model.checksum());
  EXPECT_EQ(back->config().sigma, 2.5);
  EXPECT_EQ(back->config().levels, cfg.levels);
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({3, 16, 24}, rng, 0.0, 1.0);
  NoGradGuard ng;
  auto o1 = forward_pipeline(model, Var(x), quant::QuantMode::kHard);
  auto o2 = forward_pipeline(*back, Var(x), quant::QuantMode::kHard);
  EXPECT_EQ(o1.y.value().storage(), o2.y.value().storage());
  EXPECT_EQ(o1.bits_a.item(), o2.bits_a.item());
}

TEST(Checkpoint, FileRoundTripAndCorruption) {
  Model model(small_config());
  Checkpoint ck;
  write_model(model, ck);
  const auto path = (std::filesystem::temp_directory_path() / "mdc_test_ckpt.mdck").string();
  save_checkpoint(ck, path);
  EXPECT_EQ(read_model(load_checkpoint(path))->checksum(), model.checksum());
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), std::exception);

  auto bytes = encode_checkpoint(ck);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), CorruptData);
  auto cut = bytes;
  cut.resize(bytes.size() - 9);
  EXPECT_THROW(decode_checkpoint(cut), CorruptData);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), CorruptData);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  Model model(small_config());
  Checkpoint ck;
  write_model(model, ck);
  ck.meta["model.levels"] = "6";
  EXPECT_THROW(read_model(ck), std::exception);
}

}  // namespace
}  // namespace mdc::nn
