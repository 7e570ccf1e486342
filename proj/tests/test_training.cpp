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
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gtest/gtest.h"
#include "mdc/errors.hpp"
#include "mdc/image.hpp"
#include "mdc/training.hpp"
#include "test_util.hpp"

namespace mdc::train {
namespace {

namespace fs = std::filesystem;
using testing::max_grad_error;
using testing::random_tensor;

TrainConfig tiny_config() {
  TrainConfig c;
  c.crop_size = 16;
  c.batch_size = 2;
  c.base_channels = 4;
  c.resconv_per_block = 1;
  c.entropy_channels = 4;
  c.K = 2;
  c.L = 3;
  c.synthetic_train = 6;
  c.synthetic_val = 2;
  c.synthetic_size = 32;
  c.val_every = 0;
  c.ckpt_every = 0;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

// ---- configuration ---------------------------------------------------------

TEST(Config, DefaultsFollowPublishedProtocol) {
  TrainConfig c;
  EXPECT_EQ(c.lr, 4e-3);
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.alpha, 0.1);
  EXPECT_EQ(c.beta, 2e-4);
  EXPECT_EQ(c.gamma, 0.1);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesTextAndRoundTripsThroughMap) {
  const auto kv = parse_config_text(
      "# toy run\n"
      "lr = 0.001   # smaller\n"
      "\n"
      "  gamma=1\n"
      "loss_variant = ms\n"
      "train_dir = /data/x y\n");
  EXPECT_EQ(kv.at("lr"), "0.001");
  EXPECT_EQ(kv.at("gamma"), "1");
  EXPECT_EQ(kv.at("train_dir"), "/data/x y");
  TrainConfig c;
  c.apply(kv);
  EXPECT_EQ(c.lr, 0.001);
  EXPECT_EQ(c.loss_variant, metrics::StructuralVariant::kMs);
  TrainConfig d;
  d.apply(c.to_map());
  EXPECT_EQ(d.to_map(), c.to_map());
}

TEST(Config, RejectsBadInput) {
  TrainConfig c;
  EXPECT_THROW(c.apply({{"bogus", "1"}}), ConfigError);
  EXPECT_THROW(c.apply({{"lr", "fast"}}), ConfigError);
  EXPECT_THROW(c.apply({{"loss_variant", "l2"}}), ConfigError);
  EXPECT_THROW(parse_config_text("just words\n"), ConfigError);
  auto invalid = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    EXPECT_THROW(t.validate(), ConfigError);
  };
  invalid([](TrainConfig& t) { t.lr = -1.0; });
  invalid([](TrainConfig& t) { t.gamma = -0.1; });
  invalid([](TrainConfig& t) { t.crop_size = 60; });
  invalid([](TrainConfig& t) { t.L = 1; });
  invalid([](TrainConfig& t) { t.batch_size = 0; });
  TrainConfig zero_lr;
  zero_lr.lr = 0.0;
  EXPECT_NO_THROW(zero_lr.validate());
}

// ---- data --------------------------------------------------------------------

TEST(Data, ShortSideIsUpscaledBeforeCropping) {
  auto ds = Dataset::from_images({Tensor({3, 100, 200}, 0.5), Tensor({3, 512, 512}, 0.5)}, 160);
  EXPECT_EQ(ds[0].shape(), (Shape{3, 160, 320}));
  EXPECT_EQ(ds[1].shape(), (Shape{3, 512, 512}));
  std::mt19937_64 rng(1);
  for (const auto& crop : sample_batch(ds, 160, 6, rng)) EXPECT_EQ(crop.shape(), (Shape{3, 160, 160}));
}

TEST(Data, SeededBatchesAreIdentical) {
  auto ds = Dataset::synthetic(5, 48, 3);
  std::mt19937_64 r1(9), r2(9);
  const auto a = sample_batch(ds, 16, 4, r1), b = sample_batch(ds, 16, 4, r2);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].storage(), b[i].storage());
  EXPECT_THROW(sample_batch(Dataset(), 16, 1, r1), ConfigError);
  // Same generator seed, same synthetic data.
  EXPECT_EQ(Dataset::synthetic(2, 32, 4)[1].storage(), Dataset::synthetic(2, 32, 4)[1].storage());
}

TEST(Data, DirectoryLoaderSkipsUnreadableFiles) {
  const fs::path dir = fresh_dir("mdc_test_ds");
  image::write_synthetic_dataset(dir.string(), 3, 24, 40, 5);
  std::ofstream(dir / "broken.png") << "not a png";
  auto ds = Dataset::from_dir(dir.string(), 32);
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds[0].shape(), (Shape{3, 32, 53}));
  fs::remove_all(dir);
  EXPECT_THROW(Dataset::from_dir(dir.string(), 16), ConfigError);
}

// ---- optimization ----------------------------------------------------------

TEST(Step, ZeroLearningRateLeavesParametersUnchanged) {
  TrainConfig cfg = tiny_config();
  cfg.lr = 0.0;
  nn::Model model(cfg.model_config());
  const uint32_t before = model.checksum();
  Adam opt(model.params());
  std::mt19937_64 rng(2);
  auto batch = sample_batch(Dataset::synthetic(3, 32, 1), 16, 2, rng);
  const auto loss = train_step(model, opt, batch, cfg, 0.0);
  EXPECT_TRUE(std::isfinite(loss.total));
  EXPECT_EQ(model.checksum(), before);
  EXPECT_NE((train_step(model, opt, batch, cfg, 1e-3), model.checksum()), before);
}

TEST(Step, BppIsSumOfPerPixelRates) {
  TrainConfig cfg = tiny_config();
  nn::Model model(cfg.model_config());
  Tensor img = Dataset::synthetic(1, 16, 2)[0];
  NoGradGuard ng;
  auto obj = sample_objective(model, img, cfg, quant::QuantMode::kHard);
  auto out = nn::forward_pipeline(model, Var(img), quant::QuantMode::kHard);
  EXPECT_NEAR(obj.parts.rate_a, out.bits_a.item() / 256.0, 1e-12);
  EXPECT_NEAR(obj.parts.rate_b, out.bits_b.item() / 256.0, 1e-12);
}

TEST(Gradient, TotalLossMatchesFiniteDifferencesOnTinyModel) {
  TrainConfig cfg = tiny_config();
  nn::Model model(cfg.model_config());
  std::mt19937_64 rng(3);
  Tensor img = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  std::vector<Var> probes{model.find("encoder.stem.w"), model.find("centers_a"),
                          model.find("centers_b")};
  const double err = max_grad_error(probes, [&](const std::vector<Var>&) {
    Var total = sample_objective(model, img, cfg, quant::QuantMode::kSoft).total;
    return add(total, mul_scalar(model.regularizer(), cfg.beta));
  }, 1e-6, 40, 1e-8);
  EXPECT_LT(err, 1e-3);
  for (const auto& p : model.params()) Var(p.var).zero_grad();
}

TEST(Gradient, CentersReceiveNonzeroGradient) {
  TrainConfig cfg = tiny_config();
  nn::Model model(cfg.model_config());
  auto imgs = Dataset::synthetic(2, 16, 4);
  for (size_t i = 0; i < imgs.size(); ++i) {
    backward(sample_objective(model, imgs[i], cfg, quant::QuantMode::kHard).total);
  }
  for (const char* name : {"centers_a", "centers_b"}) {
    double mag = 0.0;
    for (double g : model.find(name).grad_buffer().values()) mag += std::fabs(g);
    EXPECT_GT(mag, 0.0) << name;
  }
}

TEST(Gradient, NoDeadParameters) {
  TrainConfig cfg = tiny_config();
  nn::Model model(cfg.model_config());
  std::mt19937_64 rng(5);
  for (int i = 0; i < 4; ++i) {
    Tensor img = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    Var total = sample_objective(model, img, cfg, quant::QuantMode::kHard).total;
    backward(add(total, mul_scalar(model.regularizer(), cfg.beta)));
  }
  for (const auto& p : model.params()) {
    double mag = 0.0;
    for (double g : Var(p.var).grad_buffer().values()) mag += std::fabs(g);
    EXPECT_GT(mag, 0.0) << p.name;
  }
}

TEST(Calibration, FeatureScaleHitsTarget) {
  TrainConfig cfg = tiny_config();
  nn::Model model(cfg.model_config());
  auto imgs = Dataset::synthetic(3, 16, 6);
  std::vector<Tensor> batch{imgs[0], imgs[1], imgs[2]};
  calibrate_feature_scale(model, batch, 0.5);
  EXPECT_NEAR(calibrate_feature_scale(model, batch, 0.5), 0.5, 1e-9);
}

// ---- loop, logs and resume -------------------------------------------------

TEST(Loop, WritesLogsAndCheckpoint) {
  TrainConfig cfg = tiny_config();
  cfg.steps = 3;
  cfg.val_every = 2;
  cfg.ma_window = 2;
  cfg.out_dir = fresh_dir("mdc_test_loop").string();
  auto res = train_loop(cfg, false);
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.validations.size(), 1u);
  EXPECT_NEAR(res.records[2].moving_avg,
              0.5 * (res.records[1].loss.total + res.records[2].loss.total), 1e-12);
  for (const auto& r : res.records) {
    EXPECT_NEAR(r.loss.total, r.loss.recompose(cfg.loss_weights()), 1e-9);
    EXPECT_EQ(r.bpp, r.loss.rate_a + r.loss.rate_b);
  }
  const std::string log = slurp(fs::path(cfg.out_dir) / "train_log.csv");
  EXPECT_EQ(log.rfind(kTrainLogHeader, 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
  EXPECT_TRUE(fs::exists(res.checkpoint_path));
  fs::remove_all(cfg.out_dir);
}

TEST(Loop, ResumeIsBitExact) {
  TrainConfig cfg = tiny_config();
  cfg.steps = 4;
  cfg.out_dir = fresh_dir("mdc_test_full").string();
  train_loop(cfg, false);

  TrainConfig part = cfg;
  part.out_dir = fresh_dir("mdc_test_part").string();
  part.steps = 2;
  train_loop(part, false);
  part.steps = 4;
  train_loop(part, true);

  const auto a = nn::load_checkpoint((fs::path(cfg.out_dir) / "latest.mdck").string());
  const auto b = nn::load_checkpoint((fs::path(part.out_dir) / "latest.mdck").string());
  EXPECT_EQ(nn::read_model(a)->checksum(), nn::read_model(b)->checksum());
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].name, b.tensors[i].name);
    EXPECT_EQ(a.tensors[i].tensor.storage(), b.tensors[i].tensor.storage()) << a.tensors[i].name;
  }
  EXPECT_EQ(slurp(fs::path(cfg.out_dir) / "train_log.csv"),
            slurp(fs::path(part.out_dir) / "train_log.csv"));
  fs::remove_all(cfg.out_dir);
  fs::remove_all(part.out_dir);
}

TEST(Loop, RateWeightChangesRateStatistics) {
  TrainConfig cfg = tiny_config();
  cfg.steps = 6;
  cfg.out_dir = fresh_dir("mdc_test_g0").string();
  cfg.gamma = 0.0;
  auto r0 = train_loop(cfg, false);
  cfg.gamma = 0.1;
  cfg.out_dir = fresh_dir("mdc_test_g1").string();
  auto r1 = train_loop(cfg, false);
  // Same seed, same first step.
  EXPECT_EQ(r0.records[0].bpp, r1.records[0].bpp);
  EXPECT_NE(r0.records.back().bpp, r1.records.back().bpp);
  fs::remove_all(fresh_dir("mdc_test_g0"));
  fs::remove_all(fresh_dir("mdc_test_g1"));
}

}  // namespace
}  // namespace mdc::train
