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

// mdc: train, encode, decode, evaluate and channel-simulate the
// two-description codec.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mdc/bitstream.hpp"
#include "mdc/errors.hpp"
#include "mdc/harness.hpp"
#include "mdc/image.hpp"
#include "mdc/networks.hpp"
#include "mdc/training.hpp"

namespace {

using namespace mdc;

std::unique_ptr<nn::Model> load_model(const std::string& path) {
  return nn::read_model(nn::load_checkpoint(path));
}

int run_train(const std::string& config, const std::vector<std::string>& overrides,
              std::optional<int> steps, const std::string& out_dir, bool fresh, bool quiet) {
  train::TrainConfig cfg;
  if (!config.empty()) cfg.apply(train::read_config_file(config));
  std::map<std::string, std::string> kv;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + o);
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  cfg.apply(kv);
  if (steps) cfg.steps = *steps;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.validate();
  auto res = train::train_loop(cfg, !fresh, [&](const train::StepRecord& r) {
    if (!quiet && (r.step % 10 == 0 || r.step == 1)) {
      std::printf("step %5d  loss %.5f  ma %.5f  bpp %.4f\n", r.step, r.loss.total, r.moving_avg,
                  r.bpp);
      std::fflush(stdout);
    }
  });
  for (const auto& [step, s] : res.validations) {
    std::printf("val @%d  side ms-ssim %.4f  central ms-ssim %.4f  bpp %.4f\n", step, s.side_ms(),
                s.central_ms, s.bpp);
  }
  std::printf("checkpoint: %s\n", res.checkpoint_path.c_str());
  return 0;
}

int run_encode(const std::string& model_path, const std::string& in, const std::string& out_a,
               const std::string& out_b, bool raw) {
  auto model = load_model(model_path);
  const Tensor img = image::read_png(in);
  const auto pair = harness::encode_image(
      img, *model, raw ? bitstream::CodingMode::kRaw : bitstream::CodingMode::kArithmetic);
  bitstream::write_description(out_a, pair.a);
  bitstream::write_description(out_b, pair.b);
  std::printf("A: %zu bytes  B: %zu bytes  (%dx%d)\n", pair.a.total_bytes(), pair.b.total_bytes(),
              img.dim(2), img.dim(1));
  return 0;
}

int run_decode(const std::string& model_path, const std::string& a_path,
               const std::string& b_path, const std::string& out, const std::string& out_tensor,
               int height, int width) {
  if (out.empty() && out_tensor.empty()) throw ConfigError("decode needs --out or --out-tensor");
  auto model = load_model(model_path);
  std::optional<bitstream::EncodedDescription> a, b;
  if (!a_path.empty()) a = bitstream::read_description(a_path);
  if (!b_path.empty()) b = bitstream::read_description(b_path);
  const auto dec = harness::decode_any(a ? &*a : nullptr, b ? &*b : nullptr, *model, height, width);
  if (!out.empty()) image::write_png(out, dec.image);
  if (!out_tensor.empty()) {
    // Full-precision copy in the checkpoint container.
    nn::Checkpoint ck;
    ck.meta["decode.mode"] = harness::mode_name(dec.mode);
    ck.tensors.push_back({"image", dec.image});
    nn::save_checkpoint(ck, out_tensor);
  }
  std::printf("mode: %s\n", harness::mode_name(dec.mode));
  return 0;
}

int run_eval(const std::string& model_path, const std::string& dir, const std::string& csv,
             const std::string& plots, bool raw) {
  auto model = load_model(model_path);
  const auto res = harness::evaluate_dataset(
      dir, *model, raw ? bitstream::CodingMode::kRaw : bitstream::CodingMode::kArithmetic);
  harness::write_rd_csv(csv, res);
  if (!plots.empty()) {
    for (const auto& p : harness::plot_rd(csv, plots)) std::printf("plot: %s\n", p.c_str());
  }
  const auto& m = res.mean;
  std::printf("%zu images  bpp %.4f  side ms-ssim %.4f  central ms-ssim %.4f  "
              "side mr-ssim %.4f  central mr-ssim %.4f\n",
              res.images.size(), m.bpp, m.side_ms_ssim, m.central_ms_ssim, m.side_mr_ssim,
              m.central_mr_ssim);
  return 0;
}

int run_simulate(const std::string& model_path, const std::string& img_path,
                 harness::ChannelConfig ch) {
  auto model = load_model(model_path);
  const auto rep = harness::simulate_channel(image::read_png(img_path), *model, ch);
  std::printf("trials %lld  p_loss_a %.4f  p_loss_b %.4f\n", static_cast<long long>(rep.trials),
              ch.p_loss_a, ch.p_loss_b);
  std::printf("%-8s %10s %10s %10s %10s %10s\n", "mode", "count", "freq", "expected", "mr-ssim",
              "ms-ssim");
  for (int i = 0; i < 4; ++i) {
    const auto& m = rep.modes[i];
    std::printf("%-8s %10lld %10.5f %10.5f %10.5f %10.5f\n",
                harness::mode_name(static_cast<harness::DecodeMode>(i)),
                static_cast<long long>(m.count), m.frequency, m.expected_frequency, rep.mr[i],
                rep.ms[i]);
  }
  std::printf("mean mr-ssim %.6f +- %.6f (closed form %.6f)\n", rep.mean_mr.mean, rep.mean_mr.se,
              rep.mean_mr.expected);
  std::printf("mean ms-ssim %.6f +- %.6f (closed form %.6f)\n", rep.mean_ms.mean, rep.mean_ms.se,
              rep.mean_ms.expected);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned two-description image codec"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model");
  std::string config, out_dir;
  std::vector<std::string> overrides;
  std::optional<int> steps;
  bool fresh = false, quiet = false;
  train->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
  train->add_option("--set", overrides, "Override a configuration key (key=value)");
  train->add_option("--steps", steps, "Total optimization steps");
  train->add_option("--out-dir", out_dir, "Run directory for logs and checkpoints");
  train->add_flag("--fresh", fresh, "Ignore an existing checkpoint in the run directory");
  train->add_flag("--quiet", quiet, "Suppress per-step progress");

  auto* encode = app.add_subcommand("encode", "Encode a PNG into two descriptions");
  std::string model, in, out_a, out_b;
  bool raw = false;
  encode->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  encode->add_option("--in", in, "Input PNG")->required()->check(CLI::ExistingFile);
  encode->add_option("--out-a", out_a, "Description A output")->required();
  encode->add_option("--out-b", out_b, "Description B output")->required();
  encode->add_flag("--raw", raw, "Fixed-width packing instead of arithmetic coding");

  auto* decode = app.add_subcommand("decode", "Decode any received descriptions");
  std::string a_path, b_path, out, out_tensor;
  int height = 0, width = 0;
  decode->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  decode->add_option("--a", a_path, "Description A")->check(CLI::ExistingFile);
  decode->add_option("--b", b_path, "Description B")->check(CLI::ExistingFile);
  decode->add_option("--out", out, "Output PNG");
  decode->add_option("--out-tensor", out_tensor,
                     "Float64 reconstruction in the checkpoint container");
  decode->add_option("--height", height, "Fallback height when nothing was received");
  decode->add_option("--width", width, "Fallback width when nothing was received");

  auto* eval = app.add_subcommand("eval", "Rate/quality evaluation over a directory");
  std::string dir, csv, plots;
  eval->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--dir", dir, "Directory of PNG images")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--csv", csv, "Output CSV")->required();
  eval->add_option("--plots", plots, "Directory for SVG plots");
  eval->add_flag("--raw", raw, "Fixed-width packing instead of arithmetic coding");

  auto* simulate = app.add_subcommand("simulate", "Erasure-channel Monte Carlo");
  std::string img;
  harness::ChannelConfig ch;
  std::optional<double> p, pa, pb;
  simulate->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  simulate->add_option("--img", img, "Input PNG")->required()->check(CLI::ExistingFile);
  simulate->add_option("--p", p, "Loss probability for both descriptions")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--pa", pa, "Loss probability of description A")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--pb", pb, "Loss probability of description B")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--trials", ch.trials, "Number of trials")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", ch.seed, "Random seed");

  auto* synth = app.add_subcommand("synth", "Write synthetic texture PNGs");
  int count = 100, size = 64;
  uint64_t seed = 7;
  synth->add_option("--out", dir, "Output directory")->required();
  synth->add_option("--count", count, "Number of images")->check(CLI::PositiveNumber);
  synth->add_option("--size", size, "Side length in pixels")->check(CLI::Range(8, 4096));
  synth->add_option("--seed", seed, "Random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(config, overrides, steps, out_dir, fresh, quiet);
    if (*encode) return run_encode(model, in, out_a, out_b, raw);
    if (*decode) return run_decode(model, a_path, b_path, out, out_tensor, height, width);
    if (*eval) return run_eval(model, dir, csv, plots, raw);
    if (*simulate) {
      if (p) ch.p_loss_a = ch.p_loss_b = *p;
      if (pa) ch.p_loss_a = *pa;
      if (pb) ch.p_loss_b = *pb;
      return run_simulate(model, img, ch);
    }
    if (*synth) {
      image::write_synthetic_dataset(dir, count, size, size, seed);
      std::printf("wrote %d textures to %s\n", count, dir.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "mdc: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
