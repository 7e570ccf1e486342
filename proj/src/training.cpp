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

#include "mdc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mdc/errors.hpp"
#include "mdc/image.hpp"
#include "mdc/simd/kernels.hpp"

namespace mdc::train {
namespace fs = std::filesystem;
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) {
    throw ConfigError("cannot parse value '" + text + "' for key " + key);
  }
  return v;
}

constexpr uint64_t kSamplerSalt = 0x9e3779b97f4a7c15ull;

}  // namespace

// ---- configuration -----------------------------------------------------

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(crop_size >= 16 && crop_size % 8 == 0, "crop_size must be a multiple of 8 and >= 16");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(std::isfinite(lr) && lr >= 0.0, "lr must be finite and non-negative");
  metrics::LossWeights{alpha, beta, gamma}.validate();
  need(steps >= 0, "steps must be non-negative");
  need(std::isfinite(feature_init_std) && feature_init_std >= 0.0,
       "feature_init_std must be finite and non-negative");
  need(sigma > 0.0, "sigma must be positive");
  need(K >= 1, "K must be >= 1");
  need(L >= 2, "L must be >= 2");
  need(lr_decay_every >= 0, "lr_decay_every must be non-negative");
  need(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must be in (0, 1]");
  need(ma_window >= 1, "ma_window must be >= 1");
  need(val_every >= 0 && ckpt_every >= 0, "intervals must be non-negative");
  need(synthetic_train >= 0 && synthetic_val >= 0, "synthetic counts must be non-negative");
  need(synthetic_size >= crop_size || !train_dir.empty() || synthetic_train == 0,
       "synthetic_size must be at least crop_size");
  model_config().validate();
}

nn::ModelConfig TrainConfig::model_config() const {
  nn::ModelConfig m;
  m.encoder.base_channels = base_channels;
  m.encoder.feature_channels = K;
  m.decoder.resconv_per_block = resconv_per_block;
  m.entropy.channels = entropy_channels;
  m.levels = L;
  m.sigma = sigma;
  m.seed = seed;
  return m;
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"crop_size", std::to_string(crop_size)},
      {"batch_size", std::to_string(batch_size)},
      {"lr", fmt(lr)},
      {"alpha", fmt(alpha)},
      {"beta", fmt(beta)},
      {"gamma", fmt(gamma)},
      {"steps", std::to_string(steps)},
      {"seed", std::to_string(seed)},
      {"sigma", fmt(sigma)},
      {"K", std::to_string(K)},
      {"L", std::to_string(L)},
      {"loss_variant", loss_variant == metrics::StructuralVariant::kMr ? "mr" : "ms"},
      {"base_channels", std::to_string(base_channels)},
      {"resconv_per_block", std::to_string(resconv_per_block)},
      {"entropy_channels", std::to_string(entropy_channels)},
      {"feature_init_std", fmt(feature_init_std)},
      {"lr_decay_every", std::to_string(lr_decay_every)},
      {"lr_decay", fmt(lr_decay)},
      {"ma_window", std::to_string(ma_window)},
      {"val_every", std::to_string(val_every)},
      {"ckpt_every", std::to_string(ckpt_every)},
      {"train_dir", train_dir},
      {"val_dir", val_dir},
      {"out_dir", out_dir},
      {"synthetic_train", std::to_string(synthetic_train)},
      {"synthetic_val", std::to_string(synthetic_val)},
      {"synthetic_size", std::to_string(synthetic_size)},
      {"synthetic_seed", std::to_string(synthetic_seed)},
  };
}

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    auto as_int = [&] { return parse_number<int>(key, value); };
    auto as_double = [&] { return parse_number<double>(key, value); };
    auto as_u64 = [&] { return parse_number<uint64_t>(key, value); };
    if (key == "crop_size") crop_size = as_int();
    else if (key == "batch_size") batch_size = as_int();
    else if (key == "lr") lr = as_double();
    else if (key == "alpha") alpha = as_double();
    else if (key == "beta") beta = as_double();
    else if (key == "gamma") gamma = as_double();
    else if (key == "steps") steps = as_int();
    else if (key == "seed") seed = as_u64();
    else if (key == "sigma") sigma = as_double();
    else if (key == "K") K = as_int();
    else if (key == "L") L = as_int();
    else if (key == "loss_variant") {
      if (value == "mr") loss_variant = metrics::StructuralVariant::kMr;
      else if (value == "ms") loss_variant = metrics::StructuralVariant::kMs;
      else throw ConfigError("loss_variant must be 'mr' or 'ms'");
    }
    else if (key == "base_channels") base_channels = as_int();
    else if (key == "resconv_per_block") resconv_per_block = as_int();
    else if (key == "entropy_channels") entropy_channels = as_int();
    else if (key == "feature_init_std") feature_init_std = as_double();
    else if (key == "lr_decay_every") lr_decay_every = as_int();
    else if (key == "lr_decay") lr_decay = as_double();
    else if (key == "ma_window") ma_window = as_int();
    else if (key == "val_every") val_every = as_int();
    else if (key == "ckpt_every") ckpt_every = as_int();
    else if (key == "train_dir") train_dir = value;
    else if (key == "val_dir") val_dir = value;
    else if (key == "out_dir") out_dir = value;
    else if (key == "synthetic_train") synthetic_train = as_int();
    else if (key == "synthetic_val") synthetic_val = as_int();
    else if (key == "synthetic_size") synthetic_size = as_int();
    else if (key == "synthetic_seed") synthetic_seed = as_u64();
    else throw ConfigError("unknown configuration key: " + key);
  }
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + " lacks '='");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + " has no key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

// ---- data --------------------------------------------------------------

Dataset Dataset::from_images(std::vector<Tensor> images, int min_side) {
  Dataset d;
  for (size_t i = 0; i < images.size(); ++i) {
    d.images_.push_back(image::ensure_min_side(images[i], min_side));
    d.names_.push_back("image_" + std::to_string(i));
  }
  return d;
}

Dataset Dataset::from_dir(const std::string& dir, int min_side) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Dataset d;
  for (const auto& f : files) {
    try {
      d.images_.push_back(image::ensure_min_side(image::read_png(f.string()), min_side));
      d.names_.push_back(f.filename().string());
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
    }
  }
  if (d.empty()) throw ConfigError("no readable PNG images in " + dir);
  return d;
}

Dataset Dataset::synthetic(int count, int size, uint64_t seed) {
  Dataset d;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    d.images_.push_back(image::synthetic_texture(size, size, rng));
    char name[32];
    std::snprintf(name, sizeof(name), "tex_%04d", i);
    d.names_.emplace_back(name);
  }
  return d;
}

std::vector<Tensor> sample_batch(const Dataset& data, int crop_size, int batch_size,
                                 std::mt19937_64& rng) {
  if (data.empty()) throw ConfigError("cannot sample from an empty dataset");
  std::vector<Tensor> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const Tensor& img = data[std::uniform_int_distribution<size_t>(0, data.size() - 1)(rng)];
    const Tensor& src = std::min(img.dim(1), img.dim(2)) < crop_size
                            ? image::ensure_min_side(img, crop_size)
                            : img;
    const int top = std::uniform_int_distribution<int>(0, src.dim(1) - crop_size)(rng);
    const int left = std::uniform_int_distribution<int>(0, src.dim(2) - crop_size)(rng);
    batch.push_back(image::crop(src, top, left, crop_size, crop_size));
  }
  return batch;
}

// ---- optimizer ---------------------------------------------------------

Adam::Adam(const nn::ParamList& params) {
  for (const auto& p : params) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step(const nn::ParamList& params, double lr) {
  if (params.size() != m_.size()) throw std::logic_error("optimizer/parameter count mismatch");
  ++t_;
  simd::AdamCoeffs c;
  c.lr = lr;
  c.beta1 = kBeta1;
  c.beta2 = kBeta2;
  c.eps = kEps;
  c.bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  c.bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Var v = params[i].var;
    Tensor& g = v.grad_buffer();
    simd::adam_update(g.size(), v.mutable_value().data(), g.data(), m_[i].data(), v_[i].data(),
                      c);
    v.zero_grad();
  }
}

void Adam::save(nn::Checkpoint& ckpt, const nn::ParamList& params) const {
  ckpt.meta["train.adam_t"] = std::to_string(t_);
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.push_back({"adam_m/" + params[i].name, m_[i]});
    ckpt.tensors.push_back({"adam_v/" + params[i].name, v_[i]});
  }
}

void Adam::load(const nn::Checkpoint& ckpt, const nn::ParamList& params) {
  auto it = ckpt.meta.find("train.adam_t");
  if (it == ckpt.meta.end()) throw CorruptData("checkpoint lacks optimizer state");
  t_ = std::stoll(it->second);
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor* m = ckpt.find("adam_m/" + params[i].name);
    const Tensor* v = ckpt.find("adam_v/" + params[i].name);
    if (!m || !v || m->shape() != params[i].var.shape() || v->shape() != params[i].var.shape()) {
      throw CorruptData("missing or malformed optimizer moments for " + params[i].name);
    }
    m_[i] = *m;
    v_[i] = *v;
  }
}

// ---- objective ---------------------------------------------------------

metrics::Objective sample_objective(const nn::Model& model, const Tensor& img,
                                    const TrainConfig& cfg, quant::QuantMode mode) {
  Var x(img);
  nn::PipelineOutput out = nn::forward_pipeline(model, x, mode, true);
  const double inv_pixels = 1.0 / (static_cast<double>(img.dim(1)) * img.dim(2));
  return metrics::total_loss(x, out.ya, out.yb, out.y, mul_scalar(out.bits_a, inv_pixels),
                             mul_scalar(out.bits_b, inv_pixels), Var(), cfg.loss_weights(),
                             metrics::weights_for(cfg.loss_variant));
}

metrics::LossBreakdown train_step(nn::Model& model, Adam& opt, const std::vector<Tensor>& batch,
                                  const TrainConfig& cfg, double lr) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  metrics::LossBreakdown mean;
  for (const Tensor& img : batch) {
    metrics::Objective obj = sample_objective(model, img, cfg, quant::QuantMode::kHard);
    const auto& p = obj.parts;
    if (!std::isfinite(p.total)) {
      std::ostringstream msg;
      msg << "non-finite loss: total=" << p.total << " d_l1=" << p.d_l1 << " d_mr=" << p.d_mr
          << " d_distance=" << p.d_distance << " rate_a=" << p.rate_a << " rate_b=" << p.rate_b;
      throw Divergence(msg.str());
    }
    backward(obj.total, inv_b);
    mean.d_l1 += p.d_l1 * inv_b;
    mean.d_mr += p.d_mr * inv_b;
    mean.d_distance += p.d_distance * inv_b;
    mean.rate_a += p.rate_a * inv_b;
    mean.rate_b += p.rate_b * inv_b;
    mean.total += p.total * inv_b;
  }
  // The regularizer does not depend on the batch, so it is added once.
  Var reg = model.regularizer();
  if (reg.defined()) {
    mean.d_reg = reg.item();
    if (cfg.beta != 0.0) backward(reg, cfg.beta);
  }
  mean.total += cfg.beta * mean.d_reg;
  if (!std::isfinite(mean.total)) throw Divergence("non-finite regularizer");
  opt.step(model.params(), lr);
  return mean;
}

ValidationStats validate_model(const nn::Model& model, const Dataset& images) {
  NoGradGuard no_grad;
  ValidationStats s;
  for (size_t i = 0; i < images.size(); ++i) {
    const Tensor& img = images[i];
    const int h = img.dim(1), w = img.dim(2);
    Tensor padded = image::reflect_pad(img, image::round_up(h, nn::kDownsample),
                                       image::round_up(w, nn::kDownsample));
    nn::PipelineOutput out = nn::forward_pipeline(model, Var(padded), quant::QuantMode::kHard);
    const Tensor ya = image::crop(out.ya.value(), 0, 0, h, w);
    const Tensor yb = image::crop(out.yb.value(), 0, 0, h, w);
    const Tensor y = image::crop(out.y.value(), 0, 0, h, w);
    s.side_a_ms += metrics::ms_ssim(img, ya);
    s.side_b_ms += metrics::ms_ssim(img, yb);
    s.central_ms += metrics::ms_ssim(img, y);
    s.side_a_mr += metrics::mr_ssim(img, ya);
    s.side_b_mr += metrics::mr_ssim(img, yb);
    s.central_mr += metrics::mr_ssim(img, y);
    s.side_distance_mr += metrics::mr_ssim(ya, yb);
    s.bpp += (out.bits_a.item() + out.bits_b.item()) / (static_cast<double>(h) * w);
    ++s.images;
  }
  if (s.images > 0) {
    const double inv = 1.0 / s.images;
    for (double* f : {&s.side_a_ms, &s.side_b_ms, &s.central_ms, &s.side_a_mr, &s.side_b_mr,
                      &s.central_mr, &s.side_distance_mr, &s.bpp}) {
      *f *= inv;
    }
  }
  return s;
}

// ---- trainer -----------------------------------------------------------

double calibrate_feature_scale(nn::Model& model, const std::vector<Tensor>& images,
                               double target_std) {
  if (images.empty()) throw ConfigError("feature calibration needs at least one image");
  double sum = 0.0, sq = 0.0;
  size_t n = 0;
  {
    NoGradGuard no_grad;
    for (const auto& img : images) {
      const Tensor z = model.encoder()(Var(img)).z.value();
      for (double v : z.values()) {
        sum += v;
        sq += v * v;
      }
      n += z.size();
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
  if (!(sd > 1e-12) || !std::isfinite(sd)) return sd;
  const double gain = target_std / sd;
  for (const char* suffix : {".w", ".b"}) {
    Var p = model.find(std::string("encoder.head_z") + suffix);
    for (double& v : p.mutable_value().values()) v *= gain;
  }
  return sd;
}

Trainer::Trainer(const TrainConfig& cfg, Dataset train, Dataset val)
    : Trainer(cfg, std::move(train), std::move(val),
              std::make_unique<nn::Model>((cfg.validate(), cfg.model_config()))) {
  if (cfg_.feature_init_std > 0.0) {
    // A private stream keeps the sampler sequence independent of this step.
    std::mt19937_64 rng(cfg_.seed);
    calibrate_feature_scale(*model_, sample_batch(train_, cfg_.crop_size, cfg_.batch_size, rng),
                            cfg_.feature_init_std);
  }
}

Trainer::Trainer(const TrainConfig& cfg, Dataset train, Dataset val,
                 std::unique_ptr<nn::Model> model)
    : cfg_(cfg),
      train_(std::move(train)),
      val_(std::move(val)),
      model_(std::move(model)),
      opt_(model_->params()),
      rng_(cfg.seed ^ kSamplerSalt) {
  if (train_.empty()) throw ConfigError("training set is empty");
}

std::unique_ptr<Trainer> Trainer::resume(const nn::Checkpoint& ckpt, Dataset train, Dataset val) {
  TrainConfig cfg;
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.rfind("train.", 0) != 0) continue;
    const std::string key = k.substr(6);
    if (key == "step" || key == "rng" || key == "adam_t") continue;
    kv[key] = v;
  }
  cfg.apply(kv);
  cfg.validate();
  auto model = nn::read_model(ckpt);
  std::unique_ptr<Trainer> t(
      new Trainer(cfg, std::move(train), std::move(val), std::move(model)));
  t->opt_.load(ckpt, t->model_->params());
  auto step = ckpt.meta.find("train.step");
  auto rng = ckpt.meta.find("train.rng");
  if (step == ckpt.meta.end() || rng == ckpt.meta.end()) {
    throw CorruptData("checkpoint lacks training state");
  }
  t->step_ = std::stoi(step->second);
  std::istringstream rs(rng->second);
  rs >> t->rng_;
  if (rs.fail()) throw CorruptData("malformed sampler state in checkpoint");
  const Tensor* hist = ckpt.find("train/loss_history");
  if (!hist || hist->size() != static_cast<size_t>(t->step_)) {
    throw CorruptData("checkpoint loss history does not match its step count");
  }
  t->history_.assign(hist->values().begin(), hist->values().end());
  return t;
}

double Trainer::current_lr() const {
  if (cfg_.lr_decay_every <= 0) return cfg_.lr;
  return cfg_.lr * std::pow(cfg_.lr_decay, step_ / cfg_.lr_decay_every);
}

StepRecord Trainer::step() {
  StepRecord rec;
  rec.lr = current_lr();
  std::vector<Tensor> batch = sample_batch(train_, cfg_.crop_size, cfg_.batch_size, rng_);
  try {
    rec.loss = train_step(*model_, opt_, batch, cfg_, rec.lr);
  } catch (const Divergence& e) {
    throw Divergence("step " + std::to_string(step_ + 1) + ": " + e.what());
  }
  ++step_;
  history_.push_back(rec.loss.total);
  rec.step = step_;
  rec.bpp = rec.loss.rate_a + rec.loss.rate_b;
  rec.moving_avg = moving_average(step_);
  return rec;
}

double Trainer::moving_average(int step) const {
  if (step < 1 || step > static_cast<int>(history_.size())) {
    throw std::out_of_range("moving average requested outside the recorded history");
  }
  const int begin = std::max(0, step - cfg_.ma_window);
  double s = 0.0;
  for (int i = begin; i < step; ++i) s += history_[i];
  return s / (step - begin);
}

nn::Checkpoint Trainer::checkpoint() const {
  nn::Checkpoint ck;
  nn::write_model(*model_, ck);
  for (const auto& [k, v] : cfg_.to_map()) {
    if (v.find('\n') == std::string::npos) ck.meta["train." + k] = v;
  }
  ck.meta["train.step"] = std::to_string(step_);
  std::ostringstream rs;
  rs << rng_;
  ck.meta["train.rng"] = rs.str();
  opt_.save(ck, model_->params());
  ck.tensors.push_back({"train/loss_history",
                        Tensor({static_cast<int>(history_.size())}, history_)});
  return ck;
}

// ---- loop --------------------------------------------------------------

Dataset load_train_set(const TrainConfig& cfg) {
  if (!cfg.train_dir.empty()) return Dataset::from_dir(cfg.train_dir, cfg.crop_size);
  if (cfg.synthetic_train < 1) throw ConfigError("no training data configured");
  return Dataset::synthetic(cfg.synthetic_train, cfg.synthetic_size, cfg.synthetic_seed);
}

Dataset load_val_set(const TrainConfig& cfg) {
  if (!cfg.val_dir.empty()) return Dataset::from_dir(cfg.val_dir, 16);
  if (cfg.synthetic_val < 1) return {};
  // A different stream from the training textures keeps the sets disjoint.
  return Dataset::synthetic(cfg.synthetic_val, cfg.synthetic_size, cfg.synthetic_seed + 1);
}

namespace {

// Keeps the header and rows whose leading step is <= `max_step`.
void truncate_log(const fs::path& path, const char* header, int max_step) {
  std::vector<std::string> keep{header};
  if (std::ifstream in(path); in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoi(line.substr(0, line.find(','))) <= max_step) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << "\n";
}

std::string val_row(int step, const ValidationStats& s) {
  std::ostringstream o;
  o << step;
  for (double v : {s.side_a_ms, s.side_b_ms, s.central_ms, s.side_a_mr, s.side_b_mr,
                   s.central_mr, s.side_distance_mr, s.bpp}) {
    o << "," << fmt(v);
  }
  return o.str();
}

}  // namespace

LoopResult train_loop(const TrainConfig& cfg, bool resume,
                      const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  const fs::path ckpt_path = fs::path(cfg.out_dir) / "latest.mdck";
  const fs::path train_log = fs::path(cfg.out_dir) / "train_log.csv";
  const fs::path val_log = fs::path(cfg.out_dir) / "val_log.csv";

  std::unique_ptr<Trainer> trainer;
  if (resume && fs::exists(ckpt_path)) {
    trainer = Trainer::resume(nn::load_checkpoint(ckpt_path.string()), load_train_set(cfg),
                              load_val_set(cfg));
    trainer->mutable_config().steps = cfg.steps;
  } else {
    trainer = std::make_unique<Trainer>(cfg, load_train_set(cfg), load_val_set(cfg));
  }
  truncate_log(train_log, kTrainLogHeader, trainer->steps_done());
  truncate_log(val_log, kValLogHeader, trainer->steps_done());
  std::ofstream tlog(train_log, std::ios::app);
  std::ofstream vlog(val_log, std::ios::app);

  LoopResult result;
  const TrainConfig& tc = trainer->config();
  auto save = [&] { nn::save_checkpoint(trainer->checkpoint(), ckpt_path.string()); };
  while (trainer->steps_done() < tc.steps) {
    StepRecord r = trainer->step();
    const auto& l = r.loss;
    tlog << r.step << "," << fmt(r.lr) << "," << fmt(l.total) << "," << fmt(l.d_l1) << ","
         << fmt(l.d_mr) << "," << fmt(l.d_distance) << "," << fmt(l.d_reg) << ","
         << fmt(l.rate_a) << "," << fmt(l.rate_b) << "," << fmt(r.bpp) << ","
         << fmt(r.moving_avg) << "\n";
    tlog.flush();
    result.records.push_back(r);
    if (on_step) on_step(r);
    if (tc.val_every > 0 && r.step % tc.val_every == 0 && !trainer->val_set().empty()) {
      ValidationStats s = validate_model(trainer->model(), trainer->val_set());
      vlog << val_row(r.step, s) << "\n";
      vlog.flush();
      result.validations.emplace_back(r.step, s);
    }
    if (tc.ckpt_every > 0 && r.step % tc.ckpt_every == 0) save();
  }
  save();
  result.checkpoint_path = ckpt_path.string();
  return result;
}

}  // namespace mdc::train
