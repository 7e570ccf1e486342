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

#ifndef MDC_TRAINING_HPP_
#define MDC_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mdc/metrics.hpp"
#include "mdc/networks.hpp"

namespace mdc::train {

struct TrainConfig {
  int crop_size = 64;
  int batch_size = 8;
  double lr = 4e-3;
  double alpha = 0.1;
  double beta = 2e-4;
  double gamma = 0.1;
  int steps = 500;
  uint64_t seed = 1;
  double sigma = 1.0;
  int K = 8;
  int L = 8;
  metrics::StructuralVariant loss_variant = metrics::StructuralVariant::kMr;

  // Network widths (toy scale by default).
  int base_channels = 16;
  int resconv_per_block = 16;
  int entropy_channels = 24;

  // Data-dependent init: on a fresh start the z head is rescaled so the
  // features have this standard deviation on one batch (0 = off).
  double feature_init_std = 0.5;

  // Optional step decay: lr *= lr_decay every lr_decay_every steps (0 = off).
  int lr_decay_every = 0;
  double lr_decay = 0.5;

  int ma_window = 100;
  int val_every = 100;    // 0 disables periodic validation
  int ckpt_every = 100;   // 0 keeps only the final checkpoint

  // Data sources. A directory wins over the synthetic generator.
  std::string train_dir;
  std::string val_dir;
  std::string out_dir = "mdc_run";
  int synthetic_train = 100;
  int synthetic_val = 20;
  int synthetic_size = 64;
  uint64_t synthetic_seed = 7;

  void validate() const;
  metrics::LossWeights loss_weights() const { return {alpha, beta, gamma}; }
  nn::ModelConfig model_config() const;

  // Flat key/value view used by config files and checkpoint metadata.
  std::map<std::string, std::string> to_map() const;
  // Throws ConfigError on unknown keys or unparsable values.
  void apply(const std::map<std::string, std::string>& kv);
};

// Parses `key = value` lines; '#' starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::string& path);

class Dataset {
 public:
  Dataset() = default;
  // Loads every PNG under `dir`; unreadable files are skipped with a
  // warning on stderr. Images are rescaled up front so the shorter side is
  // at least `min_side`.
  static Dataset from_dir(const std::string& dir, int min_side);
  static Dataset from_images(std::vector<Tensor> images, int min_side);
  static Dataset synthetic(int count, int size, uint64_t seed);

  size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }
  const Tensor& operator[](size_t i) const { return images_[i]; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<Tensor> images_;
  std::vector<std::string> names_;
};

// Random crops of crop_size x crop_size. Throws ConfigError on an empty
// dataset.
std::vector<Tensor> sample_batch(const Dataset& data, int crop_size, int batch_size,
                                 std::mt19937_64& rng);

class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(const nn::ParamList& params);
  // Applies one update from the accumulated gradients and clears them.
  void step(const nn::ParamList& params, double lr);

  int64_t t() const { return t_; }
  void save(nn::Checkpoint& ckpt, const nn::ParamList& params) const;
  void load(const nn::Checkpoint& ckpt, const nn::ParamList& params);

 private:
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  metrics::LossBreakdown loss;  // batch means
  double bpp = 0.0;             // rate_a + rate_b
  double moving_avg = 0.0;
};

// One optimization step on `batch`. Throws Divergence (with the per-term
// breakdown in the message) when the loss is not finite.
metrics::LossBreakdown train_step(nn::Model& model, Adam& opt, const std::vector<Tensor>& batch,
                                  const TrainConfig& cfg, double lr);

// Loss of one image with the training objective, gradients optional.
metrics::Objective sample_objective(const nn::Model& model, const Tensor& img,
                                    const TrainConfig& cfg, quant::QuantMode mode);

struct ValidationStats {
  int images = 0;
  double side_a_ms = 0, side_b_ms = 0, central_ms = 0;
  double side_a_mr = 0, side_b_mr = 0, central_mr = 0;
  double side_distance_mr = 0;  // f_MR(Ya, Yb)
  double bpp = 0;               // estimated from the context models

  double side_ms() const { return 0.5 * (side_a_ms + side_b_ms); }
  double side_mr() const { return 0.5 * (side_a_mr + side_b_mr); }
};

ValidationStats validate_model(const nn::Model& model, const Dataset& images);

// Rescales the z head so that z over `images` has standard deviation
// `target_std`. Returns the measured pre-scaling deviation.
double calibrate_feature_scale(nn::Model& model, const std::vector<Tensor>& images,
                               double target_std);

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, Dataset train, Dataset val);
  static std::unique_ptr<Trainer> resume(const nn::Checkpoint& ckpt, Dataset train, Dataset val);

  StepRecord step();
  double current_lr() const;
  int steps_done() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& mutable_config() { return cfg_; }
  const nn::Model& model() const { return *model_; }
  nn::Model& mutable_model() { return *model_; }
  const Dataset& train_set() const { return train_; }
  const Dataset& val_set() const { return val_; }
  const std::vector<double>& loss_history() const { return history_; }
  // Mean of the last ma_window totals up to and including `step` (1-based).
  double moving_average(int step) const;

  nn::Checkpoint checkpoint() const;

 private:
  Trainer(const TrainConfig& cfg, Dataset train, Dataset val, std::unique_ptr<nn::Model> model);

  TrainConfig cfg_;
  Dataset train_, val_;
  std::unique_ptr<nn::Model> model_;
  Adam opt_;
  std::mt19937_64 rng_;
  int step_ = 0;
  std::vector<double> history_;
};

struct LoopResult {
  std::string checkpoint_path;
  std::vector<StepRecord> records;
  std::vector<std::pair<int, ValidationStats>> validations;
};

// Runs (or resumes, when out_dir holds a checkpoint and `resume` is set)
// training to cfg.steps, writing train_log.csv, val_log.csv and
// latest.mdck into cfg.out_dir.
LoopResult train_loop(const TrainConfig& cfg, bool resume = true,
                      const std::function<void(const StepRecord&)>& on_step = {});

// Loads datasets named by the config, generating synthetic ones if needed.
Dataset load_train_set(const TrainConfig& cfg);
Dataset load_val_set(const TrainConfig& cfg);

inline constexpr const char* kTrainLogHeader =
    "step,lr,total,d_l1,d_mr,d_distance,d_reg,rate_a,rate_b,bpp,moving_avg";
inline constexpr const char* kValLogHeader =
    "step,side_a_ms_ssim,side_b_ms_ssim,central_ms_ssim,side_a_mr_ssim,side_b_mr_ssim,"
    "central_mr_ssim,side_distance_mr,bpp_estimate";

}  // namespace mdc::train

#endif  // MDC_TRAINING_HPP_
