// Copyright 2026 The alrnet Authors.
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

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alrnet/nnet.hpp"

namespace alr {

double mse_loss(std::span<const double> pred, std::span<const double> target);

struct AdamWState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t t = 0;
  std::map<std::string, Tensor> m, v;
};

/// One decoupled-weight-decay Adam update of every non-frozen parameter.
/// Throws NumericError on a non-finite gradient.
void adamw_step(ParamSet& params, const Gradients& grads, AdamWState& state);

struct LrSchedule {
  double eta_max = 1e-3;
  double eta_min = 0.0;
  std::size_t t0 = 10;
  std::size_t t_mult = 2;
};

/// Cosine annealing with warm restarts, evaluated at a whole epoch.
double lr_at(const LrSchedule& s, std::size_t epoch);

struct AugmentParams {
  double flip_p = 0.5;
  double max_rotation_deg = 15.0;
};

/// Mirrors columns.
ViewStack flip_horizontal(const ViewStack& s);
/// Rotates every channel by `deg` about the image center, bilinear with zero
/// fill. A pixel at offset (x, y) from the center (x along columns, y along
/// rows) moves to (x cos t - y sin t, x sin t + y cos t). deg == 0 returns
/// the input unchanged.
ViewStack rotate(const ViewStack& s, double deg);
/// Random flip then random rotation, drawn from `rng` in that order.
ViewStack augment(const ViewStack& s, Rng& rng, const AugmentParams& p = {});
/// Number of augment() calls made by this process.
std::uint64_t augment_call_count() noexcept;

struct TargetScaler {
  double mu = 0.0;
  double sigma = 1.0;
  double apply(double x) const noexcept { return (x - mu) / sigma; }
  double invert(double z) const noexcept { return z * sigma + mu; }
};

/// Mean and population standard deviation. Throws DegenerateError when
/// fewer than two values are given or all values are equal.
TargetScaler fit_scaler(std::span<const double> values);

struct TrainConfig {
  double lr = 6.685e-5;
  double weight_decay = 2.953e-4;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;       // 0 disables early stopping
  std::size_t batch_size = 0;      // 0 means full batch
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentParams augment_params;
  std::size_t t0 = 10;
  std::size_t t_mult = 2;
  double eta_min = 0.0;
  /// Ridge strength of the linear-probe head initialization; 0 disables it.
  double probe_ridge = 1e-3;
  bool freeze_embed = true;
  ModelConfig model;

  void validate() const;
  LrSchedule schedule() const { return {lr, eta_min, t0, t_mult}; }
};

nlohmann::ordered_json to_json(const TrainConfig& c);
/// Missing members keep their defaults. Throws ConfigError on bad values.
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);
/// FNV-1a of the canonical JSON text of the config.
std::uint64_t config_hash(const TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double lr = 0.0;
};

/// CSV `epoch,train_mse,val_mse,lr`.
std::string curve_csv(const std::vector<EpochRecord>& curve);

struct Stage1Data {
  std::vector<ViewStack> train_x, val_x;
  std::vector<double> train_y, val_y;  // normalized targets
};

struct TrainResult {
  ParamSet params;           // best-validation parameters
  std::vector<EpochRecord> curve;  // epoch 0 is the state before any update
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  std::uint64_t augment_calls = 0;
};

/// Trains one view's extractor and regression head.
TrainResult train_stage1(const Stage1Data& data, const TrainConfig& cfg);

enum class HeadMode { Concat, Gated };
std::string_view head_mode_name(HeadMode m) noexcept;
HeadMode parse_head_mode(std::string_view s);

using ViewFeatures = std::array<Feature, 3>;  // coronal, sagittal, axial

struct Stage2Data {
  std::vector<ViewFeatures> train_x, val_x;
  std::vector<double> train_y, val_y;
};

/// Trains only the Stage-2 head on frozen per-view features.
TrainResult train_stage2(const Stage2Data& data, HeadMode mode, const TrainConfig& cfg);

/// Normalized prediction of a Stage-2 head. `weights` receives the attention
/// weights in gated mode.
double stage2_predict(const ViewFeatures& x, HeadMode mode, const ParamSet& head,
                      std::array<double, 3>* weights = nullptr);

/// Ridge solution with an unpenalized intercept in the last column of the
/// returned vector: minimizes |X w + c - y|^2 / n + ridge |w|^2.
Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge);

struct SearchSpace {
  double lr_lo = 1e-6, lr_hi = 1e-3;
  double wd_lo = 1e-6, wd_hi = 1e-2;
};

struct Trial {
  std::size_t index = 0;
  double lr = 0.0;
  double weight_decay = 0.0;
  bool ok = false;
  double val_mse = 0.0;
  std::string error;
};

/// Log-uniform draw of (lr, weight_decay) for trial `index`.
Trial sample_trial(const SearchSpace& space, std::uint64_t seed, std::size_t index);

/// Runs `n_iters` trials through `objective` (returns validation MSE).
/// Completed trials come first, sorted by validation MSE; failed trials
/// follow in index order.
std::vector<Trial> random_search(const SearchSpace& space, std::size_t n_iters, std::uint64_t seed,
                                 const std::function<double(const Trial&)>& objective);

}  // namespace alr
