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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "alrnet/rng.hpp"
#include "alrnet/volgrid.hpp"

namespace alr {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Feature = Eigen::VectorXd;

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_);

  std::size_t size() const noexcept { return values.size(); }
  std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const noexcept { return shape.size() < 2 ? 1 : shape[1]; }

  Eigen::Map<RowMat> mat() { return {values.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())}; }
  Eigen::Map<const RowMat> mat() const {
    return {values.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
  }
  Eigen::Map<Eigen::VectorXd> vec() { return {values.data(), static_cast<Eigen::Index>(values.size())}; }
  Eigen::Map<const Eigen::VectorXd> vec() const { return {values.data(), static_cast<Eigen::Index>(values.size())}; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Named parameter tensors in insertion order, each with a frozen flag.
class ParamSet {
 public:
  void add(const std::string& name, Tensor t, bool frozen = false);
  bool contains(const std::string& name) const noexcept { return index_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  /// nullptr when absent.
  Tensor* find(const std::string& name) noexcept;
  const Tensor* find(const std::string& name) const noexcept;

  bool frozen(const std::string& name) const;
  void set_frozen(const std::string& name, bool frozen);
  /// Sets the flag on every parameter whose name starts with `prefix`.
  void set_frozen_prefix(const std::string& prefix, bool frozen);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::size_t value_count() const noexcept;

  /// Copies every parameter of `other` into this set (names must be new).
  void merge(const ParamSet& other);

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::vector<bool> frozen_;
  std::map<std::string, std::size_t> index_;
};

/// Gradient tensors keyed like the ParamSet they were produced against;
/// frozen parameters have no entry.
class Gradients {
 public:
  Gradients() = default;
  static Gradients zeros_like(const ParamSet& params);

  Tensor* find(const std::string& name) noexcept;
  const Tensor* find(const std::string& name) const noexcept;
  const std::vector<std::string>& names() const noexcept { return names_; }
  const Tensor& at(const std::string& name) const;

  void add_scaled(const Gradients& other, double s);
  void scale(double s);
  void set_zero();
  bool all_finite() const noexcept;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

struct ModelConfig {
  std::size_t image_h = 64;
  std::size_t image_w = 64;
  std::size_t patch = 8;
  std::size_t dim = 64;       // D
  std::size_t blocks = 2;
  std::size_t attn_hidden = 32;  // L
  double dropout = 0.0;       // concat head, training only

  std::size_t tokens() const noexcept { return (image_h / patch) * (image_w / patch); }
  std::size_t patch_len() const noexcept { return ViewStack::kChannels * patch * patch; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

// --- initialization ---------------------------------------------------------
//
// Weights are Xavier-uniform, biases 0, layer-norm gains 1.

ParamSet init_extractor(std::uint64_t seed, const ModelConfig& cfg);
ParamSet init_stage1_head(std::uint64_t seed, const ModelConfig& cfg);
ParamSet init_gated_head(std::uint64_t seed, const ModelConfig& cfg);
ParamSet init_concat_head(std::uint64_t seed, const ModelConfig& cfg);

/// Xavier-uniform bound sqrt(6 / (fan_in + fan_out)).
double xavier_bound(std::size_t fan_in, std::size_t fan_out) noexcept;

// --- feature extractor ------------------------------------------------------

/// Patch vectors of `stack`, one row per token (row-major over the patch
/// grid), entries ordered (channel, patch row, patch column).
RowMat patchify(const ViewStack& stack, const ModelConfig& cfg);

struct ExtractorTape {
  bool recorded = false;
  RowMat patches;
  struct Block {
    RowMat h_in, xhat1, q, k, v, p, h_mid, xhat2, u, g;
    Eigen::VectorXd rstd1, rstd2;
  };
  std::vector<Block> blocks;
};

/// Patch embedding, `cfg.blocks` pre-norm transformer blocks, mean over
/// tokens. Fills `tape` when given.
Feature extract_features(const ViewStack& stack, const ParamSet& params, const ModelConfig& cfg,
                         ExtractorTape* tape = nullptr);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(feature).
void extractor_backward(const Feature& dfeat, const ParamSet& params, const ModelConfig& cfg,
                        const ExtractorTape& tape, Gradients& grads);

// --- heads ------------------------------------------------------------------

double stage1_forward(const Feature& x, const ParamSet& head);
/// Also returns d(out)/dx through `dx` when non-null.
void stage1_backward(double dout, const Feature& x, const ParamSet& head, Gradients& grads,
                     Feature* dx = nullptr);

struct AttentionOutput {
  double alr_norm = 0.0;
  std::array<double, 3> weights{};
  Eigen::VectorXd pooled;
};

struct GatedTape {
  bool recorded = false;
  std::array<Eigen::VectorXd, 3> x, t, s;  // tanh(V x), sigmoid(U x)
  std::array<double, 3> a{};
  Eigen::VectorXd z;
};

AttentionOutput gated_attention_forward(const Feature& x1, const Feature& x2, const Feature& x3,
                                        const ParamSet& head, GatedTape* tape = nullptr);
void gated_attention_backward(double dout, const ParamSet& head, const GatedTape& tape, Gradients& grads);

struct ConcatTape {
  bool recorded = false;
  std::vector<Eigen::VectorXd> inputs;  // input to each layer
  std::vector<Eigen::VectorXd> pre;     // pre-activation of interior layers
  std::vector<Eigen::VectorXd> masks;   // dropout scale per interior unit
};

inline constexpr std::size_t kConcatLayers = 5;

/// `dropout_rng` enables inverted dropout on interior activations.
double concat_forward(const Feature& x1, const Feature& x2, const Feature& x3, const ParamSet& head,
                      ConcatTape* tape = nullptr, double dropout = 0.0, Rng* dropout_rng = nullptr);
void concat_backward(double dout, const ParamSet& head, const ConcatTape& tape, Gradients& grads);

double gelu(double u) noexcept;
double gelu_grad(double u) noexcept;

// --- checkpoints --------------------------------------------------------------

struct Checkpoint {
  std::string kind;  // "stage1" or "stage2"
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  ParamSet params;
};

/// Text document; values carry 17 significant digits so load(save(p)) is
/// bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_text(const Checkpoint& ckpt);

/// FNV-1a over names, shapes and value bits.
std::uint64_t param_hash(const ParamSet& params);

}  // namespace alr
