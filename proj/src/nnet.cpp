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

#include "alrnet/nnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "alrnet/error.hpp"
#include "csvutil.hpp"
#include "fmtutil.hpp"

namespace alr {

namespace {

constexpr double kLnEps = 1e-5;

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string block_name(std::size_t b, const char* leaf) { return "block" + std::to_string(b) + "." + leaf; }

double sigmoid(double u) noexcept {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* stage) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite value in ") + stage);
}

// y = x W^T + 1 b^T
RowMat affine_rows(const RowMat& x, const Tensor& w, const Tensor& b) {
  RowMat y = x * w.mat().transpose();
  y.rowwise() += b.vec().transpose();
  return y;
}

void layer_norm(const RowMat& h, const Tensor& g, const Tensor& b, RowMat& xhat, Eigen::VectorXd& rstd, RowMat& out) {
  const auto d = static_cast<double>(h.cols());
  const Eigen::VectorXd mu = h.rowwise().sum() / d;
  xhat = h.colwise() - mu;
  rstd = ((xhat.array().square().rowwise().sum() / d) + kLnEps).rsqrt();
  xhat = rstd.asDiagonal() * xhat;
  out = xhat * g.vec().asDiagonal();
  out.rowwise() += b.vec().transpose();
}

RowMat layer_norm_back(const RowMat& dxhat, const RowMat& xhat, const Eigen::VectorXd& rstd) {
  const auto d = static_cast<double>(xhat.cols());
  const Eigen::VectorXd m1 = dxhat.rowwise().sum() / d;
  const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / d;
  RowMat dx = dxhat.colwise() - m1;
  dx -= m2.asDiagonal() * xhat;
  return rstd.asDiagonal() * dx;
}

void accumulate(Gradients& grads, const std::string& name, const Eigen::Ref<const RowMat>& g) {
  if (Tensor* t = grads.find(name)) t->mat() += g;
}

void accumulate_vec(Gradients& grads, const std::string& name, const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (Tensor* t = grads.find(name)) t->vec() += g;
}

Tensor xavier(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out) {
  const double bound = xavier_bound(fan_in, fan_out);
  Tensor t({rows, cols});
  for (auto& v : t.values) v = rng.uniform(-bound, bound);
  return t;
}

void check_shape(const ParamSet& p, const std::string& name, const std::vector<std::size_t>& shape) {
  const Tensor& t = p.at(name);
  if (t.shape != shape) throw ConfigError("parameter " + name + " has an unexpected shape");
}

}  // namespace

// --- Tensor / ParamSet / Gradients ----------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape_, double fill) : shape(std::move(shape_)), values(product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
  if (values.size() != product(shape)) throw ConfigError("tensor value count does not match its shape");
}

void ParamSet::add(const std::string& name, Tensor t, bool frozen) {
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  if (t.values.size() != product(t.shape)) throw ConfigError("parameter " + name + " value count does not match shape");
  for (double v : t.values)
    if (!std::isfinite(v)) throw NumericError("parameter " + name + " has a non-finite value");
  index_[name] = names_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  frozen_.push_back(frozen);
}

Tensor& ParamSet::at(const std::string& name) {
  auto* t = find(name);
  if (!t) throw MissingError("parameter " + name + " not found");
  return *t;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto* t = find(name);
  if (!t) throw MissingError("parameter " + name + " not found");
  return *t;
}

Tensor* ParamSet::find(const std::string& name) noexcept {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

const Tensor* ParamSet::find(const std::string& name) const noexcept {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

bool ParamSet::frozen(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw MissingError("parameter " + name + " not found");
  return frozen_[it->second];
}

void ParamSet::set_frozen(const std::string& name, bool frozen) {
  auto it = index_.find(name);
  if (it == index_.end()) throw MissingError("parameter " + name + " not found");
  frozen_[it->second] = frozen;
}

void ParamSet::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i].rfind(prefix, 0) == 0) frozen_[i] = frozen;
}

std::size_t ParamSet::value_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamSet::merge(const ParamSet& other) {
  for (std::size_t i = 0; i < other.names_.size(); ++i) add(other.names_[i], other.tensors_[i], other.frozen_[i]);
}

Gradients Gradients::zeros_like(const ParamSet& params) {
  Gradients g;
  for (const auto& name : params.names()) {
    if (params.frozen(name)) continue;
    g.index_[name] = g.names_.size();
    g.names_.push_back(name);
    g.tensors_.emplace_back(params.at(name).shape, 0.0);
  }
  return g;
}

Tensor* Gradients::find(const std::string& name) noexcept {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

const Tensor* Gradients::find(const std::string& name) const noexcept {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

const Tensor& Gradients::at(const std::string& name) const {
  auto* t = find(name);
  if (!t) throw MissingError("no gradient for " + name);
  return *t;
}

void Gradients::add_scaled(const Gradients& other, double s) {
  for (std::size_t i = 0; i < other.names_.size(); ++i) {
    Tensor* t = find(other.names_[i]);
    if (!t) throw ConfigError("gradient " + other.names_[i] + " has no counterpart");
    t->vec() += s * other.tensors_[i].vec();
  }
}

void Gradients::scale(double s) {
  for (auto& t : tensors_) t.vec() *= s;
}

void Gradients::set_zero() {
  for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), 0.0);
}

bool Gradients::all_finite() const noexcept {
  for (const auto& t : tensors_)
    if (!t.vec().allFinite()) return false;
  return true;
}

// --- config -------------------------------------------------------------------

void ModelConfig::validate() const {
  if (patch == 0) throw ConfigError("patch size must be positive");
  if (image_h == 0 || image_w == 0 || image_h % patch != 0 || image_w % patch != 0)
    throw ConfigError("image size must be a positive multiple of the patch size");
  if (dim == 0) throw ConfigError("feature dimension must be positive");
  if (blocks == 0) throw ConfigError("extractor needs at least one block");
  if (attn_hidden == 0) throw ConfigError("attention hidden size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["image_h"] = c.image_h;
  j["image_w"] = c.image_w;
  j["patch"] = c.patch;
  j["dim"] = c.dim;
  j["blocks"] = c.blocks;
  j["attn_hidden"] = c.attn_hidden;
  j["dropout"] = c.dropout;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  try {
    if (j.contains("image_h")) c.image_h = j.at("image_h").get<std::size_t>();
    if (j.contains("image_w")) c.image_w = j.at("image_w").get<std::size_t>();
    if (j.contains("patch")) c.patch = j.at("patch").get<std::size_t>();
    if (j.contains("dim")) c.dim = j.at("dim").get<std::size_t>();
    if (j.contains("blocks")) c.blocks = j.at("blocks").get<std::size_t>();
    if (j.contains("attn_hidden")) c.attn_hidden = j.at("attn_hidden").get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- init ---------------------------------------------------------------------

double xavier_bound(std::size_t fan_in, std::size_t fan_out) noexcept {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

ParamSet init_extractor(std::uint64_t seed, const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(seed, {0x657874}));
  const std::size_t d = cfg.dim, in = cfg.patch_len();
  ParamSet p;
  p.add("embed.W", xavier(rng, d, in, in, d));
  p.add("embed.b", Tensor({d}));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    p.add(block_name(b, "ln1.g"), Tensor({d}, 1.0));
    p.add(block_name(b, "ln1.b"), Tensor({d}));
    for (const char* m : {"q", "k", "v"}) {
      p.add(block_name(b, ("attn.W" + std::string(m)).c_str()), xavier(rng, d, d, d, d));
      p.add(block_name(b, ("attn.b" + std::string(m)).c_str()), Tensor({d}));
    }
    p.add(block_name(b, "ln2.g"), Tensor({d}, 1.0));
    p.add(block_name(b, "ln2.b"), Tensor({d}));
    p.add(block_name(b, "ff.W1"), xavier(rng, d, d, d, d));
    p.add(block_name(b, "ff.b1"), Tensor({d}));
    p.add(block_name(b, "ff.W2"), xavier(rng, d, d, d, d));
    p.add(block_name(b, "ff.b2"), Tensor({d}));
  }
  return p;
}

ParamSet init_stage1_head(std::uint64_t seed, const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(seed, {0x6831}));
  ParamSet p;
  p.add("head.w", xavier(rng, 1, cfg.dim, cfg.dim, 1));
  p.add("head.b", Tensor({1}));
  return p;
}

ParamSet init_gated_head(std::uint64_t seed, const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(seed, {0x6761}));
  const std::size_t d = cfg.dim, l = cfg.attn_hidden;
  ParamSet p;
  p.add("gate.V", xavier(rng, l, d, d, l));
  p.add("gate.U", xavier(rng, l, d, d, l));
  Tensor w = xavier(rng, l, 1, l, 1);
  w.shape = {l};
  p.add("gate.w", std::move(w));
  p.add("gate.W", xavier(rng, 1, d, d, 1));
  return p;
}

ParamSet init_concat_head(std::uint64_t seed, const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t in = 3 * cfg.dim;
  if (in % 16 != 0) throw ConfigError("concatenation head needs 3*dim divisible by 16");
  Rng rng(derive_seed(seed, {0x6363}));
  ParamSet p;
  std::size_t width = in;
  for (std::size_t i = 0; i < kConcatLayers; ++i) {
    const std::size_t out = i + 1 < kConcatLayers ? width / 2 : 1;
    p.add("concat.W" + std::to_string(i), xavier(rng, out, width, width, out));
    p.add("concat.b" + std::to_string(i), Tensor({out}));
    width = out;
  }
  return p;
}

// --- extractor ----------------------------------------------------------------

RowMat patchify(const ViewStack& stack, const ModelConfig& cfg) {
  if (stack.height != cfg.image_h || stack.width != cfg.image_w)
    throw ConfigError("view stack is " + std::to_string(stack.height) + "x" + std::to_string(stack.width) +
                      ", model expects " + std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w));
  const std::size_t p = cfg.patch, gw = cfg.image_w / p;
  RowMat x(static_cast<Eigen::Index>(cfg.tokens()), static_cast<Eigen::Index>(cfg.patch_len()));
  for (std::size_t t = 0; t < cfg.tokens(); ++t) {
    const std::size_t r0 = (t / gw) * p, c0 = (t % gw) * p;
    std::size_t k = 0;
    for (std::size_t c = 0; c < ViewStack::kChannels; ++c)
      for (std::size_t py = 0; py < p; ++py)
        for (std::size_t px = 0; px < p; ++px)
          x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k++)) = stack.at(c, r0 + py, c0 + px);
  }
  return x;
}

Feature extract_features(const ViewStack& stack, const ParamSet& params, const ModelConfig& cfg, ExtractorTape* tape) {
  cfg.validate();
  check_shape(params, "embed.W", {cfg.dim, cfg.patch_len()});
  RowMat x = patchify(stack, cfg);
  RowMat h = affine_rows(x, params.at("embed.W"), params.at("embed.b"));
  if (tape) {
    tape->recorded = false;
    tape->patches = std::move(x);
    tape->blocks.assign(cfg.blocks, {});
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    RowMat xhat1, a, xhat2, c;
    Eigen::VectorXd rstd1, rstd2;
    layer_norm(h, params.at(block_name(b, "ln1.g")), params.at(block_name(b, "ln1.b")), xhat1, rstd1, a);
    RowMat q = affine_rows(a, params.at(block_name(b, "attn.Wq")), params.at(block_name(b, "attn.bq")));
    RowMat k = affine_rows(a, params.at(block_name(b, "attn.Wk")), params.at(block_name(b, "attn.bk")));
    RowMat v = affine_rows(a, params.at(block_name(b, "attn.Wv")), params.at(block_name(b, "attn.bv")));
    RowMat s = (q * k.transpose()) * inv_sqrt_d;
    const Eigen::VectorXd smax = s.rowwise().maxCoeff();
    RowMat p = (s.colwise() - smax).array().exp();
    const Eigen::VectorXd denom = p.rowwise().sum();
    p = denom.cwiseInverse().asDiagonal() * p;
    RowMat h_mid = h + p * v;
    layer_norm(h_mid, params.at(block_name(b, "ln2.g")), params.at(block_name(b, "ln2.b")), xhat2, rstd2, c);
    RowMat u = affine_rows(c, params.at(block_name(b, "ff.W1")), params.at(block_name(b, "ff.b1")));
    RowMat g = u.unaryExpr([](double z) { return gelu(z); });
    RowMat h_out = h_mid + affine_rows(g, params.at(block_name(b, "ff.W2")), params.at(block_name(b, "ff.b2")));
    require_finite(h_out, "extractor block");
    if (tape) {
      auto& tb = tape->blocks[b];
      tb.h_in = std::move(h);
      tb.xhat1 = std::move(xhat1);
      tb.rstd1 = std::move(rstd1);
      tb.q = std::move(q);
      tb.k = std::move(k);
      tb.v = std::move(v);
      tb.p = std::move(p);
      tb.h_mid = std::move(h_mid);
      tb.xhat2 = std::move(xhat2);
      tb.rstd2 = std::move(rstd2);
      tb.u = std::move(u);
      tb.g = std::move(g);
    }
    h = std::move(h_out);
  }
  Feature f = h.colwise().mean().transpose();
  if (tape) tape->recorded = true;
  return f;
}

void extractor_backward(const Feature& dfeat, const ParamSet& params, const ModelConfig& cfg, const ExtractorTape& tape,
                        Gradients& grads) {
  if (!tape.recorded) throw UsageError("extractor backward called without a recorded forward pass");
  const auto tokens = static_cast<Eigen::Index>(cfg.tokens());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  RowMat dh = Eigen::VectorXd::Ones(tokens) * (dfeat.transpose() / static_cast<double>(tokens));

  for (std::size_t bi = cfg.blocks; bi-- > 0;) {
    const auto& tb = tape.blocks[bi];
    const Tensor& g2 = params.at(block_name(bi, "ln2.g"));
    const Tensor& b2 = params.at(block_name(bi, "ln2.b"));
    const Tensor& w1 = params.at(block_name(bi, "ff.W1"));
    const Tensor& w2 = params.at(block_name(bi, "ff.W2"));

    // Feed-forward branch.
    accumulate(grads, block_name(bi, "ff.W2"), dh.transpose() * tb.g);
    accumulate_vec(grads, block_name(bi, "ff.b2"), dh.colwise().sum().transpose());
    RowMat du = (dh * w2.mat()).cwiseProduct(tb.u.unaryExpr([](double z) { return gelu_grad(z); }));
    RowMat c = tb.xhat2 * g2.vec().asDiagonal();
    c.rowwise() += b2.vec().transpose();
    accumulate(grads, block_name(bi, "ff.W1"), du.transpose() * c);
    accumulate_vec(grads, block_name(bi, "ff.b1"), du.colwise().sum().transpose());
    RowMat dc = du * w1.mat();
    accumulate_vec(grads, block_name(bi, "ln2.g"), dc.cwiseProduct(tb.xhat2).colwise().sum().transpose());
    accumulate_vec(grads, block_name(bi, "ln2.b"), dc.colwise().sum().transpose());
    RowMat dh_mid = dh + layer_norm_back(dc * g2.vec().asDiagonal(), tb.xhat2, tb.rstd2);

    // Attention branch.
    const Tensor& g1 = params.at(block_name(bi, "ln1.g"));
    const Tensor& b1 = params.at(block_name(bi, "ln1.b"));
    RowMat dp = dh_mid * tb.v.transpose();
    RowMat dv = tb.p.transpose() * dh_mid;
    const Eigen::VectorXd rs = dp.cwiseProduct(tb.p).rowwise().sum();
    RowMat ds = tb.p.cwiseProduct(dp.colwise() - rs) * inv_sqrt_d;
    RowMat dq = ds * tb.k;
    RowMat dk = ds.transpose() * tb.q;
    RowMat a = tb.xhat1 * g1.vec().asDiagonal();
    a.rowwise() += b1.vec().transpose();
    RowMat da = RowMat::Zero(a.rows(), a.cols());
    const std::array<std::pair<const char*, const RowMat*>, 3> parts{
        {{"q", &dq}, {"k", &dk}, {"v", &dv}}};
    for (const auto& [m, dm] : parts) {
      const std::string wn = block_name(bi, ("attn.W" + std::string(m)).c_str());
      accumulate(grads, wn, dm->transpose() * a);
      accumulate_vec(grads, block_name(bi, ("attn.b" + std::string(m)).c_str()), dm->colwise().sum().transpose());
      da += *dm * params.at(wn).mat();
    }
    accumulate_vec(grads, block_name(bi, "ln1.g"), da.cwiseProduct(tb.xhat1).colwise().sum().transpose());
    accumulate_vec(grads, block_name(bi, "ln1.b"), da.colwise().sum().transpose());
    dh = dh_mid + layer_norm_back(da * g1.vec().asDiagonal(), tb.xhat1, tb.rstd1);
  }
  if (Tensor* t = grads.find("embed.W")) t->mat() += dh.transpose() * tape.patches;
  accumulate_vec(grads, "embed.b", dh.colwise().sum().transpose());
}

// --- heads --------------------------------------------------------------------

double gelu(double u) noexcept {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * u * (1.0 + std::tanh(k * (u + 0.044715 * u * u * u)));
}

double gelu_grad(double u) noexcept {
  constexpr double k = 0.7978845608028654;
  const double t = std::tanh(k * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * u * u);
}

double stage1_forward(const Feature& x, const ParamSet& head) {
  const Tensor& w = head.at("head.w");
  const Tensor& b = head.at("head.b");
  if (w.size() != static_cast<std::size_t>(x.size()) || b.size() != 1)
    throw ConfigError("stage-1 head does not match feature size " + std::to_string(x.size()));
  return w.vec().dot(x) + b.values[0];
}

void stage1_backward(double dout, const Feature& x, const ParamSet& head, Gradients& grads, Feature* dx) {
  accumulate_vec(grads, "head.w", dout * x);
  if (Tensor* t = grads.find("head.b")) t->values[0] += dout;
  if (dx) *dx = dout * head.at("head.w").vec();
}

AttentionOutput gated_attention_forward(const Feature& x1, const Feature& x2, const Feature& x3, const ParamSet& head,
                                        GatedTape* tape) {
  const Tensor& v = head.at("gate.V");
  const Tensor& u = head.at("gate.U");
  const Tensor& w = head.at("gate.w");
  const Tensor& wo = head.at("gate.W");
  const auto d = static_cast<std::size_t>(x1.size());
  if (x2.size() != x1.size() || x3.size() != x1.size()) throw ConfigError("view features differ in size");
  if (v.cols() != d || u.shape != v.shape || w.size() != v.rows() || wo.size() != d)
    throw ConfigError("gated head does not match feature size " + std::to_string(d));

  const std::array<const Feature*, 3> xs{&x1, &x2, &x3};
  std::array<double, 3> logits{};
  GatedTape local;
  GatedTape& tp = tape ? *tape : local;
  tp.recorded = false;
  for (int k = 0; k < 3; ++k) {
    tp.x[k] = *xs[k];
    tp.t[k] = (v.mat() * *xs[k]).array().tanh();
    tp.s[k] = (u.mat() * *xs[k]).unaryExpr([](double z) { return sigmoid(z); });
    logits[k] = w.vec().dot(tp.t[k].cwiseProduct(tp.s[k]));
  }
  for (double l : logits)
    if (!std::isfinite(l)) throw NumericError("non-finite attention logit");
  const double mx = std::max({logits[0], logits[1], logits[2]});
  std::array<double, 3> e{};
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) sum += (e[k] = std::exp(logits[k] - mx));
  AttentionOutput out;
  for (int k = 0; k < 3; ++k) out.weights[k] = e[k] / sum;
  out.pooled = out.weights[0] * x1 + out.weights[1] * x2 + out.weights[2] * x3;
  out.alr_norm = wo.vec().dot(out.pooled);
  if (!std::isfinite(out.alr_norm)) throw NumericError("non-finite gated output");
  tp.a = out.weights;
  tp.z = out.pooled;
  tp.recorded = true;
  return out;
}

void gated_attention_backward(double dout, const ParamSet& head, const GatedTape& tape, Gradients& grads) {
  if (!tape.recorded) throw UsageError("gated backward called without a recorded forward pass");
  const Tensor& w = head.at("gate.w");
  const Tensor& wo = head.at("gate.W");
  accumulate_vec(grads, "gate.W", dout * tape.z);
  const Eigen::VectorXd dz = dout * wo.vec();
  std::array<double, 3> da{};
  double mean = 0.0;
  for (int k = 0; k < 3; ++k) {
    da[k] = dz.dot(tape.x[k]);
    mean += tape.a[k] * da[k];
  }
  Tensor* gv = grads.find("gate.V");
  Tensor* gu = grads.find("gate.U");
  Tensor* gw = grads.find("gate.w");
  for (int k = 0; k < 3; ++k) {
    const double dl = tape.a[k] * (da[k] - mean);
    const Eigen::VectorXd gate = tape.t[k].cwiseProduct(tape.s[k]);
    if (gw) gw->vec() += dl * gate;
    const Eigen::VectorXd dg = dl * w.vec();
    if (gv) {
      const Eigen::VectorXd dhv = dg.cwiseProduct(tape.s[k]).cwiseProduct((1.0 - tape.t[k].array().square()).matrix());
      gv->mat() += dhv * tape.x[k].transpose();
    }
    if (gu) {
      const Eigen::VectorXd dhu =
          dg.cwiseProduct(tape.t[k]).cwiseProduct((tape.s[k].array() * (1.0 - tape.s[k].array())).matrix());
      gu->mat() += dhu * tape.x[k].transpose();
    }
  }
}

double concat_forward(const Feature& x1, const Feature& x2, const Feature& x3, const ParamSet& head, ConcatTape* tape,
                      double dropout, Rng* dropout_rng) {
  const Eigen::Index d = x1.size();
  if (x2.size() != d || x3.size() != d) throw ConfigError("view features differ in size");
  if ((3 * d) % 16 != 0) throw ConfigError("concatenation head needs 3*dim divisible by 16");
  Eigen::VectorXd h(3 * d);
  h << x1, x2, x3;
  if (tape) {
    tape->recorded = false;
    tape->inputs.clear();
    tape->pre.clear();
    tape->masks.clear();
  }
  const bool drop = dropout > 0.0 && dropout_rng != nullptr;
  for (std::size_t i = 0; i < kConcatLayers; ++i) {
    const Tensor& w = head.at("concat.W" + std::to_string(i));
    const Tensor& b = head.at("concat.b" + std::to_string(i));
    if (w.cols() != static_cast<std::size_t>(h.size()) || b.size() != w.rows())
      throw ConfigError("concatenation layer " + std::to_string(i) + " has an unexpected shape");
    if (tape) tape->inputs.push_back(h);
    Eigen::VectorXd y = w.mat() * h + b.vec();
    if (i + 1 == kConcatLayers) {
      if (y.size() != 1) throw ConfigError("concatenation head must end in one output");
      if (!std::isfinite(y[0])) throw NumericError("non-finite concatenation output");
      if (tape) tape->recorded = true;
      return y[0];
    }
    Eigen::VectorXd mask = Eigen::VectorXd::Ones(y.size());
    if (drop)
      for (Eigen::Index j = 0; j < y.size(); ++j) mask[j] = dropout_rng->bernoulli(dropout) ? 0.0 : 1.0 / (1.0 - dropout);
    h = y.unaryExpr([](double z) { return gelu(z); }).cwiseProduct(mask);
    if (tape) {
      tape->pre.push_back(std::move(y));
      tape->masks.push_back(std::move(mask));
    }
  }
  return 0.0;  // unreachable
}

void concat_backward(double dout, const ParamSet& head, const ConcatTape& tape, Gradients& grads) {
  if (!tape.recorded) throw UsageError("concatenation backward called without a recorded forward pass");
  Eigen::VectorXd dy = Eigen::VectorXd::Constant(1, dout);
  for (std::size_t i = kConcatLayers; i-- > 0;) {
    const std::string wn = "concat.W" + std::to_string(i);
    if (Tensor* t = grads.find(wn)) t->mat() += dy * tape.inputs[i].transpose();
    accumulate_vec(grads, "concat.b" + std::to_string(i), dy);
    if (i == 0) break;
    const Eigen::VectorXd dh = head.at(wn).mat().transpose() * dy;
    dy = dh.cwiseProduct(tape.masks[i - 1])
             .cwiseProduct(tape.pre[i - 1].unaryExpr([](double z) { return gelu_grad(z); }));
  }
}

// --- checkpoints --------------------------------------------------------------

std::string checkpoint_text(const Checkpoint& ckpt) {
  std::ostringstream os;
  os << "{\n\"format\": \"alrnet-checkpoint\",\n\"version\": 1,\n";
  os << "\"kind\": " << nlohmann::json(ckpt.kind).dump() << ",\n";
  os << "\"meta\": " << ckpt.meta.dump() << ",\n";
  os << "\"params\": [";
  const auto& names = ckpt.params.names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Tensor& t = ckpt.params.at(names[i]);
    os << (i ? ",\n" : "\n") << "{\"name\": " << nlohmann::json(names[i]).dump() << ", \"shape\": [";
    for (std::size_t k = 0; k < t.shape.size(); ++k) os << (k ? "," : "") << t.shape[k];
    os << "], \"frozen\": " << (ckpt.params.frozen(names[i]) ? "true" : "false") << ", \"values\": [";
    for (std::size_t k = 0; k < t.values.size(); ++k) os << (k ? "," : "") << fmt_g17(t.values[k]);
    os << "]}";
  }
  os << "\n]\n}\n";
  return os.str();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_text(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingError("checkpoint not found: " + path.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint", path.string() + ": " + e.what());
  }
  Checkpoint c;
  try {
    if (j.at("format") != "alrnet-checkpoint") throw FormatError("format", path.string() + ": not a checkpoint");
    c.kind = j.at("kind").get<std::string>();
    c.meta = j.at("meta");
    for (const auto& p : j.at("params")) {
      std::vector<std::size_t> shape = p.at("shape").get<std::vector<std::size_t>>();
      std::vector<double> values = p.at("values").get<std::vector<double>>();
      const auto name = p.at("name").get<std::string>();
      if (values.size() != product(shape)) throw FormatError("values", "parameter " + name + " size mismatch");
      c.params.add(name, Tensor(std::move(shape), std::move(values)), p.at("frozen").get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint", path.string() + ": " + e.what());
  }
  return c;
}

std::uint64_t param_hash(const ParamSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& name : params.names()) {
    mix(name.data(), name.size());
    const Tensor& t = params.at(name);
    for (auto d : t.shape) mix(&d, sizeof d);
    mix(t.values.data(), t.values.size() * sizeof(double));
  }
  return h;
}

}  // namespace alr
