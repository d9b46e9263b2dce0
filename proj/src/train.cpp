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

#include "alrnet/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "alrnet/error.hpp"
#include "alrnet/log.hpp"
#include "fmtutil.hpp"

namespace alr {

namespace {

std::atomic<std::uint64_t> g_augment_calls{0};

constexpr std::uint64_t kStreamShuffle = 1;
constexpr std::uint64_t kStreamAugment = 2;
constexpr std::uint64_t kStreamDropout = 3;

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> batches;
  if (batch_size == 0 || batch_size >= n) {
    batches.push_back(std::move(order));
    return batches;
  }
  Rng rng(derive_seed(seed, {kStreamShuffle, epoch}));
  rng.shuffle(order.begin(), order.end());
  for (std::size_t i = 0; i < n; i += batch_size) {
    std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(i),
                               order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    std::sort(b.begin(), b.end());  // reduction in sample-index order
    batches.push_back(std::move(b));
  }
  return batches;
}

void check_split(std::size_t nx, std::size_t ny, const char* name) {
  if (nx == 0) throw DegenerateError(std::string(name) + " split is empty");
  if (nx != ny) throw ConfigError(std::string(name) + " inputs and targets differ in length");
}

// Early-stopping bookkeeping shared by both stages.
class Tracker {
 public:
  explicit Tracker(std::size_t patience) : patience_(patience) {}

  /// Returns true when training should stop.
  bool update(std::size_t epoch, double val, const ParamSet& params, TrainResult& r) {
    if (epoch == 0 || val < r.best_val_mse) {
      r.best_val_mse = val;
      r.best_epoch = epoch;
      r.params = params;
      since_ = 0;
      return false;
    }
    ++since_;
    return patience_ > 0 && since_ >= patience_;
  }

 private:
  std::size_t patience_;
  std::size_t since_ = 0;
};

void log_epoch(const char* stage, const EpochRecord& e) {
  log_debug(std::string(stage) + " epoch " + std::to_string(e.epoch) + " train " + fmt_g(e.train_mse, 6) + " val " +
            fmt_g(e.val_mse, 6) + " lr " + fmt_g(e.lr, 4));
}

void require_finite_loss(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ConfigError("prediction and target lengths differ");
  if (pred.empty()) throw DegenerateError("mse of empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

void adamw_step(ParamSet& params, const Gradients& grads, AdamWState& st) {
  for (const auto& name : grads.names())
    if (!grads.at(name).vec().allFinite()) throw NumericError("non-finite gradient for " + name);
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (const auto& name : params.names()) {
    if (params.frozen(name)) continue;
    const Tensor* g = grads.find(name);
    if (!g) throw ConfigError("missing gradient for " + name);
    Tensor& p = params.at(name);
    auto [mit, _m] = st.m.try_emplace(name, p.shape, 0.0);
    auto [vit, _v] = st.v.try_emplace(name, p.shape, 0.0);
    auto m = mit->second.vec();
    auto v = vit->second.vec();
    m = st.beta1 * m + (1.0 - st.beta1) * g->vec();
    v = st.beta2 * v + (1.0 - st.beta2) * g->vec().cwiseAbs2();
    auto theta = p.vec();
    const Eigen::ArrayXd step = (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.eps) + st.weight_decay * theta.array();
    theta.array() -= st.lr * step;
  }
}

double lr_at(const LrSchedule& s, std::size_t epoch) {
  std::size_t period = std::max<std::size_t>(s.t0, 1);
  std::size_t cur = epoch;
  while (cur >= period) {
    cur -= period;
    period *= std::max<std::size_t>(s.t_mult, 1);
  }
  return s.eta_min +
         (s.eta_max - s.eta_min) * (1.0 + std::cos(M_PI * static_cast<double>(cur) / static_cast<double>(period))) / 2.0;
}

// --- augmentation -------------------------------------------------------------

ViewStack flip_horizontal(const ViewStack& s) {
  ViewStack out = s;
  for (std::size_t c = 0; c < ViewStack::kChannels; ++c)
    for (std::size_t r = 0; r < s.height; ++r)
      for (std::size_t col = 0; col < s.width; ++col) out.at(c, r, col) = s.at(c, r, s.width - 1 - col);
  return out;
}

ViewStack rotate(const ViewStack& s, double deg) {
  if (deg == 0.0) return s;
  ViewStack out = s;
  const double th = deg * M_PI / 180.0, ct = std::cos(th), st = std::sin(th);
  const double cx = (static_cast<double>(s.width) - 1.0) / 2.0, cy = (static_cast<double>(s.height) - 1.0) / 2.0;
  const auto w = static_cast<std::ptrdiff_t>(s.width), h = static_cast<std::ptrdiff_t>(s.height);
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t col = 0; col < s.width; ++col) {
      const double x = static_cast<double>(col) - cx, y = static_cast<double>(r) - cy;
      const double sx = x * ct + y * st + cx, sy = -x * st + y * ct + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
      for (std::size_t c = 0; c < ViewStack::kChannels; ++c) {
        auto px = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) {
          return (xx < 0 || yy < 0 || xx >= w || yy >= h)
                     ? 0.0
                     : s.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        };
        const double v = (1 - ay) * ((1 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) +
                         ay * ((1 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
        out.at(c, r, col) = std::clamp(v, 0.0, 1.0);
      }
    }
  return out;
}

ViewStack augment(const ViewStack& s, Rng& rng, const AugmentParams& p) {
  g_augment_calls.fetch_add(1, std::memory_order_relaxed);
  const bool flip = rng.bernoulli(p.flip_p);
  const double deg = rng.uniform(-p.max_rotation_deg, p.max_rotation_deg);
  return rotate(flip ? flip_horizontal(s) : s, deg);
}

std::uint64_t augment_call_count() noexcept { return g_augment_calls.load(std::memory_order_relaxed); }

TargetScaler fit_scaler(std::span<const double> values) {
  if (values.size() < 2) throw DegenerateError("target scaler needs at least two values");
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(values.size()));
  if (!(sigma > 0.0)) throw DegenerateError("training targets are constant");
  return {mu, sigma};
}

// --- config -------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be nonnegative");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (t0 == 0) throw ConfigError("t0 must be positive");
  if (t_mult == 0) throw ConfigError("t_mult must be at least 1");
  if (!(eta_min >= 0.0 && eta_min <= lr)) throw ConfigError("eta_min must lie in [0, lr]");
  if (!(augment_params.flip_p >= 0.0 && augment_params.flip_p <= 1.0)) throw ConfigError("flip_p must lie in [0,1]");
  if (!(augment_params.max_rotation_deg >= 0.0)) throw ConfigError("max_rotation_deg must be nonnegative");
  if (!(probe_ridge >= 0.0)) throw ConfigError("probe_ridge must be nonnegative");
  model.validate();
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["augment"] = c.augment;
  j["flip_p"] = c.augment_params.flip_p;
  j["max_rotation_deg"] = c.augment_params.max_rotation_deg;
  j["t0"] = c.t0;
  j["t_mult"] = c.t_mult;
  j["eta_min"] = c.eta_min;
  j["probe_ridge"] = c.probe_ridge;
  j["freeze_embed"] = c.freeze_embed;
  j["model"] = to_json(c.model);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  static const char* kKnown[] = {"lr", "weight_decay", "max_epochs", "patience", "batch_size",
                                 "seed", "augment", "flip_p", "max_rotation_deg", "t0",
                                 "t_mult", "eta_min", "probe_ridge", "freeze_embed", "model"};
  for (const auto& [key, _] : j.items())
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return key == k; }) == std::end(kKnown))
      throw ConfigError("unknown train config field '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("batch_size", c.batch_size);
    get("seed", c.seed);
    get("augment", c.augment);
    get("flip_p", c.augment_params.flip_p);
    get("max_rotation_deg", c.augment_params.max_rotation_deg);
    get("t0", c.t0);
    get("t_mult", c.t_mult);
    get("eta_min", c.eta_min);
    get("probe_ridge", c.probe_ridge);
    get("freeze_embed", c.freeze_embed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  c.validate();
  return c;
}

std::uint64_t config_hash(const TrainConfig& c) { return fnv1a(to_json(c).dump()); }

std::string curve_csv(const std::vector<EpochRecord>& curve) {
  std::ostringstream os;
  os << "epoch,train_mse,val_mse,lr\n";
  for (const auto& e : curve)
    os << e.epoch << ',' << fmt_g17(e.train_mse) << ',' << fmt_g17(e.val_mse) << ',' << fmt_g17(e.lr) << '\n';
  return os.str();
}

// --- ridge probe --------------------------------------------------------------

Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n == 0 || y.size() != n) throw ConfigError("ridge fit needs matching nonempty inputs");
  // Center so the intercept stays unpenalized.
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  Eigen::MatrixXd g = xc.transpose() * xc / static_cast<double>(n);
  g.diagonal().array() += ridge;
  const Eigen::VectorXd rhs = xc.transpose() * (y.array() - ym).matrix() / static_cast<double>(n);
  Eigen::VectorXd w = g.ldlt().solve(rhs);
  if (!w.allFinite()) throw NumericError("ridge probe produced non-finite weights");
  Eigen::VectorXd out(d + 1);
  out.head(d) = w;
  out[d] = ym - xm.dot(w);
  return out;
}

// --- stage 1 ------------------------------------------------------------------

TrainResult train_stage1(const Stage1Data& data, const TrainConfig& cfg) {
  cfg.validate();
  check_split(data.train_x.size(), data.train_y.size(), "training");
  check_split(data.val_x.size(), data.val_y.size(), "validation");
  const ModelConfig& mc = cfg.model;

  ParamSet params = init_extractor(cfg.seed, mc);
  params.merge(init_stage1_head(cfg.seed, mc));
  if (cfg.freeze_embed) params.set_frozen_prefix("embed.", true);

  auto features = [&](const std::vector<ViewStack>& xs) {
    Eigen::MatrixXd f(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(mc.dim));
    for (std::size_t i = 0; i < xs.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = extract_features(xs[i], params, mc);
    return f;
  };
  auto predict_all = [&](const std::vector<ViewStack>& xs) {
    const Eigen::MatrixXd f = features(xs);
    std::vector<double> p(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) p[i] = stage1_forward(f.row(static_cast<Eigen::Index>(i)).transpose(), params);
    return p;
  };

  if (cfg.probe_ridge > 0.0) {
    const Eigen::MatrixXd f = features(data.train_x);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.train_y.data(), static_cast<Eigen::Index>(data.train_y.size()));
    const Eigen::VectorXd w = ridge_fit(f, y, cfg.probe_ridge);
    params.at("head.w").vec() = w.head(static_cast<Eigen::Index>(mc.dim));
    params.at("head.b").values[0] = w[static_cast<Eigen::Index>(mc.dim)];
  }

  TrainResult r;
  Tracker tracker(cfg.patience);
  {
    EpochRecord e{0, mse_loss(predict_all(data.train_x), data.train_y), mse_loss(predict_all(data.val_x), data.val_y),
                  0.0};
    require_finite_loss(e.val_mse, 0);
    r.curve.push_back(e);
    tracker.update(0, e.val_mse, params, r);
  }

  AdamWState opt;
  opt.weight_decay = cfg.weight_decay;
  const std::uint64_t aug_before = augment_call_count();
  const std::size_t n = data.train_x.size();
  ExtractorTape tape;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    opt.lr = lr_at(cfg.schedule(), epoch - 1);
    double loss_sum = 0.0;
    for (const auto& batch : make_batches(n, cfg.batch_size, cfg.seed, epoch)) {
      Gradients grads = Gradients::zeros_like(params);
      for (std::size_t i : batch) {
        Feature f;
        if (cfg.augment) {
          Rng rng(derive_seed(cfg.seed, {kStreamAugment, epoch, i}));
          f = extract_features(augment(data.train_x[i], rng, cfg.augment_params), params, mc, &tape);
        } else {
          f = extract_features(data.train_x[i], params, mc, &tape);
        }
        const double resid = stage1_forward(f, params) - data.train_y[i];
        loss_sum += resid * resid;
        const double dout = 2.0 * resid / static_cast<double>(batch.size());
        Feature dfeat;
        stage1_backward(dout, f, params, grads, &dfeat);
        extractor_backward(dfeat, params, mc, tape, grads);
      }
      adamw_step(params, grads, opt);
    }
    EpochRecord e{epoch, loss_sum / static_cast<double>(n), mse_loss(predict_all(data.val_x), data.val_y), opt.lr};
    require_finite_loss(e.train_mse, epoch);
    require_finite_loss(e.val_mse, epoch);
    r.curve.push_back(e);
    log_epoch("stage1", e);
    if (tracker.update(epoch, e.val_mse, params, r)) break;
  }
  r.augment_calls = augment_call_count() - aug_before;
  return r;
}

// --- stage 2 ------------------------------------------------------------------

std::string_view head_mode_name(HeadMode m) noexcept { return m == HeadMode::Gated ? "gated" : "concat"; }

HeadMode parse_head_mode(std::string_view s) {
  if (s == "gated") return HeadMode::Gated;
  if (s == "concat") return HeadMode::Concat;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected concat or gated)");
}

double stage2_predict(const ViewFeatures& x, HeadMode mode, const ParamSet& head, std::array<double, 3>* weights) {
  if (mode == HeadMode::Gated) {
    const AttentionOutput o = gated_attention_forward(x[0], x[1], x[2], head);
    if (weights) *weights = o.weights;
    return o.alr_norm;
  }
  if (weights) weights->fill(std::nan(""));
  return concat_forward(x[0], x[1], x[2], head);
}

TrainResult train_stage2(const Stage2Data& data, HeadMode mode, const TrainConfig& cfg) {
  cfg.validate();
  check_split(data.train_x.size(), data.train_y.size(), "training");
  check_split(data.val_x.size(), data.val_y.size(), "validation");
  const ModelConfig& mc = cfg.model;
  ParamSet head = mode == HeadMode::Gated ? init_gated_head(cfg.seed, mc) : init_concat_head(cfg.seed, mc);
  const auto n = static_cast<Eigen::Index>(data.train_x.size());
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.train_y.data(), n);

  if (cfg.probe_ridge > 0.0) {
    if (mode == HeadMode::Gated) {
      // A zero gate vector gives uniform attention, so the bias-free output
      // layer is fitted on the mean view feature.
      std::fill(head.at("gate.w").values.begin(), head.at("gate.w").values.end(), 0.0);
      Eigen::MatrixXd z(n, static_cast<Eigen::Index>(mc.dim));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& x = data.train_x[static_cast<std::size_t>(i)];
        z.row(i) = ((x[0] + x[1] + x[2]) / 3.0).transpose();
      }
      Eigen::MatrixXd g = z.transpose() * z / static_cast<double>(n);
      g.diagonal().array() += cfg.probe_ridge;
      const Eigen::VectorXd w = g.ldlt().solve(z.transpose() * y / static_cast<double>(n));
      if (!w.allFinite()) throw NumericError("ridge probe produced non-finite weights");
      head.at("gate.W").vec() = w;
    } else {
      const std::string last = "concat.W" + std::to_string(kConcatLayers - 1);
      const auto width = static_cast<Eigen::Index>(head.at(last).cols());
      Eigen::MatrixXd hid(n, width);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& x = data.train_x[static_cast<std::size_t>(i)];
        ConcatTape tape;
        concat_forward(x[0], x[1], x[2], head, &tape);
        hid.row(i) = tape.inputs.back().transpose();
      }
      const Eigen::VectorXd w = ridge_fit(hid, y, cfg.probe_ridge);
      head.at(last).vec() = w.head(width);
      head.at("concat.b" + std::to_string(kConcatLayers - 1)).values[0] = w[width];
    }
  }

  auto predict_all = [&](const std::vector<ViewFeatures>& xs) {
    std::vector<double> p(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) p[i] = stage2_predict(xs[i], mode, head);
    return p;
  };

  TrainResult r;
  Tracker tracker(cfg.patience);
  r.curve.push_back({0, mse_loss(predict_all(data.train_x), data.train_y), mse_loss(predict_all(data.val_x), data.val_y), 0.0});
  require_finite_loss(r.curve.back().val_mse, 0);
  tracker.update(0, r.curve.back().val_mse, head, r);

  AdamWState opt;
  opt.weight_decay = cfg.weight_decay;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    opt.lr = lr_at(cfg.schedule(), epoch - 1);
    double loss_sum = 0.0;
    for (const auto& batch : make_batches(data.train_x.size(), cfg.batch_size, cfg.seed, epoch)) {
      Gradients grads = Gradients::zeros_like(head);
      for (std::size_t i : batch) {
        const auto& x = data.train_x[i];
        double pred;
        if (mode == HeadMode::Gated) {
          GatedTape tape;
          pred = gated_attention_forward(x[0], x[1], x[2], head, &tape).alr_norm;
          const double resid = pred - data.train_y[i];
          gated_attention_backward(2.0 * resid / static_cast<double>(batch.size()), head, tape, grads);
          loss_sum += resid * resid;
        } else {
          ConcatTape tape;
          Rng rng(derive_seed(cfg.seed, {kStreamDropout, epoch, i}));
          pred = concat_forward(x[0], x[1], x[2], head, &tape, mc.dropout, &rng);
          const double resid = pred - data.train_y[i];
          concat_backward(2.0 * resid / static_cast<double>(batch.size()), head, tape, grads);
          loss_sum += resid * resid;
        }
      }
      adamw_step(head, grads, opt);
    }
    EpochRecord e{epoch, loss_sum / static_cast<double>(data.train_x.size()),
                  mse_loss(predict_all(data.val_x), data.val_y), opt.lr};
    require_finite_loss(e.train_mse, epoch);
    require_finite_loss(e.val_mse, epoch);
    r.curve.push_back(e);
    log_epoch("stage2", e);
    if (tracker.update(epoch, e.val_mse, head, r)) break;
  }
  return r;
}

// --- random search ------------------------------------------------------------

Trial sample_trial(const SearchSpace& space, std::uint64_t seed, std::size_t index) {
  if (!(space.lr_lo > 0.0 && space.lr_lo <= space.lr_hi && space.wd_lo > 0.0 && space.wd_lo <= space.wd_hi))
    throw ConfigError("search ranges must be positive and ordered");
  Rng rng(derive_seed(seed, {index}));
  Trial t;
  t.index = index;
  t.lr = std::pow(10.0, rng.uniform(std::log10(space.lr_lo), std::log10(space.lr_hi)));
  t.weight_decay = std::pow(10.0, rng.uniform(std::log10(space.wd_lo), std::log10(space.wd_hi)));
  return t;
}

std::vector<Trial> random_search(const SearchSpace& space, std::size_t n_iters, std::uint64_t seed,
                                 const std::function<double(const Trial&)>& objective) {
  std::vector<Trial> trials;
  for (std::size_t i = 0; i < n_iters; ++i) {
    Trial t = sample_trial(space, seed, i);
    try {
      t.val_mse = objective(t);
      t.ok = std::isfinite(t.val_mse);
      if (!t.ok) t.error = "non-finite validation loss";
    } catch (const std::exception& e) {
      t.ok = false;
      t.error = e.what();
    }
    if (!t.ok) log_warn("trial " + std::to_string(i) + " failed: " + t.error);
    trials.push_back(std::move(t));
  }
  std::stable_sort(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    if (a.ok != b.ok) return a.ok;
    return a.ok && a.val_mse < b.val_mse;
  });
  return trials;
}

}  // namespace alr
