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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "alrnet/error.hpp"
#include "alrnet/train.hpp"
#include "support.hpp"

using namespace alr;

namespace {

ModelConfig small_model(std::size_t dim = 8) {
  ModelConfig m;
  m.image_h = 8;
  m.image_w = 8;
  m.patch = 4;
  m.dim = dim;
  m.blocks = 1;
  m.attn_hidden = 4;
  return m;
}

// Images whose airway channels scale with the target.
Stage1Data toy_stage1(std::size_t n_train, std::size_t n_val, std::uint64_t seed) {
  Rng rng(seed);
  Stage1Data d;
  auto make = [&](std::vector<ViewStack>& xs, std::vector<double>& ys, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const double y = rng.uniform(-1.0, 1.0);
      ViewStack s(View::Coronal, 8, 8);
      for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) {
          s.at(0, r, c) = 0.5 + 0.4 * y * (r < 4 ? 1.0 : 0.2);
          s.at(1, r, c) = rng.uniform(0.0, 0.2);
          s.at(2, r, c) = 0.6;
        }
      xs.push_back(std::move(s));
      ys.push_back(y);
    }
  };
  make(d.train_x, d.train_y, n_train);
  make(d.val_x, d.val_y, n_val);
  return d;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.model = small_model();
  c.lr = 5e-3;
  c.weight_decay = 0.0;
  c.max_epochs = 30;
  c.patience = 0;
  c.augment = false;
  return c;
}

}  // namespace

TEST_CASE("mean squared error") {
  const std::vector<double> p{1.0, 2.0, 3.0}, t{1.0, 2.0, 5.0};
  CHECK(mse_loss(p, t) == doctest::Approx(4.0 / 3.0));
  CHECK(mse_loss(p, p) == 0.0);
  CHECK_THROWS_AS(mse_loss(p, std::vector<double>{1.0}), ConfigError);
  CHECK_THROWS_AS(mse_loss(std::vector<double>{}, std::vector<double>{}), DegenerateError);
}

TEST_CASE("adamw first step by hand") {
  ParamSet p;
  p.add("x", Tensor({1}, 1.0));
  Gradients g = Gradients::zeros_like(p);
  g.find("x")->values[0] = 2.0;
  AdamWState st;
  st.lr = 0.1;
  adamw_step(p, g, st);
  CHECK(std::abs(p.at("x").values[0] - (1.0 - 0.1 * 2.0 / (2.0 + 1e-8))) < 1e-12);
  CHECK(st.t == 1);

  // Zero gradient leaves only the decoupled decay.
  ParamSet q;
  q.add("x", Tensor({1}, 1.0));
  Gradients z = Gradients::zeros_like(q);
  AdamWState sd;
  sd.lr = 0.01;
  sd.weight_decay = 0.5;
  adamw_step(q, z, sd);
  CHECK(std::abs(q.at("x").values[0] - (1.0 - 0.01 * 0.5)) < 1e-15);
}

TEST_CASE("adamw skips frozen parameters and rejects non-finite gradients") {
  ParamSet p;
  p.add("a", Tensor({2}, 1.0));
  p.add("f", Tensor({2}, 1.0), true);
  Gradients g = Gradients::zeros_like(p);
  g.find("a")->values = {1.0, -1.0};
  AdamWState st;
  st.weight_decay = 0.1;
  adamw_step(p, g, st);
  CHECK(p.at("f").values == std::vector<double>{1.0, 1.0});
  CHECK(p.at("a").values[0] < 1.0);
  CHECK(p.at("a").values[1] > 1.0 - 1e-3);
  g.find("a")->values[0] = std::nan("");
  const ParamSet before = p;
  CHECK_THROWS_AS(adamw_step(p, g, st), NumericError);
  CHECK(p == before);
}

TEST_CASE("adamw agrees with a scalar reference over many steps") {
  Rng rng(4);
  ParamSet p;
  p.add("x", Tensor({3}, std::vector<double>{0.5, -1.0, 2.0}));
  AdamWState st;
  st.lr = 0.05;
  st.weight_decay = 0.01;
  std::vector<double> x{0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
  for (int t = 1; t <= 25; ++t) {
    Gradients g = Gradients::zeros_like(p);
    for (auto& e : g.find("x")->values) e = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
      const double gi = g.find("x")->values[i];
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      const double mh = m[i] / (1.0 - std::pow(0.9, t)), vh = v[i] / (1.0 - std::pow(0.999, t));
      x[i] -= 0.05 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * x[i]);
    }
    adamw_step(p, g, st);
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.at("x").values[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("warm-restart schedule against cycle enumeration") {
  const LrSchedule s{1.0, 0.1, 4, 2};
  std::vector<double> expect;
  std::size_t len = 4;
  while (expect.size() < 40) {
    for (std::size_t k = 0; k < len; ++k)
      expect.push_back(0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(k) / static_cast<double>(len))));
    len *= 2;
  }
  for (std::size_t e = 0; e < 40; ++e) CHECK(lr_at(s, e) == doctest::Approx(expect[e]).epsilon(1e-14));
  CHECK(lr_at(s, 0) == 1.0);
  CHECK(lr_at(s, 4) == 1.0);
  CHECK(lr_at(s, 12) == 1.0);
  CHECK(lr_at(s, 28) == 1.0);
  CHECK(lr_at(s, 2) == doctest::Approx(0.55));

  const LrSchedule flat{0.3, 0.0, 5, 1};
  for (std::size_t e = 0; e < 20; ++e) CHECK(lr_at(flat, e) == doctest::Approx(lr_at(flat, e % 5)));
  for (std::size_t e = 0; e < 100; ++e) {
    const double lr = lr_at(s, e);
    CHECK(lr >= 0.1 - 1e-15);
    CHECK(lr <= 1.0);
  }
}

TEST_CASE("flip is an involution and rotation by zero is the identity") {
  Rng rng(2);
  ViewStack s(View::Axial, 7, 5);
  for (auto& v : s.values) v = rng.uniform();
  CHECK(flip_horizontal(flip_horizontal(s)) == s);
  CHECK(flip_horizontal(s).at(1, 2, 0) == s.at(1, 2, 6));
  CHECK(rotate(s, 0.0) == s);
}

TEST_CASE("quarter turn moves a pixel as documented") {
  ViewStack s(View::Axial, 9, 9);
  s.at(0, 4, 5) = 1.0;  // offset (x=1, y=0) from the center
  const ViewStack r = rotate(s, 90.0);
  // (1, 0) -> (cos 90, sin 90) = (0, 1): one row down.
  CHECK(r.at(0, 5, 4) == doctest::Approx(1.0).epsilon(1e-12));
  double mass = 0.0;
  for (double v : r.values) mass += v;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  const ViewStack full = rotate(rotate(rotate(rotate(s, 90.0), 90.0), 90.0), 90.0);
  for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(full.values[i] == doctest::Approx(s.values[i]).epsilon(1e-9));
}

TEST_CASE("rotation keeps values in range") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    ViewStack s(View::Sagittal, 12, 12);
    for (auto& v : s.values) v = rng.uniform();
    const ViewStack r = rotate(s, rng.uniform(-15.0, 15.0));
    for (double v : r.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("augment draws deterministically from its generator") {
  Rng img(3);
  ViewStack s(View::Coronal, 8, 8);
  for (auto& v : s.values) v = img.uniform();
  Rng a(10), b(10);
  const auto before = augment_call_count();
  CHECK(augment(s, a) == augment(s, b));
  CHECK(augment_call_count() == before + 2);
  AugmentParams none{0.0, 0.0};
  Rng c(1);
  CHECK(augment(s, c, none) == s);
  AugmentParams always{1.0, 0.0};
  CHECK(augment(s, c, always) == flip_horizontal(s));
}

TEST_CASE("target scaler") {
  const std::vector<double> v{1.0, 3.0};
  const TargetScaler s = fit_scaler(v);
  CHECK(s.mu == 2.0);
  CHECK(s.sigma == 1.0);
  CHECK(s.apply(3.0) == 1.0);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(-10.0, 10.0);
    const TargetScaler t{rng.uniform(-1.0, 1.0), rng.uniform(0.1, 5.0)};
    CHECK(t.invert(t.apply(x)) == doctest::Approx(x).epsilon(1e-13));
  }
  CHECK_THROWS_AS(fit_scaler(std::vector<double>{1.0}), DegenerateError);
  CHECK_THROWS_AS(fit_scaler(std::vector<double>{2.0, 2.0, 2.0}), DegenerateError);
}

TEST_CASE("ridge fit recovers an exact linear map and leaves the intercept free") {
  Rng rng(12);
  Eigen::MatrixXd x(40, 3);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    y[i] = 2.0 * x(i, 0) - x(i, 1) + 0.5 * x(i, 2) + 7.0;
  }
  const Eigen::VectorXd w = ridge_fit(x, y, 0.0);
  CHECK(w[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(w[1] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(w[2] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(w[3] == doctest::Approx(7.0).epsilon(1e-10));
  // Heavy shrinkage drives the slopes to zero and the intercept to the mean.
  const Eigen::VectorXd s = ridge_fit(x, y, 1e9);
  CHECK(s.head(3).norm() < 1e-6);
  CHECK(s[3] == doctest::Approx(y.mean()).epsilon(1e-6));
}

TEST_CASE("train config json") {
  TrainConfig c;
  c.lr = 1e-4;
  c.model = small_model();
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  TrainConfig d = c;
  d.weight_decay *= 2;
  CHECK(config_hash(d) != config_hash(c));
  CHECK(train_config_from_json(nlohmann::ordered_json::object()).lr == TrainConfig{}.lr);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json{{"learning_rate", 1e-3}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json{{"lr", -1.0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json{{"max_epochs", "ten"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json::array()), ConfigError);
  CHECK(curve_csv({{0, 1.0, 2.0, 0.0}}) == "epoch,train_mse,val_mse,lr\n0,1,2,0\n");
}

TEST_CASE("stage-1 training is deterministic") {
  const Stage1Data d = toy_stage1(10, 4, 1);
  TrainConfig c = quick_config();
  c.max_epochs = 5;
  c.augment = true;
  c.batch_size = 3;
  const TrainResult a = train_stage1(d, c), b = train_stage1(d, c);
  CHECK(a.params == b.params);
  CHECK(curve_csv(a.curve) == curve_csv(b.curve));
  c.seed = 1;
  CHECK_FALSE(train_stage1(d, c).params == a.params);
}

TEST_CASE("stage-1 memorizes a handful of samples") {
  const Stage1Data d = toy_stage1(8, 2, 2);
  TrainConfig c = quick_config();
  c.max_epochs = 500;
  c.probe_ridge = 0.0;
  c.freeze_embed = false;
  c.model = small_model(4);
  const TrainResult r = train_stage1(d, c);
  CHECK(r.curve.size() == 501);
  CHECK(r.curve.back().train_mse < 1e-3);
  CHECK(r.curve.back().train_mse < r.curve.front().train_mse);
}

TEST_CASE("stage-1 keeps the best validation epoch") {
  const Stage1Data d = toy_stage1(12, 6, 3);
  TrainConfig c = quick_config();
  c.max_epochs = 40;
  c.lr = 3e-2;
  const TrainResult r = train_stage1(d, c);
  double best = r.curve.front().val_mse;
  std::size_t arg = 0;
  for (const auto& e : r.curve)
    if (e.val_mse < best) best = e.val_mse, arg = e.epoch;
  CHECK(r.best_val_mse == best);
  CHECK(r.best_epoch == arg);
  CHECK(r.best_val_mse <= r.curve.back().val_mse);
  CHECK(r.curve.front().epoch == 0);
  CHECK(r.curve.front().lr == 0.0);
  // The stored parameters reproduce the best validation loss.
  std::vector<double> pred;
  for (const auto& x : d.val_x) pred.push_back(stage1_forward(extract_features(x, r.params, c.model), r.params));
  CHECK(mse_loss(pred, d.val_y) == doctest::Approx(r.best_val_mse).epsilon(1e-12));
}

TEST_CASE("early stopping honors patience") {
  const Stage1Data d = toy_stage1(12, 6, 4);
  TrainConfig c = quick_config();
  c.max_epochs = 200;
  c.patience = 3;
  c.lr = 0.5;  // unstable on purpose so validation stops improving
  const TrainResult r = train_stage1(d, c);
  CHECK(r.curve.size() < 201);
  CHECK(r.curve.back().epoch == r.best_epoch + 3);
}

TEST_CASE("augmentation touches training samples only") {
  const Stage1Data d = toy_stage1(6, 5, 5);
  TrainConfig c = quick_config();
  c.max_epochs = 4;
  c.augment = true;
  const TrainResult r = train_stage1(d, c);
  CHECK(r.augment_calls == 6 * 4);
  c.augment = false;
  CHECK(train_stage1(d, c).augment_calls == 0);
}

TEST_CASE("frozen embedding stays at its initial value") {
  const Stage1Data d = toy_stage1(6, 2, 6);
  TrainConfig c = quick_config();
  c.max_epochs = 3;
  const TrainResult r = train_stage1(d, c);
  const ParamSet init = init_extractor(c.seed, c.model);
  CHECK(r.params.at("embed.W") == init.at("embed.W"));
  CHECK(r.params.frozen("embed.W"));
}

TEST_CASE("training rejects empty or mismatched splits") {
  Stage1Data d = toy_stage1(4, 2, 7);
  TrainConfig c = quick_config();
  Stage1Data empty = d;
  empty.val_x.clear();
  empty.val_y.clear();
  CHECK_THROWS_AS(train_stage1(empty, c), DegenerateError);
  d.train_y.pop_back();
  CHECK_THROWS_AS(train_stage1(d, c), ConfigError);
}

TEST_CASE("gated stage 2 attends to the informative view") {
  Rng rng(13);
  const std::size_t dim = 8;
  Stage2Data d;
  auto make = [&](std::vector<ViewFeatures>& xs, std::vector<double>& ys, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const double y = rng.uniform(-1.0, 1.0);
      ViewFeatures v;
      for (auto& f : v) {
        f = Feature(static_cast<Eigen::Index>(dim));
        for (Eigen::Index j = 0; j < f.size(); ++j) f[j] = rng.uniform(-1.0, 1.0);
      }
      v[0][0] = y;
      v[0][1] = 1.0;  // marks the informative view
      xs.push_back(std::move(v));
      ys.push_back(y);
    }
  };
  make(d.train_x, d.train_y, 60);
  make(d.val_x, d.val_y, 20);
  TrainConfig c = quick_config();
  c.model = small_model(dim);
  c.lr = 2e-2;
  c.max_epochs = 300;
  c.t0 = 300;
  const TrainResult r = train_stage2(d, HeadMode::Gated, c);
  CHECK(r.best_val_mse < r.curve.front().val_mse);
  double mean_cor = 0.0;
  for (const auto& x : d.val_x) {
    std::array<double, 3> w{};
    stage2_predict(x, HeadMode::Gated, r.params, &w);
    CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0));
    mean_cor += w[0] / static_cast<double>(d.val_x.size());
  }
  CHECK(mean_cor > 0.5);
}

TEST_CASE("stage 2 leaves its input features untouched and is deterministic") {
  Rng rng(14);
  Stage2Data d;
  for (int i = 0; i < 20; ++i) {
    ViewFeatures v;
    for (auto& f : v) f = Feature::NullaryExpr(16, [&] { return rng.uniform(-1.0, 1.0); });
    (i < 15 ? d.train_x : d.val_x).push_back(v);
    (i < 15 ? d.train_y : d.val_y).push_back(v[1][0] - v[2][3]);
  }
  const Stage2Data copy = d;
  TrainConfig c = quick_config();
  c.model = small_model(16);
  c.max_epochs = 10;
  for (HeadMode m : {HeadMode::Gated, HeadMode::Concat}) {
    const TrainResult a = train_stage2(d, m, c), b = train_stage2(d, m, c);
    CHECK(a.params == b.params);
    std::array<double, 3> w{};
    stage2_predict(d.val_x[0], m, a.params, &w);
    CHECK(std::isnan(w[0]) == (m == HeadMode::Concat));
  }
  for (std::size_t i = 0; i < d.train_x.size(); ++i)
    for (int k = 0; k < 3; ++k) CHECK(d.train_x[i][static_cast<std::size_t>(k)] == copy.train_x[i][static_cast<std::size_t>(k)]);
}

TEST_CASE("head mode names") {
  CHECK(parse_head_mode("gated") == HeadMode::Gated);
  CHECK(parse_head_mode("concat") == HeadMode::Concat);
  CHECK(head_mode_name(HeadMode::Concat) == "concat");
  CHECK_THROWS_AS(parse_head_mode("mean"), ConfigError);
}

TEST_CASE("random search sorts completed trials and samples log-uniformly") {
  const SearchSpace space{1e-6, 1e-3, 1e-6, 1e-2};
  auto objective = [](const Trial& t) {
    if (t.index % 7 == 3) throw NumericError("diverged");
    return std::abs(std::log10(t.lr) + 4.0);
  };
  const auto trials = random_search(space, 30, 5, objective);
  REQUIRE(trials.size() == 30);
  std::size_t ok = 0;
  while (ok < trials.size() && trials[ok].ok) ++ok;
  for (std::size_t i = ok; i < trials.size(); ++i) {
    CHECK_FALSE(trials[i].ok);
    CHECK_FALSE(trials[i].error.empty());
    if (i > ok) CHECK(trials[i].index > trials[i - 1].index);
  }
  CHECK(ok == 30 - 4);
  for (std::size_t i = 1; i < ok; ++i) CHECK(trials[i - 1].val_mse <= trials[i].val_mse);

  const auto again = random_search(space, 30, 5, objective);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(again[i].index == trials[i].index);
    CHECK(again[i].lr == trials[i].lr);
  }
  CHECK(sample_trial(space, 5, 9).lr == sample_trial(space, 5, 9).lr);

  // Every third of the log range gets hit.
  std::array<int, 3> thirds{};
  for (std::size_t i = 0; i < 60; ++i) {
    const Trial t = sample_trial(space, 11, i);
    CHECK(t.lr >= 1e-6);
    CHECK(t.lr <= 1e-3);
    CHECK(t.weight_decay >= 1e-6);
    CHECK(t.weight_decay <= 1e-2);
    const double u = (std::log10(t.lr) + 6.0) / 3.0;
    ++thirds[static_cast<std::size_t>(std::min(2.0, std::floor(u * 3.0)))];
  }
  for (int n : thirds) CHECK(n > 0);
}
