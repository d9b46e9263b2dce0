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

#include <cmath>
#include <vector>

#include "alrnet/error.hpp"
#include "alrnet/rng.hpp"
#include "alrnet/stats.hpp"
#include "stats_oracles.hpp"

using namespace alr;
using namespace alrtest;

namespace {

using Vec = std::vector<double>;

Vec random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("r2 examples") {
  const Vec t{1.0, 2.0, 3.0};
  CHECK(r2(t, t) == 1.0);
  CHECK(r2(Vec{2.0, 2.0, 2.0}, t) == 0.0);
  CHECK(r2(Vec{1.0, 2.0, 4.0}, t) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(r2(t, Vec{5.0, 5.0, 5.0}), DegenerateError);
  CHECK_THROWS_AS(r2(t, Vec{1.0, 2.0}), ConfigError);
}

TEST_CASE("r2 is unchanged by a common shift and never exceeds one") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    Vec p = random_vec(rng, n), t = random_vec(rng, n);
    const double base = r2(p, t);
    CHECK(base <= 1.0);
    CHECK(base == doctest::Approx(r2_oracle(p, t)).epsilon(1e-12));
    const double c = rng.uniform(-100.0, 100.0);
    for (auto& x : p) x += c;
    for (auto& x : t) x += c;
    CHECK(r2(p, t) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("residual statistics") {
  const Vec t{0.1, 0.4, 0.2, 0.9};
  auto s = residual_stats(t, t);
  CHECK(s.mean == 0.0);
  CHECK(s.sd == 0.0);
  Vec shifted = t;
  for (auto& x : shifted) x += 0.5;
  s = residual_stats(shifted, t);
  CHECK(s.mean == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.sd < 1e-15);

  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec p = random_vec(rng, 10), q = random_vec(rng, 10);
    Vec d(10);
    for (std::size_t i = 0; i < 10; ++i) d[i] = p[i] - q[i];
    const auto [m, sd] = mean_sd_two_pass(d);
    const auto r = residual_stats(p, q);
    CHECK(std::abs(r.mean - m) < 1e-14);
    CHECK(std::abs(r.sd - sd) < 1e-14);
    CHECK(r.sd >= 0.0);
    const EvalReport e = eval_report(p, q);
    CHECK(e.n == 10);
    CHECK(e.residual_mean == r.mean);
    CHECK(e.r2 == r2(p, q));
    double mse = 0.0;
    for (double x : d) mse += x * x / 10.0;
    CHECK(e.mse == doctest::Approx(mse).epsilon(1e-14));
  }
}

TEST_CASE("bland-altman examples") {
  const Vec t{1.0, 2.0, 3.0, 4.0};
  auto ba = bland_altman(t, t);
  CHECK(ba.fixed_bias == 0.0);
  CHECK(ba.prop_slope == 0.0);
  CHECK(ba.fixed_bias_p == 1.0);
  CHECK(ba.sd_diff == 0.0);

  Vec p = t;
  for (auto& x : p) x += 0.3;
  ba = bland_altman(p, t);
  CHECK(ba.fixed_bias == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(std::abs(ba.prop_slope) < 1e-12);

  for (std::size_t i = 0; i < 4; ++i) p[i] = 1.2 * t[i];
  ba = bland_altman(p, t);
  CHECK(std::abs(ba.prop_slope - 0.2 / 1.1) < 1e-9);
  CHECK(ba.prop_ci_low <= ba.prop_slope);
  CHECK(ba.prop_ci_high >= ba.prop_slope);

  CHECK_THROWS_AS(bland_altman(Vec{1.0, 2.0, 3.0}, Vec{3.0, 2.0, 1.0}), DegenerateError);
  CHECK_THROWS_AS(bland_altman(Vec{1.0, 2.0}, Vec{1.0, 3.0}), DegenerateError);
}

TEST_CASE("bland-altman agrees with a closed-form regression and shares its bias with the residuals") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.below(40);
    const Vec t = random_vec(rng, n, 0.0, 1.0);
    Vec p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = t[i] * rng.uniform(0.8, 1.3) + rng.normal() * 0.05;
    const BlandAltman ba = bland_altman(p, t);
    CHECK(ba.fixed_bias == residual_stats(p, t).mean);

    Vec d(n), m(n);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = p[i] - t[i];
      m[i] = (p[i] + t[i]) / 2.0;
    }
    const auto fit = simple_regression(m, d);
    CHECK(ba.prop_slope == doctest::Approx(fit.slope).epsilon(1e-10));
    CHECK(ba.prop_intercept == doctest::Approx(fit.intercept).epsilon(1e-10));
    CHECK(ba.prop_slope_se == doctest::Approx(fit.slope_se).epsilon(1e-10));
    const double q = t_quantile(0.975, static_cast<double>(n) - 2.0);
    CHECK(ba.prop_ci_high - ba.prop_slope == doctest::Approx(q * fit.slope_se).epsilon(1e-10));
    const auto [md, sd] = mean_sd_two_pass(d);
    CHECK(ba.loa_high == doctest::Approx(md + 1.96 * sd).epsilon(1e-12));
    CHECK(ba.loa_low == doctest::Approx(md - 1.96 * sd).epsilon(1e-12));
    for (double pv : {ba.fixed_bias_p, ba.prop_slope_p}) {
      CHECK(pv >= 0.0);
      CHECK(pv <= 1.0);
    }
  }
}

TEST_CASE("icc examples") {
  const std::vector<std::array<double, 2>> same{{1.0, 1.0}, {2.0, 2.0}, {4.0, 4.0}};
  CHECK(icc_oneway(same).icc == 1.0);
  const std::vector<std::array<double, 2>> flat{{2.0, 2.0}, {2.0, 2.0}, {2.0, 2.0}};
  CHECK_THROWS_AS(icc_oneway(flat), DegenerateError);
  const std::vector<std::array<double, 2>> two{{1.0, 2.0}, {3.0, 4.0}};
  CHECK_THROWS_AS(icc_oneway(two), DegenerateError);

  const std::vector<std::array<double, 2>> hand{{9.0, 10.0}, {6.0, 5.5}, {8.0, 8.5}, {7.0, 6.0}, {10.0, 9.5}};
  const IccResult r = icc_oneway(hand);
  const AnovaOracle a = anova_oneway(hand);
  CHECK(std::abs(r.ms_between - a.ms_between) < 1e-12);
  CHECK(std::abs(r.ms_within - a.ms_within) < 1e-12);
  CHECK(std::abs(r.icc - (a.ms_between - a.ms_within) / (a.ms_between + a.ms_within)) < 1e-12);
  CHECK(r.n == 5);
  CHECK(r.k == 2);
  CHECK(r.variant.find("one-way") != std::string::npos);
}

TEST_CASE("icc is invariant under a common affine map and bounded above by one") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.below(30);
    std::vector<std::array<double, 2>> pairs(n);
    for (auto& pr : pairs) {
      const double s = rng.normal();
      pr = {s + 0.3 * rng.normal(), s + 0.3 * rng.normal()};
    }
    const double base = icc_oneway(pairs).icc;
    CHECK(base <= 1.0);
    CHECK(base >= -1.0);
    const double alpha = rng.bernoulli(0.5) ? rng.uniform(0.1, 10.0) : -rng.uniform(0.1, 10.0);
    const double gamma = rng.uniform(-50.0, 50.0);
    for (auto& pr : pairs) pr = {alpha * pr[0] + gamma, alpha * pr[1] + gamma};
    CHECK(std::abs(icc_oneway(pairs).icc - base) < 1e-9);
  }
}

TEST_CASE("r2 increment examples") {
  Rng rng(5);
  const std::size_t n = 30;
  Eigen::MatrixXd base(n, 2);
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    base(static_cast<Eigen::Index>(i), 0) = rng.normal();
    base(static_cast<Eigen::Index>(i), 1) = rng.normal();
    y[i] = 0.5 * base(static_cast<Eigen::Index>(i), 0) + rng.normal();
  }
  VarIncrement v = r2_increment(y, base, y);
  CHECK(v.r2_full == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.p_value == 0.0);

  // A column orthogonal to the intercept, the base columns and y.
  Eigen::MatrixXd span(n, 4);
  span.col(0).setOnes();
  span.middleCols(1, 2) = base;
  span.col(3) = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (auto& e : z) e = rng.normal();
  z -= span * span.colPivHouseholderQr().solve(z);
  const Vec zv(z.data(), z.data() + z.size());
  v = r2_increment(y, base, zv);
  CHECK(std::abs(v.increment) < 1e-10);
  CHECK(v.df1 == 1);
  CHECK(v.df2 == n - 4);
}

TEST_CASE("r2 increment matches an independent least-squares solve") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20, k = 1 + rng.below(3);
    Eigen::MatrixXd base(n, static_cast<Eigen::Index>(k));
    Vec y(n), added(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += (base(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal());
      added[i] = rng.normal();
      y[i] = 0.3 * s + 0.4 * added[i] + rng.normal();
    }
    std::vector<Vec> cols_base(k + 1, Vec(n, 1.0));
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < n; ++i) cols_base[j + 1][i] = base(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::vector<Vec> cols_full = cols_base;
    cols_full.push_back(added);
    const double rb = r2_normal_equations(cols_base, y), rf = r2_normal_equations(cols_full, y);
    const VarIncrement v = r2_increment(y, base, added);
    CHECK(std::abs(v.r2_base - rb) < 1e-10);
    CHECK(std::abs(v.r2_full - rf) < 1e-10);
    CHECK(v.increment >= -1e-12);
    CHECK(v.r2_base <= v.r2_full + 1e-12);
    // Partial F from the two residual sums.
    const double df2 = static_cast<double>(n - k - 2);
    const double f = (rf - rb) / ((1.0 - rf) / df2);
    CHECK(v.f_stat == doctest::Approx(f).epsilon(1e-8));
    CHECK(v.p_value >= 0.0);
    CHECK(v.p_value <= 1.0);
  }
}

TEST_CASE("r2 increment names the dependent column") {
  Rng rng(7);
  const std::size_t n = 15;
  Eigen::MatrixXd base(n, 2);
  Vec y(n), added(n);
  for (std::size_t i = 0; i < n; ++i) {
    base(static_cast<Eigen::Index>(i), 0) = rng.normal();
    base(static_cast<Eigen::Index>(i), 1) = 2.0 * base(static_cast<Eigen::Index>(i), 0) + 1.0;
    y[i] = rng.normal();
    added[i] = rng.normal();
  }
  try {
    r2_increment(y, base, added, {"age", "age_rescaled"});
    FAIL("expected a rank error");
  } catch (const DegenerateError& e) {
    CHECK(std::string(e.what()).find("age_rescaled") != std::string::npos);
  }
  Eigen::MatrixXd ok = base.leftCols(1);
  Vec dup(n);
  for (std::size_t i = 0; i < n; ++i) dup[i] = 3.0 - ok(static_cast<Eigen::Index>(i), 0);
  try {
    r2_increment(y, ok, dup, {"age"});
    FAIL("expected a rank error");
  } catch (const DegenerateError& e) {
    CHECK(std::string(e.what()).find("added") != std::string::npos);
  }
  CHECK_THROWS_AS(r2_increment(Vec(3, 1.0), Eigen::MatrixXd(3, 0), Vec{1.0, 2.0, 3.0}), DegenerateError);
}

TEST_CASE("t tests") {
  const Vec a{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(paired_t(a, a), DegenerateError);
  const Vec b{5.1, 3.02, 7.0, 0.97, 2.01};
  Vec c(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) c[i] = b[i] - 1.0 + (i % 2 ? 1e-3 : -1e-3);
  const TTest pt = paired_t(b, c);
  CHECK(pt.p < 1e-5);
  CHECK(pt.df == 4.0);

  // Welch by hand.
  const Vec x{2.1, 3.4, 1.9, 5.6, 4.4}, yv{6.0, 7.5, 5.2, 8.8, 6.1, 9.0};
  const auto [mx, sx] = mean_sd_two_pass(x);
  const auto [my, sy] = mean_sd_two_pass(yv);
  const double vx = sx * sx / 5.0, vy = sy * sy / 6.0;
  const double t = (mx - my) / std::sqrt(vx + vy);
  const double df = (vx + vy) * (vx + vy) / (vx * vx / 4.0 + vy * vy / 5.0);
  const TTest ut = unpaired_t(x, yv);
  CHECK(std::abs(ut.t - t) < 1e-10);
  CHECK(std::abs(ut.df - df) < 1e-10);
  CHECK(ut.p == doctest::Approx(t_two_sided_p(t, df)).epsilon(1e-14));

  // Shifting both groups by the same constant changes nothing.
  Vec xs = x, ys = yv;
  for (auto& e : xs) e += 10.0;
  for (auto& e : ys) e += 10.0;
  CHECK(std::abs(unpaired_t(xs, ys).t - t) < 1e-10);
  CHECK_THROWS_AS(unpaired_t(Vec{1.0}, yv), DegenerateError);
  CHECK_THROWS_AS(unpaired_t(Vec{1.0, 1.0}, Vec{2.0, 2.0}), DegenerateError);
}

TEST_CASE("t distribution against numerical integration") {
  for (double df : {1.0, 2.0, 3.5, 7.0, 15.0, 40.0, 200.0})
    for (double t : {-8.0, -3.0, -1.2, -0.3, 0.0, 0.45, 1.0, 2.2, 4.0, 9.5}) {
      INFO("df " << df << " t " << t);
      CHECK(std::abs(t_cdf(t, df) - t_cdf_integral(t, df)) < 1e-8);
    }
  CHECK(t_cdf(0.0, 5.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(t_cdf(1.0, 0.0), ConfigError);
  // Cauchy closed form.
  CHECK(t_cdf(1.0, 1.0) == doctest::Approx(0.75).epsilon(1e-13));
  // Table value.
  CHECK(t_quantile(0.975, 10.0) == doctest::Approx(2.228138851986).epsilon(1e-10));
}

TEST_CASE("t quantile inverts the cdf and p-values stay in range") {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const double df = rng.uniform(0.5, 100.0);
    const double p = rng.uniform(1e-6, 1.0 - 1e-6);
    CHECK(t_cdf(t_quantile(p, df), df) == doctest::Approx(p).epsilon(1e-9));
    const double t = rng.normal() * 5.0;
    const double pv = t_two_sided_p(t, df);
    CHECK(pv >= 0.0);
    CHECK(pv <= 1.0);
    // F(1, df) is the square of t(df).
    CHECK(f_upper_tail(t * t, 1.0, df) == doctest::Approx(pv).epsilon(1e-9));
  }
  CHECK_THROWS_AS(t_quantile(1.0, 3.0), ConfigError);
}
