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

// Plain-loop reference computations for the statistics tests.

#pragma once

#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace alrtest {

inline std::pair<double, double> mean_sd_two_pass(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline double r2_oracle(std::span<const double> pred, std::span<const double> truth) {
  const double m = mean_sd_two_pass(truth).first;
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    tot += (truth[i] - m) * (truth[i] - m);
  }
  return 1.0 - res / tot;
}

struct LineFit {
  double intercept = 0.0, slope = 0.0, slope_se = 0.0;
};

// y = a + b x by the textbook sums.
inline LineFit simple_regression(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = mean_sd_two_pass(x).first, my = mean_sd_two_pass(y).first;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - f.intercept - f.slope * x[i];
    rss += e * e;
  }
  f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  return f;
}

struct AnovaOracle {
  double ms_between = 0.0, ms_within = 0.0;
};

inline AnovaOracle anova_oneway(std::span<const std::array<double, 2>> pairs) {
  const double n = static_cast<double>(pairs.size());
  double grand = 0.0;
  for (const auto& p : pairs) grand += p[0] + p[1];
  grand /= 2.0 * n;
  double ssb = 0.0, ssw = 0.0;
  for (const auto& p : pairs) {
    const double m = (p[0] + p[1]) / 2.0;
    ssb += 2.0 * (m - grand) * (m - grand);
    ssw += (p[0] - m) * (p[0] - m) + (p[1] - m) * (p[1] - m);
  }
  return {ssb / (n - 1.0), ssw / n};
}

// Solves A x = b by Gaussian elimination with full pivoting.
inline std::vector<double> solve_full_pivot(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pr = k, pc = k;
    for (std::size_t i = k; i < n; ++i)
      for (std::size_t j = k; j < n; ++j)
        if (std::abs(a[i][j]) > std::abs(a[pr][pc])) pr = i, pc = j;
    std::swap(a[k], a[pr]);
    std::swap(b[k], b[pr]);
    for (auto& row : a) std::swap(row[k], row[pc]);
    std::swap(perm[k], perm[pc]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> z(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * z[j];
    z[k] = s / a[k][k];
  }
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) x[perm[k]] = z[k];
  return x;
}

// R^2 of y on the given columns via the normal equations.
inline double r2_normal_equations(const std::vector<std::vector<double>>& cols, std::span<const double> y) {
  const std::size_t p = cols.size(), n = y.size();
  std::vector<std::vector<double>> g(p, std::vector<double>(p, 0.0));
  std::vector<double> rhs(p, 0.0);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b)
      for (std::size_t i = 0; i < n; ++i) g[a][b] += cols[a][i] * cols[b][i];
    for (std::size_t i = 0; i < n; ++i) rhs[a] += cols[a][i] * y[i];
  }
  const auto beta = solve_full_pivot(g, rhs);
  const double my = mean_sd_two_pass(y).first;
  double rss = 0.0, tss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fit = 0.0;
    for (std::size_t a = 0; a < p; ++a) fit += beta[a] * cols[a][i];
    rss += (y[i] - fit) * (y[i] - fit);
    tss += (y[i] - my) * (y[i] - my);
  }
  return 1.0 - rss / tss;
}

// Student t CDF by composite Simpson integration of the density from 0.
inline double t_cdf_integral(double t, double df) {
  const double logc = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) - 0.5 * std::log(df * M_PI);
  auto pdf = [&](double x) { return std::exp(logc - (df + 1.0) / 2.0 * std::log1p(x * x / df)); };
  const std::size_t m = 200000;  // even
  const double h = t / static_cast<double>(m);
  double s = pdf(0.0) + pdf(t);
  for (std::size_t i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(static_cast<double>(i) * h);
  return 0.5 + s * h / 3.0;
}

}  // namespace alrtest
