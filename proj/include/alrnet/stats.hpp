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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace alr {

// Residuals are always pred - truth. Standard deviations use n - 1.

double r2(std::span<const double> pred, std::span<const double> truth);

struct ResidualStats {
  double mean = 0.0;
  double sd = 0.0;
};
ResidualStats residual_stats(std::span<const double> pred, std::span<const double> truth);

struct EvalReport {
  std::size_t n = 0;
  double r2 = 0.0;
  double residual_mean = 0.0;
  double residual_sd = 0.0;
  double mse = 0.0;
};
EvalReport eval_report(std::span<const double> pred, std::span<const double> truth);

struct BlandAltman {
  std::size_t n = 0;
  double fixed_bias = 0.0;
  double fixed_bias_t = 0.0;
  double fixed_bias_p = 1.0;
  double sd_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  double prop_intercept = 0.0;
  double prop_slope = 0.0;
  double prop_slope_se = 0.0;
  double prop_ci_low = 0.0;
  double prop_ci_high = 0.0;
  double prop_slope_p = 1.0;
};
BlandAltman bland_altman(std::span<const double> pred, std::span<const double> truth);

struct IccResult {
  double icc = 0.0;
  std::string variant = "one-way random effects, single measurement";
  std::size_t n = 0;
  std::size_t k = 2;
  double ms_between = 0.0;
  double ms_within = 0.0;
};
IccResult icc_oneway(std::span<const std::array<double, 2>> pairs);

struct OlsFit {
  Eigen::VectorXd coef;
  double rss = 0.0;
  double tss = 0.0;
  double r2 = 0.0;
};
/// Least squares of y on the columns of `x` (no intercept is added).
/// Throws DegenerateError naming the first column that is linearly
/// dependent on the earlier ones.
OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& column_names);

struct VarIncrement {
  double r2_base = 0.0;
  double r2_full = 0.0;
  double increment = 0.0;
  double f_stat = 0.0;
  double p_value = 1.0;
  std::size_t df1 = 1;
  std::size_t df2 = 0;
};
/// Nested OLS with intercept: y ~ base, then y ~ base + added; partial F
/// test for the added column. `base` may have zero columns.
VarIncrement r2_increment(std::span<const double> y, const Eigen::MatrixXd& base, std::span<const double> added,
                          const std::vector<std::string>& base_names = {});

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};
TTest paired_t(std::span<const double> a, std::span<const double> b);
/// Welch's unequal-variance test.
TTest unpaired_t(std::span<const double> a, std::span<const double> b);

double t_cdf(double t, double df);
double t_quantile(double p, double df);
/// Two-sided p-value of a t statistic.
double t_two_sided_p(double t, double df);
/// Upper tail of the F distribution.
double f_upper_tail(double f, double df1, double df2);

}  // namespace alr
