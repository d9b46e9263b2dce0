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

#include "alrnet/stats.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "alrnet/error.hpp"

namespace alr {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_n, const char* what) {
  if (a.size() != b.size()) throw ConfigError(std::string(what) + ": inputs differ in length");
  if (a.size() < min_n) throw DegenerateError(std::string(what) + " needs at least " + std::to_string(min_n) + " values");
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_var(std::span<const double> v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

std::vector<double> differences(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

}  // namespace

double t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ConfigError("t distribution needs positive degrees of freedom");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t(df), t);
}

double t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("t quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::students_t(df), p);
}

double t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return 1.0;
  const double p = 2.0 * t_cdf(-std::abs(t), df);
  return std::min(1.0, std::max(0.0, p));
}

double f_upper_tail(double f, double df1, double df2) {
  if (!(f > 0.0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), f));
}

double r2(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 2, "r2");
  const double m = mean(truth);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - m) * (truth[i] - m);
  }
  if (!(ss_tot > 0.0)) throw DegenerateError("r2 undefined for constant truth");
  return 1.0 - ss_res / ss_tot;
}

ResidualStats residual_stats(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 2, "residual_stats");
  const auto d = differences(pred, truth);
  const double m = mean(d);
  return {m, std::sqrt(sample_var(d, m))};
}

EvalReport eval_report(std::span<const double> pred, std::span<const double> truth) {
  EvalReport r;
  r.n = pred.size();
  r.r2 = alr::r2(pred, truth);
  const auto rs = residual_stats(pred, truth);
  r.residual_mean = rs.mean;
  r.residual_sd = rs.sd;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  r.mse = s / static_cast<double>(pred.size());
  return r;
}

BlandAltman bland_altman(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, 3, "bland_altman");
  const std::size_t n = pred.size();
  const double dn = static_cast<double>(n);
  std::vector<double> d = differences(pred, truth), m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = 0.5 * (pred[i] + truth[i]);

  BlandAltman r;
  r.n = n;
  r.fixed_bias = mean(d);
  r.sd_diff = std::sqrt(sample_var(d, r.fixed_bias));
  r.loa_low = r.fixed_bias - 1.96 * r.sd_diff;
  r.loa_high = r.fixed_bias + 1.96 * r.sd_diff;
  if (r.sd_diff > 0.0) {
    r.fixed_bias_t = r.fixed_bias / (r.sd_diff / std::sqrt(dn));
    r.fixed_bias_p = t_two_sided_p(r.fixed_bias_t, dn - 1.0);
  } else if (r.fixed_bias != 0.0) {
    r.fixed_bias_t = std::copysign(std::numeric_limits<double>::infinity(), r.fixed_bias);
    r.fixed_bias_p = 0.0;
  }

  const double mm = mean(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (m[i] - mm) * (m[i] - mm);
    sxy += (m[i] - mm) * (d[i] - r.fixed_bias);
  }
  if (!(sxx > 0.0)) throw DegenerateError("bland_altman: all pairwise means are identical");
  r.prop_slope = sxy / sxx;
  r.prop_intercept = r.fixed_bias - r.prop_slope * mm;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = d[i] - r.prop_intercept - r.prop_slope * m[i];
    rss += e * e;
  }
  r.prop_slope_se = std::sqrt(rss / (dn - 2.0) / sxx);
  const double q = t_quantile(0.975, dn - 2.0);
  r.prop_ci_low = r.prop_slope - q * r.prop_slope_se;
  r.prop_ci_high = r.prop_slope + q * r.prop_slope_se;
  if (r.prop_slope_se > 0.0)
    r.prop_slope_p = t_two_sided_p(r.prop_slope / r.prop_slope_se, dn - 2.0);
  else
    r.prop_slope_p = r.prop_slope == 0.0 ? 1.0 : 0.0;
  return r;
}

IccResult icc_oneway(std::span<const std::array<double, 2>> pairs) {
  const std::size_t n = pairs.size();
  if (n < 3) throw DegenerateError("icc needs at least 3 subjects");
  const double k = 2.0, dn = static_cast<double>(n);
  double grand = 0.0;
  for (const auto& p : pairs) grand += p[0] + p[1];
  grand /= dn * k;
  double ssb = 0.0, ssw = 0.0;
  for (const auto& p : pairs) {
    const double m = 0.5 * (p[0] + p[1]);
    ssb += k * (m - grand) * (m - grand);
    ssw += (p[0] - m) * (p[0] - m) + (p[1] - m) * (p[1] - m);
  }
  IccResult r;
  r.n = n;
  r.ms_between = ssb / (dn - 1.0);
  r.ms_within = ssw / (dn * (k - 1.0));
  const double denom = r.ms_between + (k - 1.0) * r.ms_within;
  if (!(denom > 0.0)) throw DegenerateError("icc undefined: all measurements are equal");
  r.icc = (r.ms_between - r.ms_within) / denom;
  return r;
}

OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& column_names) {
  if (x.rows() != y.size()) throw ConfigError("ols: design and response differ in length");
  if (x.rows() <= x.cols()) throw DegenerateError("ols needs more rows than columns");
  // Locate the first dependent column by growing the design.
  for (Eigen::Index c = 1; c <= x.cols(); ++c) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.leftCols(c));
    qr.setThreshold(1e-10);
    if (qr.rank() < c) {
      const auto idx = static_cast<std::size_t>(c - 1);
      const std::string name = idx < column_names.size() ? column_names[idx] : "column " + std::to_string(idx);
      throw DegenerateError("rank-deficient design: " + name + " is linearly dependent on earlier columns");
    }
  }
  OlsFit f;
  f.coef = x.householderQr().solve(y);
  const Eigen::VectorXd e = y - x * f.coef;
  f.rss = e.squaredNorm();
  f.tss = (y.array() - y.mean()).square().sum();
  if (!(f.tss > 0.0)) throw DegenerateError("ols: response is constant");
  f.r2 = 1.0 - f.rss / f.tss;
  return f;
}

VarIncrement r2_increment(std::span<const double> y, const Eigen::MatrixXd& base, std::span<const double> added,
                          const std::vector<std::string>& base_names) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (static_cast<std::size_t>(n) != added.size() || base.rows() != n)
    throw ConfigError("r2_increment: inputs differ in length");
  const Eigen::Index p_base = base.cols() + 1, p_full = p_base + 1;
  if (n <= p_full + 1) throw DegenerateError("r2_increment needs more rows than columns + 1");

  Eigen::MatrixXd xb(n, p_base), xf(n, p_full);
  xb.col(0).setOnes();
  xb.rightCols(base.cols()) = base;
  xf.leftCols(p_base) = xb;
  for (Eigen::Index i = 0; i < n; ++i) xf(i, p_base) = added[static_cast<std::size_t>(i)];
  std::vector<std::string> names{"intercept"};
  for (Eigen::Index c = 0; c < base.cols(); ++c)
    names.push_back(static_cast<std::size_t>(c) < base_names.size() ? base_names[static_cast<std::size_t>(c)]
                                                                    : "base column " + std::to_string(c));
  names.push_back("added regressor");
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);

  const OlsFit fb = ols(xb, yv, names);
  const OlsFit ff = ols(xf, yv, names);
  VarIncrement r;
  r.r2_base = fb.r2;
  r.r2_full = ff.r2;
  r.increment = ff.r2 - fb.r2;
  r.df1 = 1;
  r.df2 = static_cast<std::size_t>(n - p_full);
  if (ff.rss > 0.0) {
    r.f_stat = std::max(0.0, (fb.rss - ff.rss)) / (ff.rss / static_cast<double>(r.df2));
    r.p_value = f_upper_tail(r.f_stat, 1.0, static_cast<double>(r.df2));
  } else {
    r.f_stat = std::numeric_limits<double>::infinity();
    r.p_value = fb.rss > 0.0 ? 0.0 : 1.0;
  }
  return r;
}

TTest paired_t(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b, 2, "paired_t");
  const auto d = differences(a, b);
  const double m = mean(d), v = sample_var(d, m);
  if (!(v > 0.0)) throw DegenerateError("paired_t: differences have zero variance");
  TTest r;
  r.df = static_cast<double>(d.size() - 1);
  r.t = m / std::sqrt(v / static_cast<double>(d.size()));
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

TTest unpaired_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DegenerateError("unpaired_t needs at least 2 values per group");
  const double ma = mean(a), mb = mean(b);
  const double va = sample_var(a, ma) / static_cast<double>(a.size());
  const double vb = sample_var(b, mb) / static_cast<double>(b.size());
  if (!(va + vb > 0.0)) throw DegenerateError("unpaired_t: both groups have zero variance");
  TTest r;
  r.t = (ma - mb) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

}  // namespace alr
