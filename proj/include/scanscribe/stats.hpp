#pragma once

// Two-sample t-tests, confidence intervals for proportions and per-case
// metric tables.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "scanscribe/error.hpp"
#include "scanscribe/geometry.hpp"

namespace scanscribe {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw data_error("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / double(xs.size());
}

// Sample variance with the n-1 denominator; 0 for a single value.
inline double sample_variance(std::span<const double> xs) {
  const double m = mean(xs);
  if (xs.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / double(xs.size() - 1);
}

inline double sample_std(std::span<const double> xs) { return std::sqrt(sample_variance(xs)); }

enum class TTestVariant { pooled, welch };

inline TTestVariant t_test_variant_from_string(const std::string& s) {
  if (s == "pooled") return TTestVariant::pooled;
  if (s == "welch") return TTestVariant::welch;
  throw usage_error("unknown t-test variant '" + s + "' (expected pooled|welch)");
}

struct TestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// Two-tailed p-value of a t statistic with `df` degrees of freedom.
inline double t_two_tailed_p(double t, double df) {
  if (!(df > 0)) throw numeric_error("t distribution needs df > 0");
  if (t == 0.0) return 1.0;
  boost::math::students_t dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return std::clamp(p, 0.0, 1.0);
}

inline TestResult t_test(std::span<const double> a, std::span<const double> b,
                         TTestVariant variant = TTestVariant::pooled) {
  if (a.size() < 2 || b.size() < 2) throw data_error("t-test sample too small (need >= 2 each)");
  const double na = double(a.size()), nb = double(b.size());
  const double ma = mean(a), mb = mean(b);
  const double va = sample_variance(a), vb = sample_variance(b);
  TestResult r;
  double se2 = 0.0;
  if (variant == TTestVariant::pooled) {
    r.df = na + nb - 2.0;
    const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / r.df;
    se2 = sp2 * (1.0 / na + 1.0 / nb);
  } else {
    const double qa = va / na, qb = vb / nb;
    se2 = qa + qb;
    const double denom = qa * qa / (na - 1.0) + qb * qb / (nb - 1.0);
    r.df = denom > 0 ? se2 * se2 / denom : na + nb - 2.0;
  }
  const double diff = ma - mb;
  if (se2 == 0.0) {
    if (diff == 0.0) return {0.0, r.df, 1.0};
    throw numeric_error("t-test undefined: both samples have zero variance but different means");
  }
  r.t = diff / std::sqrt(se2);
  r.p = t_two_tailed_p(r.t, r.df);
  return r;
}

// Upper quantile of the standard normal: z with P(Z <= z) = p.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw numeric_error("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal(), p);
}

enum class CiMethod { wilson, normal };

inline CiMethod ci_method_from_string(const std::string& s) {
  if (s == "wilson") return CiMethod::wilson;
  if (s == "normal") return CiMethod::normal;
  throw usage_error("unknown interval method '" + s + "' (expected wilson|normal)");
}

// Two-sided confidence interval for a binomial proportion at `level`.
inline Interval proportion_ci(std::size_t k, std::size_t n, double level,
                              CiMethod method = CiMethod::wilson) {
  if (n < 1 || k > n) throw data_error("proportion_ci needs 0 <= k <= n and n >= 1");
  if (!(level > 0.0 && level < 1.0)) throw usage_error("confidence level must lie in (0, 1)");
  const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
  const double N = double(n), p = double(k) / N;
  double lo = 0, hi = 0;
  if (method == CiMethod::wilson) {
    const double z2 = z * z;
    const double denom = 1.0 + z2 / N;
    const double centre = (p + z2 / (2.0 * N)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / N + z2 / (4.0 * N * N));
    lo = centre - half;
    hi = centre + half;
  } else {
    const double half = z * std::sqrt(p * (1.0 - p) / N);
    lo = p - half;
    hi = p + half;
  }
  if (k == 0) lo = 0.0;
  if (k == n) hi = 1.0;
  return {std::clamp(lo, 0.0, 1.0), std::clamp(hi, 0.0, 1.0)};
}

struct CaseMetrics {
  std::string id;
  double iou = 0.0;
  double boundary_error = 0.0;
  Box predicted;
  Box label;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

inline Summary summarize(std::span<const double> xs) { return {mean(xs), sample_std(xs)}; }

struct MetricsTable {
  std::vector<CaseMetrics> cases;

  std::vector<double> ious() const {
    std::vector<double> v;
    for (const auto& c : cases) v.push_back(c.iou);
    return v;
  }
  std::vector<double> boundary_errors() const {
    std::vector<double> v;
    for (const auto& c : cases) v.push_back(c.boundary_error);
    return v;
  }
  Summary iou_summary() const { return summarize(ious()); }
  Summary boundary_error_summary() const { return summarize(boundary_errors()); }

  // One row per case; values printed with 17 significant digits.
  void write_csv(std::ostream& os) const {
    os << "id,iou,boundary_error,pred_top,pred_bottom,pred_left,pred_right,"
          "label_top,label_bottom,label_left,label_right\n";
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    for (const auto& c : cases) {
      os << c.id << ',' << num(c.iou) << ',' << num(c.boundary_error) << ','
         << num(c.predicted.top) << ',' << num(c.predicted.bottom) << ','
         << num(c.predicted.left) << ',' << num(c.predicted.right) << ',' << num(c.label.top)
         << ',' << num(c.label.bottom) << ',' << num(c.label.left) << ',' << num(c.label.right)
         << '\n';
    }
  }
};

}  // namespace scanscribe
