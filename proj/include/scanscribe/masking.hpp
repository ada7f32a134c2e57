#pragma once

// Rectangular object masks from thresholded row/column intensity sums.

#include <algorithm>
#include <string>
#include <vector>

#include "scanscribe/error.hpp"
#include "scanscribe/geometry.hpp"

namespace scanscribe {

struct ThresholdPolicy {
  enum class Mode { relative, absolute };

  Mode mode = Mode::relative;
  // Relative mode: fraction of the largest sum along the axis.
  // Absolute mode: raw intensity sum.
  double value = 0.05;

  static ThresholdPolicy relative(double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
      throw usage_error("relative mask threshold must lie in [0, 1]");
    }
    return {Mode::relative, fraction};
  }
  static ThresholdPolicy absolute(double sum) {
    if (!(sum >= 0.0)) throw usage_error("absolute mask threshold must be >= 0");
    return {Mode::absolute, sum};
  }
};

inline const char* to_string(ThresholdPolicy::Mode m) {
  return m == ThresholdPolicy::Mode::relative ? "relative" : "absolute";
}

inline ThresholdPolicy threshold_policy(const std::string& mode, double value) {
  if (mode == "relative") return ThresholdPolicy::relative(value);
  if (mode == "absolute") return ThresholdPolicy::absolute(value);
  throw usage_error("unknown mask threshold mode '" + mode +
                    "' (expected relative|absolute)");
}

// Row sums (length H) for Axis::rows, column sums (length W) for Axis::columns.
inline std::vector<double> directional_sums(const Raster& slice, Axis axis) {
  std::vector<double> sums(axis == Axis::rows ? slice.height : slice.width, 0.0);
  for (std::size_t r = 0; r < slice.height; ++r) {
    for (std::size_t c = 0; c < slice.width; ++c) {
      sums[axis == Axis::rows ? r : c] += slice.at(r, c);
    }
  }
  return sums;
}

inline double resolve_threshold(const std::vector<double>& sums,
                                const ThresholdPolicy& policy) {
  if (policy.mode == ThresholdPolicy::Mode::absolute) return policy.value;
  const double peak = sums.empty() ? 0.0 : *std::max_element(sums.begin(), sums.end());
  return policy.value * peak;
}

namespace detail {

// First index with sum > tau and one past the last such index.
inline bool surpassing_span(const std::vector<double>& sums, double tau,
                            Interval& out) {
  auto first = std::find_if(sums.begin(), sums.end(), [&](double s) { return s > tau; });
  if (first == sums.end()) return false;
  auto last = std::find_if(sums.rbegin(), sums.rend(), [&](double s) { return s > tau; });
  out.lo = static_cast<double>(first - sums.begin());
  out.hi = static_cast<double>(sums.rend() - last);
  return true;
}

}  // namespace detail

// Bounding rectangle of the rows and columns whose sums strictly exceed the
// threshold. The threshold is resolved separately for each axis.
inline Box extract_object_mask(const Raster& slice,
                               const ThresholdPolicy& policy = {}) {
  const auto row_sums = directional_sums(slice, Axis::rows);
  const auto col_sums = directional_sums(slice, Axis::columns);
  Interval rows, cols;
  if (!detail::surpassing_span(row_sums, resolve_threshold(row_sums, policy), rows) ||
      !detail::surpassing_span(col_sums, resolve_threshold(col_sums, policy), cols)) {
    throw data_error("empty object mask");
  }
  return box_from_intervals(rows, cols);
}

}  // namespace scanscribe
