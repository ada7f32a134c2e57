#pragma once

// Brute-force simulation of phase-encode wrap-around.
//
// Sampling with a field of view of width W places every source pixel i into
// bin (i - f0) mod W of the window [f0, f0 + W). Everything here works on an
// explicit integer grid and never uses the closed-form minimal-FOV algebra,
// so it can act as the reference for it.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "scanscribe/error.hpp"
#include "scanscribe/geometry.hpp"

namespace scanscribe {

template <typename T>
struct FoldResult {
  std::vector<T> folded;
  // Source indices landing in each bin, in increasing order.
  std::vector<std::vector<std::int64_t>> contributions;
};

inline std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
  const std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

// Folds `signal` (canvas pixels 0..N-1) into the window [f0, f0 + width).
template <typename T>
FoldResult<T> wrap_sum(std::span<const T> signal, std::int64_t f0, std::int64_t width) {
  if (width < 1) throw data_error("fov width must be >= 1");
  if (signal.empty()) throw data_error("signal must be non-empty");
  FoldResult<T> out;
  out.folded.assign(static_cast<std::size_t>(width), T{});
  out.contributions.resize(static_cast<std::size_t>(width));
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const auto bin = static_cast<std::size_t>(
        floor_mod(static_cast<std::int64_t>(i) - f0, width));
    out.folded[bin] += signal[i];
    out.contributions[bin].push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

namespace detail {

inline std::int64_t grid_value(double v) {
  if (!is_integral(v)) throw data_error("oracle requires integer grid");
  return static_cast<std::int64_t>(v);
}

// Object support rasterised onto a canvas that starts at `origin`.
struct Canvas {
  std::int64_t origin = 0;
  std::vector<std::int64_t> occupancy;  // 1 where the object has signal

  std::int64_t local(std::int64_t p) const { return p - origin; }
  bool holds_object(std::int64_t p) const {
    const auto i = local(p);
    return i >= 0 && i < static_cast<std::int64_t>(occupancy.size()) &&
           occupancy[static_cast<std::size_t>(i)] != 0;
  }
};

inline Canvas make_canvas(std::span<const std::int64_t> support, std::int64_t lo,
                          std::int64_t hi) {
  for (auto p : support) {
    lo = std::min(lo, p);
    hi = std::max(hi, p + 1);
  }
  Canvas c;
  c.origin = lo;
  c.occupancy.assign(static_cast<std::size_t>(std::max<std::int64_t>(hi - lo, 1)), 0);
  for (auto p : support) c.occupancy[static_cast<std::size_t>(p - lo)] = 1;
  return c;
}

// Number of object pixels folding into the bin of every pixel in [lo, hi),
// minus the pixel's own contribution. Zero means alias free.
inline bool span_alias_free(const Canvas& canvas, std::int64_t f0, std::int64_t width,
                            std::int64_t lo, std::int64_t hi) {
  const auto fold = wrap_sum<std::int64_t>(canvas.occupancy, canvas.local(f0), width);
  for (std::int64_t p = lo; p < hi; ++p) {
    const auto bin = static_cast<std::size_t>(floor_mod(canvas.local(p) - canvas.local(f0), width));
    const std::int64_t own = canvas.holds_object(p) ? 1 : 0;
    if (fold.folded[bin] != own) return false;
  }
  return true;
}

}  // namespace detail

// Object pixels whose fold bin receives no contribution but their own.
inline std::vector<std::int64_t> brute_alias_free(std::span<const std::int64_t> object_support,
                                                  const Interval& fov) {
  const auto f0 = detail::grid_value(fov.lo);
  const auto width = detail::grid_value(fov.hi) - f0;
  if (width < 1) throw data_error("fov width must be >= 1");
  std::vector<std::int64_t> support(object_support.begin(), object_support.end());
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  if (support.empty()) return {};

  const auto canvas = detail::make_canvas(support, support.front(), support.back() + 1);
  const auto fold = wrap_sum<std::int64_t>(canvas.occupancy, canvas.local(f0), width);
  std::vector<std::int64_t> out;
  for (auto p : support) {
    const auto bin = static_cast<std::size_t>(floor_mod(canvas.local(p) - canvas.local(f0), width));
    if (fold.folded[bin] == 1) out.push_back(p);
  }
  return out;
}

inline std::vector<std::int64_t> integer_pixels(const Interval& iv) {
  std::vector<std::int64_t> out;
  for (auto p = static_cast<std::int64_t>(std::ceil(iv.lo)); static_cast<double>(p) < iv.hi; ++p) {
    out.push_back(p);
  }
  return out;
}

struct OracleVerdicts {
  bool contains_roi = false;
  bool roi_alias_free = false;
  bool is_minimal = false;

  bool all() const noexcept { return contains_roi && roi_alias_free && is_minimal; }
  friend bool operator==(const OracleVerdicts&, const OracleVerdicts&) = default;
};

// Checks a prescription on the integer grid. The phase-encode axis is
// simulated by folding; the readout axis only needs the ROI inside the FOV.
// `is_minimal` holds when the ROI is alias free at the given width and no
// placement one pixel narrower that still contains the ROI keeps it so.
inline OracleVerdicts verify_prescription(const Box& object, const Box& roi, const Box& fov,
                                          Axis phase_axis) {
  if (!is_integral(object) || !is_integral(roi) || !is_integral(fov)) {
    throw data_error("oracle requires integer grid");
  }
  if (!object.valid() || !roi.valid() || !fov.valid()) throw data_error("invalid box");

  OracleVerdicts v;
  v.contains_roi = fov.contains(roi);

  const Interval obj = object.along(phase_axis);
  const Interval r = roi.along(phase_axis);
  const Interval f = fov.along(phase_axis);
  const auto r0 = detail::grid_value(r.lo), r1 = detail::grid_value(r.hi);
  const auto f0 = detail::grid_value(f.lo);
  const auto width = detail::grid_value(f.hi) - f0;
  if (width < 1) return v;

  const auto support = integer_pixels(obj);
  const auto canvas = detail::make_canvas(support, std::min(r0, f0), std::max(r1, f0 + width));

  v.roi_alias_free = detail::span_alias_free(canvas, f0, width, r0, r1);
  if (!v.roi_alias_free) return v;

  const std::int64_t narrower = width - 1;
  v.is_minimal = true;
  if (narrower < 1) return v;
  for (std::int64_t p0 = r1 - narrower; p0 <= r0; ++p0) {
    if (detail::span_alias_free(canvas, p0, narrower, r0, r1)) {
      v.is_minimal = false;
      break;
    }
  }
  return v;
}

}  // namespace scanscribe
