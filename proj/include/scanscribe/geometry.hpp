#pragma once

// Coordinate conventions and rectangle algebra.
//
// All boundaries are continuous pixel coordinates with the origin at the
// top-left corner of the image: pixel row i spans [i, i+1). A box covering
// rows 2..5 inclusive therefore has top = 2 and bottom = 6.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "scanscribe/error.hpp"

namespace scanscribe {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  constexpr double length() const noexcept { return hi - lo; }
  constexpr bool empty() const noexcept { return hi <= lo; }
  constexpr bool contains(const Interval& o) const noexcept {
    return lo <= o.lo && o.hi <= hi;
  }
  constexpr Interval shifted(double d) const noexcept { return {lo + d, hi + d}; }

  friend constexpr bool operator==(const Interval&, const Interval&) = default;
};

inline Interval make_interval(double lo, double hi) {
  if (!(lo <= hi)) {
    throw data_error("invalid interval: lo " + std::to_string(lo) + " > hi " +
                     std::to_string(hi));
  }
  return {lo, hi};
}

inline std::ostream& operator<<(std::ostream& os, const Interval& iv) {
  return os << '[' << iv.lo << ", " << iv.hi << ')';
}

// Which image axis is phase encoded. `rows` means the phase-encode direction
// runs up-down, i.e. it is measured by the top/bottom coordinates.
enum class Axis { rows, columns };

inline const char* to_string(Axis axis) {
  return axis == Axis::rows ? "rows" : "columns";
}

inline Axis axis_from_string(const std::string& s) {
  if (s == "rows") return Axis::rows;
  if (s == "columns" || s == "cols") return Axis::columns;
  throw usage_error("unknown axis '" + s + "' (expected rows|columns)");
}

struct Box {
  double top = 0.0;
  double bottom = 0.0;
  double left = 0.0;
  double right = 0.0;

  constexpr double height() const noexcept { return bottom - top; }
  constexpr double width() const noexcept { return right - left; }
  constexpr double area() const noexcept { return height() * width(); }
  constexpr bool valid() const noexcept { return top <= bottom && left <= right; }

  constexpr Interval rows() const noexcept { return {top, bottom}; }
  constexpr Interval columns() const noexcept { return {left, right}; }
  constexpr Interval along(Axis axis) const noexcept {
    return axis == Axis::rows ? rows() : columns();
  }

  constexpr bool contains(const Box& o) const noexcept {
    return top <= o.top && o.bottom <= bottom && left <= o.left && o.right <= right;
  }

  constexpr Box translated(double dy, double dx) const noexcept {
    return {top + dy, bottom + dy, left + dx, right + dx};
  }

  friend constexpr bool operator==(const Box&, const Box&) = default;
};

inline Box make_box(double top, double bottom, double left, double right) {
  Box b{top, bottom, left, right};
  if (!b.valid()) {
    throw data_error("invalid box: requires top <= bottom and left <= right");
  }
  return b;
}

inline Box box_from_intervals(Interval rows, Interval cols) {
  return {rows.lo, rows.hi, cols.lo, cols.hi};
}

// Replaces the interval of `box` along `axis`.
inline Box with_interval(Box box, Axis axis, Interval iv) {
  if (axis == Axis::rows) {
    box.top = iv.lo;
    box.bottom = iv.hi;
  } else {
    box.left = iv.lo;
    box.right = iv.hi;
  }
  return box;
}

inline Axis other_axis(Axis axis) {
  return axis == Axis::rows ? Axis::columns : Axis::rows;
}

inline std::ostream& operator<<(std::ostream& os, const Box& b) {
  return os << "Box(" << b.top << ", " << b.bottom << ", " << b.left << ", "
            << b.right << ')';
}

inline double intersection_area(const Box& a, const Box& b) {
  const double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
  return (h > 0.0 && w > 0.0) ? h * w : 0.0;
}

// Area intersection over union. Zero-area unions give 0.
inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

// Mean absolute distance between corresponding boundary lines, in pixels.
inline double boundary_error(const Box& a, const Box& b) {
  return (std::abs(a.top - b.top) + std::abs(a.bottom - b.bottom) +
          std::abs(a.left - b.left) + std::abs(a.right - b.right)) /
         4.0;
}

// Smallest axis-aligned box containing every input.
inline Box box_union(std::span<const Box> boxes) {
  if (boxes.empty()) throw data_error("empty stack");
  Box out = boxes.front();
  for (const Box& b : boxes.subspan(1)) {
    out.top = std::min(out.top, b.top);
    out.bottom = std::max(out.bottom, b.bottom);
    out.left = std::min(out.left, b.left);
    out.right = std::max(out.right, b.right);
  }
  return out;
}

inline Box box_union(std::initializer_list<Box> boxes) {
  return box_union(std::span<const Box>(boxes.begin(), boxes.size()));
}

inline bool is_integral(double v) { return std::floor(v) == v; }

inline bool is_integral(const Box& b) {
  return is_integral(b.top) && is_integral(b.bottom) && is_integral(b.left) &&
         is_integral(b.right);
}

// A single-channel image, row-major.
struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Raster() = default;
  Raster(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  float at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

// An ordered stack of equally sized slices plus phase-encode metadata.
class LocalizerStack {
 public:
  static constexpr std::size_t kDefaultMaxSlices = 40;

  LocalizerStack() = default;
  LocalizerStack(std::vector<Raster> slices, Axis phase_axis,
                 std::size_t max_slices = kDefaultMaxSlices)
      : slices_(std::move(slices)), phase_axis_(phase_axis) {
    if (slices_.empty()) throw data_error("empty stack");
    if (slices_.size() > max_slices) {
      throw data_error("stack has " + std::to_string(slices_.size()) +
                       " slices, maximum is " + std::to_string(max_slices));
    }
    const auto h = slices_.front().height;
    const auto w = slices_.front().width;
    if (h == 0 || w == 0) throw data_error("slice has zero extent");
    for (const auto& s : slices_) {
      if (s.height != h || s.width != w || s.pixels.size() != h * w) {
        throw data_error("slices in a stack must share one size");
      }
      for (float v : s.pixels) {
        if (!(v >= 0.0f) || !std::isfinite(v)) {
          throw data_error("slice intensities must be finite and non-negative");
        }
      }
    }
  }

  std::size_t size() const noexcept { return slices_.size(); }
  std::size_t height() const noexcept { return slices_.empty() ? 0 : slices_[0].height; }
  std::size_t width() const noexcept { return slices_.empty() ? 0 : slices_[0].width; }
  Axis phase_axis() const noexcept { return phase_axis_; }
  const std::vector<Raster>& slices() const noexcept { return slices_; }
  const Raster& operator[](std::size_t i) const { return slices_[i]; }

  friend bool operator==(const LocalizerStack&, const LocalizerStack&) = default;

 private:
  std::vector<Raster> slices_;
  Axis phase_axis_ = Axis::rows;
};

}  // namespace scanscribe
