#pragma once

// Smallest alias-free field of view for a given object mask and ROI.
//
// Along the phase-encode axis the object of width y is replicated at +-W.
// With margins a_lo = roi.lo - object.lo and a_hi = object.hi - roi.hi,
// a = min(a_lo, a_hi), the replicas stay clear of the ROI iff W >= y - a.
// The FOV must also hold the ROI, so W = max(y - a, roi width). Margins may
// be negative when the ROI reaches past the object; the same bound holds.
//
// Placement puts the FOV edge on the tighter side halfway between the object
// edge and the ROI edge (a/2 in from the object edge), then clamps into
// [roi.hi - W, roi.lo] so the ROI stays inside. The readout axis is not
// subject to wrap-around and takes the ROI interval unchanged.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "scanscribe/alias_sim.hpp"
#include "scanscribe/error.hpp"
#include "scanscribe/geometry.hpp"
#include "scanscribe/masking.hpp"

namespace scanscribe {

struct FovInputs1D {
  Interval object;
  Interval roi;

  double object_width() const noexcept { return object.length(); }
  double margin_lo() const noexcept { return roi.lo - object.lo; }
  double margin_hi() const noexcept { return object.hi - roi.hi; }
  double min_margin() const noexcept { return std::min(margin_lo(), margin_hi()); }
  double max_margin() const noexcept { return std::max(margin_lo(), margin_hi()); }
};

inline double smallest_fov_width(const FovInputs1D& in) {
  if (!(in.object.length() > 0.0)) throw data_error("degenerate object mask");
  if (in.roi.hi < in.roi.lo) throw data_error("invalid roi interval");
  return std::max(in.object_width() - in.min_margin(), in.roi.length());
}

inline Interval smallest_fov_1d(const FovInputs1D& in) {
  const double width = smallest_fov_width(in);
  const double a = in.min_margin();
  // Ties go to the low side; the result is symmetric either way.
  double lo = in.margin_lo() <= in.margin_hi() ? in.object.lo + a / 2.0
                                               : in.object.hi - a / 2.0 - width;
  lo = std::clamp(lo, in.roi.hi - width, in.roi.lo);
  return {lo, lo + width};
}

// Pixels of the object receiving no folded signal from elsewhere in the
// object: [object.hi - W, object.lo + W) clipped to the object. Empty when
// 2W <= y.
inline Interval alias_free_interval(const Interval& object, double fov_width) {
  if (!(fov_width > 0.0)) throw data_error("fov width must be positive");
  const double lo = std::max(object.lo, object.hi - fov_width);
  const double hi = std::min(object.hi, object.lo + fov_width);
  if (hi <= lo) {
    const double mid = 0.5 * (object.lo + object.hi);
    return {mid, mid};
  }
  return {lo, hi};
}

inline Box prescribe_slice(const Box& mask, const Box& roi, Axis phase_axis) {
  if (!roi.valid()) throw data_error("invalid roi box");
  const Interval phase = smallest_fov_1d({mask.along(phase_axis), roi.along(phase_axis)});
  Box fov = with_interval(roi, phase_axis, phase);
  return fov;
}

// Runs the integer-grid oracle after scaling every coordinate by the smallest
// power of two (up to 8) that puts all of them on the grid. Returns nothing
// for off-grid inputs.
inline std::optional<OracleVerdicts> oracle_verdicts(const Box& object, const Box& roi,
                                                     const Box& fov, Axis phase_axis) {
  for (double scale : {1.0, 2.0, 4.0, 8.0}) {
    auto scaled = [scale](const Box& b) {
      return Box{b.top * scale, b.bottom * scale, b.left * scale, b.right * scale};
    };
    const Box o = scaled(object), r = scaled(roi), f = scaled(fov);
    if (is_integral(o) && is_integral(r) && is_integral(f)) {
      return verify_prescription(o, r, f, phase_axis);
    }
  }
  return std::nullopt;
}

struct SlicePrescription {
  std::size_t slice_index = 0;
  bool skipped = false;  // no object found in this slice
  Box mask;
  Box fov;
  double minimal_width = 0.0;  // phase-encode width of this slice's FOV
  double readout_width = 0.0;
  Interval alias_free;
  std::optional<OracleVerdicts> verdicts;
};

struct PrescriptionReport {
  Box fov;
  Box roi;
  Axis phase_axis = Axis::rows;
  std::vector<SlicePrescription> slices;

  std::size_t skipped_count() const {
    return static_cast<std::size_t>(
        std::count_if(slices.begin(), slices.end(), [](const auto& s) { return s.skipped; }));
  }
};

inline PrescriptionReport prescribe_stack(const LocalizerStack& stack, const Box& roi,
                                          const ThresholdPolicy& policy = {}) {
  if (stack.size() == 0) throw data_error("empty stack");
  if (!roi.valid()) throw data_error("invalid roi box");
  const Axis axis = stack.phase_axis();

  PrescriptionReport report;
  report.roi = roi;
  report.phase_axis = axis;
  std::vector<Box> fovs;
  for (std::size_t k = 0; k < stack.size(); ++k) {
    SlicePrescription entry;
    entry.slice_index = k;
    try {
      entry.mask = extract_object_mask(stack[k], policy);
    } catch (const Error& e) {
      if (std::string(e.what()) != "empty object mask") throw;
      entry.skipped = true;
      report.slices.push_back(entry);
      continue;
    }
    entry.fov = prescribe_slice(entry.mask, roi, axis);
    entry.minimal_width = entry.fov.along(axis).length();
    entry.readout_width = entry.fov.along(other_axis(axis)).length();
    entry.alias_free = alias_free_interval(entry.mask.along(axis), entry.minimal_width);
    entry.verdicts = oracle_verdicts(entry.mask, roi, entry.fov, axis);
    fovs.push_back(entry.fov);
    report.slices.push_back(entry);
  }
  if (fovs.empty()) throw data_error("no object found");
  report.fov = box_union(fovs);
  return report;
}

}  // namespace scanscribe
