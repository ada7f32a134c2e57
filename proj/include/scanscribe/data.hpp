#pragma once

// Synthetic localizer phantoms, flip / cyclic-shift augmentation and split
// assignment.
//
// A phantom stack is a body ellipse holding 2..4 organ ellipsoids sliced at
// the stack's slice positions. The first `designated_organs` organs are
// bright; the rest are dimmer distractors. The label is the bounding box of
// the designated organs over all slices, dilated by a margin and clipped to
// every slice's object mask.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "scanscribe/error.hpp"
#include "scanscribe/geometry.hpp"
#include "scanscribe/masking.hpp"
#include "scanscribe/netpbm.hpp"

namespace scanscribe {

enum class Split : std::uint8_t { train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw data_error("unknown split '" + s + "'");
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct PhantomSpec {
  std::size_t size = 64;
  std::size_t min_slices = 1;
  std::size_t max_slices = 8;
  // Fractions of the image size.
  Range body_radius{0.30, 0.42};
  double body_center_jitter = 0.06;
  Range organ_radius{0.07, 0.15};
  std::size_t min_organs = 2;
  std::size_t max_organs = 4;
  std::size_t designated_organs = 2;
  double roi_margin = 3.0;  // pixels
  float body_intensity = 0.30f;
  float organ_intensity = 0.90f;
  float distractor_intensity = 0.55f;
  float body_noise = 0.04f;
  float background_noise = 0.01f;
  std::uint64_t seed = 0;

  void validate() const {
    if (size < 16) throw usage_error("phantom size must be at least 16");
    if (min_slices < 1 || min_slices > max_slices) throw usage_error("invalid slice-count range");
    if (!(body_radius.lo > 0 && body_radius.lo <= body_radius.hi)) {
      throw usage_error("invalid body radius range");
    }
    if (body_radius.hi + body_center_jitter >= 0.5) {
      throw data_error("infeasible phantom spec: body ellipse exceeds the image");
    }
    if (!(organ_radius.lo > 0 && organ_radius.lo <= organ_radius.hi)) {
      throw usage_error("invalid organ radius range");
    }
    if (organ_radius.hi >= 0.75 * body_radius.lo) {
      throw data_error("infeasible phantom spec: organ larger than body");
    }
    if (designated_organs < 1 || min_organs < designated_organs || min_organs > max_organs) {
      throw usage_error("invalid organ counts");
    }
    if (roi_margin < 0) throw usage_error("roi margin must be >= 0");
  }
};

struct Provenance {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::vector<std::string> lineage;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct DatasetRecord {
  std::string id;
  LocalizerStack stack;
  Box label;
  Split split = Split::train;
  Provenance provenance;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

inline std::string record_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ph%06llu", static_cast<unsigned long long>(index));
  return buf;
}

namespace detail {

struct Ellipse {
  double cy, cx, ry, rx, angle;

  bool contains(double y, double x, double scale) const {
    if (scale <= 0) return false;
    const double c = std::cos(angle), s = std::sin(angle);
    const double dy = y - cy, dx = x - cx;
    const double u = (c * dy + s * dx) / (ry * scale);
    const double v = (-s * dy + c * dx) / (rx * scale);
    return u * u + v * v <= 1.0;
  }
};

struct Organ {
  Ellipse shape;
  double cz, rz;  // centre and half-extent along the slice axis
  bool designated;

  double scale_at(double z) const {
    const double t = (z - cz) / rz;
    return t * t >= 1.0 ? 0.0 : std::sqrt(1.0 - t * t);
  }
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace detail

// Deterministic in (spec, index).
inline DatasetRecord generate_phantom(const PhantomSpec& spec, std::uint64_t index) {
  spec.validate();
  std::seed_seq seq{std::uint32_t(spec.seed), std::uint32_t(spec.seed >> 32),
                    std::uint32_t(index), std::uint32_t(index >> 32)};
  std::mt19937_64 rng(seq);
  const double N = double(spec.size);

  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::size_t S = std::uniform_int_distribution<std::size_t>(spec.min_slices, spec.max_slices)(rng);
    const Axis phase = rng() & 1 ? Axis::columns : Axis::rows;

    detail::Ellipse body{};
    body.cy = N * (0.5 + detail::uniform(rng, -spec.body_center_jitter, spec.body_center_jitter));
    body.cx = N * (0.5 + detail::uniform(rng, -spec.body_center_jitter, spec.body_center_jitter));
    body.ry = N * detail::uniform(rng, spec.body_radius.lo, spec.body_radius.hi);
    body.rx = N * detail::uniform(rng, spec.body_radius.lo, spec.body_radius.hi);
    body.angle = 0.0;
    const double body_taper = detail::uniform(rng, 0.0, 0.08);

    const std::size_t organ_count =
        std::uniform_int_distribution<std::size_t>(spec.min_organs, spec.max_organs)(rng);
    std::vector<detail::Organ> organs;
    for (std::size_t o = 0; o < organ_count; ++o) {
      detail::Organ org{};
      org.designated = o < spec.designated_organs;
      org.shape.ry = N * detail::uniform(rng, spec.organ_radius.lo, spec.organ_radius.hi);
      org.shape.rx = N * detail::uniform(rng, spec.organ_radius.lo, spec.organ_radius.hi);
      org.shape.angle = detail::uniform(rng, 0.0, 3.14159265358979);
      // Keep the organ inside the smallest body cross-section.
      const double reach = std::max(org.shape.ry, org.shape.rx);
      const double span_y = std::max(0.0, body.ry * (1.0 - body_taper) - reach);
      const double span_x = std::max(0.0, body.rx * (1.0 - body_taper) - reach);
      const double t = detail::uniform(rng, 0.0, 2.0 * 3.14159265358979);
      const double rho = std::sqrt(detail::uniform(rng, 0.0, 1.0));
      org.shape.cy = body.cy + rho * span_y * std::sin(t);
      org.shape.cx = body.cx + rho * span_x * std::cos(t);
      const double half = std::max(1.0, double(S) / 2.0);
      org.cz = detail::uniform(rng, -0.25, double(S) - 0.75);
      org.rz = half * detail::uniform(rng, 0.8, 1.6) + 0.5;
      organs.push_back(org);
    }
    // Designated organs are painted last so distractors never cover them.
    std::stable_partition(organs.begin(), organs.end(), [](const auto& o) { return !o.designated; });

    std::uniform_real_distribution<float> bg(0.0f, spec.background_noise);
    std::uniform_real_distribution<float> jitter(-spec.body_noise, spec.body_noise);
    std::vector<Raster> slices;
    double top = N, bottom = 0, left = N, right = 0;
    for (std::size_t k = 0; k < S; ++k) {
      const double z = double(k);
      const double mid = (double(S) - 1.0) / 2.0;
      const double body_scale = 1.0 - body_taper * std::abs(z - mid) / std::max(1.0, mid);
      Raster r(spec.size, spec.size);
      for (std::size_t y = 0; y < spec.size; ++y) {
        for (std::size_t x = 0; x < spec.size; ++x) {
          const double py = double(y) + 0.5, px = double(x) + 0.5;
          float v = bg(rng);
          if (body.contains(py, px, body_scale)) {
            v = spec.body_intensity + jitter(rng);
            for (const auto& o : organs) {
              if (o.shape.contains(py, px, o.scale_at(z))) {
                v = (o.designated ? spec.organ_intensity : spec.distractor_intensity) + jitter(rng);
                if (o.designated) {
                  top = std::min(top, double(y));
                  bottom = std::max(bottom, double(y) + 1);
                  left = std::min(left, double(x));
                  right = std::max(right, double(x) + 1);
                }
              }
            }
          }
          r.at(y, x) = dequantize_u8(quantize_u8(std::clamp(v, 0.0f, 1.0f)));
        }
      }
      slices.push_back(std::move(r));
    }
    if (top >= bottom || left >= right) continue;

    Box label{std::max(0.0, top - spec.roi_margin), std::min(N, bottom + spec.roi_margin),
              std::max(0.0, left - spec.roi_margin), std::min(N, right + spec.roi_margin)};
    for (const auto& s : slices) {
      const Box mask = extract_object_mask(s);
      label = {std::max(label.top, mask.top), std::min(label.bottom, mask.bottom),
               std::max(label.left, mask.left), std::min(label.right, mask.right)};
    }
    if (label.top >= label.bottom || label.left >= label.right) continue;

    DatasetRecord rec;
    rec.id = record_id(index);
    rec.stack = LocalizerStack(std::move(slices), phase, std::max<std::size_t>(spec.max_slices, 1));
    rec.label = label;
    rec.provenance = {spec.seed, index, {"phantom"}};
    return rec;
  }
  throw data_error("phantom generation failed for index " + std::to_string(index));
}

// Mirrors every slice left-right and reflects the label.
inline DatasetRecord augment_flip(const DatasetRecord& rec) {
  std::vector<Raster> slices;
  for (const auto& s : rec.stack.slices()) {
    Raster m(s.height, s.width);
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) m.at(y, x) = s.at(y, s.width - 1 - x);
    slices.push_back(std::move(m));
  }
  DatasetRecord out = rec;
  const double W = double(rec.stack.width());
  out.stack = LocalizerStack(std::move(slices), rec.stack.phase_axis(), rec.stack.size());
  out.label.left = W - rec.label.right;
  out.label.right = W - rec.label.left;
  out.provenance.lineage.push_back("flip");
  return out;
}

struct ShiftResult {
  DatasetRecord record;
  bool accepted = true;
};

// Rotates pixels by (dx columns, dy rows) with wrap-around and moves the
// label by the same amount. A shift that would push a label boundary outside
// the image is rejected and the input is returned unchanged.
inline ShiftResult augment_cyclic_shift(const DatasetRecord& rec, int dx, int dy) {
  const double H = double(rec.stack.height()), W = double(rec.stack.width());
  Box moved = rec.label.translated(dy, dx);
  if (moved.top < 0 || moved.bottom > H || moved.left < 0 || moved.right > W) {
    return {rec, false};
  }
  if (dx == 0 && dy == 0) return {rec, true};
  const auto h = std::int64_t(H), w = std::int64_t(W);
  std::vector<Raster> slices;
  for (const auto& s : rec.stack.slices()) {
    Raster m(s.height, s.width);
    for (std::int64_t y = 0; y < h; ++y) {
      const auto ty = ((y + dy) % h + h) % h;
      for (std::int64_t x = 0; x < w; ++x) {
        const auto tx = ((x + dx) % w + w) % w;
        m.at(ty, tx) = s.at(y, x);
      }
    }
    slices.push_back(std::move(m));
  }
  ShiftResult out{rec, true};
  out.record.stack = LocalizerStack(std::move(slices), rec.stack.phase_axis(), rec.stack.size());
  out.record.label = moved;
  out.record.provenance.lineage.push_back("shift(" + std::to_string(dx) + "," + std::to_string(dy) + ")");
  return out;
}

// Reference shift sets for 512-pixel images, rescaled to `size` and rounded.
inline std::vector<int> scaled_shift_set(const std::vector<int>& reference, std::size_t size) {
  std::vector<int> out;
  for (int v : reference) out.push_back(int(std::lround(double(v) * double(size) / 512.0)));
  return out;
}

inline const std::vector<int>& reference_shifts_x() {
  static const std::vector<int> v{-10, -5, 0, 5, 10};
  return v;
}

inline const std::vector<int>& reference_shifts_y() {
  static const std::vector<int> v{-20, -10, 0, 10, 20};
  return v;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// 70/10/20 train/val/test split ordered by a hash of the record id.
inline void assign_splits(std::vector<DatasetRecord>& records) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ha = fnv1a(records[a].id), hb = fnv1a(records[b].id);
    return ha != hb ? ha < hb : records[a].id < records[b].id;
  });
  const std::size_t n = records.size();
  const std::size_t n_train = n * 7 / 10, n_val = n / 10;
  for (std::size_t r = 0; r < n; ++r) {
    records[order[r]].split = r < n_train ? Split::train : r < n_train + n_val ? Split::val : Split::test;
  }
}

inline std::vector<DatasetRecord> generate_dataset(const PhantomSpec& spec, std::size_t count) {
  spec.validate();
  std::vector<DatasetRecord> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) records.push_back(generate_phantom(spec, i));
  assign_splits(records);
  return records;
}

inline std::vector<const DatasetRecord*> select_split(const std::vector<DatasetRecord>& records,
                                                      Split split) {
  std::vector<const DatasetRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

}  // namespace scanscribe
