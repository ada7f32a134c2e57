#pragma once

// Overlay rendering: a greyscale slice replicated to RGB with box outlines.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "scanscribe/error.hpp"
#include "scanscribe/geometry.hpp"
#include "scanscribe/netpbm.hpp"

namespace scanscribe {

using Rgb = std::array<std::uint8_t, 3>;

inline Rgb color_from_name(const std::string& name) {
  static const std::map<std::string, Rgb> table{
      {"red", {255, 0, 0}},       {"green", {0, 255, 0}},    {"blue", {0, 0, 255}},
      {"yellow", {255, 255, 0}},  {"cyan", {0, 255, 255}},   {"magenta", {255, 0, 255}},
      {"white", {255, 255, 255}}, {"orange", {255, 165, 0}}, {"black", {0, 0, 0}}};
  auto it = table.find(name);
  if (it == table.end()) throw usage_error("bad color name '" + name + "'");
  return it->second;
}

struct OverlayBox {
  std::string name;
  Rgb color{};
  Box box;
};

// Edges sit on rows floor(top) and ceil(bottom) - 1 and on columns
// floor(left) and ceil(right) - 1, clamped to the image.
inline void draw_outline(RgbImage& img, const Box& b, Rgb color) {
  if (img.height == 0 || img.width == 0) return;
  const auto clamp_index = [](double v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(v, 0.0, double(n - 1)));
  };
  const std::size_t r0 = clamp_index(std::floor(b.top), img.height);
  const std::size_t r1 = clamp_index(std::ceil(b.bottom) - 1, img.height);
  const std::size_t c0 = clamp_index(std::floor(b.left), img.width);
  const std::size_t c1 = clamp_index(std::ceil(b.right) - 1, img.width);
  if (r1 < r0 || c1 < c0) return;
  for (std::size_t c = c0; c <= c1; ++c) {
    img.set(r0, c, color);
    img.set(r1, c, color);
  }
  for (std::size_t r = r0; r <= r1; ++r) {
    img.set(r, c0, color);
    img.set(r, c1, color);
  }
}

inline RgbImage render_overlay(const Raster& slice, std::span<const OverlayBox> boxes) {
  RgbImage img(slice.height, slice.width);
  for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
    const auto q = quantize_u8(slice.pixels[i]);
    img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = q;
  }
  for (const auto& b : boxes) draw_outline(img, b.box, b.color);
  return img;
}

}  // namespace scanscribe
