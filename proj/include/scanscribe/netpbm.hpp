#pragma once

// Binary netpbm images: 8-bit P5 greymaps for slices and P6 pixmaps for
// rendered overlays.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "scanscribe/error.hpp"
#include "scanscribe/geometry.hpp"

namespace scanscribe {

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, three bytes per pixel

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}

  void set(std::size_t r, std::size_t c, std::array<std::uint8_t, 3> color) {
    auto* p = &rgb[(r * width + c) * 3];
    p[0] = color[0];
    p[1] = color[1];
    p[2] = color[2];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Intensity in [0, 1] to an 8-bit level; values outside are clamped.
inline std::uint8_t quantize_u8(float v) {
  const double q = std::round(double(v) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

inline float dequantize_u8(std::uint8_t q) { return float(q) / 255.0f; }

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(std::string(what) + ": cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& header,
                             const std::vector<std::uint8_t>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path);
  out.write(header.data(), std::streamsize(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()), std::streamsize(body.size()));
  if (!out) throw data_error("write failed for " + path);
}

// Netpbm header tokens: magic, then integers separated by whitespace, with
// '#' comments running to end of line. Exactly one whitespace byte precedes
// the raster.
struct NetpbmHeader {
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

inline NetpbmHeader parse_netpbm_header(const std::vector<std::uint8_t>& bytes,
                                        const std::string& path) {
  NetpbmHeader h;
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (++digits > 9) throw data_error("malformed netpbm header in " + path);
    }
    if (digits == 0) throw data_error("malformed netpbm header in " + path);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P') throw data_error("not a netpbm file: " + path);
  h.magic = {char(bytes[0]), char(bytes[1])};
  pos = 2;
  h.width = number();
  h.height = number();
  h.maxval = number();
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw data_error("malformed netpbm header in " + path);
  }
  h.data_offset = pos + 1;
  if (h.width == 0 || h.height == 0) throw data_error("zero-sized image in " + path);
  if (h.maxval != 255) throw data_error("only 8-bit netpbm (maxval 255) is supported: " + path);
  return h;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_pgm(const Raster& r) {
  std::ostringstream header;
  header << "P5\n" << r.width << ' ' << r.height << "\n255\n";
  const auto h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  for (float v : r.pixels) out.push_back(quantize_u8(v));
  return out;
}

inline Raster decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& path = "<memory>") {
  const auto h = detail::parse_netpbm_header(bytes, path);
  if (h.magic != "P5") throw data_error("expected binary PGM (P5): " + path);
  if (bytes.size() - h.data_offset != h.width * h.height) {
    throw data_error("truncated or oversized PGM raster: " + path);
  }
  Raster r(h.height, h.width);
  for (std::size_t i = 0; i < r.pixels.size(); ++i) r.pixels[i] = dequantize_u8(bytes[h.data_offset + i]);
  return r;
}

inline void write_pgm(const std::string& path, const Raster& r) {
  const auto bytes = encode_pgm(r);
  detail::write_file_bytes(path, {}, bytes);
}

inline Raster read_pgm(const std::string& path) {
  return decode_pgm(detail::read_file_bytes(path, "read_pgm"), path);
}

inline void write_ppm(const std::string& path, const RgbImage& img) {
  std::ostringstream header;
  header << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  detail::write_file_bytes(path, header.str(), img.rgb);
}

inline RgbImage read_ppm(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path, "read_ppm");
  const auto h = detail::parse_netpbm_header(bytes, path);
  if (h.magic != "P6") throw data_error("expected binary PPM (P6): " + path);
  if (bytes.size() - h.data_offset != h.width * h.height * 3) {
    throw data_error("truncated or oversized PPM raster: " + path);
  }
  RgbImage img(h.height, h.width);
  std::copy(bytes.begin() + std::ptrdiff_t(h.data_offset), bytes.end(), img.rgb.begin());
  return img;
}

}  // namespace scanscribe
