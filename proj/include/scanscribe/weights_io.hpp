#pragma once

// SSWT weights container.
//
// Layout, all integers little-endian:
//   "SSWT"                      4 bytes
//   version                     u32 (currently 1)
//   header length               u32, then that many opaque header bytes
//                               (architecture configuration; may be empty)
//   tensor count                u32
//   per tensor:
//     name length u16, UTF-8 name
//     rank u8, dims u32 each
//     values as IEEE-754 binary32

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "scanscribe/error.hpp"
#include "scanscribe/parameters.hpp"

namespace scanscribe::nn {

inline constexpr char kWeightsMagic[4] = {'S', 'S', 'W', 'T'};
inline constexpr std::uint32_t kWeightsVersion = 1;

struct WeightsFile {
  std::vector<std::uint8_t> header;
  TensorTable tensors;
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw data_error("truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::vector<std::uint8_t> take(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(bytes_.begin() + std::ptrdiff_t(pos_),
                                  bytes_.begin() + std::ptrdiff_t(pos_ + n));
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> encode_weights(const WeightsFile& w) {
  ByteWriter out;
  out.raw(kWeightsMagic, 4);
  out.u32(kWeightsVersion);
  out.u32(std::uint32_t(w.header.size()));
  out.raw(w.header.data(), w.header.size());
  out.u32(std::uint32_t(w.tensors.size()));
  for (const auto& [name, t] : w.tensors) {
    if (name.size() > 0xFFFF) throw usage_error("tensor name too long: " + name);
    if (t.rank() > 0xFF) throw usage_error("tensor rank too large: " + name);
    out.u16(std::uint16_t(name.size()));
    out.raw(name.data(), name.size());
    out.u8(std::uint8_t(t.rank()));
    for (auto d : t.shape()) out.u32(std::uint32_t(d));
    for (float v : t.data()) out.f32(v);
  }
  return out.bytes();
}

inline WeightsFile decode_weights(const std::vector<std::uint8_t>& bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightsMagic, 4) != 0) {
    throw data_error("bad magic");
  }
  in.take(4);
  const auto version = in.u32();
  if (version != kWeightsVersion) {
    throw data_error("unsupported version " + std::to_string(version));
  }
  WeightsFile w;
  w.header = in.take(in.u32());
  const auto count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_bytes = in.take(in.u16());
    std::string name(name_bytes.begin(), name_bytes.end());
    Shape shape(in.u8());
    for (auto& d : shape) d = in.u32();
    const std::size_t n = element_count(shape);
    in.need(n * 4);
    std::vector<float> values(n);
    for (auto& v : values) v = in.f32();
    w.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw data_error("trailing bytes after tensor table");
  return w;
}

inline void save_weights(const std::string& path, const WeightsFile& w) {
  const auto bytes = encode_weights(w);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw data_error("failed writing " + path);
}

inline WeightsFile load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

}  // namespace scanscribe::nn
