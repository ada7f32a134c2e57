#pragma once

// ROI regressors: the 2D channel-stacked baseline, the 3D fully
// convolutional baseline and the shared-extractor intra-stack attention
// model. Each instance emits two normalised boundary coordinates; a pair of
// instances (left-right and top-bottom) makes one ROI predictor.
//
// Shared extractor, per slice:
//   conv 3x3,w0,/2 + BN + ReLU -> conv 3x3,w1,/2 + BN + ReLU
//   -> residual block (two 3x3,w1) -> conv 3x3,w2,/2 + BN + ReLU
// Attention: GAP -> FC(w2 -> hidden) + ReLU -> FC(hidden -> 1), softmax over
//   the slices of each stack, weighted sum of the slice feature maps.
// Head: two conv 3x3,w2,/2 + BN + ReLU -> GAP -> FC(w2 -> 2).
//
// The stacked baseline runs the extractor on all slices as input channels
// (zero padded to the maximum stack size), keeps its last head stage at
// stride 1 and regresses from the flattened map. The 3D baseline replaces
// every 2D kernel with a 3x3x3 kernel (stride 1 across slices) and pools over
// slices and space before the final projection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "scanscribe/error.hpp"
#include "scanscribe/geometry.hpp"
#include "scanscribe/ops.hpp"
#include "scanscribe/parameters.hpp"
#include "scanscribe/weights_io.hpp"

namespace scanscribe {

enum class ArchitectureKind : std::uint8_t { stacked2d = 0, conv3d = 1, attention = 2 };

inline const char* to_string(ArchitectureKind k) {
  switch (k) {
    case ArchitectureKind::stacked2d: return "stacked2d";
    case ArchitectureKind::conv3d: return "conv3d";
    case ArchitectureKind::attention: return "attention";
  }
  return "unknown";
}

inline ArchitectureKind architecture_from_string(const std::string& s) {
  if (s == "stacked2d") return ArchitectureKind::stacked2d;
  if (s == "conv3d") return ArchitectureKind::conv3d;
  if (s == "attention") return ArchitectureKind::attention;
  throw usage_error("unknown architecture '" + s + "' (expected stacked2d|conv3d|attention)");
}

// Which pair of boundaries an instance regresses.
enum class BoundaryPair : std::uint8_t { left_right = 0, top_bottom = 1 };

inline const char* to_string(BoundaryPair p) {
  return p == BoundaryPair::left_right ? "lr" : "tb";
}

inline BoundaryPair boundary_pair_from_string(const std::string& s) {
  if (s == "lr") return BoundaryPair::left_right;
  if (s == "tb") return BoundaryPair::top_bottom;
  throw usage_error("unknown boundary pair '" + s + "' (expected lr|tb)");
}

struct ArchitectureConfig {
  ArchitectureKind kind = ArchitectureKind::attention;
  std::uint32_t height = 64;
  std::uint32_t width = 64;
  std::uint32_t max_slices = 8;
  std::vector<std::uint32_t> widths{16, 32, 64};
  std::uint32_t attention_hidden = 32;

  void validate() const {
    if (widths.size() != 3) throw usage_error("architecture needs exactly three stage widths");
    if (height < 16 || width < 16) throw usage_error("image size must be at least 16");
    if (max_slices < 1) throw usage_error("max_slices must be >= 1");
    for (auto w : widths)
      if (w == 0) throw usage_error("stage widths must be positive");
    if (attention_hidden == 0) throw usage_error("attention_hidden must be positive");
  }

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

namespace detail {

inline std::size_t same_out(std::size_t in, std::size_t stride) {
  return (in + stride - 1) / stride;
}

}  // namespace detail

template <typename T>
class RoiRegressor {
 public:
  using Var = nn::Var<T>;
  using Group = std::vector<Var>;

  RoiRegressor(ArchitectureConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const auto [w0, w1, w2] = std::tuple{config_.widths[0], config_.widths[1], config_.widths[2]};
    const std::size_t dims = config_.kind == ArchitectureKind::conv3d ? 3 : 2;
    const std::size_t in0 = config_.kind == ArchitectureKind::stacked2d ? config_.max_slices : 1;
    add_conv("ext.conv1", in0, w0, dims, rng);
    add_conv("ext.conv2", w0, w1, dims, rng);
    add_conv("ext.res.a", w1, w1, dims, rng);
    add_conv("ext.res.b", w1, w1, dims, rng);
    add_conv("ext.conv3", w1, w2, dims, rng);
    if (config_.kind == ArchitectureKind::attention) {
      add_linear("attn.fc1", w2, config_.attention_hidden, rng);
      add_linear("attn.fc2", config_.attention_hidden, 1, rng);
    }
    add_conv("head.conv1", w2, w2, dims, rng);
    add_conv("head.conv2", w2, w2, dims, rng);
    add_linear("head.fc", config_.kind == ArchitectureKind::stacked2d ? w2 * flat_area() : w2, 2,
               rng);
  }

  const ArchitectureConfig& config() const { return config_; }
  nn::ParameterSet<T>& parameters() { return params_; }
  const nn::ParameterSet<T>& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.parameter_count(); }

  // Attention weights of each stack from the most recent forward pass.
  const std::vector<std::vector<T>>& last_attention() const { return attention_; }

  // Runs a batch of stacks and returns [B, 2] normalised coordinates.
  Var forward(nn::Tape<T>& tape, std::span<const LocalizerStack* const> stacks, nn::Mode mode) {
    if (stacks.empty()) throw data_error("empty batch");
    for (const auto* s : stacks) check_stack(*s);
    switch (config_.kind) {
      case ArchitectureKind::attention: return forward_attention(tape, stacks, mode);
      case ArchitectureKind::stacked2d: return forward_stacked2d(tape, stacks, mode);
      case ArchitectureKind::conv3d: return forward_conv3d(tape, stacks, mode);
    }
    throw usage_error("unknown architecture");
  }

  Var forward(nn::Tape<T>& tape, const LocalizerStack& stack, nn::Mode mode) {
    const LocalizerStack* one[] = {&stack};
    return forward(tape, one, mode);
  }

  // Convenience inference for a single stack.
  std::pair<T, T> infer(const LocalizerStack& stack) {
    nn::Tape<T> tape;
    const auto y = forward(tape, stack, nn::Mode::infer);
    return {y->value[0], y->value[1]};
  }

  // Slices divided by the stack maximum, as [S, H, W].
  static Tensor<T> normalized_slices(const LocalizerStack& stack) {
    const std::size_t S = stack.size(), H = stack.height(), W = stack.width();
    Tensor<T> out({S, H, W});
    float peak = 0.0f;
    for (const auto& s : stack.slices()) peak = std::max(peak, *std::max_element(s.pixels.begin(), s.pixels.end()));
    const double scale = peak > 0.0f ? 1.0 / peak : 0.0;
    for (std::size_t k = 0; k < S; ++k)
      for (std::size_t i = 0; i < H * W; ++i) out[k * H * W + i] = T(stack[k].pixels[i] * scale);
    return out;
  }

 private:
  std::size_t flat_area() const {
    // Spatial size after four stride-2 stages (extractor 3 + head 1).
    std::size_t h = config_.height, w = config_.width;
    for (int i = 0; i < 4; ++i) {
      h = detail::same_out(h, 2);
      w = detail::same_out(w, 2);
    }
    return h * w;
  }

  void check_stack(const LocalizerStack& s) const {
    if (s.height() != config_.height || s.width() != config_.width) {
      throw data_error("stack size " + std::to_string(s.height()) + "x" +
                       std::to_string(s.width()) + " does not match model input " +
                       std::to_string(config_.height) + "x" + std::to_string(config_.width));
    }
    if (s.size() < 1 || s.size() > config_.max_slices) {
      throw data_error("stack has " + std::to_string(s.size()) + " slices, model accepts 1.." +
                       std::to_string(config_.max_slices));
    }
  }

  void add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t dims,
                std::mt19937_64& rng) {
    Shape shape{out, in, 3, 3};
    if (dims == 3) shape.push_back(3);
    const std::size_t fan_in = in * (dims == 3 ? 27 : 9);
    params_.add(name + ".w", he_uniform(shape, fan_in, rng));
    params_.add(name + ".b", Tensor<T>({out}));
    params_.add(name + ".bn.gamma", Tensor<T>({out}, T(1)));
    params_.add(name + ".bn.beta", Tensor<T>({out}));
    params_.add_buffer(name + ".bn.mean", Tensor<T>({out}));
    params_.add_buffer(name + ".bn.var", Tensor<T>({out}, T(1)));
  }

  void add_linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    params_.add(name + ".w", he_uniform({out, in}, in, rng));
    params_.add(name + ".b", Tensor<T>({out}));
  }

  static Tensor<T> he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / double(fan_in));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.storage()) v = T(u(rng));
    return t;
  }

  // Convolution + batch norm (+ ReLU) over a ragged group; statistics are
  // pooled over every member of the group.
  Group conv_bn(nn::Tape<T>& tape, const Group& xs, const std::string& name, std::size_t stride,
                bool activate, nn::Mode mode) {
    const auto& w = params_.param(name + ".w");
    const auto& b = params_.param(name + ".b");
    Group conv;
    for (const auto& x : xs) {
      if (w->value.rank() == 5) {
        conv.push_back(nn::conv3d(tape, x, w, b, {1, stride, stride}));
      } else {
        conv.push_back(nn::conv2d(tape, x, w, b, stride));
      }
    }
    auto ys = nn::batch_norm<T>(tape, conv, params_.param(name + ".bn.gamma"),
                                params_.param(name + ".bn.beta"), params_.buffer(name + ".bn.mean"),
                                params_.buffer(name + ".bn.var"), mode);
    if (activate) {
      for (auto& y : ys) y = nn::relu(tape, y);
    }
    return ys;
  }

  Group extractor(nn::Tape<T>& tape, Group xs, nn::Mode mode) {
    xs = conv_bn(tape, xs, "ext.conv1", 2, true, mode);
    xs = conv_bn(tape, xs, "ext.conv2", 2, true, mode);
    auto r = conv_bn(tape, xs, "ext.res.a", 1, true, mode);
    r = conv_bn(tape, r, "ext.res.b", 1, false, mode);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = nn::relu(tape, nn::add(tape, r[i], xs[i]));
    return conv_bn(tape, xs, "ext.conv3", 2, true, mode);
  }

  Var linear(nn::Tape<T>& tape, const Var& x, const std::string& name) {
    return nn::fully_connected(tape, x, params_.param(name + ".w"), params_.param(name + ".b"));
  }

  Var forward_attention(nn::Tape<T>& tape, std::span<const LocalizerStack* const> stacks,
                        nn::Mode mode) {
    const std::size_t H = config_.height, W = config_.width;
    std::vector<std::size_t> sizes;
    std::size_t total = 0;
    for (const auto* s : stacks) {
      sizes.push_back(s->size());
      total += s->size();
    }
    Tensor<T> input({total, 1, H, W});
    std::size_t offset = 0;
    for (const auto* s : stacks) {
      const auto t = normalized_slices(*s);
      std::copy(t.data().begin(), t.data().end(), input.raw() + offset);
      offset += t.size();
    }
    const auto features = extractor(tape, {nn::constant(std::move(input))}, mode).front();

    auto h = nn::global_average_pool(tape, features);
    h = nn::relu(tape, linear(tape, h, "attn.fc1"));
    const auto logits = linear(tape, h, "attn.fc2");
    const auto alpha = nn::segment_softmax<T>(tape, logits, sizes);
    attention_.clear();
    std::size_t start = 0;
    for (auto n : sizes) {
      attention_.emplace_back(alpha->value.raw() + start, alpha->value.raw() + start + n);
      start += n;
    }
    const auto pooled = nn::segment_weighted_sum<T>(tape, features, alpha, sizes);

    auto x = conv_bn(tape, {pooled}, "head.conv1", 2, true, mode);
    x = conv_bn(tape, x, "head.conv2", 2, true, mode);
    return linear(tape, nn::global_average_pool(tape, x.front()), "head.fc");
  }

  Var forward_stacked2d(nn::Tape<T>& tape, std::span<const LocalizerStack* const> stacks,
                        nn::Mode mode) {
    const std::size_t H = config_.height, W = config_.width, S = config_.max_slices;
    const std::size_t B = stacks.size();
    Tensor<T> input({B, S, H, W});  // missing slices stay zero
    for (std::size_t b = 0; b < B; ++b) {
      const auto t = normalized_slices(*stacks[b]);
      std::copy(t.data().begin(), t.data().end(), input.raw() + b * S * H * W);
    }
    attention_.clear();
    auto x = extractor(tape, {nn::constant(std::move(input))}, mode);
    x = conv_bn(tape, x, "head.conv1", 2, true, mode);
    x = conv_bn(tape, x, "head.conv2", 1, true, mode);
    const auto flat = nn::reshape(tape, x.front(), {B, x.front()->value.size() / B});
    return linear(tape, flat, "head.fc");
  }

  Var forward_conv3d(nn::Tape<T>& tape, std::span<const LocalizerStack* const> stacks,
                     nn::Mode mode) {
    const std::size_t H = config_.height, W = config_.width;
    Group xs;
    for (const auto* s : stacks) {
      xs.push_back(nn::constant(normalized_slices(*s).reshaped({1, 1, s->size(), H, W})));
    }
    attention_.clear();
    xs = extractor(tape, xs, mode);
    xs = conv_bn(tape, xs, "head.conv1", 2, true, mode);
    xs = conv_bn(tape, xs, "head.conv2", 2, true, mode);
    Group pooled;
    for (const auto& x : xs) pooled.push_back(nn::global_average_pool(tape, x));
    return linear(tape, nn::concat<T>(tape, pooled), "head.fc");
  }

  ArchitectureConfig config_;
  nn::ParameterSet<T> params_;
  std::vector<std::vector<T>> attention_;
};

// Architecture header stored ahead of the tensor table in SSWT files.
inline std::vector<std::uint8_t> encode_architecture(const ArchitectureConfig& c,
                                                     BoundaryPair pair) {
  nn::ByteWriter w;
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.u8(static_cast<std::uint8_t>(pair));
  w.u32(c.height);
  w.u32(c.width);
  w.u32(c.max_slices);
  w.u8(static_cast<std::uint8_t>(c.widths.size()));
  for (auto v : c.widths) w.u32(v);
  w.u32(c.attention_hidden);
  return w.bytes();
}

inline std::pair<ArchitectureConfig, BoundaryPair> decode_architecture(
    const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw data_error("architecture mismatch: weights carry no architecture header");
  nn::ByteReader r(bytes);
  ArchitectureConfig c;
  const auto kind = r.u8();
  if (kind > 2) throw data_error("architecture mismatch: unknown kind " + std::to_string(kind));
  c.kind = static_cast<ArchitectureKind>(kind);
  const auto pair = r.u8();
  if (pair > 1) throw data_error("unknown boundary pair " + std::to_string(pair));
  c.height = r.u32();
  c.width = r.u32();
  c.max_slices = r.u32();
  c.widths.resize(r.u8());
  for (auto& v : c.widths) v = r.u32();
  c.attention_hidden = r.u32();
  return {c, static_cast<BoundaryPair>(pair)};
}

struct ModelWeights {
  ArchitectureConfig config;
  BoundaryPair pair = BoundaryPair::left_right;
  nn::TensorTable tensors;
};

template <typename T>
ModelWeights export_weights(const RoiRegressor<T>& model, BoundaryPair pair) {
  return {model.config(), pair, model.parameters().export_table()};
}

inline void save_model(const std::string& path, const ModelWeights& w) {
  nn::save_weights(path, {encode_architecture(w.config, w.pair), w.tensors});
}

inline ModelWeights load_model_weights(const std::string& path) {
  auto file = nn::load_weights(path);
  auto [config, pair] = decode_architecture(file.header);
  return {std::move(config), pair, std::move(file.tensors)};
}

template <typename T>
RoiRegressor<T> instantiate(const ModelWeights& w) {
  RoiRegressor<T> model(w.config, 0);
  model.parameters().import_table(w.tensors);
  return model;
}

// Loads weights and checks they were trained as `kind` for `pair`.
template <typename T>
RoiRegressor<T> load_model(const std::string& path, ArchitectureKind kind, BoundaryPair pair) {
  const auto w = load_model_weights(path);
  if (w.config.kind != kind) {
    throw data_error(std::string("architecture mismatch: file holds ") + to_string(w.config.kind) +
                     ", expected " + to_string(kind));
  }
  if (w.pair != pair) {
    throw data_error(std::string("boundary pair mismatch: file holds ") + to_string(w.pair) +
                     ", expected " + to_string(pair));
  }
  return instantiate<T>(w);
}

struct RoiPrediction {
  Box box;
  std::array<double, 2> raw_top_bottom{};
  std::array<double, 2> raw_left_right{};
  bool swapped_top_bottom = false;
  bool swapped_left_right = false;
};

// Maps a raw normalised pair to pixel boundaries: scaled by the extent,
// clamped to [0, extent] and reordered if inverted.
inline std::pair<double, double> denormalize_pair(double a, double b, double extent,
                                                  bool& swapped) {
  a = std::clamp(a * extent, 0.0, extent);
  b = std::clamp(b * extent, 0.0, extent);
  swapped = a > b;
  if (swapped) std::swap(a, b);
  return {a, b};
}

inline RoiPrediction roi_from_outputs(std::array<double, 2> tb, std::array<double, 2> lr,
                                      double height, double width) {
  RoiPrediction p;
  p.raw_top_bottom = tb;
  p.raw_left_right = lr;
  const auto [top, bottom] = denormalize_pair(tb[0], tb[1], height, p.swapped_top_bottom);
  const auto [left, right] = denormalize_pair(lr[0], lr[1], width, p.swapped_left_right);
  p.box = {top, bottom, left, right};
  return p;
}

template <typename T>
RoiPrediction predict_roi(const LocalizerStack& stack, RoiRegressor<T>& left_right,
                          RoiRegressor<T>& top_bottom) {
  if (!(left_right.config() == top_bottom.config())) {
    throw data_error("architecture mismatch: left-right and top-bottom instances differ");
  }
  const auto [l, r] = left_right.infer(stack);
  const auto [t, b] = top_bottom.infer(stack);
  return roi_from_outputs({double(t), double(b)}, {double(l), double(r)}, double(stack.height()),
                          double(stack.width()));
}

}  // namespace scanscribe
