#pragma once

// Differentiable layers for the ROI regressors: convolution (2D and 3D,
// cross-correlation), batch normalisation, fully connected, activations,
// pooling, segment-wise attention helpers and the squared-error loss.

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "scanscribe/autograd.hpp"
#include "scanscribe/error.hpp"
#include "scanscribe/tensor.hpp"

namespace scanscribe::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Padding { same, valid };
enum class Mode { train, infer };

namespace detail {

struct AxisGeometry {
  std::size_t in = 1, kernel = 1, stride = 1, out = 1, pad_before = 0;
};

inline AxisGeometry axis_geometry(std::size_t in, std::size_t kernel, std::size_t stride,
                                  Padding padding) {
  if (stride < 1) throw usage_error("convolution stride must be >= 1");
  AxisGeometry g{in, kernel, stride, 0, 0};
  if (padding == Padding::same) {
    g.out = (in + stride - 1) / stride;
    const std::size_t needed = (g.out - 1) * stride + kernel;
    g.pad_before = needed > in ? (needed - in) / 2 : 0;
  } else {
    if (in < kernel) throw data_error("valid convolution: kernel larger than input");
    g.out = (in - kernel) / stride + 1;
  }
  return g;
}

struct ConvGeometry {
  std::size_t batch = 0, in_channels = 0, out_channels = 0;
  AxisGeometry d, h, w;

  std::size_t in_plane() const { return d.in * h.in * w.in; }
  std::size_t out_plane() const { return d.out * h.out * w.out; }
  std::size_t patch() const { return in_channels * d.kernel * h.kernel * w.kernel; }
};

// cols has shape [patch, out_plane].
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t P = g.out_plane();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* xc = x + c * g.in_plane();
    for (std::size_t a = 0; a < g.d.kernel; ++a) {
      for (std::size_t b = 0; b < g.h.kernel; ++b) {
        for (std::size_t e = 0; e < g.w.kernel; ++e, ++row) {
          T* dst = cols + row * P;
          for (std::size_t od = 0; od < g.d.out; ++od) {
            const auto id = static_cast<std::ptrdiff_t>(od * g.d.stride + a) -
                            static_cast<std::ptrdiff_t>(g.d.pad_before);
            for (std::size_t oh = 0; oh < g.h.out; ++oh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * g.h.stride + b) -
                              static_cast<std::ptrdiff_t>(g.h.pad_before);
              T* out = dst + (od * g.h.out + oh) * g.w.out;
              if (id < 0 || id >= static_cast<std::ptrdiff_t>(g.d.in) || ih < 0 ||
                  ih >= static_cast<std::ptrdiff_t>(g.h.in)) {
                std::fill(out, out + g.w.out, T{});
                continue;
              }
              const T* src = xc + (static_cast<std::size_t>(id) * g.h.in +
                                   static_cast<std::size_t>(ih)) * g.w.in;
              for (std::size_t ow = 0; ow < g.w.out; ++ow) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.w.stride + e) -
                                static_cast<std::ptrdiff_t>(g.w.pad_before);
                out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w.in))
                              ? T{}
                              : src[iw];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t P = g.out_plane();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* xc = dx + c * g.in_plane();
    for (std::size_t a = 0; a < g.d.kernel; ++a) {
      for (std::size_t b = 0; b < g.h.kernel; ++b) {
        for (std::size_t e = 0; e < g.w.kernel; ++e, ++row) {
          const T* src = cols + row * P;
          for (std::size_t od = 0; od < g.d.out; ++od) {
            const auto id = static_cast<std::ptrdiff_t>(od * g.d.stride + a) -
                            static_cast<std::ptrdiff_t>(g.d.pad_before);
            if (id < 0 || id >= static_cast<std::ptrdiff_t>(g.d.in)) continue;
            for (std::size_t oh = 0; oh < g.h.out; ++oh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * g.h.stride + b) -
                              static_cast<std::ptrdiff_t>(g.h.pad_before);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h.in)) continue;
              T* dst = xc + (static_cast<std::size_t>(id) * g.h.in + static_cast<std::size_t>(ih)) *
                                g.w.in;
              const T* in = src + (od * g.h.out + oh) * g.w.out;
              for (std::size_t ow = 0; ow < g.w.out; ++ow) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.w.stride + e) -
                                static_cast<std::ptrdiff_t>(g.w.pad_before);
                if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w.in)) dst[iw] += in[ow];
              }
            }
          }
        }
      }
    }
  }
}

// x: [N, C, D, H, W] viewed through `g`; w: [O, patch]; b: [O].
template <typename T>
Var<T> convolution_impl(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
                        const ConvGeometry& g, Shape out_shape) {
  const std::size_t P = g.out_plane(), K = g.patch(), O = g.out_channels;
  Tensor<T> out(std::move(out_shape));
  AlignedVector<T> cols(g.batch * K * P);
  Eigen::Map<const RowMatrix<T>> wm(w->value.raw(), O, K);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(b->value.raw(), O);
  for (std::size_t n = 0; n < g.batch; ++n) {
    T* cn = cols.data() + n * K * P;
    im2col(x->value.raw() + n * g.in_channels * g.in_plane(), g, cn);
    Eigen::Map<const RowMatrix<T>> cm(cn, K, P);
    Eigen::Map<RowMatrix<T>> om(out.raw() + n * O * P, O, P);
    om.noalias() = wm * cm;
    om.colwise() += bv;
  }

  const bool needs = x->requires_grad || w->requires_grad || b->requires_grad;
  auto y = tape.output(std::move(out), needs);
  if (!needs) return y;
  tape.on_backward([x, w, b, y, g, cols = std::move(cols)] {
    if (y->grad.empty()) return;
    const std::size_t P = g.out_plane(), K = g.patch(), O = g.out_channels;
    Eigen::Map<const RowMatrix<T>> wm(w->value.raw(), O, K);
    AlignedVector<T> dcols(x->requires_grad ? K * P : 0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      Eigen::Map<const RowMatrix<T>> dy(y->grad.raw() + n * O * P, O, P);
      Eigen::Map<const RowMatrix<T>> cm(cols.data() + n * K * P, K, P);
      if (w->requires_grad) {
        Eigen::Map<RowMatrix<T>> dw(w->grad_buffer().raw(), O, K);
        dw.noalias() += dy * cm.transpose();
      }
      if (b->requires_grad) {
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(b->grad_buffer().raw(), O);
        db += dy.rowwise().sum();
      }
      if (x->requires_grad) {
        Eigen::Map<RowMatrix<T>> dc(dcols.data(), K, P);
        dc.noalias() = wm.transpose() * dy;
        col2im_add(dcols.data(), g, x->grad_buffer().raw() + n * g.in_channels * g.in_plane());
      }
    }
  });
  return y;
}

}  // namespace detail

// 2D cross-correlation. x: [N, C, H, W], w: [O, C, kh, kw], b: [O].
template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
              std::size_t stride = 1, Padding padding = Padding::same) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || b->value.size() != ws[0]) {
    throw data_error("conv2d: shape mismatch input " + shape_string(xs) + " kernel " +
                     shape_string(ws));
  }
  detail::ConvGeometry g;
  g.batch = xs[0];
  g.in_channels = xs[1];
  g.out_channels = ws[0];
  g.d = detail::axis_geometry(1, 1, 1, Padding::valid);
  g.h = detail::axis_geometry(xs[2], ws[2], stride, padding);
  g.w = detail::axis_geometry(xs[3], ws[3], stride, padding);
  return detail::convolution_impl(tape, x, w, b, g, {g.batch, g.out_channels, g.h.out, g.w.out});
}

// 3D cross-correlation. x: [N, C, D, H, W], w: [O, C, kd, kh, kw], b: [O].
template <typename T>
Var<T> conv3d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
              std::array<std::size_t, 3> stride = {1, 1, 1}, Padding padding = Padding::same) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 5 || ws.size() != 5 || ws[1] != xs[1] || b->value.size() != ws[0]) {
    throw data_error("conv3d: shape mismatch input " + shape_string(xs) + " kernel " +
                     shape_string(ws));
  }
  detail::ConvGeometry g;
  g.batch = xs[0];
  g.in_channels = xs[1];
  g.out_channels = ws[0];
  g.d = detail::axis_geometry(xs[2], ws[2], stride[0], padding);
  g.h = detail::axis_geometry(xs[3], ws[3], stride[1], padding);
  g.w = detail::axis_geometry(xs[4], ws[4], stride[2], padding);
  return detail::convolution_impl(tape, x, w, b, g,
                                  {g.batch, g.out_channels, g.d.out, g.h.out, g.w.out});
}

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-channel normalisation (channel axis 1) with statistics pooled over every
// other axis of every input. Inputs may differ in batch and spatial extent.
// Train mode updates the running statistics in place.
template <typename T>
std::vector<Var<T>> batch_norm(Tape<T>& tape, std::span<const Var<T>> xs, const Var<T>& gamma,
                               const Var<T>& beta, Tensor<T>& running_mean,
                               Tensor<T>& running_var, Mode mode,
                               BatchNormOptions opt = {}) {
  if (xs.empty()) throw data_error("batch_norm: no inputs");
  const std::size_t C = gamma->value.size();
  if (beta->value.size() != C || running_mean.size() != C || running_var.size() != C) {
    throw data_error("batch_norm: parameter length mismatch");
  }
  struct Layout {
    std::size_t outer, inner;
  };
  std::vector<Layout> layout;
  std::size_t count = 0;
  for (const auto& x : xs) {
    const auto& s = x->value.shape();
    if (s.size() < 2 || s[1] != C) {
      throw data_error("batch_norm: channel mismatch for input " + shape_string(s) +
                       ", expected " + std::to_string(C) + " channels");
    }
    const std::size_t inner = element_count(Shape(s.begin() + 2, s.end()));
    layout.push_back({s[0], inner});
    count += s[0] * inner;
  }
  if (count == 0) throw data_error("batch_norm: zero elements per channel");

  std::vector<double> mean(C, 0.0), inv_std(C, 0.0);
  if (mode == Mode::train) {
    std::vector<double> sq(C, 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const T* p = xs[i]->value.raw();
      for (std::size_t n = 0; n < layout[i].outer; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const T* q = p + (n * C + c) * layout[i].inner;
          double s1 = 0, s2 = 0;
          for (std::size_t k = 0; k < layout[i].inner; ++k) {
            s1 += q[k];
            s2 += double(q[k]) * q[k];
          }
          mean[c] += s1;
          sq[c] += s2;
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] /= double(count);
      const double var = std::max(sq[c] / double(count) - mean[c] * mean[c], 0.0);
      inv_std[c] = 1.0 / std::sqrt(var + opt.eps);
      const double unbiased = count > 1 ? var * double(count) / double(count - 1) : var;
      running_mean[c] = T((1 - opt.momentum) * running_mean[c] + opt.momentum * mean[c]);
      running_var[c] = T((1 - opt.momentum) * running_var[c] + opt.momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(double(running_var[c]) + opt.eps);
    }
  }

  const bool needs = gamma->requires_grad || beta->requires_grad ||
                     std::any_of(xs.begin(), xs.end(), [](const auto& x) { return x->requires_grad; });
  std::vector<Var<T>> outs;
  std::vector<Tensor<T>> normalized;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Tensor<T> xhat(xs[i]->value.shape());
    Tensor<T> y(xs[i]->value.shape());
    const T* p = xs[i]->value.raw();
    for (std::size_t n = 0; n < layout[i].outer; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t off = (n * C + c) * layout[i].inner;
        const T g = gamma->value[c], bt = beta->value[c];
        for (std::size_t k = 0; k < layout[i].inner; ++k) {
          const T h = T((p[off + k] - mean[c]) * inv_std[c]);
          xhat[off + k] = h;
          y[off + k] = g * h + bt;
        }
      }
    outs.push_back(tape.output(std::move(y), needs));
    normalized.push_back(std::move(xhat));
  }
  if (!needs) return outs;

  std::vector<Var<T>> inputs(xs.begin(), xs.end());
  tape.on_backward([inputs, outs, gamma, beta, layout, normalized = std::move(normalized),
                    inv_std, count, C, mode] {
    std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
    for (std::size_t i = 0; i < outs.size(); ++i) {
      if (outs[i]->grad.empty()) continue;
      const T* dy = outs[i]->grad.raw();
      for (std::size_t n = 0; n < layout[i].outer; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = (n * C + c) * layout[i].inner;
          double s1 = 0, s2 = 0;
          for (std::size_t k = 0; k < layout[i].inner; ++k) {
            s1 += dy[off + k];
            s2 += double(dy[off + k]) * normalized[i][off + k];
          }
          sum_dy[c] += s1;
          sum_dy_xhat[c] += s2;
        }
    }
    if (gamma->requires_grad) {
      auto& dg = gamma->grad_buffer();
      for (std::size_t c = 0; c < C; ++c) dg[c] += T(sum_dy_xhat[c]);
    }
    if (beta->requires_grad) {
      auto& db = beta->grad_buffer();
      for (std::size_t c = 0; c < C; ++c) db[c] += T(sum_dy[c]);
    }
    const double m = double(count);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const bool has_dy = !outs[i]->grad.empty();
      // In train mode the pooled statistics couple every input to every output.
      if (!inputs[i]->requires_grad || (mode == Mode::infer && !has_dy)) continue;
      auto& dx = inputs[i]->grad_buffer();
      for (std::size_t n = 0; n < layout[i].outer; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = (n * C + c) * layout[i].inner;
          const double g = double(gamma->value[c]) * inv_std[c];
          for (std::size_t k = 0; k < layout[i].inner; ++k) {
            const double dyk = has_dy ? double(outs[i]->grad[off + k]) : 0.0;
            if (mode == Mode::train) {
              dx[off + k] += T(g / m *
                               (m * dyk - sum_dy[c] - normalized[i][off + k] * sum_dy_xhat[c]));
            } else {
              dx[off + k] += T(g * dyk);
            }
          }
        }
    }
  });
  return outs;
}

template <typename T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode,
                  BatchNormOptions opt = {}) {
  const std::array<Var<T>, 1> xs{x};
  return batch_norm<T>(tape, xs, gamma, beta, running_mean, running_var, mode, opt).front();
}

// y = x W^T + b with x: [N, F], W: [O, F], b: [O].
template <typename T>
Var<T> fully_connected(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1] || b->value.size() != ws[0]) {
    throw data_error("fully_connected: shape mismatch input " + shape_string(xs) +
                     " weights " + shape_string(ws));
  }
  const std::size_t N = xs[0], F = xs[1], O = ws[0];
  Tensor<T> out({N, O});
  Eigen::Map<const RowMatrix<T>> xm(x->value.raw(), N, F);
  Eigen::Map<const RowMatrix<T>> wm(w->value.raw(), O, F);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(b->value.raw(), O);
  Eigen::Map<RowMatrix<T>> om(out.raw(), N, O);
  om.noalias() = xm * wm.transpose();
  om.rowwise() += bv;

  const bool needs = x->requires_grad || w->requires_grad || b->requires_grad;
  auto y = tape.output(std::move(out), needs);
  if (!needs) return y;
  tape.on_backward([x, w, b, y, N, F, O] {
    if (y->grad.empty()) return;
    Eigen::Map<const RowMatrix<T>> dy(y->grad.raw(), N, O);
    if (w->requires_grad) {
      Eigen::Map<const RowMatrix<T>> xm(x->value.raw(), N, F);
      Eigen::Map<RowMatrix<T>> dw(w->grad_buffer().raw(), O, F);
      dw.noalias() += dy.transpose() * xm;
    }
    if (b->requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(b->grad_buffer().raw(), O);
      db += dy.colwise().sum();
    }
    if (x->requires_grad) {
      Eigen::Map<const RowMatrix<T>> wm(w->value.raw(), O, F);
      Eigen::Map<RowMatrix<T>> dx(x->grad_buffer().raw(), N, F);
      dx.noalias() += dy * wm;
    }
  });
  return y;
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T{} ? x->value[i] : T{};
  auto y = tape.output(std::move(out), x->requires_grad);
  if (x->requires_grad) {
    tape.on_backward([x, y] {
      if (y->grad.empty()) return;
      auto& dx = x->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (x->value[i] > T{}) dx[i] += y->grad[i];
    });
  }
  return y;
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  const bool needs = a->requires_grad || b->requires_grad;
  auto y = tape.output(std::move(out), needs);
  if (needs) {
    tape.on_backward([a, b, y] {
      if (y->grad.empty()) return;
      for (const auto* v : {&a, &b}) {
        if (!(*v)->requires_grad) continue;
        auto& d = (*v)->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += y->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& x, Shape shape) {
  auto y = tape.output(x->value.reshaped(std::move(shape)), x->requires_grad);
  if (x->requires_grad) {
    tape.on_backward([x, y] {
      if (y->grad.empty()) return;
      auto& dx = x->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += y->grad[i];
    });
  }
  return y;
}

// [N, C, ...] -> [N, C], mean over everything after the channel axis.
template <typename T>
Var<T> global_average_pool(Tape<T>& tape, const Var<T>& x) {
  const auto& s = x->value.shape();
  if (s.size() < 3) throw data_error("global_average_pool needs spatial axes, got " + shape_string(s));
  const std::size_t N = s[0], C = s[1], inner = element_count(Shape(s.begin() + 2, s.end()));
  Tensor<T> out({N, C});
  for (std::size_t i = 0; i < N * C; ++i) {
    double acc = 0;
    for (std::size_t k = 0; k < inner; ++k) acc += x->value[i * inner + k];
    out[i] = T(acc / double(inner));
  }
  auto y = tape.output(std::move(out), x->requires_grad);
  if (x->requires_grad) {
    tape.on_backward([x, y, N, C, inner] {
      if (y->grad.empty()) return;
      auto& dx = x->grad_buffer();
      for (std::size_t i = 0; i < N * C; ++i) {
        const T g = y->grad[i] / T(inner);
        for (std::size_t k = 0; k < inner; ++k) dx[i * inner + k] += g;
      }
    });
  }
  return y;
}

// Concatenates along axis 0; trailing shapes must agree.
template <typename T>
Var<T> concat(Tape<T>& tape, std::span<const Var<T>> parts) {
  if (parts.empty()) throw data_error("concat: no inputs");
  Shape shape = parts.front()->value.shape();
  shape[0] = 0;
  bool needs = false;
  for (const auto& p : parts) {
    const auto& s = p->value.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw data_error("concat: trailing shape mismatch " + shape_string(s));
    }
    shape[0] += s[0];
    needs = needs || p->requires_grad;
  }
  Tensor<T> out(shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data().begin(), p->value.data().end(), out.raw() + offset);
    offset += p->value.size();
  }
  auto y = tape.output(std::move(out), needs);
  if (needs) {
    std::vector<Var<T>> inputs(parts.begin(), parts.end());
    tape.on_backward([inputs, y] {
      if (y->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& p : inputs) {
        if (p->requires_grad) {
          auto& d = p->grad_buffer();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += y->grad[offset + i];
        }
        offset += p->value.size();
      }
    });
  }
  return y;
}

// Softmax within consecutive segments of a flat logit vector. Each segment is
// stabilised by subtracting its maximum.
template <typename T>
Var<T> segment_softmax(Tape<T>& tape, const Var<T>& logits, std::span<const std::size_t> sizes) {
  std::size_t total = 0;
  for (auto s : sizes) {
    if (s == 0) throw data_error("softmax over an empty segment");
    total += s;
  }
  if (total != logits->value.size()) throw data_error("segment sizes do not cover the logits");
  Tensor<T> out({total});
  std::size_t start = 0;
  for (auto s : sizes) {
    T peak = logits->value[start];
    for (std::size_t i = start; i < start + s; ++i) peak = std::max(peak, logits->value[i]);
    double z = 0;
    for (std::size_t i = start; i < start + s; ++i) z += std::exp(double(logits->value[i] - peak));
    for (std::size_t i = start; i < start + s; ++i)
      out[i] = T(std::exp(double(logits->value[i] - peak)) / z);
    start += s;
  }
  auto y = tape.output(std::move(out), logits->requires_grad);
  if (logits->requires_grad) {
    std::vector<std::size_t> seg(sizes.begin(), sizes.end());
    tape.on_backward([logits, y, seg] {
      if (y->grad.empty()) return;
      auto& dx = logits->grad_buffer();
      std::size_t start = 0;
      for (auto s : seg) {
        double dot = 0;
        for (std::size_t i = start; i < start + s; ++i) dot += double(y->grad[i]) * y->value[i];
        for (std::size_t i = start; i < start + s; ++i)
          dx[i] += T(y->value[i] * (y->grad[i] - dot));
        start += s;
      }
    });
  }
  return y;
}

template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& logits) {
  const std::array<std::size_t, 1> one{logits->value.size()};
  return segment_softmax<T>(tape, logits, one);
}

// out[b] = sum over rows i of segment b of weights[i] * features[i].
// features: [N, ...], weights: N values, result: [segments, ...].
template <typename T>
Var<T> segment_weighted_sum(Tape<T>& tape, const Var<T>& features, const Var<T>& weights,
                            std::span<const std::size_t> sizes) {
  const auto& fs = features->value.shape();
  if (fs.empty() || weights->value.size() != fs[0]) {
    throw data_error("segment_weighted_sum: weight count does not match features " +
                     shape_string(fs));
  }
  const std::size_t row = features->value.size() / std::max<std::size_t>(fs[0], 1);
  Shape out_shape = fs;
  out_shape[0] = sizes.size();
  Tensor<T> out(out_shape);
  std::size_t start = 0;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    for (std::size_t i = start; i < start + sizes[b]; ++i) {
      const T a = weights->value[i];
      const T* f = features->value.raw() + i * row;
      T* o = out.raw() + b * row;
      for (std::size_t k = 0; k < row; ++k) o[k] += a * f[k];
    }
    start += sizes[b];
  }
  if (start != fs[0]) throw data_error("segment sizes do not cover the features");
  const bool needs = features->requires_grad || weights->requires_grad;
  auto y = tape.output(std::move(out), needs);
  if (needs) {
    std::vector<std::size_t> seg(sizes.begin(), sizes.end());
    tape.on_backward([features, weights, y, seg, row] {
      if (y->grad.empty()) return;
      std::size_t start = 0;
      for (std::size_t b = 0; b < seg.size(); ++b) {
        const T* g = y->grad.raw() + b * row;
        for (std::size_t i = start; i < start + seg[b]; ++i) {
          const T* f = features->value.raw() + i * row;
          if (weights->requires_grad) {
            double acc = 0;
            for (std::size_t k = 0; k < row; ++k) acc += double(g[k]) * f[k];
            weights->grad_buffer()[i] += T(acc);
          }
          if (features->requires_grad) {
            T* df = features->grad_buffer().raw() + i * row;
            const T a = weights->value[i];
            for (std::size_t k = 0; k < row; ++k) df[k] += a * g[k];
          }
        }
        start += seg[b];
      }
    });
  }
  return y;
}

// Mean of squared element-wise differences; returns a one-element tensor.
template <typename T>
Var<T> mse_loss(Tape<T>& tape, const Var<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred->value.shape(), target.shape(), "mse_loss");
  const std::size_t n = target.size();
  if (n == 0) throw data_error("mse_loss: empty tensors");
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(pred->value[i]) - double(target[i]);
    acc += d * d;
  }
  auto y = tape.output(Tensor<T>({1}, std::vector<T>{T(acc / double(n))}), pred->requires_grad);
  if (pred->requires_grad) {
    tape.on_backward([pred, y, target, n] {
      if (y->grad.empty()) return;
      auto& dp = pred->grad_buffer();
      const T scale = T(2) * y->grad[0] / T(n);
      for (std::size_t i = 0; i < n; ++i) dp[i] += scale * (pred->value[i] - target[i]);
    });
  }
  return y;
}

}  // namespace scanscribe::nn
