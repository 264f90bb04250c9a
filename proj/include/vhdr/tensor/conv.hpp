#pragma once

#include <cblas.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

using Triple = std::array<int, 3>;  // (frame, height, width)

inline constexpr const char* kAxisName[3] = {"F", "H", "W"};

/// Geometry of one 3-D convolution layer.
///
/// For plain convolutions the weight tensor is (out, in, kf, kh, kw). For
/// transposed convolutions it is (in, out, kf, kh, kw): the layer is the adjoint
/// of a plain convolution mapping `out` channels back to `in` channels.
struct ConvSpec {
  Triple kernel{3, 3, 3};
  Triple stride{1, 1, 1};
  Triple dilation{1, 1, 1};
  Triple padding{1, 1, 1};
  Triple output_padding{0, 0, 0};  // transposed only
  int in_channels = 1;
  int out_channels = 1;
  bool transposed = false;

  /// Same-size padding p = d (k - 1) / 2 on every axis. Rejects even kernels.
  static ConvSpec same_size(int in, int out, Triple kernel, Triple dilation = {1, 1, 1}, Triple stride = {1, 1, 1}) {
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.dilation = dilation;
    s.stride = stride;
    for (int a = 0; a < 3; ++a) {
      if (kernel[a] % 2 == 0) {
        throw DataError(std::string("conv spec: same-size padding needs an odd kernel on axis ") + kAxisName[a] +
                        ", got " + std::to_string(kernel[a]));
      }
      s.padding[a] = dilation[a] * (kernel[a] - 1) / 2;
    }
    s.validate();
    return s;
  }

  /// Transposed layer that undoes a same-size-padded stride-s downsampling:
  /// padding d (k - 1) / 2 and output_padding s - 1, so extent L maps to s L.
  static ConvSpec upsampling(int in, int out, Triple kernel, Triple stride) {
    ConvSpec s = same_size(in, out, kernel, {1, 1, 1}, stride);
    s.transposed = true;
    for (int a = 0; a < 3; ++a) s.output_padding[a] = stride[a] - 1;
    s.validate();
    return s;
  }

  void validate() const {
    if (in_channels < 1 || out_channels < 1) throw DataError("conv spec: channel counts must be >= 1");
    for (int a = 0; a < 3; ++a) {
      const std::string ax = kAxisName[a];
      if (kernel[a] < 1 || stride[a] < 1 || dilation[a] < 1) {
        throw DataError("conv spec: kernel, stride and dilation must be >= 1 on axis " + ax);
      }
      if (padding[a] < 0 || output_padding[a] < 0) throw DataError("conv spec: negative padding on axis " + ax);
      if (!transposed && output_padding[a] != 0) throw DataError("conv spec: output_padding set on plain conv, axis " + ax);
    }
  }

  Shape weight_shape() const {
    return transposed ? Shape{in_channels, out_channels, kernel[0], kernel[1], kernel[2]}
                      : Shape{out_channels, in_channels, kernel[0], kernel[1], kernel[2]};
  }

  std::int64_t kernel_volume() const { return std::int64_t{kernel[0]} * kernel[1] * kernel[2]; }

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// floor((L + 2p - d (k - 1) - 1) / s) + 1, or -1 when the window does not fit.
inline std::int64_t conv_out_extent(std::int64_t len, int k, int s, int d, int p) {
  const std::int64_t span = len + 2 * p - std::int64_t{d} * (k - 1) - 1;
  if (span < 0) return -1;
  return span / s + 1;
}

inline std::int64_t transposed_out_extent(std::int64_t len, int k, int s, int d, int p, int op) {
  return (len - 1) * s - 2 * p + std::int64_t{d} * (k - 1) + op + 1;
}

/// Output shape of `spec` applied to an N x C x F x H x W input, with
/// axis-level diagnostics on failure.
inline Shape conv3d_output_shape(const Shape& in, const ConvSpec& spec) {
  spec.validate();
  if (in.size() != 5) throw DataError("conv3d: input must be N x C x F x H x W, got " + shape_str(in));
  if (in[1] != spec.in_channels) {
    throw DataError("conv3d: axis C: input has " + std::to_string(in[1]) + " channels, layer expects " +
                    std::to_string(spec.in_channels));
  }
  Shape out{in[0], spec.out_channels, 0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    const auto len = in[2 + a];
    const std::string ax = kAxisName[a];
    if (len < 1) throw DataError("conv3d: axis " + ax + ": empty input extent");
    if (spec.transposed) {
      const auto o = transposed_out_extent(len, spec.kernel[a], spec.stride[a], spec.dilation[a], spec.padding[a],
                                           spec.output_padding[a]);
      // The forward conv over the upsampled grid must land back on `len`.
      if (o < 1 || conv_out_extent(o, spec.kernel[a], spec.stride[a], spec.dilation[a], spec.padding[a]) != len) {
        throw DataError("conv3d_transposed: axis " + ax + ": output_padding " + std::to_string(spec.output_padding[a]) +
                        " cannot round-trip extent " + std::to_string(len) + " with stride " +
                        std::to_string(spec.stride[a]));
      }
      out[2 + a] = o;
    } else {
      const auto o = conv_out_extent(len, spec.kernel[a], spec.stride[a], spec.dilation[a], spec.padding[a]);
      if (o < 1) {
        throw DataError("conv3d: axis " + ax + ": dilated kernel extent " +
                        std::to_string(spec.dilation[a] * (spec.kernel[a] - 1) + 1) + " exceeds padded input " +
                        std::to_string(len + 2 * spec.padding[a]));
      }
      out[2 + a] = o;
    }
  }
  return out;
}

namespace detail {

/// Index map between a "large" grid (the input of a plain conv) and a "small"
/// grid (its output). The transposed conv uses the same map with roles swapped.
struct Lowering {
  std::int64_t channels = 0;  // channels on the large side
  std::array<std::int64_t, 3> large{};
  std::array<std::int64_t, 3> small{};
  Triple kernel{}, stride{}, dilation{}, padding{};

  std::int64_t rows() const { return channels * kernel[0] * kernel[1] * kernel[2]; }
  std::int64_t cols() const { return small[0] * small[1] * small[2]; }
  std::int64_t large_plane() const { return large[0] * large[1] * large[2]; }

  // Valid [lo, hi) range of small-grid index o such that o*s - p + k*d lies in [0, len).
  static void valid_range(std::int64_t len, std::int64_t n_small, int s, int p, int kd, std::int64_t& lo,
                          std::int64_t& hi) {
    const std::int64_t off = kd - p;  // large = o*s + off
    lo = off >= 0 ? 0 : (-off + s - 1) / s;
    const std::int64_t top = len - 1 - off;
    hi = top < 0 ? 0 : top / s + 1;
    lo = std::min(lo, n_small);
    hi = std::clamp(hi, lo, n_small);
  }
};

inline Lowering make_lowering(std::int64_t channels, const std::int64_t* large, const std::int64_t* small,
                              const ConvSpec& spec) {
  Lowering g;
  g.channels = channels;
  for (int a = 0; a < 3; ++a) {
    g.large[a] = large[a];
    g.small[a] = small[a];
  }
  g.kernel = spec.kernel;
  g.stride = spec.stride;
  g.dilation = spec.dilation;
  g.padding = spec.padding;
  return g;
}

// Columns index small-grid positions (of,oh,ow). Work is split into chunks of
// whole small-grid lines (of,oh) so the column buffer stays cache-sized.

/// col[(c,kf,kh,kw)][j] = large[c][of*sf-pf+kf*df][...] for the small-grid
/// lines [line0, line1); zero outside the large grid.
inline void im2col(const float* large, const Lowering& g, std::int64_t line0, std::int64_t line1, float* col) {
  const auto [Fl, Hl, Wl] = g.large;
  const auto [Fs, Hs, Ws] = g.small;
  (void)Fs;
  const std::int64_t P = (line1 - line0) * Ws;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const float* plane = large + c * Fl * Hl * Wl;
    for (int kf = 0; kf < g.kernel[0]; ++kf) {
      for (int kh = 0; kh < g.kernel[1]; ++kh) {
        for (int kw = 0; kw < g.kernel[2]; ++kw, ++row) {
          float* dst = col + row * P;
          std::int64_t wlo, whi;
          Lowering::valid_range(Wl, Ws, g.stride[2], g.padding[2], kw * g.dilation[2], wlo, whi);
          const std::int64_t w0 = wlo * g.stride[2] - g.padding[2] + kw * g.dilation[2];
          for (std::int64_t line = line0; line < line1; ++line, dst += Ws) {
            const std::int64_t of = line / Hs, oh = line % Hs;
            const std::int64_t f = of * g.stride[0] - g.padding[0] + kf * g.dilation[0];
            const std::int64_t h = oh * g.stride[1] - g.padding[1] + kh * g.dilation[1];
            if (f < 0 || f >= Fl || h < 0 || h >= Hl) {
              std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(Ws));
              continue;
            }
            const float* src = plane + (f * Hl + h) * Wl;
            for (std::int64_t ow = 0; ow < wlo; ++ow) dst[ow] = 0.0f;
            if (g.stride[2] == 1) {
              if (whi > wlo) std::memcpy(dst + wlo, src + w0, sizeof(float) * static_cast<std::size_t>(whi - wlo));
            } else {
              for (std::int64_t ow = wlo, w = w0; ow < whi; ++ow, w += g.stride[2]) dst[ow] = src[w];
            }
            for (std::int64_t ow = whi; ow < Ws; ++ow) dst[ow] = 0.0f;
          }
        }
      }
    }
  }
}

/// Adjoint of im2col over the same lines: large[...] += col[...].
inline void col2im(const float* col, const Lowering& g, std::int64_t line0, std::int64_t line1, float* large) {
  const auto [Fl, Hl, Wl] = g.large;
  const auto [Fs, Hs, Ws] = g.small;
  (void)Fs;
  const std::int64_t P = (line1 - line0) * Ws;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    float* plane = large + c * Fl * Hl * Wl;
    for (int kf = 0; kf < g.kernel[0]; ++kf) {
      for (int kh = 0; kh < g.kernel[1]; ++kh) {
        for (int kw = 0; kw < g.kernel[2]; ++kw, ++row) {
          const float* src = col + row * P;
          std::int64_t wlo, whi;
          Lowering::valid_range(Wl, Ws, g.stride[2], g.padding[2], kw * g.dilation[2], wlo, whi);
          const std::int64_t w0 = wlo * g.stride[2] - g.padding[2] + kw * g.dilation[2];
          for (std::int64_t line = line0; line < line1; ++line, src += Ws) {
            const std::int64_t of = line / Hs, oh = line % Hs;
            const std::int64_t f = of * g.stride[0] - g.padding[0] + kf * g.dilation[0];
            const std::int64_t h = oh * g.stride[1] - g.padding[1] + kh * g.dilation[1];
            if (f < 0 || f >= Fl || h < 0 || h >= Hl) continue;
            float* dst = plane + (f * Hl + h) * Wl;
            for (std::int64_t ow = wlo, w = w0; ow < whi; ++ow, w += g.stride[2]) dst[w] += src[ow];
          }
        }
      }
    }
  }
}

// Row-major C = op(A) op(B) + beta C with explicit leading dimensions.
inline void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
                 std::int64_t lda, const float* b, std::int64_t ldb, float beta, float* c, std::int64_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0f, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

/// Small-grid lines per chunk: about 2M column-buffer floats, at least one line.
inline std::int64_t lines_per_chunk(const Lowering& g) {
  const std::int64_t target = std::int64_t{1} << 21;
  return std::max<std::int64_t>(1, target / std::max<std::int64_t>(1, g.rows() * g.small[2]));
}

/// Per-thread scratch reused across calls.
inline float* scratch(std::size_t n) {
  thread_local std::vector<float> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

inline void check_weights(const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
  if (weights.shape() != spec.weight_shape()) {
    throw DataError("conv3d: weights have shape " + shape_str(weights.shape()) + ", layer expects " +
                    shape_str(spec.weight_shape()));
  }
  if (bias.shape() != Shape{spec.out_channels}) {
    throw DataError("conv3d: bias has shape " + shape_str(bias.shape()) + ", expected (" +
                    std::to_string(spec.out_channels) + ")");
  }
}

inline Lowering lowering_for(const Shape& in, const Shape& out, const ConvSpec& spec) {
  // Plain conv: large side is the input. Transposed: large side is the output.
  return spec.transposed ? make_lowering(out[1], &out[2], &in[2], spec) : make_lowering(in[1], &in[2], &out[2], spec);
}

}  // namespace detail

/// Forward pass of a plain or transposed 3-D convolution with zero padding.
inline Tensor conv3d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
  const Shape out_shape = conv3d_output_shape(input.shape(), spec);
  detail::check_weights(spec, weights, bias);
  const auto& in_shape = input.shape();
  const detail::Lowering g = detail::lowering_for(in_shape, out_shape, spec);
  Tensor out(out_shape);
  const std::int64_t in_plane = in_shape[2] * in_shape[3] * in_shape[4];
  const std::int64_t out_plane = out_shape[2] * out_shape[3] * out_shape[4];
  const std::int64_t lines = g.small[0] * g.small[1], Ws = g.small[2], P = g.cols();
  const std::int64_t step = detail::lines_per_chunk(g);
  float* col = detail::scratch(static_cast<std::size_t>(g.rows() * std::min(step, lines) * Ws));
  for (std::int64_t n = 0; n < in_shape[0]; ++n) {
    const float* x = input.raw() + n * in_shape[1] * in_plane;
    float* y = out.raw() + n * out_shape[1] * out_plane;
    for (std::int64_t l0 = 0; l0 < lines; l0 += step) {
      const std::int64_t l1 = std::min(lines, l0 + step), pc = (l1 - l0) * Ws;
      if (!spec.transposed) {
        detail::im2col(x, g, l0, l1, col);
        detail::gemm(false, false, spec.out_channels, pc, g.rows(), weights.raw(), g.rows(), col, pc, 0.0f, y + l0 * Ws, P);
      } else {
        // col[(out,k)][j] = W^T x, W viewed as [in][(out,k)]
        detail::gemm(true, false, g.rows(), pc, spec.in_channels, weights.raw(), g.rows(), x + l0 * Ws, P, 0.0f, col, pc);
        detail::col2im(col, g, l0, l1, y);
      }
    }
    for (int co = 0; co < spec.out_channels; ++co) {
      float* yc = y + co * out_plane;
      const float b = bias[static_cast<std::size_t>(co)];
      for (std::int64_t p = 0; p < out_plane; ++p) yc[p] += b;
    }
  }
  return out;
}

/// Gradients of a conv layer. Null output pointers are skipped.
inline void conv3d_backward(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& grad_out,
                            Tensor* grad_input, Tensor* grad_weights, Tensor* grad_bias) {
  const auto& in_shape = input.shape();
  const auto& out_shape = grad_out.shape();
  const detail::Lowering g = detail::lowering_for(in_shape, out_shape, spec);
  const std::int64_t in_plane = in_shape[2] * in_shape[3] * in_shape[4];
  const std::int64_t out_plane = out_shape[2] * out_shape[3] * out_shape[4];
  const std::int64_t lines = g.small[0] * g.small[1], Ws = g.small[2], P = g.cols();
  const std::int64_t step = detail::lines_per_chunk(g);
  float* col = detail::scratch(static_cast<std::size_t>(g.rows() * std::min(step, lines) * Ws));
  if (grad_input) *grad_input = Tensor(in_shape);
  if (grad_weights) *grad_weights = Tensor(weights.shape());
  if (grad_bias) *grad_bias = Tensor(Shape{spec.out_channels});

  for (std::int64_t n = 0; n < in_shape[0]; ++n) {
    const float* x = input.raw() + n * in_shape[1] * in_plane;
    const float* dy = grad_out.raw() + n * out_shape[1] * out_plane;
    float* dx = grad_input ? grad_input->raw() + n * in_shape[1] * in_plane : nullptr;
    if (grad_bias) {
      for (int co = 0; co < spec.out_channels; ++co) {
        double s = 0.0;
        const float* d = dy + co * out_plane;
        for (std::int64_t p = 0; p < out_plane; ++p) s += d[p];
        (*grad_bias)[static_cast<std::size_t>(co)] += static_cast<float>(s);
      }
    }
    if (!grad_input && !grad_weights) continue;
    for (std::int64_t l0 = 0; l0 < lines; l0 += step) {
      const std::int64_t l1 = std::min(lines, l0 + step), pc = (l1 - l0) * Ws;
      if (!spec.transposed) {
        if (grad_weights) {
          detail::im2col(x, g, l0, l1, col);
          detail::gemm(false, true, spec.out_channels, g.rows(), pc, dy + l0 * Ws, P, col, pc, 1.0f, grad_weights->raw(), g.rows());
        }
        if (grad_input) {
          detail::gemm(true, false, g.rows(), pc, spec.out_channels, weights.raw(), g.rows(), dy + l0 * Ws, P, 0.0f, col, pc);
          detail::col2im(col, g, l0, l1, dx);
        }
      } else {
        detail::im2col(dy, g, l0, l1, col);
        if (grad_input) {
          detail::gemm(false, false, spec.in_channels, pc, g.rows(), weights.raw(), g.rows(), col, pc, 0.0f, dx + l0 * Ws, P);
        }
        if (grad_weights) {
          detail::gemm(false, true, spec.in_channels, g.rows(), pc, x + l0 * Ws, P, col, pc, 1.0f, grad_weights->raw(), g.rows());
        }
      }
    }
  }
}

}  // namespace vhdr
