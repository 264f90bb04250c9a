#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "vhdr/core/errors.hpp"
#include "vhdr/tensor/conv.hpp"
#include "vhdr/tensor/graph.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

// ---------------------------------------------------------------------------
// Plain tensor ops
// ---------------------------------------------------------------------------

inline Tensor conv3d(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
  if (spec.transposed) throw DataError("conv3d: spec is transposed; use conv3d_transposed");
  return conv3d_forward(input, spec, weights, bias);
}

inline Tensor conv3d_transposed(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
  if (!spec.transposed) throw DataError("conv3d_transposed: spec.transposed is not set");
  return conv3d_forward(input, spec, weights, bias);
}

inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

namespace detail {

inline void check_concat(const Shape& a, const Shape& b) {
  if (a.size() != 5 || b.size() != 5) throw DataError("concat_channels: inputs must be rank 5");
  static constexpr const char* names[5] = {"N", "C", "F", "H", "W"};
  for (std::size_t i = 0; i < 5; ++i) {
    if (i != 1 && a[i] != b[i]) {
      throw DataError(std::string("concat_channels: axis ") + names[i] + " differs: " + std::to_string(a[i]) +
                      " vs " + std::to_string(b[i]));
    }
  }
}

}  // namespace detail

/// Concatenates along the channel axis, `a` first.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  detail::check_concat(a.shape(), b.shape());
  const auto n = a.extent(0);
  const auto plane = a.extent(2) * a.extent(3) * a.extent(4);
  const auto ca = a.extent(1), cb = b.extent(1);
  Tensor out({n, ca + cb, a.extent(2), a.extent(3), a.extent(4)});
  float* dst = out.raw();
  for (std::int64_t i = 0; i < n; ++i) {
    dst = std::copy_n(a.raw() + i * ca * plane, ca * plane, dst);
    dst = std::copy_n(b.raw() + i * cb * plane, cb * plane, dst);
  }
  return out;
}

/// Frames [begin, end) of an N x C x F x H x W tensor.
inline Tensor slice_frames(const Tensor& x, std::int64_t begin, std::int64_t end) {
  if (x.rank() != 5) throw DataError("slice_frames: input must be rank 5");
  if (begin < 0 || end > x.extent(2) || begin >= end) {
    throw DataError("slice_frames: range [" + std::to_string(begin) + "," + std::to_string(end) +
                    ") invalid for " + std::to_string(x.extent(2)) + " frames");
  }
  const auto nc = x.extent(0) * x.extent(1);
  const auto fplane = x.extent(3) * x.extent(4);
  const auto frames = end - begin;
  Tensor out({x.extent(0), x.extent(1), frames, x.extent(3), x.extent(4)});
  for (std::int64_t i = 0; i < nc; ++i) {
    std::copy_n(x.raw() + (i * x.extent(2) + begin) * fplane, frames * fplane, out.raw() + i * frames * fplane);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable ops
// ---------------------------------------------------------------------------

inline NodeId conv3d(Graph& g, NodeId x, NodeId weights, NodeId bias, const ConvSpec& spec) {
  Tensor y = conv3d_forward(g.value(x), spec, g.value(weights), g.value(bias));
  return g.record(spec.transposed ? "conv3d_transposed" : "conv3d", std::move(y), {x, weights, bias},
                  [x, weights, bias, spec](Graph& gr, NodeId self) {
                    Tensor dx, dw, db;
                    conv3d_backward(gr.value(x), spec, gr.value(weights), gr.grad(self),
                                    gr.requires_grad(x) ? &dx : nullptr, gr.requires_grad(weights) ? &dw : nullptr,
                                    gr.requires_grad(bias) ? &db : nullptr);
                    if (gr.requires_grad(x)) gr.accumulate(x, std::move(dx));
                    if (gr.requires_grad(weights)) gr.accumulate(weights, std::move(dw));
                    if (gr.requires_grad(bias)) gr.accumulate(bias, std::move(db));
                  });
}

inline NodeId relu(Graph& g, NodeId x) {
  return g.record("relu", relu(g.value(x)), {x}, [x](Graph& gr, NodeId self) {
    Tensor dx = gr.grad(self);
    const auto in = gr.value(x).data();
    auto d = dx.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(in[i] > 0.0f)) d[i] = 0.0f;
    }
    gr.accumulate(x, std::move(dx));
  });
}

inline NodeId concat_channels(Graph& g, NodeId a, NodeId b) {
  return g.record("concat_channels", concat_channels(g.value(a), g.value(b)), {a, b}, [a, b](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad(self);
    const Shape& sa = gr.value(a).shape();
    const Shape& sb = gr.value(b).shape();
    const auto plane = sa[2] * sa[3] * sa[4];
    Tensor da(sa), db(sb);
    const float* src = dy.raw();
    for (std::int64_t i = 0; i < sa[0]; ++i) {
      std::copy_n(src, sa[1] * plane, da.raw() + i * sa[1] * plane);
      src += sa[1] * plane;
      std::copy_n(src, sb[1] * plane, db.raw() + i * sb[1] * plane);
      src += sb[1] * plane;
    }
    gr.accumulate(a, std::move(da));
    gr.accumulate(b, std::move(db));
  });
}

inline NodeId slice_frames(Graph& g, NodeId x, std::int64_t begin, std::int64_t end) {
  return g.record("slice_frames", slice_frames(g.value(x), begin, end), {x}, [x, begin, end](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad(self);
    const Shape& s = gr.value(x).shape();
    Tensor dx(s);
    const auto nc = s[0] * s[1];
    const auto fplane = s[3] * s[4];
    const auto frames = end - begin;
    for (std::int64_t i = 0; i < nc; ++i) {
      std::copy_n(dy.raw() + i * frames * fplane, frames * fplane, dx.raw() + (i * s[2] + begin) * fplane);
    }
    gr.accumulate(x, std::move(dx));
  });
}

/// mean(|w (a - b)|) over all elements. `weights`, when given, is a
/// constant of the same shape and receives no gradient.
inline NodeId mean_abs_diff(Graph& g, NodeId a, NodeId b, const Tensor* weights = nullptr) {
  const Tensor& va = g.value(a);
  const Tensor& vb = g.value(b);
  if (va.shape() != vb.shape()) {
    throw DataError("mean_abs_diff: shapes " + shape_str(va.shape()) + " and " + shape_str(vb.shape()) + " differ");
  }
  if (weights && weights->shape() != va.shape()) throw DataError("mean_abs_diff: weight shape mismatch");
  if (va.size() == 0) throw DataError("mean_abs_diff: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    acc += std::abs(w * (static_cast<double>(va[i]) - vb[i]));
  }
  const double n = static_cast<double>(va.size());
  Tensor w_copy = weights ? *weights : Tensor();
  return g.record("mean_abs_diff", Tensor::scalar(static_cast<float>(acc / n)), {a, b},
                  [a, b, w = std::move(w_copy), n](Graph& gr, NodeId self) {
                    const float up = gr.grad(self)[0];
                    const Tensor& xa = gr.value(a);
                    const Tensor& xb = gr.value(b);
                    Tensor da(xa.shape());
                    for (std::size_t i = 0; i < xa.size(); ++i) {
                      const double wi = w.empty() ? 1.0 : w[i];
                      const double r = wi * (static_cast<double>(xa[i]) - xb[i]);
                      const double s = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
                      da[i] = static_cast<float>(up * s * wi / n);
                    }
                    if (gr.requires_grad(b)) {
                      Tensor db = da;
                      for (float& v : db.data()) v = -v;
                      gr.accumulate(b, std::move(db));
                    }
                    gr.accumulate(a, std::move(da));
                  });
}

inline NodeId scale(Graph& g, NodeId x, float c) {
  Tensor y = g.value(x);
  for (float& v : y.data()) v *= c;
  return g.record("scale", std::move(y), {x}, [x, c](Graph& gr, NodeId self) {
    Tensor dx = gr.grad(self);
    for (float& v : dx.data()) v *= c;
    gr.accumulate(x, std::move(dx));
  });
}

inline NodeId add(Graph& g, NodeId a, NodeId b) {
  const Tensor& va = g.value(a);
  const Tensor& vb = g.value(b);
  if (va.shape() != vb.shape()) throw DataError("add: shape mismatch " + shape_str(va.shape()) + " vs " + shape_str(vb.shape()));
  Tensor y = va;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += vb[i];
  return g.record("add", std::move(y), {a, b}, [a, b](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad(self);
    gr.accumulate(a, dy);
    gr.accumulate(b, dy);
  });
}

/// Sum of all elements to a scalar.
inline NodeId sum(Graph& g, NodeId x) {
  const double s = sum_f64(g.value(x).data());
  return g.record("sum", Tensor::scalar(static_cast<float>(s)), {x}, [x](Graph& gr, NodeId self) {
    gr.accumulate(x, Tensor(gr.value(x).shape(), gr.grad(self)[0]));
  });
}

}  // namespace vhdr
