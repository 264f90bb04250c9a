#pragma once

// Coded-exposure capture: y = g(f(B * mask * x * dt)). Per frame the radiance
// is integrated over the exposure, modulated by the mask, Bayer sampled,
// clipped at full well, passed through a gamma response, perturbed by shot
// and read noise, then quantized.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "vhdr/core/errors.hpp"
#include "vhdr/core/random.hpp"
#include "vhdr/optics/mask.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

struct CameraModel {
  double exposure = 1.0 / 30.0;   // seconds
  double gamma = 2.2;
  int bit_depth = 10;
  double full_well_scale = 0.01;  // full-well units per (radiance * second)
  double shot_noise_scale = 1e-4; // variance per unit of normalised signal
  double read_noise_sigma = 1.0;  // in DN
  double fixed_pattern_sigma = 0.0;  // relative per-pixel gain spread; 0 disables

  double max_code() const { return std::ldexp(1.0, bit_depth) - 1.0; }
  bool noise_enabled() const { return shot_noise_scale > 0.0 || read_noise_sigma > 0.0; }

  CameraModel without_noise() const {
    CameraModel c = *this;
    c.shot_noise_scale = 0.0;
    c.read_noise_sigma = 0.0;
    c.fixed_pattern_sigma = 0.0;
    return c;
  }

  void validate() const {
    if (!(exposure > 0.0) || !std::isfinite(exposure)) throw DataError("camera: exposure must be > 0");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DataError("camera: gamma must be > 0");
    if (bit_depth != 8 && bit_depth != 10 && bit_depth != 12 && bit_depth != 14 && bit_depth != 16) {
      throw DataError("camera: bit depth must be one of 8, 10, 12, 14, 16; got " + std::to_string(bit_depth));
    }
    if (!(full_well_scale > 0.0)) throw DataError("camera: full_well_scale must be > 0");
    if (shot_noise_scale < 0.0 || read_noise_sigma < 0.0 || fixed_pattern_sigma < 0.0) {
      throw DataError("camera: noise scales must be >= 0");
    }
  }
};

/// RGGB: (0,0)=R, (0,1)=G, (1,0)=G, (1,1)=B.
inline int bayer_channel(std::int64_t y, std::int64_t x) noexcept {
  return static_cast<int>((y & 1) + (x & 1));
}

/// Keeps the one live channel per site, zeros the others.
inline Tensor bayer_sample(const Tensor& frame) {
  if (frame.rank() != 3 || frame.extent(2) != 3) {
    throw DataError("bayer_sample: expected H x W x 3, got " + shape_str(frame.shape()));
  }
  const auto h = frame.extent(0), w = frame.extent(1);
  if (h % 2 || w % 2) throw DataError("bayer_sample: extents must be even, got " + std::to_string(h) + "x" + std::to_string(w));
  Tensor out({h, w, 3});
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const int c = bayer_channel(y, x);
      out.at(y, x, c) = frame.at(y, x, c);
    }
  return out;
}

struct CodedClip {
  Tensor frames;  // F x H x W x 3, mosaic-expanded, values on the code grid in [0,1]
  Mask mask;
  CameraModel camera;
  std::uint64_t seed = 0;
};

namespace detail {
inline void check_capture_inputs(const Tensor& clip, const Mask& mask, const CameraModel& cam) {
  cam.validate();
  if (clip.rank() != 4 || clip.extent(3) != 3) {
    throw DataError("capture: expected F x H x W x 3 radiance, got " + shape_str(clip.shape()));
  }
  if (mask.values.rank() != 2 || mask.height() != clip.extent(1) || mask.width() != clip.extent(2)) {
    throw DataError("capture: mask " + shape_str(mask.values.shape()) + " does not match frame extents " +
                    std::to_string(clip.extent(1)) + "x" + std::to_string(clip.extent(2)));
  }
  if (clip.extent(1) % 2 || clip.extent(2) % 2) throw DataError("capture: frame extents must be even for Bayer sampling");
  for (float v : clip.data()) {
    if (!(v >= 0.0f) || !std::isfinite(v)) throw DataError("capture: radiance must be finite and non-negative");
  }
}

inline Tensor fixed_pattern_gain(std::int64_t h, std::int64_t w, double sigma, std::uint64_t seed) {
  Tensor g({h, w}, 1.0f);
  if (sigma <= 0.0) return g;
  Rng rng(derive_seed(seed, {0x66706eULL}));
  for (float& v : g.data()) v = static_cast<float>(std::max(0.0, 1.0 + sigma * rng.normal()));
  return g;
}
}  // namespace detail

/// Pre-response signal B * mask * x * dt * full_well_scale on the live sites
/// (not clipped). Linear in both the mask and the radiance.
inline Tensor exposure_signal(const Tensor& clip, const Mask& mask, const CameraModel& cam) {
  detail::check_capture_inputs(clip, mask, cam);
  const auto f = clip.extent(0), h = clip.extent(1), w = clip.extent(2);
  Tensor s({f, h, w, 3});
  for (std::int64_t t = 0; t < f; ++t)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const int c = bayer_channel(y, x);
        s.at(t, y, x, c) = static_cast<float>(static_cast<double>(clip.at(t, y, x, c)) * cam.exposure *
                                              mask.at(y, x) * cam.full_well_scale);
      }
  return s;
}

inline CodedClip capture(const Tensor& clip, const Mask& mask, const CameraModel& cam, std::uint64_t seed) {
  detail::check_capture_inputs(clip, mask, cam);
  const auto f = clip.extent(0), h = clip.extent(1), w = clip.extent(2);
  const double top = cam.max_code();
  const double read_var = (cam.read_noise_sigma / top) * (cam.read_noise_sigma / top);
  const Tensor gain = detail::fixed_pattern_gain(h, w, cam.fixed_pattern_sigma, seed);
  CodedClip out{Tensor({f, h, w, 3}), mask, cam, seed};
  for (std::int64_t t = 0; t < f; ++t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const int c = bayer_channel(y, x);
        const double s = static_cast<double>(clip.at(t, y, x, c)) * cam.exposure * mask.at(y, x) *
                         cam.full_well_scale * gain.at(y, x);
        double v = std::pow(std::clamp(s, 0.0, 1.0), 1.0 / cam.gamma);
        if (cam.noise_enabled()) v += std::sqrt(cam.shot_noise_scale * v + read_var) * rng.normal();
        v = std::clamp(v, 0.0, 1.0);
        out.frames.at(t, y, x, c) = static_cast<float>(std::round(v * top) / top);
      }
  }
  return out;
}

}  // namespace vhdr
