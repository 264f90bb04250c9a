#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/core/random.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

enum class MaskKind { UniformRandom, LowFrequency };

inline std::string to_string(MaskKind k) { return k == MaskKind::UniformRandom ? "uniform" : "lowfreq"; }

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "uniform") return MaskKind::UniformRandom;
  if (s == "lowfreq") return MaskKind::LowFrequency;
  throw DataError("unknown mask kind '" + s + "' (expected uniform or lowfreq)");
}

/// Per-pixel transmission in [0,1], H x W.
struct Mask {
  Tensor values;
  MaskKind kind = MaskKind::UniformRandom;
  std::uint64_t seed = 0;
  double bernoulli_p = 0.0;  // low-frequency masks only
  double sigma = 0.0;        // low-frequency masks only

  std::int64_t height() const { return values.extent(0); }
  std::int64_t width() const { return values.extent(1); }
  float at(std::int64_t y, std::int64_t x) const { return values.at(y, x); }
};

inline Tensor generate_binary_pattern(std::int64_t h, std::int64_t w, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p < 1.0)) throw DataError("binary pattern: p must lie in (0,1), got " + std::to_string(p));
  if (h <= 0 || w <= 0) throw DataError("binary pattern: extents must be positive");
  Rng rng(seed);
  Tensor t({h, w});
  for (float& v : t.data()) v = rng.bernoulli(p) ? 1.0f : 0.0f;
  return t;
}

/// Normalised 1-D Gaussian taps, radius ceil(3 sigma).
inline std::vector<double> gaussian_taps(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    s += k[static_cast<std::size_t>(i + r)];
  }
  for (double& v : k) v /= s;
  return k;
}

namespace detail {
// Half-sample symmetric extension (d c b a | a b c d | d c b a), periodic in 2n.
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  const std::int64_t period = 2 * n;
  std::int64_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}
}  // namespace detail

/// Separable Gaussian blur with reflect boundary. sigma = 0 returns the input.
inline Tensor gaussian_blur(const Tensor& img, double sigma) {
  if (sigma < 0.0) throw DataError("blur: sigma must be >= 0");
  if (img.rank() != 2) throw DataError("blur: expected H x W, got " + shape_str(img.shape()));
  if (sigma == 0.0) return img;
  const auto k = gaussian_taps(sigma);
  const auto r = static_cast<std::int64_t>(k.size() / 2);
  const auto h = img.extent(0), w = img.extent(1);
  std::vector<double> tmp(static_cast<std::size_t>(h * w));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::int64_t d = -r; d <= r; ++d) acc += k[static_cast<std::size_t>(d + r)] * img.at(y, detail::reflect_index(x + d, w));
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  Tensor out({h, w});
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::int64_t d = -r; d <= r; ++d) {
        acc += k[static_cast<std::size_t>(d + r)] * tmp[static_cast<std::size_t>(detail::reflect_index(y + d, h) * w + x)];
      }
      // Convex combination of values in [0,1]; clamp only guards rounding.
      out.at(y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  return out;
}

inline Mask blur_to_mask(const Tensor& pattern, double sigma) {
  Mask m;
  m.values = gaussian_blur(pattern, sigma);
  m.kind = MaskKind::LowFrequency;
  m.sigma = sigma;
  return m;
}

inline Mask generate_uniform_mask(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  if (h <= 0 || w <= 0) throw DataError("uniform mask: extents must be positive");
  Rng rng(seed);
  Mask m;
  m.values = Tensor({h, w});
  for (float& v : m.values.data()) v = static_cast<float>(rng.uniform());
  m.kind = MaskKind::UniformRandom;
  m.seed = seed;
  return m;
}

inline Mask generate_low_frequency_mask(std::int64_t h, std::int64_t w, double p, double sigma, std::uint64_t seed) {
  Mask m = blur_to_mask(generate_binary_pattern(h, w, p, seed), sigma);
  m.seed = seed;
  m.bernoulli_p = p;
  return m;
}

inline Mask constant_mask(std::int64_t h, std::int64_t w, float value) {
  Mask m;
  m.values = Tensor({h, w}, value);
  return m;
}

}  // namespace vhdr
