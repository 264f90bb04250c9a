#pragma once

// Procedural HDR clips for desk-scale experiments. Each channel is
// r_min * 2^(stops * P) with P a field normalised to [0,1] over a canvas that
// is wider than the frame by (f-1)*velocity columns; frame t views the canvas
// at column offset (f-1-t)*velocity, so content translates right by
// `velocity` pixels per frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/core/random.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

enum class SceneKind { Gradient, Blobs };

inline std::string to_string(SceneKind k) { return k == SceneKind::Gradient ? "gradient" : "blobs"; }

inline SceneKind parse_scene_kind(const std::string& s) {
  if (s == "gradient") return SceneKind::Gradient;
  if (s == "blobs") return SceneKind::Blobs;
  throw DataError("unknown scene kind '" + s + "' (expected gradient or blobs)");
}

struct SceneMotion {
  std::int64_t velocity = 1;  // pixels per frame, along W
  double peak = 10000.0;      // maximum radiance in the clip
};

namespace detail {
inline std::vector<double> scene_field(SceneKind kind, std::int64_t h, std::int64_t cw, int channel, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(h * cw));
  if (kind == SceneKind::Gradient) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double freq = rng.uniform(0.5, 2.0) * 2.0 * std::numbers::pi / static_cast<double>(std::max(h, cw));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < cw; ++x) {
        const double u = std::cos(theta) * x + std::sin(theta) * y;
        p[static_cast<std::size_t>(y * cw + x)] = u / static_cast<double>(h + cw) + 0.25 * std::sin(freq * u + phase + channel);
      }
  } else {
    const int blobs = 3 + static_cast<int>(rng.below(4));
    std::vector<std::array<double, 4>> b(static_cast<std::size_t>(blobs));
    for (auto& e : b) {
      e = {rng.uniform(0.0, static_cast<double>(cw)), rng.uniform(0.0, static_cast<double>(h)),
           rng.uniform(0.06, 0.2) * static_cast<double>(std::min(h, cw)), rng.uniform(0.3, 1.0)};
    }
    const double tilt = rng.uniform(-0.2, 0.2);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < cw; ++x) {
        double v = tilt * static_cast<double>(x + y) / static_cast<double>(h + cw);
        for (const auto& [bx, by, r, a] : b) {
          const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
          v += a * std::exp(-0.5 * d2 / (r * r));
        }
        p[static_cast<std::size_t>(y * cw + x)] = v;
      }
  }
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  const double mn = *lo, span = *hi - *lo;
  for (double& v : p) v = span > 0.0 ? (v - mn) / span : 0.0;
  return p;
}
}  // namespace detail

/// F x H x W x 3 non-negative radiance with max/min ratio 2^stops.
inline Tensor procedural_scene(SceneKind kind, std::int64_t f, std::int64_t h, std::int64_t w, double stops,
                               std::uint64_t seed, const SceneMotion& motion = {}) {
  if (f <= 0 || h <= 0 || w <= 0) throw DataError("scene: extents must be positive");
  if (!(stops >= 0.0 && stops <= 30.0)) throw DataError("scene: dynamic range must lie in [0, 30] stops");
  if (motion.velocity < 0 || motion.velocity > w) throw DataError("scene: velocity out of range");
  if (!(motion.peak > 0.0)) throw DataError("scene: peak radiance must be > 0");
  const std::int64_t cw = w + (f - 1) * motion.velocity;
  const double r_min = motion.peak / std::exp2(stops);
  Tensor clip({f, h, w, 3});
  for (int c = 0; c < 3; ++c) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(kind == SceneKind::Gradient ? 1 : 2), static_cast<std::uint64_t>(c)}));
    const auto p = detail::scene_field(kind, h, cw, c, rng);
    for (std::int64_t t = 0; t < f; ++t) {
      const std::int64_t off = (f - 1 - t) * motion.velocity;
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          clip.at(t, y, x, c) = static_cast<float>(r_min * std::exp2(stops * p[static_cast<std::size_t>(y * cw + x + off)]));
        }
    }
  }
  return clip;
}

}  // namespace vhdr
