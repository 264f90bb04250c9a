#pragma once

// Training-pair synthesis: crop a window of frames out of an HDR source,
// draw a mask, simulate the coded capture, and pair it with log radiance.

#include <cmath>
#include <cstdint>

#include "vhdr/core/errors.hpp"
#include "vhdr/core/random.hpp"
#include "vhdr/optics/camera.hpp"
#include "vhdr/optics/mask.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

struct SynthesisConfig {
  std::int64_t frames = 4;
  std::int64_t crop = 64;
  double uniform_fraction = 0.5;  // probability of a uniform mask when drawn at random
  double bernoulli_p = 0.5;
  double sigma_min = 1.0;
  double sigma_max = 3.0;
  double log_epsilon = 1e-5;
  CameraModel camera;
};

/// Everything needed to regenerate one sample.
struct SampleSpec {
  std::int64_t start = 0;
  std::int64_t top = 0;
  std::int64_t left = 0;
  MaskKind mask_kind = MaskKind::UniformRandom;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const SampleSpec&, const SampleSpec&) = default;
};

struct Sample {
  CodedClip coded;
  Tensor target;  // F x H x W x 3, log(x + eps)
  SampleSpec spec;
};

inline void check_source(const Shape& source, const SynthesisConfig& cfg) {
  if (source.size() != 4 || source[3] != 3) throw DataError("synthesis: source must be F x H x W x 3, got " + shape_str(source));
  if (source[0] < cfg.frames) {
    throw DataError("synthesis: source has " + std::to_string(source[0]) + " frames, need " + std::to_string(cfg.frames));
  }
  if (cfg.crop > source[1] || cfg.crop > source[2]) {
    throw DataError("synthesis: crop " + std::to_string(cfg.crop) + " exceeds source extent " + std::to_string(source[1]) +
                    "x" + std::to_string(source[2]));
  }
  if (cfg.crop <= 0 || cfg.crop % 2) throw DataError("synthesis: crop must be positive and even");
}

/// Random start frame, crop origin and sigma. The mask kind is left to the caller.
inline SampleSpec draw_sample_geometry(const Shape& source, const SynthesisConfig& cfg, std::uint64_t seed) {
  check_source(source, cfg);
  Rng rng(derive_seed(seed, {0x67656fULL}));
  SampleSpec s;
  s.start = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(source[0] - cfg.frames + 1)));
  s.top = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(source[1] - cfg.crop + 1)));
  s.left = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(source[2] - cfg.crop + 1)));
  s.sigma = rng.uniform(cfg.sigma_min, cfg.sigma_max);
  s.seed = seed;
  return s;
}

inline Tensor crop_clip(const Tensor& source, std::int64_t start, std::int64_t frames, std::int64_t top, std::int64_t left,
                        std::int64_t h, std::int64_t w) {
  Tensor out({frames, h, w, 3});
  for (std::int64_t t = 0; t < frames; ++t)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        for (std::int64_t c = 0; c < 3; ++c) out.at(t, y, x, c) = source.at(start + t, top + y, left + x, c);
  return out;
}

inline Tensor log_target(const Tensor& radiance, double eps) {
  Tensor t = radiance;
  for (float& v : t.data()) v = static_cast<float>(std::log(static_cast<double>(v) + eps));
  return t;
}

inline Mask draw_mask(const SampleSpec& s, const SynthesisConfig& cfg, std::int64_t h, std::int64_t w) {
  const std::uint64_t mseed = derive_seed(s.seed, {0x6d61736bULL});
  if (s.mask_kind == MaskKind::UniformRandom) return generate_uniform_mask(h, w, mseed);
  return generate_low_frequency_mask(h, w, cfg.bernoulli_p, s.sigma, mseed);
}

inline Sample synthesize(const Tensor& source, const SampleSpec& spec, const SynthesisConfig& cfg) {
  check_source(source.shape(), cfg);
  if (spec.start < 0 || spec.start + cfg.frames > source.extent(0) || spec.top < 0 || spec.left < 0 ||
      spec.top + cfg.crop > source.extent(1) || spec.left + cfg.crop > source.extent(2)) {
    throw DataError("synthesis: sample window lies outside the source");
  }
  const Tensor window = crop_clip(source, spec.start, cfg.frames, spec.top, spec.left, cfg.crop, cfg.crop);
  const Mask mask = draw_mask(spec, cfg, cfg.crop, cfg.crop);
  Sample s;
  s.coded = capture(window, mask, cfg.camera, derive_seed(spec.seed, {0x636170ULL}));
  s.target = log_target(window, cfg.log_epsilon);
  s.spec = spec;
  return s;
}

/// Fully random sample: geometry plus a mask kind drawn with `uniform_fraction`.
inline Sample synthesize_sample(const Tensor& source, const SynthesisConfig& cfg, std::uint64_t seed) {
  SampleSpec spec = draw_sample_geometry(source.shape(), cfg, seed);
  Rng rng(derive_seed(seed, {0x6b696e64ULL}));
  spec.mask_kind = rng.bernoulli(cfg.uniform_fraction) ? MaskKind::UniformRandom : MaskKind::LowFrequency;
  return synthesize(source, spec, cfg);
}

}  // namespace vhdr
