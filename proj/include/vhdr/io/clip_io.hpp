#pragma once

// Clips on disk: a directory of frame_%05d.pfm files. Coded clips add
// mask.pfm (grey mask replicated over three channels) and capture.meta.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/io/keyvalue.hpp"
#include "vhdr/io/pfm.hpp"
#include "vhdr/optics/camera.hpp"
#include "vhdr/optics/mask.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

inline std::string frame_file_name(std::int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05lld.pfm", static_cast<long long>(t));
  return buf;
}

inline Tensor frame_of(const Tensor& clip, std::int64_t t) {
  const auto h = clip.extent(1), w = clip.extent(2), c = clip.extent(3);
  const auto n = static_cast<std::size_t>(h * w * c);
  return Tensor({h, w, c}, std::vector<float>(clip.raw() + static_cast<std::size_t>(t) * n, clip.raw() + static_cast<std::size_t>(t + 1) * n));
}

inline void write_clip(const std::filesystem::path& dir, const Tensor& clip) {
  if (clip.rank() != 4 || clip.extent(3) != 3) throw DataError("write_clip: expected F x H x W x 3, got " + shape_str(clip.shape()));
  std::filesystem::create_directories(dir);
  for (std::int64_t t = 0; t < clip.extent(0); ++t) write_pfm(dir / frame_file_name(t), frame_of(clip, t));
}

/// Reads frame_00000.pfm, frame_00001.pfm, ... until the first gap.
inline Tensor read_clip(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a clip directory: " + dir.string());
  std::vector<Tensor> frames;
  while (std::filesystem::exists(dir / frame_file_name(static_cast<std::int64_t>(frames.size())))) {
    frames.push_back(read_pfm(dir / frame_file_name(static_cast<std::int64_t>(frames.size()))));
    if (frames.back().shape() != frames.front().shape()) {
      throw DataError(dir.string() + ": frame " + std::to_string(frames.size() - 1) + " has extents " +
                      shape_str(frames.back().shape()) + ", frame 0 has " + shape_str(frames.front().shape()));
    }
  }
  if (frames.empty()) throw DataError(dir.string() + ": no frame_00000.pfm");
  const Shape fs = frames.front().shape();
  Tensor clip({static_cast<std::int64_t>(frames.size()), fs[0], fs[1], fs[2]});
  const std::size_t n = frames.front().size();
  for (std::size_t t = 0; t < frames.size(); ++t) std::copy_n(frames[t].raw(), n, clip.raw() + t * n);
  return clip;
}

inline KeyValues capture_metadata(const CodedClip& c) {
  return {{"seed", std::to_string(c.seed)},
          {"mask_kind", to_string(c.mask.kind)},
          {"mask_seed", std::to_string(c.mask.seed)},
          {"sigma", format_number(c.mask.sigma)},
          {"bernoulli_p", format_number(c.mask.bernoulli_p)},
          {"exposure", format_number(c.camera.exposure)},
          {"gamma", format_number(c.camera.gamma)},
          {"bit_depth", std::to_string(c.camera.bit_depth)},
          {"full_well_scale", format_number(c.camera.full_well_scale)},
          {"shot_noise_scale", format_number(c.camera.shot_noise_scale)},
          {"read_noise_sigma", format_number(c.camera.read_noise_sigma)},
          {"fixed_pattern_sigma", format_number(c.camera.fixed_pattern_sigma)}};
}

inline void write_coded_clip(const std::filesystem::path& dir, const CodedClip& c) {
  write_clip(dir, c.frames);
  const auto h = c.mask.height(), w = c.mask.width();
  Tensor m({h, w, 3});
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k) m.at(y, x, k) = c.mask.at(y, x);
  write_pfm(dir / "mask.pfm", m);
  write_key_values(dir / "capture.meta", capture_metadata(c));
}

inline CodedClip read_coded_clip(const std::filesystem::path& dir) {
  CodedClip c;
  c.frames = read_clip(dir);
  if (std::filesystem::exists(dir / "capture.meta")) {
    const KeyValues kv = read_key_values(dir / "capture.meta");
    auto get = [&](const char* k) -> const std::string& {
      const auto it = kv.find(k);
      if (it == kv.end()) throw DataError((dir / "capture.meta").string() + ": missing key '" + k + "'");
      return it->second;
    };
    c.seed = parse_unsigned("seed", get("seed"));
    c.mask.kind = parse_mask_kind(get("mask_kind"));
    c.mask.seed = parse_unsigned("mask_seed", get("mask_seed"));
    c.mask.sigma = parse_number("sigma", get("sigma"));
    c.mask.bernoulli_p = parse_number("bernoulli_p", get("bernoulli_p"));
    c.camera.exposure = parse_number("exposure", get("exposure"));
    c.camera.gamma = parse_number("gamma", get("gamma"));
    c.camera.bit_depth = static_cast<int>(parse_integer("bit_depth", get("bit_depth")));
    c.camera.full_well_scale = parse_number("full_well_scale", get("full_well_scale"));
    c.camera.shot_noise_scale = parse_number("shot_noise_scale", get("shot_noise_scale"));
    c.camera.read_noise_sigma = parse_number("read_noise_sigma", get("read_noise_sigma"));
    c.camera.fixed_pattern_sigma = parse_number("fixed_pattern_sigma", get("fixed_pattern_sigma"));
  }
  if (std::filesystem::exists(dir / "mask.pfm")) {
    const Tensor m = read_pfm(dir / "mask.pfm");
    if (m.extent(0) != c.frames.extent(1) || m.extent(1) != c.frames.extent(2)) {
      throw DataError((dir / "mask.pfm").string() + ": extents do not match the frames");
    }
    c.mask.values = Tensor({m.extent(0), m.extent(1)});
    for (std::int64_t y = 0; y < m.extent(0); ++y)
      for (std::int64_t x = 0; x < m.extent(1); ++x) c.mask.values.at(y, x) = m.at(y, x, 0);
  }
  return c;
}

}  // namespace vhdr
