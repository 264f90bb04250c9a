#pragma once

// Sample index over a set of HDR source clips. Every entry is a complete
// recipe (source, window, mask kind, seed), so samples are regenerated on
// demand instead of stored.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/core/random.hpp"
#include "vhdr/io/clip_io.hpp"
#include "vhdr/optics/scene.hpp"
#include "vhdr/optics/synthesis.hpp"
#include "vhdr/pipeline/config.hpp"

namespace vhdr {

struct IndexEntry {
  std::size_t source = 0;
  SampleSpec spec;
  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

/// floor(n * mask_mix) uniform masks, the rest low-frequency, assigned to
/// entries through a seeded permutation.
inline std::vector<IndexEntry> build_dataset(const std::vector<Shape>& sources, const SynthesisConfig& cfg, std::int64_t n,
                                             double mask_mix, std::uint64_t seed) {
  if (sources.empty()) throw DataError("dataset: no sources");
  if (n < 1) throw DataError("dataset: sample count must be >= 1");
  if (!(mask_mix >= 0.0 && mask_mix <= 1.0)) throw DataError("dataset: mask_mix must lie in [0,1]");
  for (const auto& s : sources) check_source(s, cfg);
  const auto uniform = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * mask_mix));
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng kinds(derive_seed(seed, {0x6b696e6473ULL}));
  kinds.shuffle(order.begin(), order.end());

  std::vector<IndexEntry> index(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    Rng pick(derive_seed(s, {0x737263ULL}));
    IndexEntry& e = index[static_cast<std::size_t>(i)];
    e.source = static_cast<std::size_t>(pick.below(sources.size()));
    e.spec = draw_sample_geometry(sources[e.source], cfg, s);
  }
  for (std::int64_t k = 0; k < n; ++k) {
    index[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].spec.mask_kind =
        k < uniform ? MaskKind::UniformRandom : MaskKind::LowFrequency;
  }
  return index;
}

/// Indices of the validation samples: the round(n * fraction) entries with the
/// smallest seeded hash. The rest, in index order, are for training.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

inline Split split_by_hash(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::pair<std::uint64_t, std::size_t>> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = {derive_seed(seed, {0x76616cULL, i}), i};
  std::sort(h.begin(), h.end());
  const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  Split s;
  std::vector<bool> val(n, false);
  for (std::size_t i = 0; i < k && i < n; ++i) val[h[i].second] = true;
  for (std::size_t i = 0; i < n; ++i) (val[i] ? s.validation : s.train).push_back(i);
  if (s.train.empty()) throw DataError("dataset: validation split leaves no training samples");
  return s;
}

inline SceneKind scene_kind_for(const std::string& kind, std::int64_t k) {
  if (kind == "mixed") return k % 2 == 0 ? SceneKind::Gradient : SceneKind::Blobs;
  return parse_scene_kind(kind);
}

/// Procedural scene `k` of a config, used for training sources.
inline Tensor config_scene(const Config& c, std::int64_t k, std::uint64_t seed) {
  return procedural_scene(scene_kind_for(c.scene_kind, k), c.scene_frames, c.scene_size, c.scene_size, c.scene_stops,
                          derive_seed(seed, {0x7363656eULL, static_cast<std::uint64_t>(k)}),
                          SceneMotion{c.scene_velocity, c.scene_peak});
}

/// Clip directories under `dir` (sorted by name); `dir` itself if it holds frames.
inline std::vector<std::filesystem::path> clip_directories(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  if (std::filesystem::exists(dir / frame_file_name(0))) return {dir};
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / frame_file_name(0))) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError(dir.string() + ": no clip directories");
  return out;
}

/// Training sources: PFM clips from `source`, or `scenes` procedural clips.
inline std::vector<Tensor> load_sources(const Config& c) {
  std::vector<Tensor> out;
  if (!c.source.empty()) {
    for (const auto& d : clip_directories(c.source)) out.push_back(read_clip(d));
  } else {
    for (std::int64_t k = 0; k < c.scenes; ++k) out.push_back(config_scene(c, k, c.seed));
  }
  return out;
}

inline std::vector<Shape> shapes_of(const std::vector<Tensor>& clips) {
  std::vector<Shape> s;
  for (const auto& c : clips) s.push_back(c.shape());
  return s;
}

inline Sample synthesize_entry(const std::vector<Tensor>& sources, const IndexEntry& e, const SynthesisConfig& cfg) {
  return synthesize(sources.at(e.source), e.spec, cfg);
}

}  // namespace vhdr
