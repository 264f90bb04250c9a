#pragma once

// Flat key=value run configuration shared by every subcommand. Defaults are
// desk scale; a config file and then command-line overrides are layered on
// top. The printed form re-parses to an identical Config.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/io/keyvalue.hpp"
#include "vhdr/losses/losses.hpp"
#include "vhdr/nets/network.hpp"
#include "vhdr/optics/camera.hpp"
#include "vhdr/optics/synthesis.hpp"

namespace vhdr {

struct Config {
  Architecture arch = Architecture::C3D;
  double lambda1 = 1.0;
  double lambda2 = 0.01;
  double lambda3 = 0.001;
  double lambda4 = 0.001;
  std::int64_t grid_index = -1;  // >= 0 replaces lambda2..4 with that grid entry
  double lr = 1e-4;
  std::int64_t batch = 4;
  std::int64_t epochs = 10;
  std::int64_t max_steps = 0;  // 0: no limit
  std::int64_t frames = 4;
  std::int64_t crop = 64;
  std::int64_t samples = 64;
  double val_fraction = 0.1;
  double mask_mix = 0.5;  // fraction of uniform masks
  double bernoulli_p = 0.5;
  double sigma_min = 1.0;
  double sigma_max = 3.0;
  double log_epsilon = 1e-5;
  double tau = 100.0;
  std::uint64_t seed = 0;
  std::uint64_t feature_seed = 7;
  std::string feature_weights;  // checkpoint of extractor weights; empty: seeded standard extractor

  double exposure = 1.0 / 30.0;
  double gamma = 2.2;
  std::int64_t bit_depth = 10;
  double full_well_scale = 0.01;
  double shot_noise = 1e-4;
  double read_noise = 1.0;
  double fixed_pattern_noise = 0.0;

  std::string source;  // directory of HDR clip directories; empty: procedural scenes
  std::int64_t scenes = 8;
  std::string scene_kind = "mixed";
  std::int64_t scene_frames = 8;
  std::int64_t scene_size = 96;
  double scene_stops = 16.0;
  std::int64_t scene_velocity = 1;
  double scene_peak = 10000.0;

  std::string out = "out";
  bool resume = false;
  std::string checkpoint;
  std::string input;
  std::string truth;
  std::string mask = "random";
  double sigma = 2.0;

  // Keys given explicitly by a file or override; not part of equality.
  std::set<std::string> explicit_keys;

  CameraModel camera() const {
    CameraModel c;
    c.exposure = exposure;
    c.gamma = gamma;
    c.bit_depth = static_cast<int>(bit_depth);
    c.full_well_scale = full_well_scale;
    c.shot_noise_scale = shot_noise;
    c.read_noise_sigma = read_noise;
    c.fixed_pattern_sigma = fixed_pattern_noise;
    return c;
  }

  SynthesisConfig synthesis() const {
    SynthesisConfig s;
    s.frames = frames;
    s.crop = crop;
    s.uniform_fraction = mask_mix;
    s.bernoulli_p = bernoulli_p;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.log_epsilon = log_epsilon;
    s.camera = camera();
    return s;
  }

  LossWeights loss_weights() const;

  bool operator==(const Config& o) const;
};

/// lambda1 = 1; lambda2 in {0.01, 0.1}; per lambda2 one content-only run and
/// four runs with lambda3 = lambda4 in {0.001, 0.01, 0.1, 1}.
inline std::vector<LossWeights> lambda_grid() {
  std::vector<LossWeights> g;
  for (double l2 : {0.01, 0.1}) {
    g.push_back({1.0, l2, 0.0, 0.0});
    for (double lt : {0.001, 0.01, 0.1, 1.0}) g.push_back({1.0, l2, lt, lt});
  }
  return g;
}

inline LossWeights Config::loss_weights() const {
  if (grid_index >= 0) return lambda_grid().at(static_cast<std::size_t>(grid_index));
  return {lambda1, lambda2, lambda3, lambda4};
}

namespace detail {

struct ConfigField {
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

template <typename T>
ConfigField config_field(std::string key, T Config::*m) {
  ConfigField f;
  f.key = key;
  f.get = [m](const Config& c) -> std::string {
    if constexpr (std::is_same_v<T, double>) return format_number(c.*m);
    else if constexpr (std::is_same_v<T, bool>) return c.*m ? "true" : "false";
    else if constexpr (std::is_same_v<T, std::string>) return c.*m;
    else if constexpr (std::is_same_v<T, Architecture>) return to_string(c.*m);
    else return std::to_string(c.*m);
  };
  f.set = [m, key](Config& c, const std::string& v) {
    if constexpr (std::is_same_v<T, double>) c.*m = parse_number(key, v);
    else if constexpr (std::is_same_v<T, bool>) c.*m = parse_bool(key, v);
    else if constexpr (std::is_same_v<T, std::string>) c.*m = v;
    else if constexpr (std::is_same_v<T, Architecture>) c.*m = parse_architecture(v);
    else if constexpr (std::is_same_v<T, std::uint64_t>) c.*m = parse_unsigned(key, v);
    else c.*m = parse_integer(key, v);
  };
  return f;
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      config_field("arch", &Config::arch),
      config_field("lambda1", &Config::lambda1),
      config_field("lambda2", &Config::lambda2),
      config_field("lambda3", &Config::lambda3),
      config_field("lambda4", &Config::lambda4),
      config_field("grid_index", &Config::grid_index),
      config_field("lr", &Config::lr),
      config_field("batch", &Config::batch),
      config_field("epochs", &Config::epochs),
      config_field("max_steps", &Config::max_steps),
      config_field("frames", &Config::frames),
      config_field("crop", &Config::crop),
      config_field("samples", &Config::samples),
      config_field("val_fraction", &Config::val_fraction),
      config_field("mask_mix", &Config::mask_mix),
      config_field("bernoulli_p", &Config::bernoulli_p),
      config_field("sigma_min", &Config::sigma_min),
      config_field("sigma_max", &Config::sigma_max),
      config_field("log_epsilon", &Config::log_epsilon),
      config_field("tau", &Config::tau),
      config_field("seed", &Config::seed),
      config_field("feature_seed", &Config::feature_seed),
      config_field("feature_weights", &Config::feature_weights),
      config_field("exposure", &Config::exposure),
      config_field("gamma", &Config::gamma),
      config_field("bit_depth", &Config::bit_depth),
      config_field("full_well_scale", &Config::full_well_scale),
      config_field("shot_noise", &Config::shot_noise),
      config_field("read_noise", &Config::read_noise),
      config_field("fixed_pattern_noise", &Config::fixed_pattern_noise),
      config_field("source", &Config::source),
      config_field("scenes", &Config::scenes),
      config_field("scene_kind", &Config::scene_kind),
      config_field("scene_frames", &Config::scene_frames),
      config_field("scene_size", &Config::scene_size),
      config_field("scene_stops", &Config::scene_stops),
      config_field("scene_velocity", &Config::scene_velocity),
      config_field("scene_peak", &Config::scene_peak),
      config_field("out", &Config::out),
      config_field("resume", &Config::resume),
      config_field("checkpoint", &Config::checkpoint),
      config_field("input", &Config::input),
      config_field("truth", &Config::truth),
      config_field("mask", &Config::mask),
      config_field("sigma", &Config::sigma),
  };
  return fields;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& f : detail::config_fields()) k.push_back(f.key);
  return k;
}

inline KeyValues to_key_values(const Config& c) {
  KeyValues kv;
  for (const auto& f : detail::config_fields()) kv[f.key] = f.get(c);
  return kv;
}

inline bool Config::operator==(const Config& o) const { return to_key_values(*this) == to_key_values(o); }

/// Applies `kv` on top of `c`; unknown keys are usage errors.
inline void apply_key_values(Config& c, const KeyValues& kv) {
  const auto& fields = detail::config_fields();
  for (const auto& [k, v] : kv) {
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == k; });
    if (it == fields.end()) throw UsageError("unknown config key '" + k + "'");
    try {
      it->set(c, v);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    c.explicit_keys.insert(k);
  }
}

inline Config config_from_key_values(const KeyValues& kv) {
  Config c;
  apply_key_values(c, kv);
  return c;
}

inline std::string format_config(const Config& c) { return format_key_values(to_key_values(c)); }

inline Config parse_config(const std::string& text) {
  try {
    return config_from_key_values(parse_key_values(text));
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

/// Checks ranges and cross-field constraints; throws UsageError.
inline void validate(const Config& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw UsageError(msg);
  };
  need(c.lr > 0.0, "lr must be > 0");
  need(c.batch >= 1, "batch must be >= 1");
  need(c.epochs >= 1, "epochs must be >= 1");
  need(c.max_steps >= 0, "max_steps must be >= 0");
  need(c.frames >= 1, "frames must be >= 1");
  need(c.crop > 0 && c.crop % 2 == 0, "crop must be positive and even");
  const int factor = build_network(c.arch).spatial_downsampling();
  need(c.crop % factor == 0, "crop " + std::to_string(c.crop) + " must be divisible by " + std::to_string(factor) + " for " +
                                 to_string(c.arch));
  need(c.samples >= 1, "samples must be >= 1");
  need(c.val_fraction >= 0.0 && c.val_fraction < 1.0, "val_fraction must lie in [0,1)");
  need(c.mask_mix >= 0.0 && c.mask_mix <= 1.0, "mask_mix must lie in [0,1]");
  need(c.bernoulli_p > 0.0 && c.bernoulli_p < 1.0, "bernoulli_p must lie in (0,1)");
  need(c.sigma_min >= 0.0 && c.sigma_min <= c.sigma_max, "need 0 <= sigma_min <= sigma_max");
  need(c.sigma >= 0.0, "sigma must be >= 0");
  need(c.log_epsilon > 0.0, "log_epsilon must be > 0");
  need(c.tau > 1.0, "tau must be > 1");
  need(c.grid_index >= -1 && c.grid_index < static_cast<std::int64_t>(lambda_grid().size()), "grid_index must lie in [-1,10)");
  need(c.scenes >= 1 && c.scene_frames >= 1 && c.scene_size > 0, "scene extents must be positive");
  need(c.scene_kind == "mixed" || c.scene_kind == "gradient" || c.scene_kind == "blobs",
       "scene_kind must be mixed, gradient or blobs");
  need(c.mask == "random" || c.mask == "uniform" || c.mask == "lowfreq", "mask must be random, uniform or lowfreq");
  need(!c.out.empty(), "out must not be empty");
  try {
    c.camera().validate();
    c.loss_weights().validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

}  // namespace vhdr
