#pragma once

// Subcommands: scene, simulate, train, reconstruct, evaluate, audit.
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/io/clip_io.hpp"
#include "vhdr/io/keyvalue.hpp"
#include "vhdr/metrics/metrics.hpp"
#include "vhdr/nets/audit.hpp"
#include "vhdr/optics/camera.hpp"
#include "vhdr/optics/mask.hpp"
#include "vhdr/optics/synthesis.hpp"
#include "vhdr/pipeline/config.hpp"
#include "vhdr/pipeline/dataset.hpp"
#include "vhdr/pipeline/reconstruct.hpp"
#include "vhdr/pipeline/trainer.hpp"

namespace vhdr {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

namespace cli {

inline void print_config(std::ostream& out, const Config& c) { out << "# resolved config\n" << format_config(c) << "# end config\n"; }

/// scene: one procedural HDR clip written to out/.
inline int scene(const Config& c, std::ostream& out) {
  const Tensor clip = config_scene(c, 0, c.seed);
  write_clip(c.out, clip);
  out << "wrote " << clip.extent(0) << " frames " << clip.extent(1) << "x" << clip.extent(2) << " to " << c.out << "\n";
  return kExitOk;
}

inline Mask simulation_mask(const Config& c, std::int64_t h, std::int64_t w) {
  const std::uint64_t mseed = derive_seed(c.seed, {0x6d61736bULL});
  bool uniform = c.mask == "uniform";
  if (c.mask == "random") uniform = Rng(derive_seed(c.seed, {0x6b696e64ULL})).bernoulli(c.mask_mix);
  if (uniform) return generate_uniform_mask(h, w, mseed);
  return generate_low_frequency_mask(h, w, c.bernoulli_p, c.sigma, mseed);
}

/// simulate: coded capture of `input` (or a procedural scene) into out/coded,
/// with the radiance copied to out/truth.
inline int simulate(const Config& c, std::ostream& out) {
  const Tensor clip = c.input.empty() ? config_scene(c, 0, c.seed) : read_clip(c.input);
  if (clip.rank() != 4 || clip.extent(3) != 3) throw DataError("simulate: expected an F x H x W x 3 clip");
  const Mask mask = simulation_mask(c, clip.extent(1), clip.extent(2));
  const CodedClip coded = capture(clip, mask, c.camera(), derive_seed(c.seed, {0x636170ULL}));
  const std::filesystem::path dir = c.out;
  write_coded_clip(dir / "coded", coded);
  write_clip(dir / "truth", clip);
  out << "wrote " << clip.extent(0) << " coded frames (" << to_string(mask.kind) << " mask) to " << (dir / "coded").string() << "\n";
  return kExitOk;
}

inline int train(const Config& c, std::ostream& out, std::ostream& err) {
  const TrainResult r = vhdr::train(c, &err);
  out << "trained steps " << r.first_step << ".." << r.last_step;
  if (std::isfinite(r.best_validation)) out << ", best validation loss " << format_number(r.best_validation);
  out << "\n";
  if (!r.metrics.clips.empty()) out << r.metrics.table();
  return kExitOk;
}

inline std::optional<Architecture> requested_arch(const Config& c) {
  if (c.explicit_keys.count("arch")) return c.arch;
  return std::nullopt;
}

inline int reconstruct(const Config& c, std::ostream& out) {
  if (c.checkpoint.empty() || c.input.empty()) throw UsageError("reconstruct needs --checkpoint and --input");
  const Network net = load_network(c.checkpoint, requested_arch(c));
  const CodedClip coded = read_coded_clip(c.input);
  const Reconstruction r = vhdr::reconstruct(net, coded, c.log_epsilon);
  write_reconstruction(c.out, r);
  out << "reconstructed " << r.log_clip.extent(0) << " frames with " << to_string(net.architecture()) << " into " << c.out << "\n";
  return kExitOk;
}

/// evaluate: linear HDR clips under --input against --truth. Either may be a
/// clip directory or a directory of clip directories matched by name.
inline int evaluate(const Config& c, std::ostream& out) {
  if (c.truth.empty() || c.input.empty()) throw UsageError("evaluate needs --truth and --input");
  const auto truths = clip_directories(c.truth), outs = clip_directories(c.input);
  if (truths.size() != outs.size()) {
    throw DataError("evaluate: " + std::to_string(truths.size()) + " truth clips but " + std::to_string(outs.size()) + " inputs");
  }
  const FeatureExtractor fx = make_feature_extractor(c);
  MetricsReport report;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths.size() > 1 && truths[i].filename() != outs[i].filename()) {
      throw DataError("evaluate: clip names differ: " + truths[i].filename().string() + " vs " + outs[i].filename().string());
    }
    const Tensor gt = log_target(read_clip(truths[i]), c.log_epsilon);
    const Tensor est = log_target(read_clip(outs[i]), c.log_epsilon);
    report.clips.push_back(evaluate_clip(gt, est, fx, truths[i].filename().string(), c.tau));
  }
  std::filesystem::create_directories(c.out);
  std::ofstream csv(std::filesystem::path(c.out) / "metrics.csv", std::ios::binary | std::ios::trunc);
  csv << report.csv();
  if (!csv) throw DataError("cannot write metrics.csv in " + c.out);
  out << report.table();
  return kExitOk;
}

inline int audit(const Config& c, std::ostream& out) {
  const Network net = c.checkpoint.empty() ? build_network(c.arch) : load_network(c.checkpoint, requested_arch(c));
  const AuditReport r = vhdr::audit(net);
  out << format_audit(net, r);
  return r.ok() ? kExitOk : kExitData;
}

}  // namespace cli

/// Parses argv, layers config file and overrides over the defaults, prints the
/// resolved config and runs the subcommand.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"HDR video reconstruction from snapshot-coded LDR video", "vhdr"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"scene", "write a procedural HDR clip"},
      {"simulate", "simulate a coded LDR capture of an HDR clip"},
      {"train", "train a reconstruction network"},
      {"reconstruct", "reconstruct HDR frames from a coded clip"},
      {"evaluate", "compare reconstructed clips with ground truth"},
      {"audit", "check a network against the reference layer tables"}};
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key=value config file");
    for (const auto& key : config_keys()) options[name + "/" + key] = sub->add_option("--" + key, values[key]);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    Config c;
    if (!config_path.empty()) {
      try {
        apply_key_values(c, read_key_values(config_path));
      } catch (const DataError& e) {
        throw UsageError(e.what());
      }
    }
    KeyValues overrides;
    for (const auto& key : config_keys()) {
      if (options.at(name + "/" + key)->count() > 0) overrides[key] = values[key];
    }
    apply_key_values(c, overrides);
    validate(c);
    cli::print_config(out, c);
    if (name == "scene") return cli::scene(c, out);
    if (name == "simulate") return cli::simulate(c, out);
    if (name == "train") return cli::train(c, out, err);
    if (name == "reconstruct") return cli::reconstruct(c, out);
    if (name == "evaluate") return cli::evaluate(c, out);
    return cli::audit(c, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace vhdr
