#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "vhdr/core/errors.hpp"
#include "vhdr/io/clip_io.hpp"
#include "vhdr/io/png.hpp"
#include "vhdr/metrics/metrics.hpp"
#include "vhdr/nets/network.hpp"
#include "vhdr/pipeline/trainer.hpp"
#include "vhdr/tensor/checkpoint.hpp"

namespace vhdr {

/// Network restored from a checkpoint. The architecture comes from the
/// checkpoint's sidecar when there is one; `requested` must agree with it.
inline Network load_network(const std::filesystem::path& checkpoint, std::optional<Architecture> requested) {
  const NamedTensors t = read_checkpoint(checkpoint);
  const auto saved = read_sidecar(checkpoint);
  if (saved && requested && saved->arch != *requested) {
    throw DataError(checkpoint.string() + " holds a " + to_string(saved->arch) + " network, " + to_string(*requested) +
                    " was requested");
  }
  if (!saved && !requested) throw UsageError(checkpoint.string() + " has no sidecar; pass the architecture");
  Network net = build_network(saved ? saved->arch : *requested);
  load_parameters(net, t);
  return net;
}

/// Display-referred preview: min(1, k x / x_max)^(1/2.2).
inline Tensor exposure_preview(const Tensor& linear_frame, double x_max, double k) {
  Tensor p = linear_frame;
  for (float& v : p.data()) v = static_cast<float>(std::pow(std::clamp(k * v / x_max, 0.0, 1.0), 1.0 / 2.2));
  return p;
}

struct Reconstruction {
  Tensor log_clip;     // F x H x W x 3
  Tensor linear_clip;  // exp(log) - eps, clamped at 0
};

inline Reconstruction reconstruct(const Network& net, const CodedClip& coded, double log_epsilon) {
  Tensor input = clip_to_network(coded.frames);
  const auto shapes = net.layer_shapes(input.shape());
  if (shapes.back() != input.shape()) {
    throw DataError("reconstruct: " + to_string(net.architecture()) + " maps " + shape_str(input.shape()) + " to " +
                    shape_str(shapes.back()));
  }
  Reconstruction r;
  r.log_clip = network_to_clip(net.forward(input));
  r.linear_clip = log_to_linear(r.log_clip, log_epsilon);
  return r;
}

/// Writes log/ and hdr/ PFM frames plus previews at two exposures under `out`.
inline void write_reconstruction(const std::filesystem::path& out, const Reconstruction& r) {
  namespace fs = std::filesystem;
  write_clip(out / "log", r.log_clip);
  write_clip(out / "hdr", r.linear_clip);
  fs::create_directories(out / "preview");
  const double x_max = std::max(1e-12, static_cast<double>(*std::max_element(r.linear_clip.data().begin(), r.linear_clip.data().end())));
  for (std::int64_t t = 0; t < r.linear_clip.extent(0); ++t) {
    const Tensor f = frame_of(r.linear_clip, t);
    char name[64];
    std::snprintf(name, sizeof name, "frame_%05lld_x1.png", static_cast<long long>(t));
    write_png(out / "preview" / name, exposure_preview(f, x_max, 1.0));
    std::snprintf(name, sizeof name, "frame_%05lld_x8.png", static_cast<long long>(t));
    write_png(out / "preview" / name, exposure_preview(f, x_max, 8.0));
  }
}

}  // namespace vhdr
