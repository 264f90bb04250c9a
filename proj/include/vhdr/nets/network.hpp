#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/core/random.hpp"
#include "vhdr/tensor/conv.hpp"
#include "vhdr/tensor/graph.hpp"
#include "vhdr/tensor/init.hpp"
#include "vhdr/tensor/ops.hpp"

namespace vhdr {

enum class Architecture { C3D, DC3D, C3DED };

inline std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::C3D: return "C3D";
    case Architecture::DC3D: return "DC3D";
    case Architecture::C3DED: return "C3DED";
  }
  return "?";
}

inline Architecture parse_architecture(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (s == "C3D") return Architecture::C3D;
  if (s == "DC3D") return Architecture::DC3D;
  if (s == "C3DED") return Architecture::C3DED;
  throw UsageError("unknown architecture '" + s + "' (expected c3d, dc3d or c3ded)");
}

enum class LayerKind { Conv, DilatedConv, ConvDown, DeconvUp };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::DilatedConv: return "dilated";
    case LayerKind::ConvDown: return "conv_down";
    case LayerKind::DeconvUp: return "deconv_up";
  }
  return "?";
}

struct LayerSpec {
  int index = 0;  // 1-based, as in the architecture tables
  LayerKind kind = LayerKind::Conv;
  ConvSpec conv;
  bool relu = true;
  /// Earlier layers whose (activated) outputs are concatenated after the
  /// previous layer's output to form this layer's input.
  std::vector<int> concat_sources;
};

inline std::string triple_str(const Triple& t) {
  if (t[0] == t[1] && t[1] == t[2]) return std::to_string(t[0]);
  return "(" + std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]) + ")";
}

/// Ordered layer list plus parameters for one of the three reconstruction nets.
class Network {
 public:
  Network(Architecture arch, std::vector<LayerSpec> layers) : arch_(arch), layers_(std::move(layers)) {}

  Architecture architecture() const noexcept { return arch_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  ParameterStore& parameters() noexcept { return params_; }
  const ParameterStore& parameters() const noexcept { return params_; }

  static std::string weight_name(int index) { return layer_prefix(index) + ".weight"; }
  static std::string bias_name(int index) { return layer_prefix(index) + ".bias"; }

  /// Kaiming-uniform weights and zero biases from a fixed seed.
  void initialize(std::uint64_t seed) {
    params_ = ParameterStore();
    Rng rng(derive_seed(seed, {0x6e6574ULL}));
    for (const auto& l : layers_) {
      params_.add(weight_name(l.index), kaiming_uniform(l.conv, rng));
      params_.add(bias_name(l.index), Tensor(Shape{l.conv.out_channels}));
    }
  }

  /// Rejects inputs the architecture cannot map back to their own shape.
  void check_input(const Shape& s) const {
    if (s.size() != 5) throw DataError(to_string(arch_) + ": input must be N x C x F x H x W, got " + shape_str(s));
    if (s[1] != 3) throw DataError(to_string(arch_) + ": input must have 3 channels, got " + std::to_string(s[1]));
    const int factor = spatial_downsampling();
    if (s[3] % factor != 0 || s[4] % factor != 0) {
      throw DataError(to_string(arch_) + ": H and W must be divisible by " + std::to_string(factor) + ", got " +
                      std::to_string(s[3]) + "x" + std::to_string(s[4]));
    }
  }

  /// Product of the spatial strides along the encoder.
  int spatial_downsampling() const {
    int f = 1;
    for (const auto& l : layers_) {
      if (!l.conv.transposed) f *= l.conv.stride[1];
    }
    return f;
  }

  /// Records the forward pass into `g`, registering every parameter.
  NodeId forward(Graph& g, NodeId input) const {
    check_input(g.value(input).shape());
    std::vector<NodeId> outputs(layers_.size() + 1);
    NodeId x = input;
    for (const auto& l : layers_) {
      for (int src : l.concat_sources) x = concat_channels(g, x, outputs.at(static_cast<std::size_t>(src)));
      const NodeId w = g.parameter(weight_name(l.index), params_.at(weight_name(l.index)));
      const NodeId b = g.parameter(bias_name(l.index), params_.at(bias_name(l.index)));
      x = conv3d(g, x, w, b, l.conv);
      if (l.relu) x = relu(g, x);
      outputs[static_cast<std::size_t>(l.index)] = x;
    }
    return x;
  }

  /// Inference without gradient recording.
  Tensor forward(const Tensor& input) const {
    check_input(input.shape());
    std::vector<Tensor> kept(layers_.size() + 1);
    std::vector<bool> needed(layers_.size() + 1, false);
    for (const auto& l : layers_) {
      for (int src : l.concat_sources) needed[static_cast<std::size_t>(src)] = true;
    }
    Tensor x = input;
    for (const auto& l : layers_) {
      for (int src : l.concat_sources) x = concat_channels(x, kept.at(static_cast<std::size_t>(src)));
      x = conv3d_forward(x, l.conv, params_.at(weight_name(l.index)), params_.at(bias_name(l.index)));
      if (l.relu) x = relu(x);
      if (needed[static_cast<std::size_t>(l.index)]) kept[static_cast<std::size_t>(l.index)] = x;
    }
    return x;
  }

  /// Output shape after every layer for a given input shape.
  std::vector<Shape> layer_shapes(const Shape& input) const {
    check_input(input);
    std::vector<Shape> out(layers_.size() + 1);
    Shape x = input;
    for (const auto& l : layers_) {
      for (int src : l.concat_sources) {
        const Shape& s = out.at(static_cast<std::size_t>(src));
        if (s[2] != x[2] || s[3] != x[3] || s[4] != x[4]) {
          throw DataError(to_string(arch_) + ": skip from layer " + std::to_string(src) + " into layer " +
                          std::to_string(l.index) + " has mismatched extents");
        }
        x[1] += s[1];
      }
      x = conv3d_output_shape(x, l.conv);
      out[static_cast<std::size_t>(l.index)] = x;
    }
    out.erase(out.begin());
    return out;
  }

  /// Receptive field along one axis (0=F, 1=H, 2=W) of the last layer,
  /// following the main (non-skip) path.
  std::int64_t receptive_field(int axis) const {
    double rf = 1.0;
    double jump = 1.0;
    for (const auto& l : layers_) {
      const auto a = static_cast<std::size_t>(axis);
      rf += (l.conv.kernel[a] - 1) * l.conv.dilation[a] * jump;
      if (l.conv.transposed) {
        jump /= l.conv.stride[a];
      } else {
        jump *= l.conv.stride[a];
      }
    }
    return static_cast<std::int64_t>(rf);
  }

  /// One row per layer: index, type, K, S, Ch, D, skip sources.
  std::string dump() const {
    std::ostringstream os;
    os << "# architecture " << to_string(arch_) << ", " << layers_.size() << " layers, " << params_.element_count()
       << " parameters\n";
    os << std::left << std::setw(4) << "L" << std::setw(11) << "type" << std::setw(9) << "K" << std::setw(9) << "S"
       << std::setw(6) << "Ch" << std::setw(9) << "D" << "skip\n";
    for (const auto& l : layers_) {
      std::string skip;
      for (int s : l.concat_sources) skip += (skip.empty() ? "" : ",") + std::to_string(s);
      os << std::left << std::setw(4) << l.index << std::setw(11) << to_string(l.kind) << std::setw(9)
         << triple_str(l.conv.kernel) << std::setw(9) << triple_str(l.conv.stride) << std::setw(6)
         << l.conv.out_channels << std::setw(9) << triple_str(l.conv.dilation) << (skip.empty() ? "-" : skip) << "\n";
    }
    return os.str();
  }

 private:
  static std::string layer_prefix(int index) {
    std::ostringstream os;
    os << "conv" << std::setw(2) << std::setfill('0') << index;
    return os.str();
  }

  Architecture arch_;
  std::vector<LayerSpec> layers_;
  ParameterStore params_;
};

namespace detail {

// In-frame dilation: frames are never dilated or strided.
inline constexpr Triple kInFrame2{1, 2, 2};
inline constexpr Triple kNone{1, 1, 1};

inline LayerSpec conv_layer(int index, int in, int out, int k, Triple dilation = kNone, Triple stride = kNone) {
  LayerSpec l;
  l.index = index;
  l.conv = ConvSpec::same_size(in, out, {k, k, k}, dilation, stride);
  l.kind = stride != kNone ? LayerKind::ConvDown : (dilation != kNone ? LayerKind::DilatedConv : LayerKind::Conv);
  return l;
}

inline Network ten_layer_net(Architecture arch, const std::vector<bool>& dilated, std::uint64_t seed) {
  std::vector<LayerSpec> layers;
  int in = 3;
  for (int i = 1; i <= 10; ++i) {
    const int out = i == 10 ? 3 : 64;
    layers.push_back(conv_layer(i, in, out, 3, dilated[static_cast<std::size_t>(i - 1)] ? kInFrame2 : kNone));
    in = out;
  }
  layers.back().relu = false;
  Network net(arch, std::move(layers));
  net.initialize(seed);
  return net;
}

}  // namespace detail

/// Ten 3x3x3 convolutions, 64 channels, 3-channel output.
inline Network build_c3d(std::uint64_t seed = 0) {
  return detail::ten_layer_net(Architecture::C3D, std::vector<bool>(10, false), seed);
}

/// C3D with layers 2, 4, 7 and 9 dilated by 2 within each frame.
inline Network build_dc3d(std::uint64_t seed = 0) {
  return detail::ten_layer_net(Architecture::DC3D, {false, true, false, true, false, false, true, false, true, false},
                               seed);
}

/// 18-layer encoder/decoder: two (1,2,2) strided downsamplers, a dilated
/// bottleneck, two (1,2,2) transposed upsamplers and two U-Net style skips.
inline Network build_c3ded(std::uint64_t seed = 0) {
  using detail::conv_layer;
  using detail::kInFrame2;
  using detail::kNone;
  std::vector<LayerSpec> L;
  L.push_back(conv_layer(1, 3, 16, 5));
  L.push_back(conv_layer(2, 16, 16, 5));
  L.push_back(conv_layer(3, 16, 32, 3, kNone, kInFrame2));
  L.push_back(conv_layer(4, 32, 64, 3));
  L.push_back(conv_layer(5, 64, 128, 3, kNone, kInFrame2));
  L.push_back(conv_layer(6, 128, 128, 3));
  L.push_back(conv_layer(7, 128, 128, 3, kInFrame2));
  L.push_back(conv_layer(8, 128, 128, 3, kInFrame2));
  L.push_back(conv_layer(9, 128, 128, 3, kInFrame2));
  L.push_back(conv_layer(10, 128, 128, 3));
  L.push_back(conv_layer(11, 128, 64, 3));
  {
    LayerSpec up;
    up.index = 12;
    up.kind = LayerKind::DeconvUp;
    up.conv = ConvSpec::upsampling(64, 32, {5, 5, 5}, kInFrame2);
    L.push_back(up);
  }
  L.push_back(conv_layer(13, 32 + 32, 64, 3));
  L.back().concat_sources = {3};
  L.push_back(conv_layer(14, 64, 32, 3));
  {
    LayerSpec up;
    up.index = 15;
    up.kind = LayerKind::DeconvUp;
    up.conv = ConvSpec::upsampling(32, 16, {3, 3, 3}, kInFrame2);
    L.push_back(up);
  }
  L.push_back(conv_layer(16, 16 + 16, 32, 3));
  L.back().concat_sources = {2};
  L.push_back(conv_layer(17, 32, 16, 3));
  L.push_back(conv_layer(18, 16, 3, 3));
  L.back().relu = false;
  Network net(Architecture::C3DED, std::move(L));
  net.initialize(seed);
  return net;
}

inline Network build_network(Architecture arch, std::uint64_t seed = 0) {
  switch (arch) {
    case Architecture::C3D: return build_c3d(seed);
    case Architecture::DC3D: return build_dc3d(seed);
    case Architecture::C3DED: return build_c3ded(seed);
  }
  throw UsageError("unknown architecture");
}

/// Copies parameters from named tensors (e.g. a checkpoint) into the network,
/// requiring an exact name and shape match for every network parameter.
template <typename Named>
void load_parameters(Network& net, const Named& tensors) {
  for (auto& [name, p] : net.parameters()) {
    bool found = false;
    for (const auto& [n, t] : tensors) {
      if (n != name) continue;
      if (t.shape() != p.shape()) {
        throw DataError("checkpoint: parameter '" + name + "' has shape " + shape_str(t.shape()) + ", " +
                        to_string(net.architecture()) + " expects " + shape_str(p.shape()));
      }
      p = t;
      found = true;
      break;
    }
    if (!found) throw DataError("checkpoint: missing parameter '" + name + "' for " + to_string(net.architecture()));
  }
}

}  // namespace vhdr
