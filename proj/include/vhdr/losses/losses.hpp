#pragma once

// Training losses on N x 3 x F x H x W log-radiance clips: pixel L1,
// feature-space L1 through a fixed extractor, and visibility-weighted
// short- and long-range temporal differences.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/core/random.hpp"
#include "vhdr/tensor/checkpoint.hpp"
#include "vhdr/tensor/conv.hpp"
#include "vhdr/tensor/graph.hpp"
#include "vhdr/tensor/init.hpp"
#include "vhdr/tensor/ops.hpp"

namespace vhdr {

struct LossWeights {
  double l1 = 1.0;
  double feature = 0.01;
  double short_term = 0.001;
  double long_term = 0.001;

  void validate() const {
    for (double v : {l1, feature, short_term, long_term}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("loss weights must be finite and >= 0");
    }
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Per-frame 2-D conv stages with frozen weights; never trained.
class FeatureExtractor {
 public:
  struct Stage {
    ConvSpec spec;
    Tensor weight;
    Tensor bias;
    bool relu = true;
  };

  FeatureExtractor(std::vector<Stage> stages, std::vector<double> omega) : stages_(std::move(stages)), omega_(std::move(omega)) {
    if (stages_.empty() || stages_.size() != omega_.size()) throw DataError("feature extractor: need one weight per stage");
    double s = 0.0;
    for (double w : omega_) {
      if (!(w >= 0.0)) throw DataError("feature extractor: stage weights must be >= 0");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DataError("feature extractor: stage weights must sum to 1");
    int channels = 3;
    for (const auto& st : stages_) {
      st.spec.validate();
      if (st.spec.kernel[0] != 1 || st.spec.stride[0] != 1) throw DataError("feature extractor: stages must act per frame");
      if (st.spec.in_channels != channels) throw DataError("feature extractor: stage channel chain is broken");
      if (st.weight.shape() != st.spec.weight_shape() || st.bias.shape() != Shape{st.spec.out_channels}) {
        throw DataError("feature extractor: stage parameter shape mismatch");
      }
      channels = st.spec.out_channels;
    }
  }

  /// Three 3x3 stages (16, 32, 64 channels), stride 2 into stages two and
  /// three, Kaiming-uniform weights drawn from `seed`, equal stage weights.
  static FeatureExtractor standard(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x66656174ULL}));
    std::vector<Stage> stages;
    const int chans[3] = {16, 32, 64};
    int in = 3;
    for (int i = 0; i < 3; ++i) {
      const Triple stride = i == 0 ? Triple{1, 1, 1} : Triple{1, 2, 2};
      Stage st;
      st.spec = ConvSpec::same_size(in, chans[i], {1, 3, 3}, {1, 1, 1}, stride);
      st.weight = kaiming_uniform(st.spec, rng);
      st.bias = Tensor({chans[i]});
      stages.push_back(std::move(st));
      in = chans[i];
    }
    return FeatureExtractor(std::move(stages), {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  }

  /// One linear 1x1 stage that copies its input.
  static FeatureExtractor identity() {
    Stage st;
    st.spec = ConvSpec::same_size(3, 3, {1, 1, 1});
    st.weight = Tensor(st.spec.weight_shape());
    for (std::int64_t c = 0; c < 3; ++c) st.weight.at(c, c, 0, 0, 0) = 1.0f;
    st.bias = Tensor({3});
    st.relu = false;
    return FeatureExtractor({std::move(st)}, {1.0});
  }

  const std::vector<Stage>& stages() const noexcept { return stages_; }
  const std::vector<double>& omega() const noexcept { return omega_; }

  std::vector<Tensor> features(const Tensor& x) const {
    std::vector<Tensor> out;
    Tensor h = x;
    for (const auto& st : stages_) {
      h = conv3d(h, st.spec, st.weight, st.bias);
      if (st.relu) h = relu(h);
      out.push_back(h);
    }
    return out;
  }

  std::vector<NodeId> features(Graph& g, NodeId x) const {
    std::vector<NodeId> out;
    NodeId h = x;
    for (const auto& st : stages_) {
      h = conv3d(g, h, g.constant(st.weight), g.constant(st.bias), st.spec);
      if (st.relu) h = relu(g, h);
      out.push_back(h);
    }
    return out;
  }

  NamedTensors to_named() const {
    NamedTensors t;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const std::string p = "feature.stage" + std::to_string(i + 1);
      t.emplace_back(p + ".weight", stages_[i].weight);
      t.emplace_back(p + ".bias", stages_[i].bias);
    }
    return t;
  }

  /// Replaces the standard extractor's weights with ones read from a checkpoint.
  static FeatureExtractor load(const std::filesystem::path& path) {
    FeatureExtractor fx = standard(0);
    const NamedTensors t = read_checkpoint(path);
    if (t.size() != 2 * fx.stages_.size()) throw DataError(path.string() + ": expected " + std::to_string(2 * fx.stages_.size()) + " extractor tensors");
    const NamedTensors expected = fx.to_named();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto& [name, value] = expected[i];
      if (t[i].first != name || t[i].second.shape() != value.shape()) {
        throw DataError(path.string() + ": expected " + name + " " + shape_str(value.shape()) + ", found " + t[i].first + " " +
                        shape_str(t[i].second.shape()));
      }
      Stage& st = fx.stages_[i / 2];
      (i % 2 == 0 ? st.weight : st.bias) = t[i].second;
    }
    return fx;
  }

 private:
  std::vector<Stage> stages_;
  std::vector<double> omega_;
};

inline void check_same_clip_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw DataError(std::string(what) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " differ");
  if (a.size() != 5) throw DataError(std::string(what) + ": expected N x C x F x H x W, got " + shape_str(a));
}

inline NodeId l1_loss(Graph& g, NodeId output, NodeId target) {
  check_same_clip_shape(g.value(output).shape(), g.value(target).shape(), "l1_loss");
  return mean_abs_diff(g, output, target);
}

/// sum_i omega_i * mean |phi_i(x) - phi_i(x_hat)|. Each stage mean runs over
/// channels and pixels of every frame, so it is the per-frame normalised L1
/// averaged over frames.
inline NodeId perceptual_loss(Graph& g, NodeId output, const Tensor& target, const FeatureExtractor& fx) {
  check_same_clip_shape(g.value(output).shape(), target.shape(), "perceptual_loss");
  const auto fo = fx.features(g, output);
  const auto ft = fx.features(target);
  NodeId total = 0;
  for (std::size_t i = 0; i < fo.size(); ++i) {
    const NodeId term = scale(g, mean_abs_diff(g, fo[i], g.constant(ft[i])), static_cast<float>(fx.omega()[i]));
    total = i == 0 ? term : add(g, total, term);
  }
  return total;
}

/// exp(-tau |x_u - x_v|), elementwise; in (0,1]. Values below the smallest
/// positive float are held there instead of flushing to zero.
inline Tensor visibility_weights(const Tensor& xu, const Tensor& xv, double tau) {
  if (!(tau > 1.0)) throw DataError("visibility_weights: tau must be > 1");
  if (xu.shape() != xv.shape()) throw DataError("visibility_weights: shape mismatch");
  constexpr double floor = std::numeric_limits<float>::denorm_min();
  Tensor w(xu.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<float>(std::max(floor, std::exp(-tau * std::abs(static_cast<double>(xu[i]) - xv[i]))));
  }
  return w;
}

namespace detail {
// (1/(f-1)) sum_{t>=1} mean |w(t, ref(t)) (x_hat_t - x_hat_ref(t))|
template <class RefFn>
NodeId temporal_loss(Graph& g, NodeId output, const Tensor& target, double tau, RefFn ref, const char* what) {
  check_same_clip_shape(g.value(output).shape(), target.shape(), what);
  const auto f = target.extent(2);
  if (f < 2) throw DataError(std::string(what) + ": needs at least 2 frames");
  NodeId total = 0;
  for (std::int64_t t = 1; t < f; ++t) {
    const std::int64_t r = ref(t);
    const Tensor w = visibility_weights(slice_frames(target, t, t + 1), slice_frames(target, r, r + 1), tau);
    const NodeId d = mean_abs_diff(g, slice_frames(g, output, t, t + 1), slice_frames(g, output, r, r + 1), &w);
    total = t == 1 ? d : add(g, total, d);
  }
  return scale(g, total, static_cast<float>(1.0 / static_cast<double>(f - 1)));
}
}  // namespace detail

inline NodeId short_term_loss(Graph& g, NodeId output, const Tensor& target, double tau = 100.0) {
  return detail::temporal_loss(g, output, target, tau, [](std::int64_t t) { return t - 1; }, "short_term_loss");
}

inline NodeId long_term_loss(Graph& g, NodeId output, const Tensor& target, double tau = 100.0) {
  return detail::temporal_loss(g, output, target, tau, [](std::int64_t) { return std::int64_t{0}; }, "long_term_loss");
}

struct LossTerms {
  NodeId total = 0;
  double l1 = 0.0, feature = 0.0, short_term = 0.0, long_term = 0.0;
  double value = 0.0;  // the recorded total, as trained on
};

/// l1*L1 + feature*Lfeat + short*LSM + long*LLM. Every term is evaluated for
/// logging; only terms with a non-zero weight join the differentiated total.
inline LossTerms total_loss(Graph& g, NodeId output, const Tensor& target, const LossWeights& lw, const FeatureExtractor& fx,
                            double tau = 100.0) {
  lw.validate();
  const NodeId tn = g.constant(target);
  const NodeId a = l1_loss(g, output, tn);
  const NodeId b = perceptual_loss(g, output, target, fx);
  const bool temporal = target.rank() == 5 && target.extent(2) >= 2;
  if (!temporal && (lw.short_term > 0.0 || lw.long_term > 0.0)) throw DataError("total_loss: temporal terms need at least 2 frames");
  const NodeId c = temporal ? short_term_loss(g, output, target, tau) : g.constant(Tensor::scalar(0.0f));
  const NodeId d = temporal ? long_term_loss(g, output, target, tau) : g.constant(Tensor::scalar(0.0f));

  LossTerms r;
  r.l1 = g.value(a).item();
  r.feature = g.value(b).item();
  r.short_term = g.value(c).item();
  r.long_term = g.value(d).item();
  std::vector<NodeId> parts;
  const std::pair<NodeId, double> terms[] = {{a, lw.l1}, {b, lw.feature}, {c, lw.short_term}, {d, lw.long_term}};
  for (const auto& [node, lambda] : terms) {
    if (lambda > 0.0) parts.push_back(scale(g, node, static_cast<float>(lambda)));
  }
  if (parts.empty()) {
    r.total = g.constant(Tensor::scalar(0.0f));
  } else {
    r.total = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) r.total = add(g, r.total, parts[i]);
  }
  r.value = g.value(r.total).item();
  return r;
}

}  // namespace vhdr
