#pragma once

// Evaluation battery. MAE, MSE, temporal and feature losses are measured in
// the log-radiance domain the networks predict; SSIM on mu-law tone-mapped
// linear frames.

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/losses/losses.hpp"
#include "vhdr/tensor/tensor.hpp"

namespace vhdr {

inline constexpr double kToneMu = 5000.0;

/// log(1 + mu x / x_max) / log(1 + mu), clamped to [0,1].
inline Tensor tonemap(const Tensor& hdr, double x_max, double mu = kToneMu) {
  if (!(x_max > 0.0)) throw DataError("tonemap: x_max must be > 0");
  Tensor out = hdr;
  const double denom = std::log1p(mu);
  for (float& v : out.data()) {
    if (v < 0.0f) throw DataError("tonemap: radiance must be non-negative");
    v = static_cast<float>(std::clamp(std::log1p(mu * v / x_max) / denom, 0.0, 1.0));
  }
  return out;
}

/// Gaussian-windowed SSIM over H x W x C frames (11x11, sigma 1.5,
/// K1 0.01, K2 0.03, L 1), averaged over channels and valid window positions.
inline double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DataError("ssim: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  if (a.rank() != 3) throw DataError("ssim: expected H x W x C frames");
  constexpr int kWin = 11, kR = 5;
  const auto h = a.extent(0), w = a.extent(1), ch = a.extent(2);
  if (h < kWin || w < kWin) throw DataError("ssim: frame " + shape_str(a.shape()) + " is smaller than the 11x11 window");
  double g[kWin], gs = 0.0;
  for (int i = 0; i < kWin; ++i) gs += g[i] = std::exp(-0.5 * (i - kR) * (i - kR) / (1.5 * 1.5));
  for (double& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto oh = h - kWin + 1, ow = w - kWin + 1;
  // Horizontal pass for the five moments, then vertical at valid rows.
  std::vector<double> m(static_cast<std::size_t>(5 * h * ow));
  double total = 0.0;
  for (std::int64_t c = 0; c < ch; ++c) {
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < ow; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < kWin; ++k) {
          const double va = a.at(y, x + k, c), vb = b.at(y, x + k, c);
          s[0] += g[k] * va;
          s[1] += g[k] * vb;
          s[2] += g[k] * va * va;
          s[3] += g[k] * vb * vb;
          s[4] += g[k] * va * vb;
        }
        for (int q = 0; q < 5; ++q) m[static_cast<std::size_t>((q * h + y) * ow + x)] = s[q];
      }
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t x = 0; x < ow; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < kWin; ++k)
          for (int q = 0; q < 5; ++q) s[q] += g[k] * m[static_cast<std::size_t>((q * h + y + k) * ow + x)];
        const double mu_a = s[0], mu_b = s[1];
        const double va = s[2] - mu_a * mu_a, vb = s[3] - mu_b * mu_b, cov = s[4] - mu_a * mu_b;
        total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
      }
  }
  return total / static_cast<double>(ch * oh * ow);
}

struct ClipMetrics {
  std::string name;
  double mae = 0.0, mse = 0.0, ssim = 0.0, l_t = 0.0, l_feat = 0.0;
};

struct MetricsReport {
  std::vector<ClipMetrics> clips;

  ClipMetrics mean() const {
    ClipMetrics m;
    m.name = "mean";
    if (clips.empty()) return m;
    for (const auto& c : clips) {
      m.mae += c.mae;
      m.mse += c.mse;
      m.ssim += c.ssim;
      m.l_t += c.l_t;
      m.l_feat += c.l_feat;
    }
    const double n = static_cast<double>(clips.size());
    m.mae /= n;
    m.mse /= n;
    m.ssim /= n;
    m.l_t /= n;
    m.l_feat /= n;
    return m;
  }

  /// One row per clip plus the mean row. q_score stays empty (not computed).
  std::string csv() const {
    std::ostringstream os;
    os << "clip,mae,mse,ssim,l_t,l_feat,q_score\n";
    auto row = [&](const ClipMetrics& c) {
      os << c.name << std::setprecision(9) << ',' << c.mae << ',' << c.mse << ',' << c.ssim << ',' << c.l_t << ','
         << c.l_feat << ",\n";
    };
    for (const auto& c : clips) row(c);
    row(mean());
    return os.str();
  }

  std::string table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %10s %10s %8s %10s %10s\n", "clip", "MAE", "MSE", "SSIM", "L_T", "L_feat");
    os << buf;
    auto row = [&](const ClipMetrics& c) {
      std::snprintf(buf, sizeof buf, "%-24s %10.5f %10.5f %8.4f %10.6f %10.6f\n", c.name.c_str(), c.mae, c.mse, c.ssim, c.l_t,
                    c.l_feat);
      os << buf;
    };
    for (const auto& c : clips) row(c);
    row(mean());
    return os.str();
  }
};

/// Log radiance back to linear, clamped at zero.
inline Tensor log_to_linear(const Tensor& log_clip, double eps = 1e-5) {
  Tensor out = log_clip;
  for (float& v : out.data()) v = static_cast<float>(std::max(0.0, std::exp(static_cast<double>(v)) - eps));
  return out;
}

/// Temporal metric: short- plus long-range term at unit weight.
inline double temporal_metric(const Tensor& gt_net, const Tensor& out_net, double tau = 100.0) {
  Graph g;
  const NodeId o = g.input(out_net, false);
  return static_cast<double>(g.value(short_term_loss(g, o, gt_net, tau)).item()) +
         g.value(long_term_loss(g, o, gt_net, tau)).item();
}

/// Both clips are F x H x W x 3 log radiance.
inline ClipMetrics evaluate_clip(const Tensor& gt, const Tensor& out, const FeatureExtractor& fx, std::string name = "clip",
                                 double tau = 100.0) {
  if (gt.shape() != out.shape()) throw DataError("evaluate: shapes " + shape_str(gt.shape()) + " and " + shape_str(out.shape()) + " differ");
  if (gt.rank() != 4 || gt.extent(3) != 3) throw DataError("evaluate: expected F x H x W x 3 clips, got " + shape_str(gt.shape()));
  ClipMetrics m;
  m.name = std::move(name);
  double sa = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = static_cast<double>(out[i]) - gt[i];
    sa += std::abs(d);
    ss += d * d;
  }
  m.mae = sa / static_cast<double>(gt.size());
  m.mse = ss / static_cast<double>(gt.size());

  const Tensor gn = clip_to_network(gt), on = clip_to_network(out);
  m.l_t = gt.extent(0) >= 2 ? temporal_metric(gn, on, tau) : 0.0;
  Graph g;
  m.l_feat = g.value(perceptual_loss(g, g.input(on, false), gn, fx)).item();

  const Tensor gl = log_to_linear(gt), ol = log_to_linear(out);
  const double x_max = *std::max_element(gl.data().begin(), gl.data().end());
  const auto f = gt.extent(0);
  const auto plane = gt.size() / static_cast<std::size_t>(f);
  const Shape fs{gt.extent(1), gt.extent(2), 3};
  double s = 0.0;
  for (std::int64_t t = 0; t < f; ++t) {
    const auto off = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * plane);
    const Tensor a(fs, std::vector<float>(gl.data().begin() + off, gl.data().begin() + off + static_cast<std::ptrdiff_t>(plane)));
    const Tensor b(fs, std::vector<float>(ol.data().begin() + off, ol.data().begin() + off + static_cast<std::ptrdiff_t>(plane)));
    s += ssim(tonemap(a, x_max > 0 ? x_max : 1.0), tonemap(b, x_max > 0 ? x_max : 1.0));
  }
  m.ssim = s / static_cast<double>(f);
  return m;
}

}  // namespace vhdr
