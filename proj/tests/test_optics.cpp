#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "vhdr/optics/camera.hpp"
#include "vhdr/optics/mask.hpp"
#include "vhdr/optics/scene.hpp"
#include "vhdr/optics/synthesis.hpp"

namespace vhdr {
namespace {

using testing::random_tensor;

double mean(const Tensor& t) { return sum_f64(t.data()) / static_cast<double>(t.size()); }

TEST(BinaryPattern, MeanWithinBinomialBound) {
  // sd of the mean is 0.5/256, so 0.02 is far outside any plausible draw.
  const Tensor p = generate_binary_pattern(256, 256, 0.5, 3);
  EXPECT_NEAR(mean(p), 0.5, 0.02);
  for (float v : p.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  EXPECT_EQ(p, generate_binary_pattern(256, 256, 0.5, 3));
  EXPECT_NE(p, generate_binary_pattern(256, 256, 0.5, 4));
}

TEST(BinaryPattern, NearOneGivesAllOnes) {
  const Tensor p = generate_binary_pattern(32, 32, 1.0 - 1e-12, 5);
  for (float v : p.data()) EXPECT_EQ(v, 1.0f);
  EXPECT_THROW(generate_binary_pattern(4, 4, 1.0, 1), DataError);
  EXPECT_THROW(generate_binary_pattern(4, 4, 0.0, 1), DataError);
}

TEST(Blur, ZeroSigmaAndConstantsAreUnchanged) {
  const Tensor p = generate_binary_pattern(16, 12, 0.5, 7);
  EXPECT_EQ(blur_to_mask(p, 0.0).values, p);
  const Tensor c({10, 9}, 0.7f);
  const Tensor b = gaussian_blur(c, 2.0);
  for (float v : b.data()) EXPECT_NEAR(v, 0.7f, 1e-6);
}

TEST(Blur, ImpulsePeakEqualsNormalisedKernelPeak) {
  // Direct 2-D kernel evaluation: peak = 1 / sum_{|i|,|j|<=3} exp(-(i^2+j^2)/2).
  double z = 0.0;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j) z += std::exp(-0.5 * (i * i + j * j));
  Tensor impulse({15, 15});
  impulse.at(7, 7) = 1.0f;
  const Tensor b = gaussian_blur(impulse, 1.0);
  EXPECT_NEAR(b.at(7, 7), 1.0 / z, 1e-7);
  EXPECT_NEAR(b.at(7, 8), std::exp(-0.5) / z, 1e-7);
  EXPECT_EQ(b.at(7, 11), 0.0f);  // outside radius 3
}

TEST(Blur, ConservesEnergyWithReflectBoundary) {
  for (auto [h, w, sigma] : {std::tuple{37, 29, 2.5}, std::tuple{10, 12, 5.0}, std::tuple{64, 64, 1.0}}) {
    const Tensor p = generate_binary_pattern(h, w, 0.3, 11);
    const Mask m = blur_to_mask(p, sigma);
    EXPECT_NEAR(sum_f64(m.values.data()) / sum_f64(p.data()), 1.0, 1e-4) << h << "x" << w << " sigma " << sigma;
    for (float v : m.values.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    EXPECT_EQ(m.kind, MaskKind::LowFrequency);
  }
}

TEST(UniformMask, MeanRangeAndDeterminism) {
  const Mask m = generate_uniform_mask(256, 256, 9);
  EXPECT_NEAR(mean(m.values), 0.5, 0.02);
  for (float v : m.values.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(m.values, generate_uniform_mask(256, 256, 9).values);
}

TEST(Bayer, GreyFrameHasOneLiveChannelPerSite) {
  const Tensor g({4, 6, 3}, 0.25f);
  const Tensor m = bayer_sample(g);
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t x = 0; x < 6; ++x) {
      int live = 0;
      for (int c = 0; c < 3; ++c) live += m.at(y, x, c) != 0.0f;
      EXPECT_EQ(live, 1);
    }
}

TEST(Bayer, TwoByTwoRggbSamples) {
  Tensor f({2, 2, 3});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(i + 1);
  const Tensor m = bayer_sample(f);
  // (0,0) R = 1, (0,1) G = 5, (1,0) G = 8, (1,1) B = 12
  const Tensor want({2, 2, 3}, std::vector<float>{1, 0, 0, 0, 5, 0, 0, 8, 0, 0, 0, 12});
  EXPECT_EQ(m, want);
  EXPECT_EQ(bayer_sample(m), m);
  EXPECT_THROW(bayer_sample(Tensor({3, 2, 3})), DataError);
  EXPECT_THROW(bayer_sample(Tensor({2, 5, 3})), DataError);
}

CameraModel quiet_camera() {
  CameraModel c;
  c.shot_noise_scale = 0.0;
  c.read_noise_sigma = 0.0;
  return c;
}

TEST(Capture, ZeroRadianceGivesZeros) {
  const CodedClip c = capture(Tensor({2, 4, 4, 3}), generate_uniform_mask(4, 4, 1), quiet_camera(), 1);
  for (float v : c.frames.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Capture, LinearResponseMatchesScalarOracle) {
  CameraModel cam = quiet_camera();
  cam.gamma = 1.0;
  const Tensor x = random_tensor({4, 8, 8, 3}, 21, 0.0, 40.0);
  const CodedClip c = capture(x, constant_mask(8, 8, 1.0f), cam, 2);
  const double top = cam.max_code();
  static constexpr int kRggb[2][2] = {{0, 1}, {1, 2}};
  for (std::int64_t t = 0; t < 4; ++t)
    for (std::int64_t y = 0; y < 8; ++y)
      for (std::int64_t xx = 0; xx < 8; ++xx)
        for (int ch = 0; ch < 3; ++ch) {
          float want = 0.0f;
          if (ch == kRggb[y % 2][xx % 2]) {
            const double s = std::min(1.0, static_cast<double>(x.at(t, y, xx, ch)) * cam.exposure * cam.full_well_scale);
            want = static_cast<float>(std::round(s * top) / top);
          }
          ASSERT_EQ(c.frames.at(t, y, xx, ch), want) << t << "," << y << "," << xx << "," << ch;
        }
}

TEST(Capture, MaskZeroBlocksEveryFrame) {
  Mask m = generate_uniform_mask(6, 6, 3);
  m.values.at(2, 3) = 0.0f;
  const CodedClip c = capture(random_tensor({3, 6, 6, 3}, 22, 0.0, 1e4), m, quiet_camera(), 4);
  for (std::int64_t t = 0; t < 3; ++t)
    for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(c.frames.at(t, 2, 3, ch), 0.0f);
}

TEST(Capture, SaturatesAtTopCode) {
  const Tensor x({1, 4, 4, 3}, 1e6f);
  const CodedClip c = capture(x, constant_mask(4, 4, 1.0f), quiet_camera(), 5);
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t xx = 0; xx < 4; ++xx) EXPECT_EQ(c.frames.at(0, y, xx, bayer_channel(y, xx)), 1.0f);
}

TEST(Capture, MonotoneInRadianceWithoutNoise) {
  const Mask m = generate_uniform_mask(8, 8, 6);
  const Tensor x = random_tensor({2, 8, 8, 3}, 23, 0.0, 60.0);
  Tensor brighter = x;
  for (float& v : brighter.data()) v *= 1.3f;
  const CodedClip a = capture(x, m, quiet_camera(), 7);
  const CodedClip b = capture(brighter, m, quiet_camera(), 7);
  for (std::size_t i = 0; i < a.frames.size(); ++i) EXPECT_LE(a.frames[i], b.frames[i]);
}

TEST(Capture, PreResponseSignalIsLinearInMask) {
  const Mask m = generate_uniform_mask(8, 8, 8);
  Mask half = m;
  for (float& v : half.values.data()) v *= 0.5f;
  const Tensor x = random_tensor({2, 8, 8, 3}, 24, 0.0, 60.0);
  const Tensor s = exposure_signal(x, m, quiet_camera());
  const Tensor sh = exposure_signal(x, half, quiet_camera());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_FLOAT_EQ(sh[i], 0.5f * s[i]);
}

TEST(Capture, MosaicSparsityAndCodeGrid) {
  const CameraModel cam;  // noise on
  const CodedClip c = capture(random_tensor({2, 8, 8, 3}, 25, 0.0, 60.0), generate_uniform_mask(8, 8, 9), cam, 10);
  const double top = cam.max_code();
  for (std::int64_t t = 0; t < 2; ++t)
    for (std::int64_t y = 0; y < 8; ++y)
      for (std::int64_t x = 0; x < 8; ++x) {
        int live = 0;
        for (int ch = 0; ch < 3; ++ch) {
          const float v = c.frames.at(t, y, x, ch);
          live += v != 0.0f;
          EXPECT_EQ(v, static_cast<float>(std::round(v * top) / top));
          EXPECT_GE(v, 0.0f);
          EXPECT_LE(v, 1.0f);
        }
        EXPECT_LE(live, 1);
      }
}

TEST(Capture, NoiseIsSeededAndActuallyPresent) {
  const Tensor x = random_tensor({2, 8, 8, 3}, 26, 1.0, 20.0);
  const Mask m = generate_uniform_mask(8, 8, 11);
  const CameraModel cam;
  EXPECT_EQ(capture(x, m, cam, 12).frames, capture(x, m, cam, 12).frames);
  EXPECT_NE(capture(x, m, cam, 12).frames, capture(x, m, cam, 13).frames);
  EXPECT_NE(capture(x, m, cam, 12).frames, capture(x, m, cam.without_noise(), 12).frames);
}

TEST(Capture, RejectsBadInputs) {
  const Tensor x({1, 4, 4, 3}, 1.0f);
  EXPECT_THROW(capture(x, generate_uniform_mask(4, 6, 1), quiet_camera(), 1), DataError);
  Tensor neg = x;
  neg[5] = -1.0f;
  EXPECT_THROW(capture(neg, generate_uniform_mask(4, 4, 1), quiet_camera(), 1), DataError);
  CameraModel bad = quiet_camera();
  bad.bit_depth = 9;
  EXPECT_THROW(capture(x, generate_uniform_mask(4, 4, 1), bad, 1), DataError);
}

TEST(Scene, ZeroStopsIsConstant) {
  const Tensor s = procedural_scene(SceneKind::Blobs, 3, 16, 16, 0.0, 1);
  for (float v : s.data()) EXPECT_EQ(v, s[0]);
}

TEST(Scene, DynamicRangeMatchesStops) {
  for (auto kind : {SceneKind::Gradient, SceneKind::Blobs}) {
    const Tensor s = procedural_scene(kind, 4, 32, 40, 20.0, 2);
    const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
    EXPECT_GT(*lo, 0.0f);
    EXPECT_NEAR(static_cast<double>(*hi) / *lo / std::exp2(20.0), 1.0, 0.01) << to_string(kind);
  }
}

TEST(Scene, FramesAreShiftedCopies) {
  for (std::int64_t v : {1, 3}) {
    const Tensor s = procedural_scene(SceneKind::Blobs, 4, 12, 20, 8.0, 3, {v, 60.0});
    for (std::int64_t t = 1; t < 4; ++t)
      for (std::int64_t y = 0; y < 12; ++y)
        for (std::int64_t x = 0; x + t * v < 20; ++x)
          for (int c = 0; c < 3; ++c) ASSERT_EQ(s.at(t, y, x + t * v, c), s.at(0, y, x, c));
  }
}

TEST(Scene, DeterministicPerSeed) {
  EXPECT_EQ(procedural_scene(SceneKind::Gradient, 2, 8, 8, 10.0, 4), procedural_scene(SceneKind::Gradient, 2, 8, 8, 10.0, 4));
  EXPECT_NE(procedural_scene(SceneKind::Gradient, 2, 8, 8, 10.0, 4), procedural_scene(SceneKind::Gradient, 2, 8, 8, 10.0, 5));
  EXPECT_THROW(procedural_scene(SceneKind::Gradient, 2, 8, 8, 31.0, 4), DataError);
}

TEST(Synthesis, FullScaleGeometry) {
  SynthesisConfig cfg;
  cfg.frames = 8;
  cfg.crop = 512;
  const Tensor src = procedural_scene(SceneKind::Gradient, 10, 520, 530, 12.0, 5);
  const Sample s = synthesize_sample(src, cfg, 6);
  EXPECT_EQ(s.coded.frames.shape(), (Shape{8, 512, 512, 3}));
  EXPECT_EQ(s.target.shape(), (Shape{8, 512, 512, 3}));
}

TEST(Synthesis, SameSeedSamePair) {
  SynthesisConfig cfg;
  cfg.crop = 16;
  const Tensor src = procedural_scene(SceneKind::Blobs, 6, 24, 24, 12.0, 7);
  const Sample a = synthesize_sample(src, cfg, 8), b = synthesize_sample(src, cfg, 8);
  EXPECT_EQ(a.coded.frames, b.coded.frames);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.spec, b.spec);
  EXPECT_LE(a.spec.start + cfg.frames, 6);
  EXPECT_LE(a.spec.top + cfg.crop, 24);
  EXPECT_LE(a.spec.left + cfg.crop, 24);
}

TEST(Synthesis, TargetIsLogRadianceAndFiniteAtZero) {
  SynthesisConfig cfg;
  cfg.frames = 2;
  cfg.crop = 4;
  const Sample s = synthesize_sample(Tensor({2, 4, 4, 3}), cfg, 9);
  for (float v : s.target.data()) EXPECT_FLOAT_EQ(v, static_cast<float>(std::log(1e-5)));
  const Tensor src = random_tensor({2, 4, 4, 3}, 27, 0.0, 5.0);
  const Sample r = synthesize_sample(src, cfg, 10);
  EXPECT_FLOAT_EQ(r.target[7], static_cast<float>(std::log(static_cast<double>(src[7]) + 1e-5)));
}

TEST(Synthesis, RejectsOversizedCrop) {
  SynthesisConfig cfg;
  cfg.crop = 32;
  EXPECT_THROW(synthesize_sample(Tensor({4, 16, 40, 3}), cfg, 1), DataError);
  cfg.crop = 8;
  cfg.frames = 5;
  EXPECT_THROW(synthesize_sample(Tensor({4, 16, 40, 3}), cfg, 1), DataError);
}

TEST(Synthesis, MaskKindsBothOccur) {
  SynthesisConfig cfg;
  cfg.crop = 8;
  const Tensor src = procedural_scene(SceneKind::Blobs, 4, 8, 8, 8.0, 11);
  int uniform = 0;
  for (std::uint64_t s = 0; s < 200; ++s) uniform += synthesize_sample(src, cfg, s).spec.mask_kind == MaskKind::UniformRandom;
  EXPECT_GT(uniform, 70);
  EXPECT_LT(uniform, 130);
}

}  // namespace
}  // namespace vhdr
