#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "vhdr/losses/losses.hpp"

namespace vhdr {
namespace {

using testing::gradcheck;
using testing::random_tensor;

// Nested-loop oracles, all in double.

double oracle_l1(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return s / static_cast<double>(a.size());
}

// (1/(f-1)) sum_t mean_{n,c,h,w} |exp(-tau|x_t - x_r|) (y_t - y_r)|, r = t-1 or 0.
double oracle_temporal(const Tensor& x, const Tensor& y, double tau, bool long_range) {
  const auto N = x.extent(0), C = x.extent(1), F = x.extent(2), H = x.extent(3), W = x.extent(4);
  double total = 0.0;
  for (std::int64_t t = 1; t < F; ++t) {
    const std::int64_t r = long_range ? 0 : t - 1;
    double s = 0.0;
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t h = 0; h < H; ++h)
          for (std::int64_t w = 0; w < W; ++w) {
            const double wt = std::exp(-tau * std::abs(static_cast<double>(x.at(n, c, t, h, w)) - x.at(n, c, r, h, w)));
            s += std::abs(wt * (static_cast<double>(y.at(n, c, t, h, w)) - y.at(n, c, r, h, w)));
          }
    total += s / static_cast<double>(N * C * H * W);
  }
  return total / static_cast<double>(F - 1);
}

// Second implementation of the feature loss: naive conv per stage.
double oracle_perceptual(const Tensor& x, const Tensor& y, const FeatureExtractor& fx) {
  Tensor hx = x, hy = y;
  double total = 0.0;
  for (std::size_t i = 0; i < fx.stages().size(); ++i) {
    const auto& st = fx.stages()[i];
    hx = testing::naive_conv3d(hx, st.spec, st.weight, st.bias);
    hy = testing::naive_conv3d(hy, st.spec, st.weight, st.bias);
    if (st.relu) {
      for (float& v : hx.data()) v = std::max(v, 0.0f);
      for (float& v : hy.data()) v = std::max(v, 0.0f);
    }
    total += fx.omega()[i] * oracle_l1(hx, hy);
  }
  return total;
}

Tensor static_clip(std::int64_t f, std::uint64_t seed) {
  const Tensor one = random_tensor({1, 3, 1, 6, 6}, seed);
  Tensor c({1, 3, f, 6, 6});
  for (std::int64_t ch = 0; ch < 3; ++ch)
    for (std::int64_t t = 0; t < f; ++t)
      for (std::int64_t h = 0; h < 6; ++h)
        for (std::int64_t w = 0; w < 6; ++w) c.at(0, ch, t, h, w) = one.at(0, ch, 0, h, w);
  return c;
}

double eval_l1(const Tensor& a, const Tensor& b) {
  Graph g;
  return g.value(l1_loss(g, g.input(a, false), g.constant(b))).item();
}

TEST(L1, Examples) {
  const Tensor x = random_tensor({2, 3, 2, 4, 5}, 1);
  EXPECT_EQ(eval_l1(x, x), 0.0);
  Tensor shifted = x;
  for (float& v : shifted.data()) v += 0.25f;
  EXPECT_NEAR(eval_l1(shifted, x), 0.25, 1e-6);
  const Tensor y = random_tensor({2, 3, 2, 4, 5}, 2);
  EXPECT_FLOAT_EQ(static_cast<float>(eval_l1(x, y)), static_cast<float>(oracle_l1(x, y)));
  EXPECT_THROW(eval_l1(x, random_tensor({2, 3, 2, 4, 4}, 3)), DataError);
}

double eval_perceptual(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  Graph g;
  return g.value(perceptual_loss(g, g.input(a, false), b, fx)).item();
}

TEST(Perceptual, ZeroOnIdenticalInputs) {
  const Tensor x = random_tensor({1, 3, 2, 8, 8}, 4);
  EXPECT_EQ(eval_perceptual(x, x, FeatureExtractor::standard(1)), 0.0);
}

TEST(Perceptual, IdentityExtractorReducesToL1) {
  const Tensor x = random_tensor({1, 3, 3, 6, 7}, 5), y = random_tensor({1, 3, 3, 6, 7}, 6);
  EXPECT_FLOAT_EQ(static_cast<float>(eval_perceptual(x, y, FeatureExtractor::identity())), static_cast<float>(eval_l1(x, y)));
}

TEST(Perceptual, TwoStageExtractorMatchesSecondImplementation) {
  std::vector<FeatureExtractor::Stage> stages(2);
  stages[0].spec = ConvSpec::same_size(3, 4, {1, 3, 3});
  stages[1].spec = ConvSpec::same_size(4, 5, {1, 3, 3}, {1, 1, 1}, {1, 2, 2});
  for (std::size_t i = 0; i < 2; ++i) {
    stages[i].weight = random_tensor(stages[i].spec.weight_shape(), 10 + i, -0.5, 0.5);
    stages[i].bias = random_tensor({stages[i].spec.out_channels}, 20 + i, -0.1, 0.1);
  }
  const FeatureExtractor fx(stages, {0.25, 0.75});
  const Tensor x = random_tensor({2, 3, 2, 7, 6}, 7), y = random_tensor({2, 3, 2, 7, 6}, 8);
  EXPECT_NEAR(eval_perceptual(y, x, fx), oracle_perceptual(x, y, fx), 1e-6);
  const FeatureExtractor std_fx = FeatureExtractor::standard(3);
  EXPECT_NEAR(eval_perceptual(y, x, std_fx), oracle_perceptual(x, y, std_fx), 1e-6);
}

TEST(Perceptual, ExtractorValidation) {
  auto stages = FeatureExtractor::standard(1).stages();
  EXPECT_THROW(FeatureExtractor(stages, {0.5, 0.5, 0.5}), DataError);
  EXPECT_THROW(FeatureExtractor(stages, {1.0, 0.0}), DataError);
  EXPECT_THROW(FeatureExtractor(stages, {1.5, -0.5, 0.0}), DataError);
  EXPECT_EQ(FeatureExtractor::standard(1).stages()[2].weight, FeatureExtractor::standard(1).stages()[2].weight);
}

TEST(Perceptual, ExtractorLoadsFromCheckpoint) {
  const auto path = std::filesystem::temp_directory_path() / "vhdr_fx.chdr";
  const FeatureExtractor a = FeatureExtractor::standard(42);
  write_checkpoint(path, a.to_named());
  const FeatureExtractor b = FeatureExtractor::load(path);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(b.stages()[i].weight, a.stages()[i].weight);
  NamedTensors wrong;
  wrong.emplace_back("feature.stage1.weight", Tensor({1}));
  write_checkpoint(path, wrong);
  EXPECT_THROW(FeatureExtractor::load(path), DataError);
  std::filesystem::remove(path);
}

TEST(Visibility, Examples) {
  const Tensor a = random_tensor({1, 3, 1, 4, 4}, 9);
  const Tensor same = visibility_weights(a, a, 100.0);
  for (float v : same.data()) EXPECT_EQ(v, 1.0f);
  EXPECT_NEAR(visibility_weights(Tensor({1}, 0.0460517f), Tensor({1}), 100.0)[0], 0.01, 1e-6);
  const float far = visibility_weights(Tensor({1}, 1.0f), Tensor({1}), 100.0)[0];
  EXPECT_LT(far, 1e-40f);
  EXPECT_GT(far, 0.0f);
  // symmetric in its arguments
  const Tensor b = random_tensor({1, 3, 1, 4, 4}, 10);
  EXPECT_EQ(visibility_weights(a, b, 100.0), visibility_weights(b, a, 100.0));
  const Tensor wide = visibility_weights(random_tensor({64}, 11, -20, 20), random_tensor({64}, 12, -20, 20), 100.0);
  for (float v : wide.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(visibility_weights(a, a, 1.0), DataError);
}

double eval_temporal(const Tensor& out, const Tensor& target, bool long_range, double tau = 100.0) {
  Graph g;
  const NodeId o = g.input(out, false);
  return g.value(long_range ? long_term_loss(g, o, target, tau) : short_term_loss(g, o, target, tau)).item();
}

TEST(Temporal, StaticOutputGivesZero) {
  const Tensor gt = random_tensor({1, 3, 4, 6, 6}, 13);
  for (bool lr : {false, true}) EXPECT_EQ(eval_temporal(static_clip(4, 14), gt, lr), 0.0);
}

TEST(Temporal, StaticTruthAndConstantStepGivesStep) {
  // w = 1 everywhere; y_t - y_{t-1} = c so every short-range term is |c|.
  const Tensor gt = static_clip(3, 15);
  Tensor y = static_clip(3, 16);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t t = 0; t < 3; ++t)
      for (std::int64_t h = 0; h < 6; ++h)
        for (std::int64_t w = 0; w < 6; ++w) y.at(0, c, t, h, w) += 0.125f * static_cast<float>(t);
  EXPECT_NEAR(eval_temporal(y, gt, false), 0.125, 1e-6);
  // long range: (|c| + |2c|) / 2
  EXPECT_NEAR(eval_temporal(y, gt, true), 0.1875, 1e-6);
}

TEST(Temporal, MatchesNestedLoopOracle) {
  const Tensor x3 = random_tensor({2, 3, 3, 5, 4}, 17, 0.0, 0.05), y3 = random_tensor({2, 3, 3, 5, 4}, 18);
  EXPECT_NEAR(eval_temporal(y3, x3, false), oracle_temporal(x3, y3, 100.0, false), 1e-6);
  const Tensor x4 = random_tensor({1, 3, 4, 6, 6}, 19, 0.0, 0.05), y4 = random_tensor({1, 3, 4, 6, 6}, 20);
  EXPECT_NEAR(eval_temporal(y4, x4, true), oracle_temporal(x4, y4, 100.0, true), 1e-6);
  EXPECT_NEAR(eval_temporal(y4, x4, false, 7.0), oracle_temporal(x4, y4, 7.0, false), 1e-6);
}

TEST(Temporal, TwoFramesLongEqualsShort) {
  const Tensor x = random_tensor({1, 3, 2, 6, 6}, 21, 0.0, 0.05), y = random_tensor({1, 3, 2, 6, 6}, 22);
  EXPECT_EQ(eval_temporal(y, x, true), eval_temporal(y, x, false));
  EXPECT_THROW(eval_temporal(random_tensor({1, 3, 1, 6, 6}, 23), random_tensor({1, 3, 1, 6, 6}, 24), false), DataError);
}

LossTerms eval_total(const Tensor& out, const Tensor& target, const LossWeights& lw, const FeatureExtractor& fx) {
  Graph g;
  return total_loss(g, g.input(out, false), target, lw, fx);
}

TEST(Total, ContentOnlyEqualsScaledL1) {
  const Tensor x = random_tensor({1, 3, 2, 6, 6}, 25), y = random_tensor({1, 3, 2, 6, 6}, 26);
  const LossTerms r = eval_total(y, x, {2.0, 0.0, 0.0, 0.0}, FeatureExtractor::standard(1));
  EXPECT_NEAR(r.value, 2.0 * oracle_l1(x, y), 1e-6);
}

TEST(Total, StaticIdenticalClipsGiveZero) {
  const Tensor x = static_clip(4, 27);
  const LossTerms r = eval_total(x, x, LossWeights{}, FeatureExtractor::standard(2));
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.l1 + r.feature + r.short_term + r.long_term, 0.0);
}

TEST(Total, RecombinesIndependentlyComputedTerms) {
  const Tensor x = random_tensor({1, 3, 4, 8, 8}, 28, -2.0, -1.9), y = random_tensor({1, 3, 4, 8, 8}, 29, -3.0, 0.0);
  const FeatureExtractor fx = FeatureExtractor::standard(5);
  const LossWeights lw;
  const LossTerms r = eval_total(y, x, lw, fx);
  const double l1 = oracle_l1(x, y), feat = oracle_perceptual(x, y, fx);
  const double sm = oracle_temporal(x, y, 100.0, false), lm = oracle_temporal(x, y, 100.0, true);
  EXPECT_NEAR(r.l1, l1, 1e-6);
  EXPECT_NEAR(r.feature, feat, 1e-6);
  EXPECT_NEAR(r.short_term, sm, 1e-6);
  EXPECT_NEAR(r.long_term, lm, 1e-6);
  EXPECT_NEAR(r.value, lw.l1 * l1 + lw.feature * feat + lw.short_term * sm + lw.long_term * lm, 1e-6);
  EXPECT_GT(sm, 0.0);
}

TEST(Total, NonNegativeOnRandomClips) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const LossTerms r = eval_total(random_tensor({1, 3, 3, 6, 6}, 30 + s), random_tensor({1, 3, 3, 6, 6}, 40 + s, 0.0, 0.02),
                                   LossWeights{}, FeatureExtractor::standard(s));
    EXPECT_GT(r.l1, 0.0);
    EXPECT_GE(r.feature, 0.0);
    EXPECT_GE(r.short_term, 0.0);
    EXPECT_GE(r.long_term, 0.0);
  }
}

// Gradchecks at f=2, H=W=6. Targets sit in a narrow band so the visibility
// weights are far from zero and the temporal terms carry real gradient.
class LossGradcheck : public ::testing::TestWithParam<const char*> {};

TEST_P(LossGradcheck, MatchesFiniteDifferences) {
  const std::string which = GetParam();
  const Tensor out = random_tensor({1, 3, 2, 6, 6}, 50);
  const Tensor target = random_tensor({1, 3, 2, 6, 6}, 51, 0.0, 0.02);
  const FeatureExtractor fx = FeatureExtractor::standard(7);
  const auto r = gradcheck({out}, [&](Graph& g, const std::vector<NodeId>& in) {
    if (which == "l1") return l1_loss(g, in[0], g.constant(target));
    if (which == "perceptual") return perceptual_loss(g, in[0], target, fx);
    if (which == "short_term") return short_term_loss(g, in[0], target);
    if (which == "long_term") return long_term_loss(g, in[0], target);
    return total_loss(g, in[0], target, LossWeights{1.0, 0.5, 0.3, 0.2}, fx).total;
  });
  EXPECT_LT(r.worst(), 1e-2);
}

INSTANTIATE_TEST_SUITE_P(Losses, LossGradcheck,
                         ::testing::Values("l1", "perceptual", "short_term", "long_term", "total"),
                         [](const auto& info) { return std::string(info.param); });

}  // namespace
}  // namespace vhdr
