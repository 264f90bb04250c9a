#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "support/files.hpp"
#include "vhdr/pipeline/config.hpp"
#include "vhdr/pipeline/dataset.hpp"
#include "vhdr/pipeline/reconstruct.hpp"
#include "vhdr/pipeline/trainer.hpp"

namespace vhdr {
namespace {

namespace fs = std::filesystem;
using testing::read_bytes;
using testing::scratch_dir;

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Small enough for a few seconds per run.
Config tiny_config(const fs::path& out) {
  Config c;
  c.out = out.string();
  c.frames = 2;
  c.crop = 16;
  c.samples = 4;
  c.val_fraction = 0.25;
  c.batch = 2;
  c.epochs = 3;
  c.scenes = 2;
  c.scene_frames = 4;
  c.scene_size = 24;
  c.seed = 11;
  return c;
}

TEST(LambdaGrid, TenRunsTwoContentOnly) {
  const auto g = lambda_grid();
  ASSERT_EQ(g.size(), 10u);
  int content = 0;
  std::set<std::tuple<double, double, double>> seen;
  for (const auto& w : g) {
    EXPECT_EQ(w.l1, 1.0);
    EXPECT_TRUE(w.feature == 0.01 || w.feature == 0.1);
    EXPECT_EQ(w.short_term, w.long_term);
    if (w.short_term == 0.0) ++content;
    seen.insert({w.feature, w.short_term, w.long_term});
  }
  EXPECT_EQ(content, 2);
  EXPECT_EQ(seen.size(), 10u);
  Config c;
  c.grid_index = 9;
  EXPECT_EQ(c.loss_weights(), (LossWeights{1.0, 0.1, 1.0, 1.0}));
}

TEST(Config, PrintedFormReparsesIdentically) {
  Config a;
  EXPECT_EQ(parse_config(format_config(a)), a);
  Config b;
  apply_key_values(b, {{"arch", "c3ded"}, {"lr", "0.00031"}, {"exposure", "0.0123456789"}, {"seed", "18446744073709551615"},
                       {"resume", "true"}, {"out", "runs/x y"}, {"scene_kind", "blobs"}, {"grid_index", "3"}});
  const Config back = parse_config(format_config(b));
  EXPECT_EQ(back, b);
  EXPECT_EQ(back.arch, Architecture::C3DED);
  EXPECT_EQ(back.seed, 18446744073709551615ULL);
  EXPECT_EQ(back.out, "runs/x y");
  EXPECT_NE(a, b);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  Config c;
  EXPECT_THROW(apply_key_values(c, {{"learning_rate", "1"}}), UsageError);
  EXPECT_THROW(apply_key_values(c, {{"lr", "fast"}}), UsageError);
  EXPECT_THROW(apply_key_values(c, {{"arch", "unet"}}), UsageError);
  EXPECT_THROW(parse_config("lr=1\nlr=2\n"), UsageError);
}

TEST(Config, EncoderDecoderNeedsCropDivisibleByFour) {
  Config c;
  c.arch = Architecture::C3DED;
  c.crop = 63;
  EXPECT_THROW(validate(c), UsageError);
  c.crop = 62;
  EXPECT_THROW(validate(c), UsageError);
  c.crop = 64;
  EXPECT_NO_THROW(validate(c));
  c.arch = Architecture::C3D;
  c.crop = 62;
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, RangeChecks) {
  auto bad = [](auto mutate) {
    Config c;
    mutate(c);
    EXPECT_THROW(validate(c), UsageError);
  };
  bad([](Config& c) { c.lr = 0.0; });
  bad([](Config& c) { c.batch = 0; });
  bad([](Config& c) { c.val_fraction = 1.0; });
  bad([](Config& c) { c.grid_index = 10; });
  bad([](Config& c) { c.tau = 1.0; });
  bad([](Config& c) { c.bit_depth = 11; });
  bad([](Config& c) { c.lambda3 = -1.0; });
  bad([](Config& c) { c.mask = "stripes"; });
}

std::vector<Shape> two_sources() { return {Shape{10, 80, 90, 3}, Shape{6, 64, 64, 3}}; }

TEST(Dataset, MaskSplitIsExact) {
  SynthesisConfig cfg;
  for (std::int64_t n : {100, 101, 2, 1, 64}) {
    const auto idx = build_dataset(two_sources(), cfg, n, 0.5, 5);
    std::int64_t uniform = 0;
    for (const auto& e : idx) uniform += e.spec.mask_kind == MaskKind::UniformRandom;
    EXPECT_EQ(uniform, n / 2) << n;
    EXPECT_EQ(static_cast<std::int64_t>(idx.size()), n);
  }
  const auto idx = build_dataset(two_sources(), cfg, 10, 0.3, 5);
  std::int64_t uniform = 0;
  for (const auto& e : idx) uniform += e.spec.mask_kind == MaskKind::UniformRandom;
  EXPECT_EQ(uniform, 3);
}

TEST(Dataset, DeterministicInBoundsAndUnique) {
  SynthesisConfig cfg;
  const auto sources = two_sources();
  const auto a = build_dataset(sources, cfg, 200, 0.5, 9);
  EXPECT_EQ(a, build_dataset(sources, cfg, 200, 0.5, 9));
  EXPECT_NE(a, build_dataset(sources, cfg, 200, 0.5, 10));
  std::set<std::tuple<std::size_t, std::int64_t, std::int64_t, std::int64_t, std::uint64_t>> seen;
  std::set<std::size_t> used;
  for (const auto& e : a) {
    const Shape& s = sources.at(e.source);
    EXPECT_GE(e.spec.start, 0);
    EXPECT_LE(e.spec.start + cfg.frames, s[0]);
    EXPECT_GE(e.spec.top, 0);
    EXPECT_LE(e.spec.top + cfg.crop, s[1]);
    EXPECT_GE(e.spec.left, 0);
    EXPECT_LE(e.spec.left + cfg.crop, s[2]);
    EXPECT_GE(e.spec.sigma, cfg.sigma_min);
    EXPECT_LE(e.spec.sigma, cfg.sigma_max);
    seen.insert({e.source, e.spec.start, e.spec.top, e.spec.left, e.spec.seed});
    used.insert(e.source);
  }
  EXPECT_EQ(seen.size(), a.size());
  EXPECT_EQ(used.size(), 2u);
}

TEST(Dataset, RejectsEmptyOrShortSources) {
  SynthesisConfig cfg;
  EXPECT_THROW(build_dataset({}, cfg, 4, 0.5, 0), DataError);
  EXPECT_THROW(build_dataset({Shape{3, 64, 64, 3}}, cfg, 4, 0.5, 0), DataError);
  EXPECT_THROW(build_dataset({Shape{8, 32, 64, 3}}, cfg, 4, 0.5, 0), DataError);
}

TEST(Dataset, HashSplitPartitionsIndices) {
  const Split s = split_by_hash(64, 0.1, 3);
  EXPECT_EQ(s.validation.size(), 6u);
  EXPECT_EQ(s.train.size(), 58u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  EXPECT_EQ(all.size(), 64u);
  const Split again = split_by_hash(64, 0.1, 3);
  EXPECT_EQ(again.validation, s.validation);
  EXPECT_NE(split_by_hash(64, 0.1, 4).validation, s.validation);
  EXPECT_TRUE(split_by_hash(5, 0.0, 3).validation.empty());
}

TEST(BoundedQueue, KeepsOrderAcrossThreads) {
  BoundedQueue<int> q(1);
  std::thread producer([&] {
    for (int i = 0; i < 200; ++i) q.push(i);
    q.close();
  });
  int expected = 0;
  while (auto v = q.pop()) EXPECT_EQ(*v, expected++);
  producer.join();
  EXPECT_EQ(expected, 200);
  EXPECT_FALSE(q.push(1));
}

TEST(Trainer, RerunIsByteIdentical) {
  const auto root = scratch_dir("train_rerun");
  const Config a = tiny_config(root / "a");
  Config b = a;
  b.out = (root / "b").string();
  train(a);
  train(b);
  for (const char* f : {"train_log.csv", "val_log.csv", "last.chdr", "best.chdr", "last.state", "metrics.csv"}) {
    ASSERT_TRUE(fs::exists(root / "a" / f)) << f;
    EXPECT_EQ(read_bytes(root / "a" / f), read_bytes(root / "b" / f)) << f;
  }
}

TEST(Trainer, LogRowsRecombineIntoTotal) {
  const auto root = scratch_dir("train_log");
  Config c = tiny_config(root);
  c.lambda2 = 0.05;
  c.lambda3 = 0.2;
  c.lambda4 = 0.3;
  const TrainResult r = train(c);
  const auto rows = read_csv(root / "train_log.csv");
  ASSERT_EQ(rows.front(), (std::vector<std::string>{"step", "L1", "Lfeat", "LSM", "LLM", "total"}));
  ASSERT_EQ(rows.size(), r.rows.size() + 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::stoll(rows[i][0]), static_cast<long long>(i));
    const double l1 = std::stod(rows[i][1]), lf = std::stod(rows[i][2]), ls = std::stod(rows[i][3]), ll = std::stod(rows[i][4]);
    const double total = std::stod(rows[i][5]);
    EXPECT_NEAR(l1 + 0.05 * lf + 0.2 * ls + 0.3 * ll, total, 1e-6 * std::abs(total));
  }
}

TEST(Trainer, BestValidationIsRunningMinimum) {
  const auto root = scratch_dir("train_best");
  Config c = tiny_config(root);
  c.epochs = 5;
  train(c);
  const auto rows = read_csv(root / "val_log.csv");
  ASSERT_EQ(rows.size(), 6u);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    best = std::min(best, std::stod(rows[i][1]));
    EXPECT_DOUBLE_EQ(std::stod(rows[i][2]), best);
  }
  const auto sidecar = read_sidecar(root / "best.chdr");
  ASSERT_TRUE(sidecar.has_value());
  EXPECT_EQ(*sidecar, c);
}

TEST(Trainer, ResumeMidEpochMatchesUninterruptedRun) {
  const auto root = scratch_dir("train_resume");
  Config full = tiny_config(root / "full");
  full.max_steps = 5;  // 2 steps per epoch; stop inside epoch 3
  train(full);

  Config part = full;
  part.out = (root / "part").string();
  part.max_steps = 3;
  const TrainResult first = train(part);
  EXPECT_EQ(first.last_step, 3);
  part.max_steps = 5;
  part.resume = true;
  const TrainResult second = train(part);
  EXPECT_EQ(second.first_step, 3);
  EXPECT_EQ(second.last_step, 5);
  for (const char* f : {"train_log.csv", "val_log.csv", "last.chdr", "best.chdr", "last.state"}) {
    EXPECT_EQ(read_bytes(root / "full" / f), read_bytes(root / "part" / f)) << f;
  }
}

TEST(Trainer, ResumeRejectsChangedConfig) {
  const auto root = scratch_dir("train_resume_bad");
  Config c = tiny_config(root);
  c.max_steps = 1;
  train(c);
  c.resume = true;
  c.lr = 2e-4;
  EXPECT_THROW(train(c), UsageError);
  Config fresh = tiny_config(scratch_dir("train_resume_none"));
  fresh.resume = true;
  EXPECT_THROW(train(fresh), DataError);
}

TEST(Trainer, NonFiniteLossAbortsAndKeepsLastCheckpoint) {
  const auto root = scratch_dir("train_nan");
  Config c = tiny_config(root);
  c.samples = 1;
  c.val_fraction = 0.0;
  c.batch = 1;
  c.epochs = 4;
  c.lr = 1e30;
  EXPECT_THROW(train(c), NumericError);
  const auto state = read_key_values(root / "last.state");
  EXPECT_EQ(state.at("step"), "1");
  Network net = build_c3d();
  EXPECT_NO_THROW(load_parameters(net, read_checkpoint(root / "last.chdr")));
  EXPECT_EQ(read_csv(root / "train_log.csv").size(), 2u);
}

TEST(Reconstruct, FrameCountShapeAndDeterminism) {
  const auto root = scratch_dir("reconstruct");
  Config c = tiny_config(root / "run");
  c.max_steps = 1;
  train(c);
  const Tensor scene = procedural_scene(SceneKind::Blobs, 5, 16, 20, 12.0, 3);
  const CodedClip coded = capture(scene, generate_uniform_mask(16, 20, 1), CameraModel{}, 2);
  const Network net = load_network(root / "run" / "last.chdr", std::nullopt);
  const Reconstruction a = reconstruct(net, coded, 1e-5);
  EXPECT_EQ(a.log_clip.shape(), scene.shape());
  EXPECT_EQ(a.linear_clip.shape(), scene.shape());
  write_reconstruction(root / "a", a);
  write_reconstruction(root / "b", reconstruct(net, coded, 1e-5));
  EXPECT_EQ(testing::tree_bytes(root / "a"), testing::tree_bytes(root / "b"));
  EXPECT_EQ(read_clip(root / "a" / "log"), a.log_clip);
  EXPECT_TRUE(fs::exists(root / "a" / "preview" / "frame_00004_x8.png"));
}

TEST(Reconstruct, RejectsMismatchedOrCorruptCheckpoints) {
  const auto root = scratch_dir("reconstruct_bad");
  Config c = tiny_config(root / "run");
  c.max_steps = 1;
  train(c);
  const fs::path ckpt = root / "run" / "last.chdr";
  EXPECT_THROW(load_network(ckpt, Architecture::C3DED), DataError);
  EXPECT_NO_THROW(load_network(ckpt, Architecture::C3D));

  std::string bytes = read_bytes(ckpt);
  bytes[0] = 'X';
  std::ofstream(root / "bad.chdr", std::ios::binary) << bytes;
  EXPECT_THROW(load_network(root / "bad.chdr", Architecture::C3D), DataError);
  bytes = read_bytes(ckpt);
  bytes[4] = 2;
  std::ofstream(root / "v2.chdr", std::ios::binary) << bytes;
  EXPECT_THROW(load_network(root / "v2.chdr", Architecture::C3D), DataError);

  const Network ed = build_c3ded(1);
  const Tensor scene = procedural_scene(SceneKind::Gradient, 2, 18, 16, 8.0, 3);
  const CodedClip coded = capture(scene, generate_uniform_mask(18, 16, 1), CameraModel{}, 2);
  EXPECT_THROW(reconstruct(ed, coded, 1e-5), DataError);
}

TEST(Reconstruct, PreviewExposures) {
  const Tensor f({1, 3, 3}, std::vector<float>{0.0f, 0.5f, 2.0f, 0.0f, 0.5f, 2.0f, 0.0f, 0.5f, 2.0f});
  const Tensor x1 = exposure_preview(f, 2.0, 1.0);
  EXPECT_FLOAT_EQ(x1[0], 0.0f);
  EXPECT_NEAR(x1[1], std::pow(0.25, 1.0 / 2.2), 1e-6);
  EXPECT_FLOAT_EQ(x1[2], 1.0f);
  const Tensor x8 = exposure_preview(f, 2.0, 8.0);
  EXPECT_FLOAT_EQ(x8[1], 1.0f);
}

}  // namespace
}  // namespace vhdr
