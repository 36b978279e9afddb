#include <gtest/gtest.h>

#include <set>

#include "segadapt/domains.hpp"
#include "test_util.hpp"

using namespace segadapt;

namespace {

DomainSpec clean_spec() {
  DomainSpec s = default_source_spec();
  s.noise_sigma = 0;
  s.gamma = 1.0f;
  s.blur_radius = 0;
  return s;
}

}  // namespace

TEST(GenerateScene, DeterministicGivenSpecSeedSize) {
  const DomainSpec s = clean_spec();
  const Scene a = generate_scene(s, 7, 64, 64);
  const Scene b = generate_scene(s, 7, 64, 64);
  EXPECT_TRUE(testutil::bitwise_equal(a.image, b.image));
  EXPECT_TRUE(testutil::bitwise_equal(a.label, b.label));

  // also with the full styling pipeline enabled
  const DomainSpec noisy = default_target1_spec();
  const Scene c = generate_scene(noisy, 7, 64, 64);
  const Scene d = generate_scene(noisy, 7, 64, 64);
  EXPECT_TRUE(testutil::bitwise_equal(c.image, d.image));
}

TEST(GenerateScene, IdentityToneCurveRendersExactPaletteColors) {
  const DomainSpec s = clean_spec();
  const Scene scene = generate_scene(s, 3, 64, 64);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const auto& col = s.palette[scene.label.at(i, j)];
      for (int c = 0; c < 3; ++c)
        ASSERT_EQ(scene.image.at(c, i, j), col[c]);
    }
}

// Frozen corpus check: over scene seeds 0..99 every class must appear in at
// least 40 label maps.
TEST(GenerateScene, ClassCoverageOverSeedCorpus) {
  const DomainSpec s = clean_spec();
  std::array<int, kClassCount> appears{};
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const LabelMap lab = generate_label_map(seed, 64, 64);
    std::array<bool, kClassCount> seen{};
    for (size_t i = 0; i < lab.numel(); ++i) seen[lab[i]] = true;
    for (int c = 0; c < kClassCount; ++c)
      if (seen[c]) ++appears[c];
  }
  for (int c = 0; c < kClassCount; ++c)
    EXPECT_GE(appears[c], 40) << "class " << class_names()[c];
}

TEST(GenerateScene, LabelsInvariantUnderStyleChange) {
  const Scene a = generate_scene(default_source_spec(), 21, 64, 64);
  const Scene b = generate_scene(default_unseen_spec(), 21, 64, 64);
  EXPECT_TRUE(testutil::bitwise_equal(a.label, b.label));
  EXPECT_FALSE(testutil::bitwise_equal(a.image, b.image));
}

TEST(GenerateScene, RangesAndErrors) {
  const Scene s = generate_scene(default_target1_spec(), 5, 64, 48);
  for (size_t i = 0; i < s.image.numel(); ++i) {
    ASSERT_GE(s.image[i], 0.0f);
    ASSERT_LE(s.image[i], 1.0f);
  }
  for (size_t i = 0; i < s.label.numel(); ++i) ASSERT_LT(s.label[i], kClassCount);

  EXPECT_THROW(generate_scene(default_source_spec(), 0, 8, 64), ConfigError);
  DomainSpec bad = default_source_spec();
  bad.palette.pop_back();
  EXPECT_THROW(generate_scene(bad, 0, 64, 64), ConfigError);
  bad = default_source_spec();
  bad.gamma = 0.0f;
  EXPECT_THROW(generate_scene(bad, 0, 64, 64), ConfigError);
  bad = default_source_spec();
  bad.noise_sigma = -0.1f;
  EXPECT_THROW(generate_scene(bad, 0, 64, 64), ConfigError);
}

TEST(BuildBenchmark, TargetCountAndDisjointSplits) {
  BenchmarkConfig cfg = default_benchmark_config();
  cfg.train_per_domain = 20;
  cfg.eval_per_domain = 8;
  const Benchmark b = build_benchmark(cfg);
  EXPECT_EQ(b.targets.size(), 2u);
  EXPECT_EQ(b.source.train->size(), 20u);
  EXPECT_EQ(b.source.eval->size(), 8u);

  std::set<uint64_t> seeds;
  auto collect = [&](const Dataset& d) {
    for (size_t i = 0; i < d.size(); ++i)
      EXPECT_TRUE(seeds.insert(d.scene_seed(i)).second)
          << "seed reused in " << d.name();
  };
  collect(*b.source.train);
  collect(*b.source.eval);
  for (const auto& t : b.targets) {
    collect(*t.train);
    collect(*t.eval);
  }
  collect(*b.unseen.train);
  collect(*b.unseen.eval);
}

TEST(BuildBenchmark, DuplicateUnseenSpecRejected) {
  BenchmarkConfig cfg = default_benchmark_config();
  cfg.train_per_domain = 2;
  cfg.eval_per_domain = 2;
  cfg.unseen = cfg.targets[1];
  cfg.unseen.name = "copycat";  // same style, different name: still rejected
  EXPECT_THROW(build_benchmark(cfg), ConfigError);
}

TEST(BuildBenchmark, LabelVisibilityIsolation) {
  BenchmarkConfig cfg = default_benchmark_config();
  cfg.train_per_domain = 2;
  cfg.eval_per_domain = 2;
  const Benchmark b = build_benchmark(cfg);

  EXPECT_NO_THROW(b.source.train->train_label(0));
  EXPECT_THROW(b.targets[0].train->train_label(0), IsolationError);
  EXPECT_THROW(b.unseen.train->train_label(0), IsolationError);
  // the evaluator path stays open and does not count as a trainer read
  b.reset_reads();
  (void)b.targets[0].eval->eval_label(0);
  (void)b.targets[0].eval->eval_image(0);
  EXPECT_EQ(b.external_reads(), 0u);
  (void)b.targets[0].train->image(0);
  EXPECT_EQ(b.external_reads(), 1u);
}
