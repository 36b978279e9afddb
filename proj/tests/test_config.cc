#include <gtest/gtest.h>

#include "segadapt/config.hpp"

using namespace segadapt;

namespace {

nlohmann::json minimal_config() {
  ExperimentConfig cfg;
  cfg.benchmark = default_benchmark_config();
  cfg.mode = RunMode::multi_target;
  nlohmann::json j = experiment_config_json(cfg);
  j.erase("sweep");
  return j;
}

void expect_config_error(const nlohmann::json& j, const std::string& needle) {
  try {
    parse_experiment_config(j);
    FAIL() << "expected ConfigError mentioning '" << needle << "'";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos)
        << "actual message: " << e.what();
  }
}

}  // namespace

TEST(Config, ParsesItsOwnSnapshot) {
  const nlohmann::json j = minimal_config();
  const ExperimentConfig cfg = parse_experiment_config(j);
  EXPECT_EQ(cfg.mode, RunMode::multi_target);
  EXPECT_EQ(cfg.benchmark.targets.size(), 2u);
  EXPECT_EQ(cfg.benchmark.source.name, "vivid");
  EXPECT_DOUBLE_EQ(cfg.train.lambda_con, 100.0);
  EXPECT_DOUBLE_EQ(cfg.train.lambda_out, 1e-3);
  EXPECT_DOUBLE_EQ(cfg.train.alpha, 0.999);
  EXPECT_DOUBLE_EQ(cfg.train.student_lr, 2.5e-5);
  EXPECT_DOUBLE_EQ(cfg.train.disc_lr, 1e-5);
  EXPECT_DOUBLE_EQ(cfg.train.weight_decay, 5e-5);
  EXPECT_DOUBLE_EQ(cfg.train.poly_power, 0.9);
  EXPECT_EQ(cfg.train.augmentation, AugmentKind::cutmix);

  // snapshot round trip preserves the parse
  const nlohmann::json snap = experiment_config_json(cfg);
  const ExperimentConfig cfg2 = parse_experiment_config(snap);
  EXPECT_EQ(experiment_config_json(cfg2), snap);
}

TEST(Config, UnknownKeysRejectedWithPath) {
  nlohmann::json j = minimal_config();
  j["benchmark"]["source"]["shininess"] = 3;
  expect_config_error(j, "benchmark.source.shininess");

  j = minimal_config();
  j["method"]["lambada_con"] = 10;
  expect_config_error(j, "method.lambada_con");

  j = minimal_config();
  j["extra_section"] = 1;
  expect_config_error(j, "extra_section");
}

TEST(Config, MissingRequiredKeysRejectedWithPath) {
  nlohmann::json j = minimal_config();
  j["method"].erase("mode");
  expect_config_error(j, "method.mode");

  j = minimal_config();
  j["benchmark"].erase("unseen");
  expect_config_error(j, "benchmark.unseen");

  j = minimal_config();
  j["benchmark"]["source"].erase("palette");
  expect_config_error(j, "benchmark.source.palette");
}

TEST(Config, TypeMismatchesRejected) {
  nlohmann::json j = minimal_config();
  j["method"]["alpha"] = "high";
  expect_config_error(j, "method.alpha");

  j = minimal_config();
  j["benchmark"]["image_size"] = 63.5;
  expect_config_error(j, "benchmark.image_size");
}

TEST(Config, SemanticValidation) {
  nlohmann::json j = minimal_config();
  j["method"]["alpha"] = 1.5;
  EXPECT_THROW(parse_experiment_config(j), ConfigError);

  j = minimal_config();
  j["method"]["mode"] = "teleport";
  expect_config_error(j, "teleport");

  j = minimal_config();
  j["method"]["augmentation"] = "mosaic";
  expect_config_error(j, "mosaic");

  j = minimal_config();
  j["benchmark"]["image_size"] = 30;  // not divisible by 4
  EXPECT_THROW(parse_experiment_config(j), ConfigError);

  j = minimal_config();
  j["benchmark"]["source"]["palette"][0][0] = 1.5;
  EXPECT_THROW(parse_experiment_config(j), ConfigError);
}

TEST(Config, SweepParsing) {
  nlohmann::json j = minimal_config();
  j["sweep"] = {{"parameter", "alpha"},
                {"values", {0.0, 0.5, 0.9, 0.99, 0.999, 0.9999, 1.0}},
                {"seeds", {0, 1, 2}},
                {"method", "utkd"}};
  const ExperimentConfig cfg = parse_experiment_config(j);
  ASSERT_TRUE(cfg.has_sweep);
  EXPECT_EQ(cfg.sweep.values.size(), 7u);
  EXPECT_EQ(cfg.sweep.seeds.size(), 3u);

  j["sweep"]["values"] = {"cutmix", "gaussian+stn"};
  const ExperimentConfig cfg2 = parse_experiment_config(j);
  EXPECT_EQ(cfg2.sweep.variants.size(), 2u);

  j["sweep"]["method"] = "other";
  expect_config_error(j, "sweep.method");
}
