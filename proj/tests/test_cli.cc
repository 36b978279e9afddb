#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "segadapt/config.hpp"

namespace fs = std::filesystem;
using namespace segadapt;

#ifndef SEGADAPT_CLI
#error "SEGADAPT_CLI must point at the command line binary"
#endif

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string out_file = ::testing::TempDir() + "/cli_out.txt";
  const std::string cmd = std::string(SEGADAPT_CLI) + " " + args + " > " +
                          out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream f(out_file);
  std::ostringstream ss;
  ss << f.rdbuf();
  return {WEXITSTATUS(status), ss.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  EXPECT_TRUE(f.good()) << p;
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// tiny but complete config
nlohmann::json tiny_config_json(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.benchmark = default_benchmark_config();
  cfg.benchmark.image_size = 32;
  cfg.benchmark.train_per_domain = 8;
  cfg.benchmark.eval_per_domain = 4;
  cfg.mode = RunMode::multi_target;
  cfg.train.iterations = 20;
  cfg.train.adapt_iterations = 20;
  cfg.train.student_lr = 0.005;
  cfg.train.use_style_transfer = false;
  cfg.train.log_stride = 5;
  cfg.output.dir = out_dir;
  cfg.output.emit_plots = true;
  nlohmann::json j = experiment_config_json(cfg);
  j.erase("sweep");
  return j;
}

std::string write_config(const nlohmann::json& j, const std::string& name) {
  const std::string path = ::testing::TempDir() + "/" + name;
  std::ofstream f(path);
  f << j.dump(2);
  return path;
}

}  // namespace

TEST(Cli, MissingRequiredKeyExitsTwoWithKeyPath) {
  nlohmann::json j = tiny_config_json(::testing::TempDir() + "/run_badcfg");
  j["method"].erase("mode");
  const std::string cfg = write_config(j, "bad.json");
  const CliResult r = run_cli("run-setting --config " + cfg);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("method.mode"), std::string::npos) << r.output;
}

TEST(Cli, UnknownKeyExitsTwo) {
  nlohmann::json j = tiny_config_json(::testing::TempDir() + "/run_unknown");
  j["method"]["warp_speed"] = 9;
  const std::string cfg = write_config(j, "unknown.json");
  const CliResult r = run_cli("run-setting --config " + cfg);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("method.warp_speed"), std::string::npos) << r.output;
}

TEST(Cli, IsolationViolationExitsThree) {
  nlohmann::json j = tiny_config_json(::testing::TempDir() + "/run_isolation");
  j["method"]["mode"] = "utkd";
  j["method"]["multi_targets"] = {"dusk", "unseen"};
  const std::string cfg = write_config(j, "isolation.json");
  const CliResult r = run_cli("run-setting --config " + cfg);
  EXPECT_EQ(r.exit_code, 3);
}

TEST(Cli, SameConfigAndSeedReproducesMetricsByteForByte) {
  const std::string dir_a = ::testing::TempDir() + "/run_det_a";
  const std::string dir_b = ::testing::TempDir() + "/run_det_b";
  const std::string cfg = write_config(tiny_config_json(dir_a), "det.json");
  ASSERT_EQ(run_cli("run-setting --config " + cfg + " --seed 4").exit_code, 0);
  ASSERT_EQ(run_cli("run-setting --config " + cfg + " --seed 4 --out " + dir_b)
                .exit_code, 0);
  EXPECT_EQ(read_file(fs::path(dir_a) / "metrics.csv"),
            read_file(fs::path(dir_b) / "metrics.csv"));
  EXPECT_EQ(read_file(fs::path(dir_a) / "train_curve.csv"),
            read_file(fs::path(dir_b) / "train_curve.csv"));
}

TEST(Cli, EvaluateReproducesLoggedMetricsExactly) {
  const std::string dir = ::testing::TempDir() + "/run_eval_src";
  const std::string dir2 = ::testing::TempDir() + "/run_eval_again";
  const std::string cfg = write_config(tiny_config_json(dir), "eval.json");
  ASSERT_EQ(run_cli("run-setting --config " + cfg + " --seed 2").exit_code, 0);
  ASSERT_EQ(run_cli("evaluate --config " + cfg + " --seed 2 --checkpoint " + dir +
                    "/checkpoint_final.ckpt --out " + dir2).exit_code, 0);
  EXPECT_EQ(read_file(fs::path(dir) / "metrics.csv"),
            read_file(fs::path(dir2) / "metrics.csv"));
}

TEST(Cli, ManifestListsEveryArtifactWithHashes) {
  const std::string dir = ::testing::TempDir() + "/run_manifest";
  const std::string cfg = write_config(tiny_config_json(dir), "manifest.json");
  ASSERT_EQ(run_cli("run-setting --config " + cfg).exit_code, 0);

  nlohmann::json manifest;
  std::ifstream f(fs::path(dir) / "manifest.json");
  ASSERT_TRUE(f.good());
  f >> manifest;
  std::set<std::string> listed;
  for (const auto& e : manifest["files"]) {
    listed.insert(e["path"].get<std::string>());
    EXPECT_EQ(e["fnv1a64"].get<std::string>().size(), 16u);
  }
  for (const char* expect :
       {"config.json", "metrics.csv", "metrics_table.txt", "train_curve.csv",
        "train_curve.svg", "checkpoint_final.ckpt"})
    EXPECT_TRUE(listed.count(expect)) << expect;

  // every file in the run directory except the manifest itself is listed
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).string();
    if (rel == "manifest.json") continue;
    EXPECT_TRUE(listed.count(rel)) << rel;
  }
}

TEST(Cli, ResumeReproducesTheUninterruptedTail) {
  const std::string dir = ::testing::TempDir() + "/run_resume";
  nlohmann::json j = tiny_config_json(dir);
  j["method"]["checkpoint_stride"] = 8;
  const std::string cfg = write_config(j, "resume.json");
  ASSERT_EQ(run_cli("train-mtkd --config " + cfg + " --seed 6").exit_code, 0);
  const std::string metrics_full = read_file(fs::path(dir) / "metrics.csv");
  ASSERT_TRUE(fs::exists(fs::path(dir) / "checkpoint_last.ckpt"));

  // resuming re-runs iterations 16..19 from the stride-16 state and must
  // land on identical metrics
  ASSERT_EQ(run_cli("train-mtkd --config " + cfg + " --seed 6 --resume").exit_code, 0);
  EXPECT_EQ(read_file(fs::path(dir) / "metrics.csv"), metrics_full);
}

TEST(Cli, ExportScenesWritesImageAndLabelFiles) {
  const std::string dir = ::testing::TempDir() + "/run_scenes";
  const std::string cfg = write_config(tiny_config_json(dir), "scenes.json");
  ASSERT_EQ(run_cli("export-scenes --config " + cfg + " --domain dusk --count 3 --out " + dir)
                .exit_code, 0);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "scenes/dusk_0.png"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "scenes/dusk_0_label.png"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "scenes/dusk_2_label.png"));
  // PNG magic
  const std::string png = read_file(fs::path(dir) / "scenes/dusk_0.png");
  ASSERT_GE(png.size(), 8u);
  EXPECT_EQ(static_cast<unsigned char>(png[0]), 0x89);
  EXPECT_EQ(png.substr(1, 3), "PNG");
}

TEST(Cli, CompareRunAgainstItselfShowsZeroDelta) {
  const std::string dir = ::testing::TempDir() + "/run_cmp";
  const std::string cfg = write_config(tiny_config_json(dir), "cmp.json");
  ASSERT_EQ(run_cli("run-setting --config " + cfg).exit_code, 0);
  const CliResult r =
      run_cli("compare " + dir + " " + dir + " --baseline run_cmp");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("+0.0"), std::string::npos) << r.output;
}

TEST(Cli, MissingCheckpointExitsFive) {
  const std::string dir = ::testing::TempDir() + "/run_io";
  const std::string cfg = write_config(tiny_config_json(dir), "io.json");
  const CliResult r = run_cli("evaluate --config " + cfg +
                              " --checkpoint /nonexistent/x.ckpt");
  EXPECT_EQ(r.exit_code, 5);
}
