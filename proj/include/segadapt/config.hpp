#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "segadapt/augment.hpp"
#include "segadapt/domains.hpp"

namespace segadapt {

enum class RunMode { single_target, multi_target, source_free_like, no_adaptation, utkd };
enum class AugmentKind { none, gaussian, cutmix };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::single_target: return "single_target";
    case RunMode::multi_target: return "multi_target";
    case RunMode::source_free_like: return "source_free_like";
    case RunMode::no_adaptation: return "no_adaptation";
    case RunMode::utkd: return "utkd";
  }
  return "?";
}

inline const char* to_string(AugmentKind a) {
  switch (a) {
    case AugmentKind::none: return "none";
    case AugmentKind::gaussian: return "gaussian";
    case AugmentKind::cutmix: return "cutmix";
  }
  return "?";
}

// Knobs of the MT-KD / UT-KD loops. Defaults are the full-scale training
// recipe; the committed desk-scale config files override the handful that
// assume a pretrained backbone (mainly the student learning rate).
struct TrainConfig {
  double lambda_con = 100.0;
  double lambda_out = 1e-3;
  double alpha = 0.999;
  long long iterations = 3000;        // full-scale recipe uses 50000
  long long adapt_iterations = 3000;
  double student_lr = 2.5e-5;
  double student_momentum = 0.9;
  double weight_decay = 5e-5;
  double disc_lr = 1e-5;
  double disc_beta1 = 0.9;
  double disc_beta2 = 0.99;
  double poly_power = 0.9;
  // linear ramp of both loss weights over the first iterations of stage-1
  // training; 0 applies the full weights from the start
  long long lambda_warmup = 0;
  uint64_t seed = 0;
  AugmentKind augmentation = AugmentKind::cutmix;
  bool use_style_transfer = true;
  TeacherView teacher_view = TeacherView::raw;
  double gaussian_sigma = 0.1;
  bool utkd_init_from_pretrained = true;
  bool utkd_frozen_consistency = false;
  int log_stride = 10;
  int checkpoint_stride = 0;

  void validate() const {
    if (lambda_con < 0 || lambda_out < 0)
      throw ConfigError("train config: lambda weights must be >= 0");
    if (alpha < 0 || alpha > 1)
      throw ConfigError("train config: alpha must lie in [0,1]");
    if (iterations < 1 || adapt_iterations < 1)
      throw ConfigError("train config: iteration counts must be >= 1");
    if (student_lr < 0 || disc_lr < 0)
      throw ConfigError("train config: learning rates must be >= 0");
    if (gaussian_sigma < 0)
      throw ConfigError("train config: gaussian_sigma must be >= 0");
    if (log_stride < 1) throw ConfigError("train config: log_stride must be >= 1");
    if (lambda_warmup < 0)
      throw ConfigError("train config: lambda_warmup must be >= 0");
  }
};

struct MtstnConfig {
  int epochs = 20;
  double gen_lr = 2.5e-4;
  double disc_lr = 1e-5;
  double weight_decay = 5e-5;
  double lambda_adv = 1e-3;
  int cin_width = 64;

  void validate() const {
    if (epochs < 1) throw ConfigError("mtstn config: epochs must be >= 1");
    if (cin_width < 8 || cin_width % 4 != 0)
      throw ConfigError("mtstn config: cin_width must be a multiple of 4, >= 8");
    if (lambda_adv < 0) throw ConfigError("mtstn config: lambda_adv must be >= 0");
  }
};

struct OutputConfig {
  std::string dir = "runs/out";
  bool emit_plots = true;
  bool emit_overlays = false;
  bool emit_transfer_grid = false;
  bool emit_scene_previews = false;
};

struct SweepConfig {
  std::string parameter;               // alpha | lambda_con | lambda_out | augmentation
  std::vector<double> values;
  std::vector<std::string> variants;   // for augmentation sweeps
  std::vector<uint64_t> seeds = {0};
  std::string method = "utkd";         // utkd | mtkd
};

struct ExperimentConfig {
  uint64_t seed = 0;
  BenchmarkConfig benchmark;
  RunMode mode = RunMode::multi_target;
  TrainConfig train;
  MtstnConfig mtstn;
  OutputConfig output;
  SweepConfig sweep;
  bool has_sweep = false;
  std::string style_checkpoint;
  std::string single_target = "unseen";          // domain name for single_target mode
  std::vector<std::string> multi_targets;        // empty: all benchmark targets
  bool multi_target_include_unseen = false;
};

// -----------------------------------------------------------------------
// Schema-checked JSON reading. Every key is either consumed by a typed
// getter or reported as unknown, with its full path.
// -----------------------------------------------------------------------

namespace detail {

class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError("config: '" + path_ + "' must be an object");
  }

  std::string key_path(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const char* key) const { return j_.contains(key); }

  const nlohmann::json& require(const char* key) {
    if (!j_.contains(key))
      throw ConfigError("config: missing required key '" + key_path(key) + "'");
    consumed_.insert(key);
    return j_.at(key);
  }

  const nlohmann::json* optional(const char* key) {
    if (!j_.contains(key)) return nullptr;
    consumed_.insert(key);
    return &j_.at(key);
  }

  double number(const char* key, double def) {
    const nlohmann::json* v = optional(key);
    if (!v) return def;
    if (!v->is_number())
      throw ConfigError("config: '" + key_path(key) + "' must be a number");
    return v->get<double>();
  }

  double require_number(const char* key) {
    const nlohmann::json& v = require(key);
    if (!v.is_number())
      throw ConfigError("config: '" + key_path(key) + "' must be a number");
    return v.get<double>();
  }

  long long integer(const char* key, long long def) {
    const nlohmann::json* v = optional(key);
    if (!v) return def;
    if (!v->is_number_integer())
      throw ConfigError("config: '" + key_path(key) + "' must be an integer");
    return v->get<long long>();
  }

  bool boolean(const char* key, bool def) {
    const nlohmann::json* v = optional(key);
    if (!v) return def;
    if (!v->is_boolean())
      throw ConfigError("config: '" + key_path(key) + "' must be a boolean");
    return v->get<bool>();
  }

  std::string str(const char* key, const std::string& def) {
    const nlohmann::json* v = optional(key);
    if (!v) return def;
    if (!v->is_string())
      throw ConfigError("config: '" + key_path(key) + "' must be a string");
    return v->get<std::string>();
  }

  std::string require_str(const char* key) {
    const nlohmann::json& v = require(key);
    if (!v.is_string())
      throw ConfigError("config: '" + key_path(key) + "' must be a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!consumed_.count(it.key()))
        throw ConfigError("config: unknown key '" +
                          (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
  }

  const nlohmann::json& raw() const { return j_; }
  const std::string& path() const { return path_; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> consumed_;
};

inline DomainSpec parse_domain_spec(const nlohmann::json& j, const std::string& path) {
  JsonReader r(j, path);
  DomainSpec s;
  s.name = r.require_str("name");
  const nlohmann::json& pal = r.require("palette");
  if (!pal.is_array())
    throw ConfigError("config: '" + path + ".palette' must be an array");
  for (const auto& c : pal) {
    if (!c.is_array() || c.size() != 3)
      throw ConfigError("config: '" + path + ".palette' entries must be [r,g,b]");
    s.palette.push_back({c[0].get<float>(), c[1].get<float>(), c[2].get<float>()});
  }
  s.noise_sigma = static_cast<float>(r.number("noise_sigma", 0.0));
  s.gamma = static_cast<float>(r.number("gamma", 1.0));
  s.blur_radius = static_cast<int>(r.integer("blur_radius", 0));
  s.texture_seed = static_cast<uint64_t>(r.integer("texture_seed", 0));
  r.finish();
  s.validate();
  return s;
}

inline nlohmann::json domain_spec_json(const DomainSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["palette"] = nlohmann::json::array();
  for (const auto& c : s.palette) j["palette"].push_back({c[0], c[1], c[2]});
  j["noise_sigma"] = s.noise_sigma;
  j["gamma"] = s.gamma;
  j["blur_radius"] = s.blur_radius;
  j["texture_seed"] = s.texture_seed;
  return j;
}

}  // namespace detail

inline RunMode parse_mode(const std::string& s) {
  if (s == "single_target") return RunMode::single_target;
  if (s == "multi_target") return RunMode::multi_target;
  if (s == "source_free_like") return RunMode::source_free_like;
  if (s == "no_adaptation") return RunMode::no_adaptation;
  if (s == "utkd") return RunMode::utkd;
  throw ConfigError("config: unknown mode '" + s + "'");
}

inline AugmentKind parse_augmentation(const std::string& s) {
  if (s == "none") return AugmentKind::none;
  if (s == "gaussian") return AugmentKind::gaussian;
  if (s == "cutmix") return AugmentKind::cutmix;
  throw ConfigError("config: unknown augmentation '" + s + "'");
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& root) {
  detail::JsonReader r(root, "");
  ExperimentConfig cfg;
  cfg.seed = static_cast<uint64_t>(r.integer("seed", 0));

  {
    detail::JsonReader b(r.require("benchmark"), "benchmark");
    cfg.benchmark.image_size = static_cast<int>(b.integer("image_size", 64));
    cfg.benchmark.train_per_domain =
        static_cast<int>(b.integer("train_per_domain", 200));
    cfg.benchmark.eval_per_domain =
        static_cast<int>(b.integer("eval_per_domain", 50));
    cfg.benchmark.geometry_seed = static_cast<uint64_t>(b.integer("geometry_seed", 1));
    cfg.benchmark.source = detail::parse_domain_spec(b.require("source"), "benchmark.source");
    const nlohmann::json& targets = b.require("targets");
    if (!targets.is_array() || targets.empty())
      throw ConfigError("config: 'benchmark.targets' must be a non-empty array");
    cfg.benchmark.targets.clear();
    for (size_t i = 0; i < targets.size(); ++i)
      cfg.benchmark.targets.push_back(detail::parse_domain_spec(
          targets[i], "benchmark.targets[" + std::to_string(i) + "]"));
    cfg.benchmark.unseen =
        detail::parse_domain_spec(b.require("unseen"), "benchmark.unseen");
    b.finish();
    if (cfg.benchmark.image_size < 16 || cfg.benchmark.image_size % 4 != 0)
      throw ConfigError("config: 'benchmark.image_size' must be >= 16 and divisible by 4");
  }

  {
    detail::JsonReader m(r.require("method"), "method");
    cfg.mode = parse_mode(m.require_str("mode"));
    TrainConfig& t = cfg.train;
    t.iterations = m.integer("iterations", t.iterations);
    t.adapt_iterations = m.integer("adapt_iterations", t.adapt_iterations);
    t.lambda_con = m.number("lambda_con", t.lambda_con);
    t.lambda_out = m.number("lambda_out", t.lambda_out);
    t.alpha = m.number("alpha", t.alpha);
    t.student_lr = m.number("student_lr", t.student_lr);
    t.student_momentum = m.number("student_momentum", t.student_momentum);
    t.weight_decay = m.number("weight_decay", t.weight_decay);
    t.disc_lr = m.number("disc_lr", t.disc_lr);
    t.disc_beta1 = m.number("disc_beta1", t.disc_beta1);
    t.disc_beta2 = m.number("disc_beta2", t.disc_beta2);
    t.poly_power = m.number("poly_power", t.poly_power);
    t.lambda_warmup = m.integer("lambda_warmup", t.lambda_warmup);
    t.augmentation = parse_augmentation(m.str("augmentation", "cutmix"));
    t.use_style_transfer = m.boolean("use_style_transfer", true);
    const std::string view = m.str("teacher_view", "raw");
    if (view != "raw" && view != "transferred")
      throw ConfigError("config: 'method.teacher_view' must be raw|transferred");
    t.teacher_view = view == "raw" ? TeacherView::raw : TeacherView::transferred;
    t.gaussian_sigma = m.number("gaussian_sigma", t.gaussian_sigma);
    const std::string init = m.str("utkd_init", "pretrained");
    if (init != "pretrained" && init != "scratch")
      throw ConfigError("config: 'method.utkd_init' must be pretrained|scratch");
    t.utkd_init_from_pretrained = init == "pretrained";
    const std::string con = m.str("utkd_consistency", "ema");
    if (con != "ema" && con != "frozen")
      throw ConfigError("config: 'method.utkd_consistency' must be ema|frozen");
    t.utkd_frozen_consistency = con == "frozen";
    t.log_stride = static_cast<int>(m.integer("log_stride", t.log_stride));
    t.checkpoint_stride =
        static_cast<int>(m.integer("checkpoint_stride", t.checkpoint_stride));
    cfg.single_target = m.str("single_target", "unseen");
    cfg.style_checkpoint = m.str("style_checkpoint", "");
    cfg.multi_target_include_unseen = m.boolean("multi_target_include_unseen", false);
    if (const nlohmann::json* mt = m.optional("multi_targets")) {
      if (!mt->is_array())
        throw ConfigError("config: 'method.multi_targets' must be an array");
      for (const auto& v : *mt) cfg.multi_targets.push_back(v.get<std::string>());
    }
    m.finish();
    t.seed = cfg.seed;
    t.validate();
  }

  if (r.has("mtstn")) {
    detail::JsonReader m(r.require("mtstn"), "mtstn");
    cfg.mtstn.epochs = static_cast<int>(m.integer("epochs", cfg.mtstn.epochs));
    cfg.mtstn.gen_lr = m.number("gen_lr", cfg.mtstn.gen_lr);
    cfg.mtstn.disc_lr = m.number("disc_lr", cfg.mtstn.disc_lr);
    cfg.mtstn.weight_decay = m.number("weight_decay", cfg.mtstn.weight_decay);
    cfg.mtstn.lambda_adv = m.number("lambda_adv", cfg.mtstn.lambda_adv);
    cfg.mtstn.cin_width = static_cast<int>(m.integer("cin_width", cfg.mtstn.cin_width));
    m.finish();
    cfg.mtstn.validate();
  }

  if (r.has("output")) {
    detail::JsonReader o(r.require("output"), "output");
    cfg.output.dir = o.str("dir", cfg.output.dir);
    cfg.output.emit_plots = o.boolean("emit_plots", cfg.output.emit_plots);
    cfg.output.emit_overlays = o.boolean("emit_overlays", cfg.output.emit_overlays);
    cfg.output.emit_transfer_grid =
        o.boolean("emit_transfer_grid", cfg.output.emit_transfer_grid);
    cfg.output.emit_scene_previews =
        o.boolean("emit_scene_previews", cfg.output.emit_scene_previews);
    o.finish();
  }

  if (r.has("sweep")) {
    detail::JsonReader s(r.require("sweep"), "sweep");
    cfg.has_sweep = true;
    cfg.sweep.parameter = s.require_str("parameter");
    const nlohmann::json& vals = s.require("values");
    if (!vals.is_array() || vals.empty())
      throw ConfigError("config: 'sweep.values' must be a non-empty array");
    for (const auto& v : vals) {
      if (v.is_number())
        cfg.sweep.values.push_back(v.get<double>());
      else if (v.is_string())
        cfg.sweep.variants.push_back(v.get<std::string>());
      else
        throw ConfigError("config: 'sweep.values' entries must be numbers or strings");
    }
    if (const nlohmann::json* seeds = s.optional("seeds")) {
      cfg.sweep.seeds.clear();
      for (const auto& v : *seeds)
        cfg.sweep.seeds.push_back(v.get<uint64_t>());
    }
    cfg.sweep.method = s.str("method", "utkd");
    if (cfg.sweep.method != "utkd" && cfg.sweep.method != "mtkd")
      throw ConfigError("config: 'sweep.method' must be utkd|mtkd");
    s.finish();
  }

  r.finish();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse error in '" + path + "': " + e.what());
  }
  return parse_experiment_config(j);
}

// Effective-config snapshot; parsing it back reproduces the run.
inline nlohmann::json experiment_config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  nlohmann::json& b = j["benchmark"];
  b["image_size"] = cfg.benchmark.image_size;
  b["train_per_domain"] = cfg.benchmark.train_per_domain;
  b["eval_per_domain"] = cfg.benchmark.eval_per_domain;
  b["geometry_seed"] = cfg.benchmark.geometry_seed;
  b["source"] = detail::domain_spec_json(cfg.benchmark.source);
  b["targets"] = nlohmann::json::array();
  for (const auto& t : cfg.benchmark.targets)
    b["targets"].push_back(detail::domain_spec_json(t));
  b["unseen"] = detail::domain_spec_json(cfg.benchmark.unseen);

  nlohmann::json& m = j["method"];
  m["mode"] = to_string(cfg.mode);
  m["iterations"] = cfg.train.iterations;
  m["adapt_iterations"] = cfg.train.adapt_iterations;
  m["lambda_con"] = cfg.train.lambda_con;
  m["lambda_out"] = cfg.train.lambda_out;
  m["alpha"] = cfg.train.alpha;
  m["student_lr"] = cfg.train.student_lr;
  m["student_momentum"] = cfg.train.student_momentum;
  m["weight_decay"] = cfg.train.weight_decay;
  m["disc_lr"] = cfg.train.disc_lr;
  m["disc_beta1"] = cfg.train.disc_beta1;
  m["disc_beta2"] = cfg.train.disc_beta2;
  m["poly_power"] = cfg.train.poly_power;
  m["lambda_warmup"] = cfg.train.lambda_warmup;
  m["augmentation"] = to_string(cfg.train.augmentation);
  m["use_style_transfer"] = cfg.train.use_style_transfer;
  m["teacher_view"] = cfg.train.teacher_view == TeacherView::raw ? "raw" : "transferred";
  m["gaussian_sigma"] = cfg.train.gaussian_sigma;
  m["utkd_init"] = cfg.train.utkd_init_from_pretrained ? "pretrained" : "scratch";
  m["utkd_consistency"] = cfg.train.utkd_frozen_consistency ? "frozen" : "ema";
  m["log_stride"] = cfg.train.log_stride;
  m["checkpoint_stride"] = cfg.train.checkpoint_stride;
  m["single_target"] = cfg.single_target;
  m["style_checkpoint"] = cfg.style_checkpoint;
  m["multi_target_include_unseen"] = cfg.multi_target_include_unseen;
  if (!cfg.multi_targets.empty()) m["multi_targets"] = cfg.multi_targets;

  nlohmann::json& s = j["mtstn"];
  s["epochs"] = cfg.mtstn.epochs;
  s["gen_lr"] = cfg.mtstn.gen_lr;
  s["disc_lr"] = cfg.mtstn.disc_lr;
  s["weight_decay"] = cfg.mtstn.weight_decay;
  s["lambda_adv"] = cfg.mtstn.lambda_adv;
  s["cin_width"] = cfg.mtstn.cin_width;

  nlohmann::json& o = j["output"];
  o["dir"] = cfg.output.dir;
  o["emit_plots"] = cfg.output.emit_plots;
  o["emit_overlays"] = cfg.output.emit_overlays;
  o["emit_transfer_grid"] = cfg.output.emit_transfer_grid;
  o["emit_scene_previews"] = cfg.output.emit_scene_previews;

  if (cfg.has_sweep) {
    nlohmann::json& w = j["sweep"];
    w["parameter"] = cfg.sweep.parameter;
    w["values"] = nlohmann::json::array();
    for (double v : cfg.sweep.values) w["values"].push_back(v);
    for (const auto& v : cfg.sweep.variants) w["values"].push_back(v);
    w["seeds"] = cfg.sweep.seeds;
    w["method"] = cfg.sweep.method;
  }
  return j;
}

}  // namespace segadapt
