// Experiment harness for multi-domain adaptive segmentation at desk scale:
// style-transfer pretraining, multi-target adaptation, unseen-target
// adaptation without external data, evaluation and ablation sweeps.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "segadapt/trainers.hpp"

namespace fs = std::filesystem;
using namespace segadapt;

using Real = float;

namespace {

// ---------------------------------------------------------------------
// Run directory: every produced file is listed in manifest.json with a
// content hash.
// ---------------------------------------------------------------------

class RunDir {
 public:
  explicit RunDir(const std::string& dir) : dir_(dir) {
    fs::create_directories(dir_);
  }

  const fs::path& path() const { return dir_; }

  std::string file(const std::string& rel) const {
    const fs::path p = dir_ / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p.string();
  }

  void write(const std::string& rel, const std::string& content) {
    const fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    write_text_file(p.string(), content);
    record(rel);
  }

  // for files written by other components (checkpoints, images)
  void record(const std::string& rel) {
    const fs::path p = dir_ / rel;
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("manifest: cannot read back '" + p.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    entries_.push_back({rel, bytes.size(), hash});
  }

  void write_manifest(const nlohmann::json& meta) {
    nlohmann::json j;
    j["meta"] = meta;
    j["files"] = nlohmann::json::array();
    for (const auto& e : entries_) {
      j["files"].push_back({{"path", e.rel}, {"bytes", e.bytes}, {"fnv1a64", e.hash}});
    }
    write_text_file((dir_ / "manifest.json").string(), j.dump(2) + "\n");
  }

 private:
  struct Entry {
    std::string rel;
    size_t bytes;
    std::string hash;
  };
  fs::path dir_;
  std::vector<Entry> entries_;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
  bool resume = false;
};

ExperimentConfig load_config(const CommonArgs& a) {
  if (a.config_path.empty()) throw ConfigError("a --config file is required");
  ExperimentConfig cfg = load_experiment_config(a.config_path);
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.train.seed = *a.seed;
  }
  if (!a.out_dir.empty()) cfg.output.dir = a.out_dir;
  return cfg;
}

void snapshot_config(RunDir& run, const ExperimentConfig& cfg) {
  run.write("config.json", experiment_config_json(cfg).dump(2) + "\n");
}

void emit_curve(RunDir& run, const Series& curve, const std::string& stem,
                bool plots, const std::string& title) {
  run.write(stem + ".csv", series_csv(curve));
  if (plots) run.write(stem + ".svg", series_svg(curve, title));
}

void emit_metrics(RunDir& run, const MetricsReport& rep,
                  const MetricsReport* baseline = nullptr) {
  run.write("metrics.csv", metrics_csv(rep));
  run.write("metrics_table.txt", render_table(rep, baseline));
  std::cout << render_table(rep, baseline);
}

void emit_overlays(RunDir& run, const SegNet<Real>& model, const Benchmark& bench) {
  auto dump = [&](const Dataset& data, const std::string& name) {
    const size_t n = std::min<size_t>(4, data.size());
    for (size_t i = 0; i < n; ++i) {
      const Image& img = data.eval_image(i);
      const LabelMap pred = predict_labels(model.predict(img.cast<Real>()));
      const Image color = colorize_labels(pred, data.spec().palette);
      const std::string rel = "overlays/" + name + "_" + std::to_string(i) + ".png";
      write_image_png(run.file(rel), overlay(img, color));
      run.record(rel);
    }
  };
  dump(*bench.source.eval, bench.source.eval->spec().name);
  for (const auto& t : bench.targets) dump(*t.eval, t.eval->spec().name);
  dump(*bench.unseen.eval, bench.unseen.eval->spec().name);
}

void emit_transfer_grid(RunDir& run, const StyleAssets<Real>& assets,
                        const Benchmark& bench) {
  std::vector<const Dataset*> sets = {bench.source.eval.get()};
  for (const auto& t : bench.targets) sets.push_back(t.eval.get());
  std::vector<Image> tiles;
  for (const Dataset* d : sets) {
    const Image x = d->eval_image(0);
    tiles.push_back(x);
    for (const auto& name : assets.domains) {
      const Tensor<Real> y = assets.tnet.transfer(x.cast<Real>(),
                                                  assets.registry.get(name));
      tiles.push_back(y.cast<float>());
    }
  }
  const Image grid = montage(tiles, 1 + static_cast<int>(assets.domains.size()));
  write_image_png(run.file("transfers/grid.png"), grid);
  run.record("transfers/grid.png");
}

void save_final_checkpoint(RunDir& run, const std::string& rel,
                           const std::string& kind, MtkdTrainer<Real>* s1,
                           UtkdTrainer<Real>* s2, const ExperimentConfig& cfg) {
  CheckpointWriter w(kind);
  if (s2) {
    w.add_section("student", s2->student().arch(), s2->student().params());
    w.add_section("teacher", s2->teacher().arch(), s2->teacher().params());
    w.add_section("d_out", s2->d_out().arch(), s2->d_out().params());
    w.meta()["created"] = {{"iteration", s2->iteration()},
                           {"seed", cfg.seed},
                           {"mode", to_string(cfg.mode)}};
  } else {
    w.add_section("student", s1->student().arch(), s1->student().params());
    w.add_section("teacher", s1->teacher().arch(), s1->teacher().params());
    w.add_section("d_out", s1->d_out().arch(), s1->d_out().params());
    w.meta()["created"] = {{"iteration", s1->iteration()},
                           {"seed", cfg.seed},
                           {"mode", to_string(cfg.mode)}};
  }
  w.write(run.file(rel));
  run.record(rel);
}

StyleAssets<Real> require_style_assets(const std::string& cli_path,
                                       const ExperimentConfig& cfg) {
  const std::string path = !cli_path.empty() ? cli_path : cfg.style_checkpoint;
  if (path.empty())
    throw ConfigError(
        "style assets required: pass --style-assets or set "
        "method.style_checkpoint, or disable use_style_transfer");
  return load_style_assets<Real>(path);
}

bool style_needed(const ExperimentConfig& cfg) {
  return cfg.train.use_style_transfer && cfg.train.lambda_con > 0 &&
         cfg.train.augmentation != AugmentKind::none &&
         cfg.mode != RunMode::no_adaptation && cfg.mode != RunMode::source_free_like;
}

// generic training-with-checkpoint loop for single-stage commands
template <typename Trainer>
void run_with_checkpoints(Trainer& trainer, RunDir& run, const ExperimentConfig& cfg,
                          const std::string& kind, bool resume) {
  const std::string last_rel = "checkpoint_last.ckpt";
  if (resume && fs::exists(run.file(last_rel))) {
    trainer.restore_state(Checkpoint::read(run.file(last_rel)));
    std::cout << "resumed at iteration " << trainer.iteration() << "\n";
  }
  const int stride = cfg.train.checkpoint_stride;
  while (!trainer.done()) {
    trainer.step();
    if (stride > 0 && trainer.iteration() % stride == 0 && !trainer.done()) {
      CheckpointWriter w(kind);
      trainer.save_state(w);
      w.meta()["created"] = {{"iteration", trainer.iteration()},
                             {"seed", cfg.seed},
                             {"mode", to_string(cfg.mode)}};
      w.write(run.file(last_rel));
    }
  }
}

// ---------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------

int cmd_train_mtstn(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args);
  RunDir run(cfg.output.dir);
  snapshot_config(run, cfg);
  const Benchmark bench = build_benchmark(cfg.benchmark);

  MtstnResult<Real> result = train_mtstn<Real>(bench, cfg.mtstn, cfg.seed);
  save_style_assets(result.assets, run.file("style.ckpt"), cfg.seed);
  run.record("style.ckpt");
  emit_curve(run, result.curve, "style_curve", cfg.output.emit_plots,
             "style transfer training");

  Series rec;
  rec.columns = {"domain_index", "recon_l1"};
  std::vector<const Dataset*> evals = {bench.source.eval.get()};
  for (const auto& t : bench.targets) evals.push_back(t.eval.get());
  std::string rec_txt = "held-out own-style reconstruction L1\n";
  for (size_t i = 0; i < evals.size(); ++i) {
    const double err = mtstn_reconstruction_error(result.assets, *evals[i]);
    rec.rows.push_back({static_cast<double>(i), err});
    rec_txt += evals[i]->spec().name + "\t" + format_fixed(err, 4) + "\n";
  }
  run.write("reconstruction.csv", series_csv(rec));
  run.write("reconstruction.txt", rec_txt);
  std::cout << rec_txt;

  if (cfg.output.emit_transfer_grid) emit_transfer_grid(run, result.assets, bench);
  run.write_manifest({{"command", "train-mtstn"}, {"seed", cfg.seed}});
  return 0;
}

int cmd_train_mtkd(const CommonArgs& args, const std::string& style_path) {
  ExperimentConfig cfg = load_config(args);
  if (cfg.mode == RunMode::utkd)
    throw ConfigError("train-mtkd: mode 'utkd' is handled by run-setting/adapt-utkd");
  RunDir run(cfg.output.dir);
  snapshot_config(run, cfg);
  const Benchmark bench = build_benchmark(cfg.benchmark);

  std::optional<StyleAssets<Real>> style;
  if (style_needed(cfg)) style = require_style_assets(style_path, cfg);

  // same data view construction as run_setting, but with mid-run checkpoints
  MtkdDataView view;
  view.source = bench.source.train.get();
  TrainConfig tc = cfg.train;
  if (cfg.mode == RunMode::no_adaptation) {
    tc.lambda_con = 0;
    tc.lambda_out = 0;
    tc.use_style_transfer = false;
    view.targets = {bench.targets[0].train.get()};
  } else if (cfg.mode == RunMode::single_target) {
    view.targets = {find_train_set(bench, cfg.single_target)};
  } else {
    if (cfg.multi_targets.empty())
      for (const auto& t : bench.targets) view.targets.push_back(t.train.get());
    else
      for (const auto& name : cfg.multi_targets)
        view.targets.push_back(find_train_set(bench, name));
    if (cfg.multi_target_include_unseen)
      view.targets.push_back(bench.unseen.train.get());
  }

  MtkdTrainer<Real> trainer(view, tc, bench.class_count,
                            style ? &*style : nullptr);
  run_with_checkpoints(trainer, run, cfg, "mtkd", args.resume);

  save_final_checkpoint(run, "checkpoint_final.ckpt", "mtkd", &trainer, nullptr, cfg);
  emit_curve(run, trainer.curve(), "train_curve", cfg.output.emit_plots,
             "mtkd training");
  const MetricsReport rep = evaluate_all_domains(trainer.teacher(), bench,
                                                 to_string(cfg.mode), cfg.seed,
                                                 trainer.iteration());
  emit_metrics(run, rep);
  if (cfg.output.emit_overlays) emit_overlays(run, trainer.teacher(), bench);
  run.write_manifest({{"command", "train-mtkd"},
                      {"mode", to_string(cfg.mode)},
                      {"seed", cfg.seed}});
  return 0;
}

int cmd_adapt_utkd(const CommonArgs& args, const std::string& pretrained_path) {
  ExperimentConfig cfg = load_config(args);
  if (pretrained_path.empty())
    throw ConfigError("adapt-utkd: --pretrained checkpoint is required");
  RunDir run(cfg.output.dir);
  snapshot_config(run, cfg);

  // Only the unseen domain is materialized: adaptation runs without any
  // handle to source or known-target data.
  const Benchmark unseen_only = [&] {
    Benchmark b;
    BenchmarkConfig bc = cfg.benchmark;
    const uint64_t kDomainStride = 1ull << 20;
    const uint64_t kEvalOffset = 1ull << 19;
    const uint64_t base =
        bc.geometry_seed + (1 + bc.targets.size()) * kDomainStride;
    b.H = b.W = bc.image_size;
    b.unseen.train = std::make_shared<Dataset>(
        bc.unseen.name + "/train", bc.unseen, base, bc.train_per_domain,
        bc.image_size, bc.image_size, false);
    b.unseen.eval = std::make_shared<Dataset>(
        bc.unseen.name + "/eval", bc.unseen, base + kEvalOffset,
        bc.eval_per_domain, bc.image_size, bc.image_size, false);
    return b;
  }();

  const Checkpoint ckpt = Checkpoint::read(pretrained_path);
  SegNet<Real> pre_teacher(kClassCount);
  auto pre_dout = ConvDiscriminator<Real>::output_space(kClassCount);
  ckpt.load_section("teacher", pre_teacher.arch(), pre_teacher.params());
  ckpt.load_section("d_out", pre_dout.arch(), pre_dout.params());

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  UtkdTrainer<Real> trainer(pre_teacher, pre_dout, *unseen_only.unseen.train, tc);
  ExperimentConfig ucfg = cfg;
  ucfg.mode = RunMode::utkd;
  run_with_checkpoints(trainer, run, ucfg, "utkd", args.resume);

  save_final_checkpoint(run, "checkpoint_final.ckpt", "utkd", nullptr, &trainer, ucfg);
  emit_curve(run, trainer.curve(), "adapt_curve", cfg.output.emit_plots,
             "utkd adaptation");

  MetricsReport rep;
  rep.mode = "utkd";
  rep.seed = cfg.seed;
  rep.iteration = trainer.iteration();
  rep.domains.push_back(evaluate_on(trainer.teacher(), *unseen_only.unseen.eval,
                                    unseen_only.unseen.eval->spec().name));
  rep.finalize();
  emit_metrics(run, rep);
  run.write_manifest({{"command", "adapt-utkd"}, {"seed", cfg.seed}});
  return 0;
}

int cmd_run_setting(const CommonArgs& args, const std::string& style_path,
                    const std::string& mode_override) {
  ExperimentConfig cfg = load_config(args);
  if (!mode_override.empty()) cfg.mode = parse_mode(mode_override);
  RunDir run(cfg.output.dir);
  snapshot_config(run, cfg);
  const Benchmark bench = build_benchmark(cfg.benchmark);

  std::optional<StyleAssets<Real>> style;
  if (style_needed(cfg)) style = require_style_assets(style_path, cfg);

  RunSettingResult<Real> result =
      run_setting<Real>(cfg, bench, style ? &*style : nullptr);

  save_final_checkpoint(run, "checkpoint_final.ckpt",
                        result.stage2 ? "utkd" : "mtkd", result.stage1.get(),
                        result.stage2.get(), cfg);
  emit_curve(run, result.stage1->curve(), "train_curve", cfg.output.emit_plots,
             "stage 1 training");
  if (result.stage2)
    emit_curve(run, result.stage2->curve(), "adapt_curve", cfg.output.emit_plots,
               "stage 2 adaptation");
  emit_metrics(run, result.report);
  if (cfg.output.emit_overlays) {
    const SegNet<Real>& model =
        result.stage2 ? result.stage2->teacher() : result.stage1->teacher();
    emit_overlays(run, model, bench);
  }
  run.write_manifest({{"command", "run-setting"},
                      {"mode", to_string(cfg.mode)},
                      {"seed", cfg.seed}});
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& ckpt_path,
                 const std::string& which_model) {
  ExperimentConfig cfg = load_config(args);
  if (ckpt_path.empty()) throw ConfigError("evaluate: --checkpoint is required");
  RunDir run(cfg.output.dir);
  const Benchmark bench = build_benchmark(cfg.benchmark);

  const Checkpoint ckpt = Checkpoint::read(ckpt_path);
  SegNet<Real> model(kClassCount);
  ckpt.load_section(which_model, model.arch(), model.params());
  const auto& created = ckpt.meta().at("created");

  const MetricsReport rep = evaluate_all_domains(
      model, bench, created.value("mode", std::string("evaluate")),
      created.value("seed", uint64_t{0}), created.value("iteration", 0LL));
  emit_metrics(run, rep);
  if (cfg.output.emit_overlays) emit_overlays(run, model, bench);
  run.write_manifest({{"command", "evaluate"}, {"checkpoint", ckpt_path}});
  return 0;
}

int cmd_export_scenes(const CommonArgs& args, const std::string& domain, int count,
                      const std::string& split) {
  ExperimentConfig cfg = load_config(args);
  RunDir run(cfg.output.dir);
  const Benchmark bench = build_benchmark(cfg.benchmark);
  const Dataset* data = nullptr;
  if (split == "train")
    data = find_train_set(bench, domain);
  else {
    if (domain == "unseen" || domain == bench.unseen.eval->spec().name)
      data = bench.unseen.eval.get();
    else if (domain == bench.source.eval->spec().name)
      data = bench.source.eval.get();
    else
      for (const auto& t : bench.targets)
        if (t.eval->spec().name == domain) data = t.eval.get();
    if (!data) throw ConfigError("unknown domain '" + domain + "'");
  }
  const size_t n = std::min<size_t>(count, data->size());
  for (size_t i = 0; i < n; ++i) {
    const std::string stem = "scenes/" + data->spec().name + "_" + std::to_string(i);
    write_image_png(run.file(stem + ".png"), data->eval_image(i));
    run.record(stem + ".png");
    write_label_png(run.file(stem + "_label.png"), data->eval_label(i));
    run.record(stem + "_label.png");
  }
  run.write_manifest({{"command", "export-scenes"}, {"domain", domain}});
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& style_path) {
  ExperimentConfig cfg = load_config(args);
  if (!cfg.has_sweep) throw ConfigError("ablate: config has no 'sweep' section");
  RunDir run(cfg.output.dir);
  snapshot_config(run, cfg);
  const Benchmark bench = build_benchmark(cfg.benchmark);

  const bool is_utkd = cfg.sweep.method == "utkd";
  std::optional<StyleAssets<Real>> style;
  if (cfg.train.use_style_transfer &&
      cfg.train.augmentation != AugmentKind::none && cfg.train.lambda_con > 0)
    style = require_style_assets(style_path, cfg);

  // pretrained stage-1 models for utkd sweeps, one per seed
  std::map<uint64_t, std::unique_ptr<MtkdTrainer<Real>>> bases;
  auto base_for = [&](uint64_t seed) -> MtkdTrainer<Real>& {
    auto it = bases.find(seed);
    if (it != bases.end()) return *it->second;
    ExperimentConfig c = cfg;
    c.seed = seed;
    c.mode = RunMode::multi_target;
    RunSettingResult<Real> r = run_setting<Real>(c, bench, style ? &*style : nullptr);
    auto [pos, ok] = bases.emplace(seed, std::move(r.stage1));
    return *pos->second;
  };

  Series detail;
  detail.columns = {"value_index", "value", "seed", "unseen_miou", "avg_miou"};
  Series summary;
  summary.columns = {"value", "mean_avg_miou", "mean_unseen_miou"};

  std::vector<std::pair<std::string, double>> values;
  for (double v : cfg.sweep.values) values.push_back({format_fixed(v, 6), v});
  for (const auto& v : cfg.sweep.variants) values.push_back({v, 0.0});

  std::string table = "parameter=" + cfg.sweep.parameter + " method=" +
                      cfg.sweep.method + "\nvalue\tseed\tunseen\tavg\n";
  for (size_t vi = 0; vi < values.size(); ++vi) {
    double sum_avg = 0, sum_unseen = 0;
    for (uint64_t seed : cfg.sweep.seeds) {
      ExperimentConfig c = cfg;
      c.seed = seed;
      c.train.seed = seed;
      // apply the swept parameter
      const std::string& pname = cfg.sweep.parameter;
      if (pname == "alpha")
        c.train.alpha = values[vi].second;
      else if (pname == "lambda_con")
        c.train.lambda_con = values[vi].second;
      else if (pname == "lambda_out")
        c.train.lambda_out = values[vi].second;
      else if (pname == "augmentation") {
        std::string v = values[vi].first;
        const bool with_stn = v.size() > 4 && v.substr(v.size() - 4) == "+stn";
        if (with_stn) v = v.substr(0, v.size() - 4);
        c.train.augmentation = parse_augmentation(v);
        c.train.use_style_transfer = with_stn;
      } else if (pname == "consistency") {
        c.train.utkd_frozen_consistency = values[vi].first == "frozen";
      } else {
        throw ConfigError("ablate: unknown sweep parameter '" + pname + "'");
      }

      MetricsReport rep;
      if (is_utkd) {
        MtkdTrainer<Real>& base = base_for(seed);
        TrainConfig atc = c.train;
        UtkdTrainer<Real> adapt(base.teacher(), base.d_out(), *bench.unseen.train,
                                atc);
        adapt.run_to_end();
        rep = evaluate_all_domains(adapt.teacher(), bench, "utkd", seed,
                                   adapt.iteration());
      } else {
        c.mode = RunMode::multi_target;
        const StyleAssets<Real>* st =
            (c.train.use_style_transfer && style) ? &*style : nullptr;
        if (c.train.use_style_transfer && !style)
          throw ConfigError("ablate: '+stn' variant needs --style-assets");
        RunSettingResult<Real> r = run_setting<Real>(c, bench, st);
        rep = r.report;
      }
      const double unseen_miou =
          rep.find(bench.unseen.eval->spec().name)->miou;
      double avg_targets = 0;
      for (const auto& t : bench.targets)
        avg_targets += rep.find(t.eval->spec().name)->miou;
      avg_targets /= bench.targets.size();
      const double avg = is_utkd ? unseen_miou : avg_targets;
      detail.rows.push_back({static_cast<double>(vi), values[vi].second,
                             static_cast<double>(seed), unseen_miou, avg});
      table += values[vi].first + "\t" + std::to_string(seed) + "\t" +
               format_fixed(unseen_miou * 100, 1) + "\t" +
               format_fixed(avg * 100, 1) + "\n";
      sum_avg += avg;
      sum_unseen += unseen_miou;
    }
    summary.rows.push_back({values[vi].second,
                            sum_avg / cfg.sweep.seeds.size(),
                            sum_unseen / cfg.sweep.seeds.size()});
  }

  run.write("ablate_results.csv", series_csv(detail));
  run.write("ablate_summary.csv", series_csv(summary));
  if (cfg.output.emit_plots && !cfg.sweep.values.empty())
    run.write("ablate_curve.svg",
              series_svg(summary, cfg.sweep.parameter + " sweep (" +
                                      cfg.sweep.method + ")"));
  run.write("ablate_table.txt", table);
  std::cout << table;
  run.write_manifest({{"command", "ablate"}, {"parameter", cfg.sweep.parameter}});
  return 0;
}

int cmd_compare(const std::vector<std::string>& run_dirs,
                const std::string& baseline_name, const std::string& out_dir) {
  if (run_dirs.empty()) throw ConfigError("compare: no run directories given");
  struct RunRow {
    std::string name, mode;
    bool external = true;
    std::map<std::string, double> domain_miou;
    double avg = 0;
  };
  std::vector<RunRow> rows;
  for (const auto& dir : run_dirs) {
    RunRow row;
    row.name = fs::path(dir).filename().string();
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (mf) {
      nlohmann::json j;
      mf >> j;
      row.mode = j["meta"].value("mode", j["meta"].value("command", ""));
    }
    row.external = !(row.mode == "utkd" || row.mode == "no_adaptation" ||
                     row.mode == "source_free_like" || row.mode == "adapt-utkd");
    std::ifstream f(fs::path(dir) / "metrics.csv");
    if (!f) throw IoError("compare: missing metrics.csv in '" + dir + "'");
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (cells.size() > 4 && cells[0] == "domain")
        row.domain_miou[cells[1]] = std::stod(cells[4]);
      if (cells.size() > 5 && cells[0] == "summary") row.avg = std::stod(cells[5]);
    }
    rows.push_back(row);
  }
  const RunRow* base = nullptr;
  for (const auto& r : rows)
    if (r.name == baseline_name) base = &r;
  if (!base && !baseline_name.empty())
    throw ConfigError("compare: baseline '" + baseline_name + "' not among runs");
  // all runs must cover the same domains
  for (const auto& r : rows)
    if (r.domain_miou.size() != rows[0].domain_miou.size())
      throw ConfigError("compare: runs evaluate different domain sets");

  std::string out = "run\tmode\texternal\tavg";
  if (base) out += "\tdelta(" + baseline_name + ")";
  out += "\n";
  for (const auto& r : rows) {
    out += r.name + "\t" + r.mode + "\t" + (r.external ? "yes" : "no") + "\t" +
           format_fixed(r.avg * 100, 1);
    if (base) {
      const double d = (r.avg - base->avg) * 100;
      out += "\t" + std::string(d >= 0 ? "+" : "") + format_fixed(d, 1);
    }
    out += "\n";
  }
  for (const auto& a : rows)
    for (const auto& b : rows)
      if (!a.external && b.external && a.avg >= b.avg)
        out += "note: '" + a.name + "' (no external data) matches or beats '" +
               b.name + "'\n";
  std::cout << out;
  if (!out_dir.empty()) {
    RunDir run(out_dir);
    run.write("comparison.txt", out);
    run.write_manifest({{"command", "compare"}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-domain adaptive segmentation harness"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string style_path, pretrained, mode_override, which_model = "teacher";
  std::string domain = "unseen", split = "eval", baseline;
  int count = 8;
  std::vector<std::string> run_dirs;

  auto add_common = [&](CLI::App* sub, bool with_resume = true) {
    sub->add_option("--config", common.config_path, "experiment config (json)");
    sub->add_option("--out", common.out_dir, "output run directory");
    sub->add_option("--seed", [&common](const std::vector<std::string>& v) {
      common.seed = std::stoull(v[0]);
      return true;
    }, "override the run seed");
    if (with_resume)
      sub->add_flag("--resume", common.resume, "continue from checkpoint_last.ckpt");
  };

  CLI::App* mtstn = app.add_subcommand("train-mtstn", "train the style transfer network");
  add_common(mtstn, false);

  CLI::App* mtkd = app.add_subcommand("train-mtkd", "multi-target adaptation training");
  add_common(mtkd);
  mtkd->add_option("--style-assets", style_path, "style checkpoint from train-mtstn");

  CLI::App* utkd = app.add_subcommand("adapt-utkd", "adapt to the unseen domain from a pretrained checkpoint");
  add_common(utkd);
  utkd->add_option("--pretrained", pretrained, "mtkd checkpoint to adapt from");

  CLI::App* rs = app.add_subcommand("run-setting", "run one problem setting end to end");
  add_common(rs, false);
  rs->add_option("--style-assets", style_path, "style checkpoint");
  rs->add_option("--mode", mode_override,
                 "single_target|multi_target|source_free_like|no_adaptation|utkd");

  CLI::App* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on the benchmark");
  add_common(ev, false);
  ev->add_option("--checkpoint", pretrained, "checkpoint file");
  ev->add_option("--model", which_model, "student|teacher");

  CLI::App* ab = app.add_subcommand("ablate", "parameter sweeps");
  add_common(ab, false);
  ab->add_option("--style-assets", style_path, "style checkpoint");

  CLI::App* cp = app.add_subcommand("compare", "join metrics of several runs");
  cp->add_option("runs", run_dirs, "run directories");
  cp->add_option("--baseline", baseline, "baseline run name (directory basename)");
  cp->add_option("--out", common.out_dir, "optional output directory");

  CLI::App* ex = app.add_subcommand("export-scenes", "dump benchmark scenes as images");
  add_common(ex, false);
  ex->add_option("--domain", domain, "domain name or 'unseen'");
  ex->add_option("--count", count, "number of scenes");
  ex->add_option("--split", split, "train|eval");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mtstn->parsed()) return cmd_train_mtstn(common);
    if (mtkd->parsed()) return cmd_train_mtkd(common, style_path);
    if (utkd->parsed()) return cmd_adapt_utkd(common, pretrained);
    if (rs->parsed()) return cmd_run_setting(common, style_path, mode_override);
    if (ev->parsed()) return cmd_evaluate(common, pretrained, which_model);
    if (ab->parsed()) return cmd_ablate(common, style_path);
    if (cp->parsed()) return cmd_compare(run_dirs, baseline, common.out_dir);
    if (ex->parsed()) return cmd_export_scenes(common, domain, count, split);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IsolationError& e) {
    std::cerr << "isolation error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
