#pragma once

#include <array>
#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "segadapt/random.hpp"
#include "segadapt/tensor.hpp"

namespace segadapt {

using Image = Tensor<float>;       // {3, H, W}, values in [0, 1]
using LabelMap = Tensor<uint8_t>;  // {H, W}, values in [0, C)

constexpr int kClassCount = 7;

// class ids; painted in this z-order (ground/backdrop base, posts on top)
enum ClassId : uint8_t {
  kGround = 0,
  kBlock = 1,
  kPost = 2,
  kBlob = 3,
  kBackdrop = 4,
  kFigure = 5,
  kBox = 6,
};

inline const std::array<const char*, kClassCount>& class_names() {
  static const std::array<const char*, kClassCount> names = {
      "ground", "block", "post", "blob", "backdrop", "figure", "box"};
  return names;
}

// Visual styling of one domain: per-class base colors plus tone curve,
// blur and sensor-noise parameters. Scene geometry never depends on it.
struct DomainSpec {
  std::string name;
  std::vector<std::array<float, 3>> palette;  // kClassCount RGB triples
  float noise_sigma = 0.0f;
  float gamma = 1.0f;
  int blur_radius = 0;
  uint64_t texture_seed = 0;

  void validate() const {
    if (name.empty()) throw ConfigError("domain spec: empty name");
    if (palette.size() != static_cast<size_t>(kClassCount))
      throw ConfigError("domain spec '" + name + "': palette must have " +
                        std::to_string(kClassCount) + " colors, got " +
                        std::to_string(palette.size()));
    for (const auto& c : palette)
      for (float v : c)
        if (!(v >= 0.0f && v <= 1.0f))
          throw ConfigError("domain spec '" + name +
                            "': palette component outside [0,1]");
    if (!(noise_sigma >= 0.0f))
      throw ConfigError("domain spec '" + name + "': noise_sigma must be >= 0");
    if (!(gamma > 0.0f))
      throw ConfigError("domain spec '" + name + "': gamma must be > 0");
    if (blur_radius < 0)
      throw ConfigError("domain spec '" + name + "': blur_radius must be >= 0");
  }

  bool same_style(const DomainSpec& o) const {
    return palette == o.palette && noise_sigma == o.noise_sigma &&
           gamma == o.gamma && blur_radius == o.blur_radius &&
           texture_seed == o.texture_seed;
  }
};

struct Scene {
  Image image;
  LabelMap label;
};

// ---------------------------------------------------------------------------
// Scene geometry, a pure function of (seed, size)
// ---------------------------------------------------------------------------

namespace detail {

inline void paint_rect(LabelMap& lab, int top, int left, int h, int w, uint8_t cls) {
  const int H = lab.dim(0), W = lab.dim(1);
  const int i0 = std::max(top, 0), i1 = std::min(top + h, H);
  const int j0 = std::max(left, 0), j1 = std::min(left + w, W);
  for (int i = i0; i < i1; ++i)
    for (int j = j0; j < j1; ++j) lab.at(i, j) = cls;
}

inline void paint_disc(LabelMap& lab, double ci, double cj, double r, uint8_t cls) {
  const int H = lab.dim(0), W = lab.dim(1);
  const int i0 = std::max(static_cast<int>(ci - r) - 1, 0);
  const int i1 = std::min(static_cast<int>(ci + r) + 2, H);
  const int j0 = std::max(static_cast<int>(cj - r) - 1, 0);
  const int j1 = std::min(static_cast<int>(cj + r) + 2, W);
  for (int i = i0; i < i1; ++i)
    for (int j = j0; j < j1; ++j) {
      const double di = i - ci, dj = j - cj;
      if (di * di + dj * dj <= r * r) lab.at(i, j) = cls;
    }
}

// truncated box blur per channel; window renormalized at the borders so
// values stay in [0,1]
inline void box_blur(Image& img, int radius) {
  if (radius <= 0) return;
  const int H = img.dim(1), W = img.dim(2);
  std::vector<float> tmp(static_cast<size_t>(H) * W);
  for (int c = 0; c < 3; ++c) {
    float* ch = img.data() + static_cast<size_t>(c) * H * W;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        float s = 0;
        int n = 0;
        for (int dj = -radius; dj <= radius; ++dj) {
          const int jj = j + dj;
          if (jj < 0 || jj >= W) continue;
          s += ch[static_cast<size_t>(i) * W + jj];
          ++n;
        }
        tmp[static_cast<size_t>(i) * W + j] = s / static_cast<float>(n);
      }
    }
    for (int j = 0; j < W; ++j) {
      for (int i = 0; i < H; ++i) {
        float s = 0;
        int n = 0;
        for (int di = -radius; di <= radius; ++di) {
          const int ii = i + di;
          if (ii < 0 || ii >= H) continue;
          s += tmp[static_cast<size_t>(ii) * W + j];
          ++n;
        }
        ch[static_cast<size_t>(i) * W + j] = s / static_cast<float>(n);
      }
    }
  }
}

}  // namespace detail

// Geometry layer list is implicit: the label map is painted back to front.
inline LabelMap generate_label_map(uint64_t seed, int H, int W) {
  Rng geo(splitmix64(seed ^ 0x67656f6d65747279ULL));  // "geometry"
  LabelMap lab({H, W});

  // ground plane and backdrop
  const int horizon = static_cast<int>(H * geo.uniform(0.55, 0.80));
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      lab.at(i, j) = i < horizon ? kBackdrop : kGround;

  // large blocks, sitting around the horizon
  if (geo.bernoulli(0.9)) {
    const int n = 1 + static_cast<int>(geo.uniform_int(2));
    for (int k = 0; k < n; ++k) {
      const int w = static_cast<int>(W * geo.uniform(0.20, 0.42));
      const int h = static_cast<int>(H * geo.uniform(0.25, 0.55));
      const int left = static_cast<int>(geo.uniform(-0.25 * w, W - 0.75 * w));
      const int bottom = horizon + static_cast<int>(H * geo.uniform(-0.02, 0.10));
      detail::paint_rect(lab, bottom - h, left, h, w, kBlock);
    }
  }

  // blobs: unions of discs near the horizon
  if (geo.bernoulli(0.9)) {
    const int n = 1 + static_cast<int>(geo.uniform_int(3));
    for (int k = 0; k < n; ++k) {
      const double cx = geo.uniform(0.08 * W, 0.92 * W);
      const double cy = horizon + geo.uniform(-0.18, 0.02) * H;
      const double r0 = geo.uniform(0.05, 0.12) * std::min(H, W);
      const int discs = 3 + static_cast<int>(geo.uniform_int(3));
      for (int d = 0; d < discs; ++d) {
        const double dx = geo.uniform(-r0, r0);
        const double dy = geo.uniform(-r0 * 0.7, r0 * 0.4);
        const double r = r0 * geo.uniform(0.5, 0.9);
        detail::paint_disc(lab, cy + dy, cx + dx, r, kBlob);
      }
    }
  }

  // boxes: wide rectangles on the ground
  if (geo.bernoulli(0.85)) {
    const int n = 1 + static_cast<int>(geo.uniform_int(2));
    for (int k = 0; k < n; ++k) {
      const int w = static_cast<int>(W * geo.uniform(0.12, 0.28));
      const int h = std::max(3, static_cast<int>(w * geo.uniform(0.35, 0.60)));
      const int left = static_cast<int>(geo.uniform(0.0, (double)(W - w)));
      const int bottom =
          horizon + static_cast<int>((H - horizon) * geo.uniform(0.25, 0.95));
      detail::paint_rect(lab, bottom - h, left, h, w, kBox);
    }
  }

  // figures: small vertical rectangles with a head disc
  if (geo.bernoulli(0.85)) {
    const int n = 1 + static_cast<int>(geo.uniform_int(3));
    for (int k = 0; k < n; ++k) {
      const int h = std::max(5, static_cast<int>(H * geo.uniform(0.10, 0.20)));
      const int w = std::max(2, h / 4);
      const int left = static_cast<int>(geo.uniform(0.0, (double)(W - w)));
      const int bottom =
          horizon + static_cast<int>((H - horizon) * geo.uniform(0.15, 0.98));
      detail::paint_rect(lab, bottom - h, left, h, w, kFigure);
      detail::paint_disc(lab, bottom - h - w * 0.4, left + w * 0.5, w * 0.7, kFigure);
    }
  }

  // posts: thin bars, occasionally with a lamp disc
  if (geo.bernoulli(0.85)) {
    const int n = 1 + static_cast<int>(geo.uniform_int(3));
    for (int k = 0; k < n; ++k) {
      const int w = 1 + static_cast<int>(geo.uniform_int(2));
      const int h = static_cast<int>(H * geo.uniform(0.25, 0.50));
      const int left = static_cast<int>(geo.uniform(0.0, (double)(W - w)));
      const int bottom =
          horizon + static_cast<int>((H - horizon) * geo.uniform(0.0, 0.9));
      detail::paint_rect(lab, bottom - h, left, h, w, kPost);
      if (geo.bernoulli(0.5))
        detail::paint_disc(lab, bottom - h, left + w * 0.5, 2.0, kPost);
    }
  }

  return lab;
}

// Full scene: geometry from the seed, appearance from the spec.
// Pipeline: palette lookup -> tone curve -> blur -> additive noise -> clip.
inline Scene generate_scene(const DomainSpec& spec, uint64_t seed, int H, int W) {
  if (H < 16 || W < 16)
    throw ConfigError("generate_scene: size must be at least 16x16");
  spec.validate();

  Scene s;
  s.label = generate_label_map(seed, H, W);
  s.image = Image({3, H, W});

  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const auto& col = spec.palette[s.label.at(i, j)];
      for (int c = 0; c < 3; ++c) s.image.at(c, i, j) = col[c];
    }

  if (spec.gamma != 1.0f)
    for (size_t i = 0; i < s.image.numel(); ++i)
      s.image[i] = std::pow(s.image[i], spec.gamma);

  detail::box_blur(s.image, spec.blur_radius);

  if (spec.noise_sigma > 0.0f) {
    Rng noise(splitmix64(splitmix64(spec.texture_seed) ^
                         splitmix64(seed ^ 0x6e6f697365ULL)));  // "noise"
    for (size_t i = 0; i < s.image.numel(); ++i) {
      float v = s.image[i] + spec.noise_sigma * static_cast<float>(noise.normal());
      s.image[i] = std::min(std::max(v, 0.0f), 1.0f);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Datasets and the benchmark
// ---------------------------------------------------------------------------

// Immutable after construction. Every image/label access by a trainer goes
// through read-counting accessors so run modes can prove which data they
// touched. Evaluation reads are tracked separately and do not count.
class Dataset {
 public:
  Dataset(std::string name, DomainSpec spec, uint64_t first_seed, size_t count,
          int H, int W, bool labels_visible_to_trainer)
      : name_(std::move(name)),
        spec_(std::move(spec)),
        labeled_(labels_visible_to_trainer),
        first_seed_(first_seed) {
    scenes_.reserve(count);
    seeds_.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      seeds_.push_back(first_seed + i);
      scenes_.push_back(generate_scene(spec_, first_seed + i, H, W));
    }
  }

  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;

  const std::string& name() const { return name_; }
  const DomainSpec& spec() const { return spec_; }
  size_t size() const { return scenes_.size(); }
  uint64_t scene_seed(size_t i) const { return seeds_[i]; }
  bool labeled() const { return labeled_; }

  const Image& image(size_t i) const {
    reads_.fetch_add(1, std::memory_order_relaxed);
    return scenes_[i].image;
  }

  // Labels for supervised training; only the source split allows this.
  const LabelMap& train_label(size_t i) const {
    if (!labeled_)
      throw IsolationError("dataset '" + name_ +
                           "': labels are not visible to trainers");
    reads_.fetch_add(1, std::memory_order_relaxed);
    return scenes_[i].label;
  }

  // Evaluator-side access; bypasses the trainer read ledger.
  const LabelMap& eval_label(size_t i) const { return scenes_[i].label; }
  const Image& eval_image(size_t i) const { return scenes_[i].image; }

  uint64_t reads() const { return reads_.load(std::memory_order_relaxed); }
  void reset_reads() const { reads_.store(0, std::memory_order_relaxed); }

 private:
  std::string name_;
  DomainSpec spec_;
  bool labeled_;
  uint64_t first_seed_;
  std::vector<uint64_t> seeds_;
  std::vector<Scene> scenes_;
  mutable std::atomic<uint64_t> reads_{0};
};

struct DomainData {
  std::shared_ptr<Dataset> train;
  std::shared_ptr<Dataset> eval;
};

struct BenchmarkConfig {
  int image_size = 64;
  int train_per_domain = 200;
  int eval_per_domain = 50;
  uint64_t geometry_seed = 1;
  DomainSpec source;
  std::vector<DomainSpec> targets;
  DomainSpec unseen;
};

struct Benchmark {
  int class_count = kClassCount;
  int H = 0, W = 0;
  DomainData source;
  std::vector<DomainData> targets;
  DomainData unseen;

  uint64_t external_reads() const {
    uint64_t n = source.train->reads() + source.eval->reads();
    for (const auto& t : targets) n += t.train->reads() + t.eval->reads();
    return n;
  }

  void reset_reads() const {
    source.train->reset_reads();
    source.eval->reset_reads();
    for (const auto& t : targets) {
      t.train->reset_reads();
      t.eval->reset_reads();
    }
    unseen.train->reset_reads();
    unseen.eval->reset_reads();
  }
};

// -----------------------------------------------------------------------
// Built-in domain suite: one saturated source domain and three restyled
// variants (dark/warm, light/washed-out, dark/green-tinted) with their own
// tone curves, blur and noise. Per-domain palettes are order-preserving
// affine recolorings of the same base colors, so classes stay separable
// within each domain while the cross-domain appearance shift is large.
// -----------------------------------------------------------------------

namespace detail {

inline std::vector<std::array<float, 3>> base_palette() {
  return {{
      {0.42f, 0.38f, 0.30f},  // ground
      {0.62f, 0.26f, 0.22f},  // block
      {0.92f, 0.83f, 0.25f},  // post
      {0.18f, 0.55f, 0.25f},  // blob
      {0.55f, 0.74f, 0.94f},  // backdrop
      {0.85f, 0.40f, 0.62f},  // figure
      {0.22f, 0.33f, 0.72f},  // box
  }};
}

inline std::vector<std::array<float, 3>> recolor(float scale,
                                                 std::array<float, 3> shift) {
  auto p = base_palette();
  for (auto& c : p)
    for (int i = 0; i < 3; ++i)
      c[i] = std::min(std::max(scale * c[i] + shift[i], 0.0f), 1.0f);
  return p;
}

}  // namespace detail

inline DomainSpec default_source_spec() {
  DomainSpec s;
  s.name = "vivid";
  s.palette = detail::base_palette();
  s.noise_sigma = 0.015f;
  s.gamma = 1.0f;
  s.blur_radius = 0;
  s.texture_seed = 101;
  return s;
}

inline DomainSpec default_target1_spec() {
  DomainSpec s;
  s.name = "dusk";
  s.palette = detail::recolor(0.65f, {0.10f, 0.03f, -0.02f});
  s.noise_sigma = 0.03f;
  s.gamma = 1.25f;
  s.blur_radius = 1;
  s.texture_seed = 202;
  return s;
}

inline DomainSpec default_target2_spec() {
  DomainSpec s;
  s.name = "pale";
  s.palette = detail::recolor(0.55f, {0.36f, 0.37f, 0.41f});
  s.noise_sigma = 0.02f;
  s.gamma = 0.85f;
  s.blur_radius = 0;
  s.texture_seed = 303;
  return s;
}

inline DomainSpec default_unseen_spec() {
  DomainSpec s;
  s.name = "murk";
  s.palette = detail::recolor(0.50f, {0.0f, 0.07f, 0.03f});
  s.noise_sigma = 0.04f;
  s.gamma = 1.35f;
  s.blur_radius = 1;
  s.texture_seed = 404;
  return s;
}

inline BenchmarkConfig default_benchmark_config() {
  BenchmarkConfig cfg;
  cfg.image_size = 64;
  cfg.train_per_domain = 200;
  cfg.eval_per_domain = 50;
  cfg.geometry_seed = 1;
  cfg.source = default_source_spec();
  cfg.targets = {default_target1_spec(), default_target2_spec()};
  cfg.unseen = default_unseen_spec();
  return cfg;
}

// Train/eval splits are disjoint by scene seed; all domains draw from the
// same geometry distribution, so the only shift is appearance.
inline Benchmark build_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.targets.empty())
    throw ConfigError("benchmark: at least one target domain required");
  cfg.source.validate();
  cfg.unseen.validate();
  for (const auto& t : cfg.targets) t.validate();
  for (const auto& t : cfg.targets)
    if (cfg.unseen.same_style(t))
      throw ConfigError("benchmark: unseen domain '" + cfg.unseen.name +
                        "' duplicates training target '" + t.name + "'");
  if (cfg.unseen.same_style(cfg.source))
    throw ConfigError("benchmark: unseen domain '" + cfg.unseen.name +
                      "' duplicates the source domain");
  if (cfg.train_per_domain < 1 || cfg.eval_per_domain < 1)
    throw ConfigError("benchmark: split sizes must be positive");

  const uint64_t kDomainStride = 1ull << 20;
  const uint64_t kEvalOffset = 1ull << 19;

  auto make_domain = [&](const DomainSpec& spec, size_t domain_index,
                         bool labeled) {
    const uint64_t base = cfg.geometry_seed + domain_index * kDomainStride;
    DomainData d;
    d.train = std::make_shared<Dataset>(spec.name + "/train", spec, base,
                                        cfg.train_per_domain, cfg.image_size,
                                        cfg.image_size, labeled);
    d.eval = std::make_shared<Dataset>(spec.name + "/eval", spec,
                                       base + kEvalOffset, cfg.eval_per_domain,
                                       cfg.image_size, cfg.image_size, labeled);
    return d;
  };

  Benchmark b;
  b.H = b.W = cfg.image_size;
  b.source = make_domain(cfg.source, 0, /*labeled=*/true);
  for (size_t n = 0; n < cfg.targets.size(); ++n)
    b.targets.push_back(make_domain(cfg.targets[n], 1 + n, /*labeled=*/false));
  b.unseen = make_domain(cfg.unseen, 1 + cfg.targets.size(), /*labeled=*/false);
  return b;
}

}  // namespace segadapt
