#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "segadapt/domains.hpp"
#include "segadapt/segnet.hpp"

namespace segadapt {

// Per-pixel argmax; ties resolve to the lowest class index.
template <typename T>
LabelMap predict_labels(const Tensor<T>& q) {
  const int C = q.dim(0);
  const int H = q.dim(1), W = q.dim(2);
  const size_t hw = static_cast<size_t>(H) * W;
  LabelMap out({H, W});
  for (size_t k = 0; k < hw; ++k) {
    int best = 0;
    T bv = q[k];
    for (int c = 1; c < C; ++c) {
      const T v = q[c * hw + k];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out[k] = static_cast<uint8_t>(best);
  }
  return out;
}

// counts[gt][pred]; accumulation is associative and commutative so batches
// can be partial-summed in any order (merge = elementwise sum).
struct ConfusionMatrix {
  int class_count = 0;
  std::vector<uint64_t> counts;

  explicit ConfusionMatrix(int c = kClassCount)
      : class_count(c), counts(static_cast<size_t>(c) * c, 0) {}

  uint64_t& at(int gt, int pred) {
    return counts[static_cast<size_t>(gt) * class_count + pred];
  }
  uint64_t at(int gt, int pred) const {
    return counts[static_cast<size_t>(gt) * class_count + pred];
  }

  uint64_t total() const {
    uint64_t t = 0;
    for (auto v : counts) t += v;
    return t;
  }

  void accumulate(const LabelMap& pred, const LabelMap& gt) {
    require_same_shape(pred, gt, "confusion accumulate");
    for (size_t i = 0; i < pred.numel(); ++i) {
      if (pred[i] >= class_count || gt[i] >= class_count)
        throw ShapeError("confusion accumulate: label out of range");
      ++at(gt[i], pred[i]);
    }
  }

  void merge(const ConfusionMatrix& other) {
    if (other.class_count != class_count)
      throw ShapeError("confusion merge: class count mismatch");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  }
};

// IoU_c = TP / (TP + FP + FN). Classes absent from both prediction and
// ground truth have an empty denominator and are excluded from the mean.
struct IouResult {
  std::vector<std::optional<double>> per_class;
  double miou = 0;
};

inline IouResult iou(const ConfusionMatrix& cm) {
  IouResult r;
  r.per_class.resize(cm.class_count);
  double sum = 0;
  int defined = 0;
  for (int c = 0; c < cm.class_count; ++c) {
    const uint64_t tp = cm.at(c, c);
    uint64_t fp = 0, fn = 0;
    for (int o = 0; o < cm.class_count; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const uint64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    const double v = static_cast<double>(tp) / static_cast<double>(denom);
    r.per_class[c] = v;
    sum += v;
    ++defined;
  }
  if (defined == 0)
    throw ShapeError("iou: every class undefined (empty evaluation)");
  r.miou = sum / defined;
  return r;
}

// -----------------------------------------------------------------------
// Report layout mirrors the result tables: one row per evaluated domain
// with per-class IoU, mIoU, plus the unweighted average over domains.
// -----------------------------------------------------------------------

struct DomainResult {
  std::string domain;
  std::vector<std::optional<double>> per_class_iou;
  double miou = 0;
};

struct MetricsReport {
  std::string mode;
  uint64_t seed = 0;
  long long iteration = 0;
  std::vector<DomainResult> domains;
  double avg_miou = 0;

  void finalize() {
    double s = 0;
    for (const auto& d : domains) s += d.miou;
    avg_miou = domains.empty() ? 0 : s / domains.size();
  }

  const DomainResult* find(const std::string& name) const {
    for (const auto& d : domains)
      if (d.domain == name) return &d;
    return nullptr;
  }
};

// Evaluates a model over a labeled evaluation split. Uses evaluator-side
// label access; per-image partial matrices are merged in a fixed order.
template <typename T>
DomainResult evaluate_on(const SegNet<T>& model, const Dataset& data,
                         const std::string& domain_name) {
  ConfusionMatrix cm(model.class_count);
  for (size_t i = 0; i < data.size(); ++i) {
    const LabelMap pred = predict_labels(model.predict(
        data.eval_image(i).template cast<T>()));
    cm.accumulate(pred, data.eval_label(i));
  }
  const IouResult r = iou(cm);
  DomainResult d;
  d.domain = domain_name;
  d.per_class_iou = r.per_class;
  d.miou = r.miou;
  return d;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

// Machine-readable rows: one line per (domain, class), then per-domain
// summary rows and one benchmark-average row. Values carry 4 decimals.
inline std::string metrics_csv(const MetricsReport& rep) {
  std::string s = "row,domain,class,iou,miou,avg_miou,mode,seed,iteration\n";
  for (const auto& d : rep.domains) {
    for (size_t c = 0; c < d.per_class_iou.size(); ++c) {
      s += "class," + d.domain + "," + class_names()[c] + ",";
      s += d.per_class_iou[c] ? format_fixed(*d.per_class_iou[c], 4) : "undefined";
      s += ",,,,,\n";
    }
  }
  for (const auto& d : rep.domains) {
    s += "domain," + d.domain + ",,," + format_fixed(d.miou, 4) + ",,,,\n";
  }
  s += "summary,,,,," + format_fixed(rep.avg_miou, 4) + "," + rep.mode + "," +
       std::to_string(rep.seed) + "," + std::to_string(rep.iteration) + "\n";
  return s;
}

// Human-readable table with optional signed deltas against a named baseline.
inline std::string render_table(const MetricsReport& rep,
                                const MetricsReport* baseline = nullptr,
                                const std::string& baseline_name = "baseline") {
  std::string s;
  s += "domain";
  for (int c = 0; c < kClassCount; ++c) s += std::string("\t") + class_names()[c];
  s += "\tmIoU";
  if (baseline) s += "\td(" + baseline_name + ")";
  s += "\n";
  for (const auto& d : rep.domains) {
    s += d.domain;
    for (const auto& v : d.per_class_iou)
      s += "\t" + (v ? format_fixed(*v * 100, 1) : std::string("--"));
    s += "\t" + format_fixed(d.miou * 100, 1);
    if (baseline) {
      const DomainResult* b = baseline->find(d.domain);
      if (!b)
        throw ConfigError("render_table: baseline lacks domain '" + d.domain + "'");
      const double delta = (d.miou - b->miou) * 100;
      s += "\t" + std::string(delta >= 0 ? "+" : "") + format_fixed(delta, 1);
    }
    s += "\n";
  }
  s += "Avg\t";
  for (int c = 0; c < kClassCount; ++c) s += "\t";
  s += format_fixed(rep.avg_miou * 100, 1);
  if (baseline) {
    const double delta = (rep.avg_miou - baseline->avg_miou) * 100;
    s += "\t" + std::string(delta >= 0 ? "+" : "") + format_fixed(delta, 1);
  }
  s += "\n";
  return s;
}

}  // namespace segadapt
