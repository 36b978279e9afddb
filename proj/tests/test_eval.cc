#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "segadapt/eval.hpp"
#include "test_util.hpp"

using namespace segadapt;

TEST(PredictLabels, ArgmaxWithLowIndexTieRule) {
  Tensor<double> onehot({3, 1, 1});
  onehot.at(1, 0, 0) = 1.0;
  EXPECT_EQ(predict_labels(onehot).at(0, 0), 1);

  auto uniform = Tensor<double>::full({7, 2, 2}, 1.0 / 7);
  auto lab = predict_labels(uniform);
  for (size_t i = 0; i < lab.numel(); ++i) EXPECT_EQ(lab[i], 0);

  Tensor<double> q({7, 1, 1});
  q.at(0, 0, 0) = 0.3;
  q.at(1, 0, 0) = 0.3;
  q.at(2, 0, 0) = 0.4;
  EXPECT_EQ(predict_labels(q).at(0, 0), 2);
}

TEST(ConfusionMatrix, DiagonalOnPerfectPrediction) {
  LabelMap gt({4, 4});
  for (size_t i = 0; i < gt.numel(); ++i) gt[i] = i % 5;
  ConfusionMatrix cm(7);
  cm.accumulate(gt, gt);
  for (int a = 0; a < 7; ++a)
    for (int b = 0; b < 7; ++b)
      if (a != b) EXPECT_EQ(cm.at(a, b), 0u);
  EXPECT_EQ(cm.total(), gt.numel());
}

TEST(ConfusionMatrix, HandCountedCase) {
  // gt=(0,0,1,1), pred=(0,1,1,1) -> counts[0][0]=1, counts[0][1]=1, counts[1][1]=2
  LabelMap gt({2, 2}), pred({2, 2});
  gt[0] = 0; gt[1] = 0; gt[2] = 1; gt[3] = 1;
  pred[0] = 0; pred[1] = 1; pred[2] = 1; pred[3] = 1;
  ConfusionMatrix cm(2);
  cm.accumulate(pred, gt);
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(1, 1), 2u);
  EXPECT_EQ(cm.at(1, 0), 0u);
}

TEST(ConfusionMatrix, AccumulationOrderIrrelevant) {
  Rng rng(1);
  LabelMap a_pred({8, 8}), a_gt({8, 8}), b_pred({8, 8}), b_gt({8, 8});
  for (size_t i = 0; i < 64; ++i) {
    a_pred[i] = rng.uniform_int(7);
    a_gt[i] = rng.uniform_int(7);
    b_pred[i] = rng.uniform_int(7);
    b_gt[i] = rng.uniform_int(7);
  }
  ConfusionMatrix ab(7), ba(7);
  ab.accumulate(a_pred, a_gt);
  ab.accumulate(b_pred, b_gt);
  ba.accumulate(b_pred, b_gt);
  ba.accumulate(a_pred, a_gt);
  EXPECT_EQ(ab.counts, ba.counts);

  // merge = elementwise sum of partials
  ConfusionMatrix p1(7), p2(7);
  p1.accumulate(a_pred, a_gt);
  p2.accumulate(b_pred, b_gt);
  p1.merge(p2);
  EXPECT_EQ(p1.counts, ab.counts);
}

TEST(ConfusionMatrix, OutOfRangeLabelRejected) {
  LabelMap bad({1, 1});
  bad[0] = 9;
  LabelMap ok({1, 1});
  ConfusionMatrix cm(7);
  EXPECT_THROW(cm.accumulate(bad, ok), ShapeError);
}

TEST(Iou, ClosedForms) {
  {  // perfect prediction
    LabelMap gt({4, 4});
    for (size_t i = 0; i < gt.numel(); ++i) gt[i] = i % 7;
    ConfusionMatrix cm(7);
    cm.accumulate(gt, gt);
    const IouResult r = iou(cm);
    for (int c = 0; c < 7; ++c) {
      ASSERT_TRUE(r.per_class[c].has_value());
      EXPECT_DOUBLE_EQ(*r.per_class[c], 1.0);
    }
    EXPECT_DOUBLE_EQ(r.miou, 1.0);
  }
  {  // TP=50, FP=25, FN=25 -> IoU=0.5
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 50;
    cm.at(1, 0) = 25;  // FP for class 0
    cm.at(0, 1) = 25;  // FN for class 0
    const IouResult r = iou(cm);
    EXPECT_DOUBLE_EQ(*r.per_class[0], 0.5);
  }
}

TEST(Iou, UndefinedClassesExcludedFromMean) {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 10;  // class 2 never appears
  cm.at(1, 1) = 5;
  cm.at(1, 0) = 5;
  const IouResult r = iou(cm);
  EXPECT_FALSE(r.per_class[2].has_value());
  const double iou0 = 10.0 / (10.0 + 5.0);
  const double iou1 = 5.0 / (5.0 + 5.0);
  EXPECT_DOUBLE_EQ(r.miou, (iou0 + iou1) / 2);

  ConfusionMatrix empty(3);
  EXPECT_THROW(iou(empty), ShapeError);
}

// independent oracle: per-pixel set intersection / union, never touching
// the confusion-matrix path
namespace {

IouResult brute_force_iou(const LabelMap& pred, const LabelMap& gt, int C) {
  IouResult r;
  r.per_class.resize(C);
  double sum = 0;
  int defined = 0;
  for (int c = 0; c < C; ++c) {
    uint64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.numel(); ++i) {
      const bool p = pred[i] == c, g = gt[i] == c;
      if (p && g) ++inter;
      if (p || g) ++uni;
    }
    if (uni == 0) continue;
    r.per_class[c] = static_cast<double>(inter) / uni;
    sum += *r.per_class[c];
    ++defined;
  }
  r.miou = sum / defined;
  return r;
}

}  // namespace

TEST(Iou, MatchesBruteForceOracleExactly) {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    LabelMap pred({16, 16}), gt({16, 16});
    for (size_t i = 0; i < pred.numel(); ++i) {
      pred[i] = rng.uniform_int(7);
      gt[i] = rng.uniform_int(7);
    }
    ConfusionMatrix cm(7);
    cm.accumulate(pred, gt);
    const IouResult fast = iou(cm);
    const IouResult slow = brute_force_iou(pred, gt, 7);
    for (int c = 0; c < 7; ++c) {
      ASSERT_EQ(fast.per_class[c].has_value(), slow.per_class[c].has_value());
      if (fast.per_class[c])
        ASSERT_DOUBLE_EQ(*fast.per_class[c], *slow.per_class[c]);
    }
    ASSERT_DOUBLE_EQ(fast.miou, slow.miou);
  }
}

TEST(Iou, PermutationEquivariant) {
  Rng rng(7);
  LabelMap pred({16, 16}), gt({16, 16});
  for (size_t i = 0; i < pred.numel(); ++i) {
    pred[i] = rng.uniform_int(7);
    gt[i] = rng.uniform_int(7);
  }
  const std::array<uint8_t, 7> perm = {3, 5, 0, 6, 1, 2, 4};
  LabelMap pred2({16, 16}), gt2({16, 16});
  for (size_t i = 0; i < pred.numel(); ++i) {
    pred2[i] = perm[pred[i]];
    gt2[i] = perm[gt[i]];
  }
  ConfusionMatrix a(7), b(7);
  a.accumulate(pred, gt);
  b.accumulate(pred2, gt2);
  const IouResult ra = iou(a), rb = iou(b);
  for (int c = 0; c < 7; ++c)
    ASSERT_DOUBLE_EQ(ra.per_class[c].value_or(-1), rb.per_class[perm[c]].value_or(-1));
  ASSERT_DOUBLE_EQ(ra.miou, rb.miou);
}

TEST(Iou, MiouBetweenMinAndMaxDefinedClass) {
  Rng rng(9);
  LabelMap pred({16, 16}), gt({16, 16});
  for (size_t i = 0; i < pred.numel(); ++i) {
    pred[i] = rng.uniform_int(7);
    gt[i] = rng.uniform_int(7);
  }
  ConfusionMatrix cm(7);
  cm.accumulate(pred, gt);
  const IouResult r = iou(cm);
  double lo = 1, hi = 0;
  for (auto& v : r.per_class)
    if (v) {
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
  EXPECT_GE(r.miou, lo);
  EXPECT_LE(r.miou, hi);
}

namespace {

MetricsReport tiny_report(double m1, double m2) {
  MetricsReport rep;
  rep.mode = "multi_target";
  rep.seed = 3;
  rep.iteration = 100;
  for (int d = 0; d < 2; ++d) {
    DomainResult r;
    r.domain = d == 0 ? "dusk" : "pale";
    r.per_class_iou.assign(7, d == 0 ? m1 : m2);
    r.miou = d == 0 ? m1 : m2;
    rep.domains.push_back(r);
  }
  rep.finalize();
  return rep;
}

}  // namespace

TEST(Report, AverageAndDeltas) {
  const MetricsReport rep = tiny_report(0.70, 0.74);
  EXPECT_NEAR(rep.avg_miou, 0.72, 1e-12);

  const std::string same = render_table(rep, &rep, "self");
  // every delta against itself is +0.0
  std::istringstream is(same);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line))
    EXPECT_NE(line.find("+0.0"), std::string::npos) << line;
}

TEST(Report, BaselineDomainMismatchRejected) {
  const MetricsReport rep = tiny_report(0.7, 0.74);
  MetricsReport other = rep;
  other.domains[1].domain = "elsewhere";
  EXPECT_THROW(render_table(rep, &other), ConfigError);
}

TEST(Report, CsvRoundTripsAtFourDecimals) {
  Rng rng(11);
  MetricsReport rep = tiny_report(rng.uniform(), rng.uniform());
  rep.finalize();
  const std::string csv = metrics_csv(rep);

  // parse back the domain and summary rows
  std::map<std::string, double> mious;
  double avg = -1;
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells[0] == "domain") mious[cells[1]] = std::stod(cells[4]);
    if (cells[0] == "summary") avg = std::stod(cells[5]);
  }
  auto round4 = [](double v) { return std::stod(format_fixed(v, 4)); };
  for (const auto& d : rep.domains)
    EXPECT_DOUBLE_EQ(mious.at(d.domain), round4(d.miou));
  EXPECT_DOUBLE_EQ(avg, round4(rep.avg_miou));
}
