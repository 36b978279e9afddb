#include <gtest/gtest.h>

#include <cstdio>

#include "segadapt/checkpoint.hpp"
#include "segadapt/losses.hpp"
#include "segadapt/segnet.hpp"
#include "test_util.hpp"

using namespace segadapt;
using testutil::fd;
using testutil::relerr;

namespace {

template <typename T>
SegNet<T> make_net(uint64_t seed, int classes = 7) {
  SegNet<T> net(classes);
  Rng rng(seed);
  net.init(rng);
  return net;
}

}  // namespace

TEST(SegNet, ZeroProjectionGivesUniformPrediction) {
  auto net = make_net<double>(1);
  net.proj.w.zero();
  net.proj.b.zero();
  Rng rng(2);
  Tensor<double> x({3, 16, 16});
  testutil::fill_uniform(x, rng);
  auto p = net.predict(x);
  for (size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p[i], 1.0 / 7.0, 1e-9);
}

TEST(SegNet, DeterministicForward) {
  auto net = make_net<float>(3);
  Rng rng(4);
  Tensor<float> x({3, 32, 32});
  testutil::fill_uniform(x, rng);
  EXPECT_TRUE(testutil::bitwise_equal(net.predict(x), net.predict(x)));
}

TEST(SegNet, OutputIsRowStochastic) {
  auto net = make_net<float>(5);
  Rng rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor<float> x({3, 32, 32});
    testutil::fill_uniform(x, rng);
    auto p = net.predict(x);
    const size_t hw = 32 * 32;
    for (size_t k = 0; k < hw; ++k) {
      float s = 0;
      for (int c = 0; c < 7; ++c) {
        ASSERT_GE(p[c * hw + k], 0.0f);
        s += p[c * hw + k];
      }
      ASSERT_NEAR(s, 1.0f, 1e-5);
    }
  }
}

TEST(SegNet, FinalBiasBumpRaisesThatClassEverywhere) {
  auto net = make_net<double>(7);
  Rng rng(8);
  Tensor<double> x({3, 16, 16});
  testutil::fill_uniform(x, rng);
  auto before = net.predict(x);
  const int cls = 3;
  net.proj.b[cls] += 1e-3;
  auto after = net.predict(x);
  const size_t hw = 16 * 16;
  for (size_t k = 0; k < hw; ++k)
    ASSERT_GT(after[cls * hw + k], before[cls * hw + k]);
}

TEST(SegNet, RejectsBadInputShapes) {
  auto net = make_net<float>(9);
  EXPECT_THROW(net.predict(Tensor<float>({3, 30, 32})), ShapeError);
  EXPECT_THROW(net.predict(Tensor<float>({1, 32, 32})), ShapeError);
}

TEST(SegNet, GradientThroughWholeNetwork) {
  auto net = make_net<double>(10);
  Rng rng(11);
  Tensor<double> x({3, 8, 8});
  testutil::fill_uniform(x, rng);
  Tensor<uint8_t> lab({8, 8});
  for (size_t i = 0; i < lab.numel(); ++i) lab[i] = rng.uniform_int(7);
  auto y = one_hot<double>(lab, 7);

  auto loss = [&]() { return cross_entropy(y, net.predict(x)); };

  SegTrace<double> tr;
  net.forward(x, tr);
  Tensor<double> dq;
  cross_entropy(y, tr.probs, &dq);
  zero_grads(net.params());
  net.backward(tr, dq);

  auto params = net.params();
  int checked = 0;
  for (int probe = 0; probe < 20; ++probe) {
    auto& p = params[probe % params.size()];
    const size_t i = rng.uniform_int(static_cast<int64_t>(p.value->numel()));
    const double numeric = fd(loss, &(*p.value)[i], 1e-5);
    const double analytic = (*p.grad)[i];
    if (std::fabs(numeric) < 1e-9 && std::fabs(analytic) < 1e-9) continue;
    EXPECT_LT(relerr(analytic, numeric), 1e-4) << p.name << "[" << i << "]";
    ++checked;
  }
  EXPECT_GE(checked, 12);
}

TEST(Ema, ClosedFormsAndBoundaries) {
  auto teacher = make_net<double>(12);
  auto student = make_net<double>(13);

  {  // phi_T=1, phi_S=0, alpha=0.5 -> 0.5
    auto t = teacher;
    auto s = student;
    for (auto& p : t.params()) p.value->fill(1.0);
    for (auto& p : s.params()) p.value->fill(0.0);
    ema_update(t, s, 0.5);
    for (auto& p : t.params())
      for (size_t i = 0; i < p.value->numel(); ++i)
        ASSERT_DOUBLE_EQ((*p.value)[i], 0.5);
  }
  {  // alpha=1 keeps the teacher; alpha=0 copies the student
    auto t = teacher;
    auto s = student;
    const uint64_t th = params_hash(t.params());
    ema_update(t, s, 1.0);
    EXPECT_EQ(params_hash(t.params()), th);
    ema_update(t, s, 0.0);
    EXPECT_EQ(params_hash(t.params()), params_hash(s.params()));
  }
}

TEST(Ema, GeometricConvergenceMatchesClosedForm) {
  // phi_T=0, phi_S=1, 1000 updates at alpha=0.999 -> 1 - 0.999^1000
  auto t = make_net<double>(14);
  auto s = make_net<double>(15);
  for (auto& p : t.params()) p.value->fill(0.0);
  for (auto& p : s.params()) p.value->fill(1.0);
  for (int i = 0; i < 1000; ++i) ema_update(t, s, 0.999);
  const double expected = 1.0 - std::pow(0.999, 1000);
  EXPECT_NEAR(expected, 0.63230457, 1e-7);
  for (auto& p : t.params())
    for (size_t i = 0; i < p.value->numel(); ++i)
      ASSERT_NEAR((*p.value)[i], expected, 1e-9);
}

TEST(Ema, FixedPointWhenStudentEqualsTeacher) {
  auto t = make_net<double>(16);
  auto s = t.clone();
  for (double alpha : {0.0, 0.25, 0.999, 1.0}) {
    auto t2 = t.clone();
    ema_update(t2, s, alpha);
    auto pa = t.params();
    auto pb = t2.params();
    for (size_t k = 0; k < pa.size(); ++k)
      for (size_t i = 0; i < pa[k].value->numel(); ++i)
        ASSERT_NEAR((*pb[k].value)[i], (*pa[k].value)[i],
                    1e-14 * std::max(1.0, std::fabs((*pa[k].value)[i])));
  }
}

TEST(Ema, ArchitectureMismatchRejected) {
  auto t = make_net<double>(17, 7);
  auto s = make_net<double>(18, 5);
  EXPECT_THROW(ema_update(t, s, 0.5), ShapeError);
}

TEST(Clone, DeepIndependentCopy) {
  auto net = make_net<float>(19);
  auto copy = net.clone();
  const uint64_t ch = params_hash(copy.params());
  net.c1.w[0] += 1.0f;
  EXPECT_EQ(params_hash(copy.params()), ch);      // copy untouched
  EXPECT_NE(params_hash(net.params()), ch);

  auto copy2 = copy.clone().clone();
  EXPECT_EQ(params_hash(copy2.params()), ch);

  Rng rng(20);
  for (int i = 0; i < 5; ++i) {
    Tensor<float> x({3, 16, 16});
    testutil::fill_uniform(x, rng);
    EXPECT_TRUE(testutil::bitwise_equal(copy.predict(x), copy2.predict(x)));
  }
}

TEST(Checkpoint, RoundTripIsBitwiseExact) {
  auto net = make_net<float>(21);
  auto disc = ConvDiscriminator<float>::output_space(7);
  Rng rng(22);
  disc.init(rng);

  const std::string path = ::testing::TempDir() + "/roundtrip.ckpt";
  CheckpointWriter w("model");
  w.add_section("student", net.arch(), net.params());
  w.add_section("d_out", disc.arch(), disc.params());
  w.meta()["created"] = {{"iteration", 0}, {"seed", 21}};
  w.write(path);

  auto net2 = make_net<float>(23);
  auto disc2 = ConvDiscriminator<float>::output_space(7);
  disc2.init(rng);
  const Checkpoint c = Checkpoint::read(path);
  c.load_section("student", net2.arch(), net2.params());
  c.load_section("d_out", disc2.arch(), disc2.params());
  EXPECT_EQ(params_hash(net.params()), params_hash(net2.params()));
  EXPECT_EQ(params_hash(disc.params()), params_hash(disc2.params()));
  std::remove(path.c_str());
}

TEST(Checkpoint, WrongArchitectureGivesManifestError) {
  auto net = make_net<float>(24);
  const std::string path = ::testing::TempDir() + "/wrongarch.ckpt";
  CheckpointWriter w("model");
  w.add_section("student", net.arch(), net.params());
  w.write(path);

  SegNet<float> other(5);
  Rng rng(25);
  other.init(rng);
  const Checkpoint c = Checkpoint::read(path);
  try {
    c.load_section("student", other.arch(), other.params());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("manifest mismatch"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(Checkpoint, MissingAndCorruptFiles) {
  EXPECT_THROW(Checkpoint::read("/nonexistent/nope.ckpt"), IoError);
  const std::string path = ::testing::TempDir() + "/corrupt.ckpt";
  {
    std::ofstream f(path, std::ios::binary);
    f << "definitely not a checkpoint";
  }
  EXPECT_THROW(Checkpoint::read(path), IoError);
  std::remove(path.c_str());
}
