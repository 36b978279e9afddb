#include <gtest/gtest.h>

#include "segadapt/nn.hpp"
#include "test_util.hpp"

using namespace segadapt;
using testutil::fd;
using testutil::relerr;

namespace {

// scalar loss = fixed linear functional of the output, so dL/dy is known
template <typename Op>
double linear_probe_loss(const Tensor<double>& y) {
  double s = 0;
  for (size_t i = 0; i < y.numel(); ++i)
    s += y[i] * std::sin(0.37 * static_cast<double>(i % 17) + 0.2);
  return s;
}

Tensor<double> linear_probe_grad(const Tensor<double>& y) {
  Tensor<double> g(y.shape());
  for (size_t i = 0; i < g.numel(); ++i)
    g[i] = std::sin(0.37 * static_cast<double>(i % 17) + 0.2);
  return g;
}

}  // namespace

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(42);
  for (int stride : {1, 2}) {
    Conv2d<double> conv(3, 4, 3, stride, 1);
    conv.init_he(rng);
    Tensor<double> x({3, 8, 8});
    testutil::fill_normal(x, rng);
    auto loss = [&]() { return linear_probe_loss<void>(conv.forward(x)); };

    auto y = conv.forward(x);
    auto dy = linear_probe_grad(y);
    conv.gw.zero();
    conv.gb.zero();
    auto dx = conv.backward(x, dy);

    for (int probe = 0; probe < 20; ++probe) {
      const size_t wi = rng.uniform_int(static_cast<int64_t>(conv.w.numel()));
      EXPECT_LT(relerr(conv.gw[wi], fd(loss, &conv.w[wi])), 1e-4);
      const size_t xi = rng.uniform_int(static_cast<int64_t>(x.numel()));
      EXPECT_LT(relerr(dx[xi], fd(loss, &x[xi])), 1e-4);
    }
    const size_t bi = rng.uniform_int(static_cast<int64_t>(conv.b.numel()));
    EXPECT_LT(relerr(conv.gb[bi], fd(loss, &conv.b[bi])), 1e-4);
  }
}

TEST(Conv2d, BackwardInputMatchesBackward) {
  Rng rng(3);
  Conv2d<double> conv(4, 6, 4, 2, 1);
  conv.init_he(rng);
  Tensor<double> x({4, 16, 16});
  testutil::fill_normal(x, rng);
  auto y = conv.forward(x);
  auto dy = linear_probe_grad(y);
  auto dx_full = conv.backward(x, dy);
  const uint64_t before = content_hash(conv.w);
  auto dx_only = conv.backward_input(dy);
  EXPECT_TRUE(testutil::bitwise_equal(dx_full, dx_only));
  EXPECT_EQ(before, content_hash(conv.w));
}

TEST(Conv2d, DeterministicForward) {
  Rng rng(7);
  Conv2d<float> conv(8, 16, 3, 1, 1);
  conv.init_he(rng);
  Tensor<float> x({8, 32, 32});
  testutil::fill_uniform(x, rng);
  EXPECT_TRUE(testutil::bitwise_equal(conv.forward(x), conv.forward(x)));
}

TEST(Conv2d, ShapeValidation) {
  Conv2d<float> conv(3, 4, 3, 1, 1);
  Tensor<float> bad({4, 8, 8});
  EXPECT_THROW(conv.forward(bad), ShapeError);
}

TEST(Upsample2, DoublesExtentAndPreservesConstants) {
  Tensor<double> x = Tensor<double>::full({2, 5, 7}, 0.625);
  auto y = upsample2(x);
  ASSERT_EQ(y.dim(1), 10);
  ASSERT_EQ(y.dim(2), 14);
  for (size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.625);
}

TEST(Upsample2, BackwardIsExactAdjoint) {
  Rng rng(11);
  Tensor<double> x({2, 5, 7});
  testutil::fill_normal(x, rng);
  auto y = upsample2(x);
  Tensor<double> g(y.shape());
  testutil::fill_normal(g, rng);
  auto xt = upsample2_backward(g);
  double a = 0, b = 0;
  for (size_t i = 0; i < y.numel(); ++i) a += y[i] * g[i];
  for (size_t i = 0; i < x.numel(); ++i) b += x[i] * xt[i];
  EXPECT_LT(std::fabs(a - b), 1e-10 * std::max(1.0, std::fabs(a)));
}

TEST(Softmax, RowsAreDistributions) {
  Rng rng(5);
  Tensor<double> z({7, 6, 6});
  testutil::fill_normal(z, rng, 0, 3);
  auto p = softmax_channels(z);
  const size_t hw = 36;
  for (size_t k = 0; k < hw; ++k) {
    double s = 0;
    for (int c = 0; c < 7; ++c) {
      EXPECT_GE(p[c * hw + k], 0.0);
      s += p[c * hw + k];
    }
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  Tensor<double> z({5, 4, 4});
  testutil::fill_normal(z, rng);
  auto loss = [&]() { return linear_probe_loss<void>(softmax_channels(z)); };
  auto p = softmax_channels(z);
  auto dz = softmax_channels_backward(p, linear_probe_grad(p));
  for (int probe = 0; probe < 20; ++probe) {
    const size_t i = rng.uniform_int(static_cast<int64_t>(z.numel()));
    EXPECT_LT(relerr(dz[i], fd(loss, &z[i])), 1e-4);
  }
}

TEST(Activations, LeakyReluGradient) {
  Rng rng(13);
  Tensor<double> x({3, 6, 6});
  testutil::fill_normal(x, rng);
  const double slope = 0.2;
  auto loss = [&]() { return linear_probe_loss<void>(leaky_relu(x, slope)); };
  auto y = leaky_relu(x, slope);
  auto dx = leaky_relu_backward(x, linear_probe_grad(y), slope);
  for (int probe = 0; probe < 20; ++probe) {
    const size_t i = rng.uniform_int(static_cast<int64_t>(x.numel()));
    if (std::fabs(x[i]) < 1e-4) continue;  // kink
    EXPECT_LT(relerr(dx[i], fd(loss, &x[i])), 1e-4);
  }
}

TEST(MeanSigmoid, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  Tensor<double> m({1, 4, 4});
  testutil::fill_normal(m, rng);
  auto loss = [&]() { return mean_sigmoid(m, static_cast<double*>(nullptr)); };
  const double p = mean_sigmoid(m, static_cast<double*>(nullptr));
  auto dm = mean_sigmoid_backward(m, p, 1.0);
  for (int probe = 0; probe < 10; ++probe) {
    const size_t i = rng.uniform_int(static_cast<int64_t>(m.numel()));
    EXPECT_LT(relerr(dm[i], fd(loss, &m[i])), 1e-4);
  }
}
