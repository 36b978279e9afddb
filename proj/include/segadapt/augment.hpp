#pragma once

#include <cmath>
#include <utility>

#include "segadapt/mtstn.hpp"
#include "segadapt/segnet.hpp"

namespace segadapt {

// Binary mask selecting between two inputs: 1 outside an axis-aligned box
// (take from the first input), 0 inside it (take from the second).
struct CutMask {
  Tensor<uint8_t> m;  // {H, W}
  int top = 0, left = 0, height = 0, width = 0;
};

// Box of ~half the image area; aspect ratio log-uniform in [1/2, 2],
// position uniform. Side lengths round to integers, so the realized area
// is floor(H*W/2) +- height/2.
inline CutMask sample_cutmix_mask(int H, int W, Rng& rng) {
  if (H < 8 || W < 8) throw ConfigError("cutmix mask: size must be >= 8x8");
  const double area = std::floor(H * W / 2.0);
  const double ratio = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  int h = static_cast<int>(std::lround(std::sqrt(area * ratio)));
  h = std::min(std::max(h, 1), H);
  int w = static_cast<int>(std::lround(area / h));
  w = std::min(std::max(w, 1), W);
  CutMask mask;
  mask.height = h;
  mask.width = w;
  mask.top = static_cast<int>(rng.uniform_int(H - h + 1));
  mask.left = static_cast<int>(rng.uniform_int(W - w + 1));
  mask.m = Tensor<uint8_t>::full({H, W}, 1);
  for (int i = mask.top; i < mask.top + h; ++i)
    for (int j = mask.left; j < mask.left + w; ++j) mask.m.at(i, j) = 0;
  return mask;
}

// Exact-pixel compositing of two images and their per-pixel distributions
// with one shared mask. Binary weights keep the mixed distribution
// row-stochastic.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> cutmix(const Tensor<T>& x1, const Tensor<T>& x2,
                                       const Tensor<T>& q1, const Tensor<T>& q2,
                                       const CutMask& mask) {
  require_same_shape(x1, x2, "cutmix images");
  require_same_shape(q1, q2, "cutmix predictions");
  const int H = mask.m.dim(0), W = mask.m.dim(1);
  if (x1.dim(1) != H || x1.dim(2) != W || q1.dim(1) != H || q1.dim(2) != W)
    throw ShapeError("cutmix: mask size does not match inputs");
  Tensor<T> xm(x1.shape()), qm(q1.shape());
  const size_t hw = static_cast<size_t>(H) * W;
  for (int c = 0; c < x1.dim(0); ++c)
    for (size_t k = 0; k < hw; ++k) {
      const size_t i = c * hw + k;
      xm[i] = mask.m[k] ? x1[i] : x2[i];
    }
  for (int c = 0; c < q1.dim(0); ++c)
    for (size_t k = 0; k < hw; ++k) {
      const size_t i = c * hw + k;
      qm[i] = mask.m[k] ? q1[i] : q2[i];
    }
  return {std::move(xm), std::move(qm)};
}

// x + N(0, sigma^2) elementwise, clipped back into [0,1].
template <typename T>
Tensor<T> gaussian_noise(const Tensor<T>& x, double sigma, Rng& rng) {
  if (sigma < 0) throw ConfigError("gaussian_noise: sigma must be >= 0");
  if (sigma == 0) return x;
  Tensor<T> y(x.shape());
  for (size_t i = 0; i < x.numel(); ++i) {
    const double v = static_cast<double>(x[i]) + sigma * rng.normal();
    y[i] = static_cast<T>(std::min(std::max(v, 0.0), 1.0));
  }
  return y;
}

// Which view the teacher scores when style transfer is in play.
enum class TeacherView { raw, transferred };

template <typename T>
struct AugmentedSample {
  Tensor<T> student_input;
  Tensor<T> pseudo_label;
};

// Known-target augmentation: both inputs are restyled to the source domain,
// CutMix combines the restyled pair, and the teacher's predictions on the
// (by default) original pair are mixed with the same mask into the pseudo
// label. No gradient reaches the teacher or the transfer network.
template <typename T>
AugmentedSample<T> compose_A_mtkd(const Tensor<T>& x_a, const Tensor<T>& x_b,
                                  const StyleNet<T>& tnet,
                                  const StyleVector<T>& v_s,
                                  const SegNet<T>& teacher, Rng& rng,
                                  TeacherView view = TeacherView::raw) {
  Tensor<T> t_a = tnet.transfer(x_a, v_s);
  Tensor<T> t_b = tnet.transfer(x_b, v_s);
  Tensor<T> q_a = teacher.predict(view == TeacherView::raw ? x_a : t_a);
  Tensor<T> q_b = teacher.predict(view == TeacherView::raw ? x_b : t_b);
  const CutMask mask = sample_cutmix_mask(x_a.dim(1), x_a.dim(2), rng);
  auto [xm, qm] = cutmix(t_a, t_b, q_a, q_b, mask);
  return {std::move(xm), std::move(qm)};
}

// Unseen-target augmentation: same composition without style transfer.
template <typename T>
AugmentedSample<T> compose_A_utkd(const Tensor<T>& x_a, const Tensor<T>& x_b,
                                  const SegNet<T>& teacher, Rng& rng) {
  Tensor<T> q_a = teacher.predict(x_a);
  Tensor<T> q_b = teacher.predict(x_b);
  const CutMask mask = sample_cutmix_mask(x_a.dim(1), x_a.dim(2), rng);
  auto [xm, qm] = cutmix(x_a, x_b, q_a, q_b, mask);
  return {std::move(xm), std::move(qm)};
}

}  // namespace segadapt
