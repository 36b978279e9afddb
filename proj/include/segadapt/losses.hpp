#pragma once

#include <cmath>
#include <vector>

#include "segadapt/segnet.hpp"
#include "segadapt/tensor.hpp"

namespace segadapt {

// probabilities and discriminator outputs are clamped away from 0/1 by this
// margin before any logarithm
constexpr double kLossEps = 1e-7;

template <typename T>
T eps_clamp(T v) {
  const T lo = static_cast<T>(kLossEps), hi = T(1) - static_cast<T>(kLossEps);
  return v < lo ? lo : (v > hi ? hi : v);
}

template <typename T>
Tensor<T> one_hot(const Tensor<uint8_t>& labels, int class_count) {
  const int H = labels.dim(0), W = labels.dim(1);
  Tensor<T> y({class_count, H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const uint8_t c = labels.at(i, j);
      if (c >= class_count) throw ShapeError("one_hot: label out of range");
      y.at(c, i, j) = T(1);
    }
  return y;
}

// -----------------------------------------------------------------------
// Dense cross-entropy: -(1/K) sum_k y_k . log q_k
// -----------------------------------------------------------------------

template <typename T>
T cross_entropy(const Tensor<T>& y_onehot, const Tensor<T>& q,
                Tensor<T>* dq = nullptr) {
  require_same_shape(y_onehot, q, "cross_entropy");
  const int C = q.dim(0);
  const size_t K = static_cast<size_t>(q.dim(1)) * q.dim(2);
  if (dq) *dq = Tensor<T>(q.shape());

  // y must be exactly one-hot per pixel
  for (size_t k = 0; k < K; ++k) {
    int ones = 0;
    for (int c = 0; c < C; ++c) {
      const T v = y_onehot[c * K + k];
      if (v == T(1))
        ++ones;
      else if (v != T(0))
        throw ContractError("cross_entropy: y is not one-hot");
    }
    if (ones != 1) throw ContractError("cross_entropy: y is not one-hot");
  }

  T loss = 0;
  const T invK = T(1) / static_cast<T>(K);
  for (size_t k = 0; k < K; ++k) {
    for (int c = 0; c < C; ++c) {
      if (y_onehot[c * K + k] != T(1)) continue;
      const T qc = eps_clamp(q[c * K + k]);
      loss -= std::log(qc) * invK;
      if (dq && q[c * K + k] > static_cast<T>(kLossEps))
        (*dq)[c * K + k] = -invK / qc;
    }
  }
  return loss;
}

// -----------------------------------------------------------------------
// Consistency: (1/K) sum_k || q_s^k - q_t^k ||^2; gradient only reaches
// the student side.
// -----------------------------------------------------------------------

template <typename T>
T consistency(const Tensor<T>& q_student, const Tensor<T>& q_teacher,
              Tensor<T>* dq_student = nullptr) {
  require_same_shape(q_student, q_teacher, "consistency");
  const size_t K = static_cast<size_t>(q_student.dim(1)) * q_student.dim(2);
  if (dq_student) *dq_student = Tensor<T>(q_student.shape());
  T loss = 0;
  const T invK = T(1) / static_cast<T>(K);
  for (size_t i = 0; i < q_student.numel(); ++i) {
    const T d = q_student[i] - q_teacher[i];
    loss += d * d * invK;
    if (dq_student) (*dq_student)[i] = T(2) * d * invK;
  }
  return loss;
}

// Identical math; the teacher side is a frozen snapshot that is never
// updated by EMA (baseline variant).
template <typename T>
T frozen_consistency(const Tensor<T>& q_student, const Tensor<T>& q_frozen_teacher,
                     Tensor<T>* dq_student = nullptr) {
  return consistency(q_student, q_frozen_teacher, dq_student);
}

// -----------------------------------------------------------------------
// Adversarial primitives on a scalar discriminator output d in (0,1):
//   positive examples contribute log(1 - d), negatives log d.
// -----------------------------------------------------------------------

template <typename T>
T adv_positive(T d) {
  return std::log(T(1) - eps_clamp(d));
}

template <typename T>
T adv_negative(T d) {
  return std::log(eps_clamp(d));
}

template <typename T>
T adv_positive_mean(const std::vector<T>& ds) {
  T s = 0;
  for (T d : ds) s += adv_positive(d);
  return s / static_cast<T>(ds.size());
}

template <typename T>
T adv_negative_mean(const std::vector<T>& ds) {
  T s = 0;
  for (T d : ds) s += adv_negative(d);
  return s / static_cast<T>(ds.size());
}

// d(log(1-d))/dd and d(log d)/dd with the clamp's dead zones.
template <typename T>
T adv_positive_ddisc(T d) {
  if (d <= static_cast<T>(kLossEps) || d >= T(1) - static_cast<T>(kLossEps)) return T(0);
  return T(-1) / (T(1) - d);
}

template <typename T>
T adv_negative_ddisc(T d) {
  if (d <= static_cast<T>(kLossEps) || d >= T(1) - static_cast<T>(kLossEps)) return T(0);
  return T(1) / d;
}

// -----------------------------------------------------------------------
// Output-space adversarial loss:
//   L_out = log(1 - D(pred_source)) + sum_n log D(pred_target_n)
// The discriminator labels target-domain predictions as 1; driving
// D(pred) toward 0 means "looks source-domain".
// -----------------------------------------------------------------------

// Value only; disc is any callable Tensor -> scalar (tests may pass stubs).
template <typename T, typename DiscFn>
T mtkd_output_adv(const Tensor<T>& pred_source,
                  const std::vector<Tensor<T>>& preds_targets, DiscFn&& disc) {
  if (preds_targets.empty())
    throw ConfigError("mtkd_output_adv: empty target prediction list");
  T v = adv_positive(disc(pred_source));
  for (const auto& p : preds_targets) v += adv_negative(disc(p));
  return v;
}

// Discriminator ascent step on detached predictions: accumulates gradients
// of -L_out into the discriminator parameters (optimizers minimize), and
// returns the L_out value.
template <typename T>
T mtkd_output_adv_disc_step(const Tensor<T>& pred_source,
                            const std::vector<Tensor<T>>& preds_targets,
                            ConvDiscriminator<T>& disc) {
  if (preds_targets.empty())
    throw ConfigError("mtkd_output_adv: empty target prediction list");
  DiscTrace<T> tr;
  const T ds = disc.forward(pred_source, &tr);
  T value = adv_positive(ds);
  disc.backward(tr, -adv_positive_ddisc(ds));
  for (const auto& p : preds_targets) {
    DiscTrace<T> trt;
    const T dt = disc.forward(p, &trt);
    value += adv_negative(dt);
    disc.backward(trt, -adv_negative_ddisc(dt));
  }
  return value;
}

// Student-side terms of L_out: only sum_n log D(pred_target_n) reaches the
// student. Returns the value and the gradients w.r.t. each prediction; the
// discriminator parameters receive nothing.
template <typename T>
T mtkd_output_adv_student(const std::vector<Tensor<T>>& preds_targets,
                          const ConvDiscriminator<T>& disc,
                          std::vector<Tensor<T>>* dpreds) {
  if (preds_targets.empty())
    throw ConfigError("mtkd_output_adv: empty target prediction list");
  if (dpreds) dpreds->clear();
  T value = 0;
  for (const auto& p : preds_targets) {
    DiscTrace<T> tr;
    const T d = disc.forward(p, &tr);
    value += adv_negative(d);
    if (dpreds) dpreds->push_back(disc.backward_input(tr, adv_negative_ddisc(d)));
  }
  return value;
}

// -----------------------------------------------------------------------
// One-way adversarial loss against a frozen discriminator:
//   L'_out = log D(pred). The freeze is a hard contract: the discriminator
//   must be flagged non-trainable and its parameters receive zero gradient
//   by construction.
// -----------------------------------------------------------------------

template <typename T>
T utkd_one_way(const Tensor<T>& pred_unseen, const ConvDiscriminator<T>& disc,
               Tensor<T>* dpred = nullptr) {
  if (disc.trainable)
    throw ContractError(
        "utkd_one_way: discriminator is trainable; one-way adversarial "
        "learning requires it frozen");
  DiscTrace<T> tr;
  const T d = disc.forward(pred_unseen, &tr);
  if (dpred) *dpred = disc.backward_input(tr, adv_negative_ddisc(d));
  return adv_negative(d);
}

// -----------------------------------------------------------------------
// Reconstruction: mean absolute difference over all pixels and channels
// (mean rather than raw sum, so the scale is resolution independent).
// -----------------------------------------------------------------------

template <typename T>
T reconstruction(const Tensor<T>& x, const Tensor<T>& x_hat,
                 Tensor<T>* dx_hat = nullptr) {
  require_same_shape(x, x_hat, "reconstruction");
  const size_t n = x.numel();
  if (dx_hat) *dx_hat = Tensor<T>(x.shape());
  T loss = 0;
  const T inv = T(1) / static_cast<T>(n);
  for (size_t i = 0; i < n; ++i) {
    const T d = x_hat[i] - x[i];
    loss += std::abs(d) * inv;
    if (dx_hat) (*dx_hat)[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
  }
  return loss;
}

}  // namespace segadapt
