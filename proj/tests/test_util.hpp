#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "segadapt/nn.hpp"

namespace testutil {

// central finite difference of f at *v
inline double fd(const std::function<double()>& f, double* v, double h = 1e-6) {
  const double keep = *v;
  *v = keep + h;
  const double fp = f();
  *v = keep - h;
  const double fm = f();
  *v = keep;
  return (fp - fm) / (2.0 * h);
}

inline double relerr(double a, double b) {
  const double d = std::fabs(a - b);
  const double m = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return d / m;
}

template <typename T>
void fill_uniform(segadapt::Tensor<T>& t, segadapt::Rng& rng, double lo = 0.0,
                  double hi = 1.0) {
  for (size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void fill_normal(segadapt::Tensor<T>& t, segadapt::Rng& rng, double mean = 0.0,
                 double stddev = 1.0) {
  for (size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.normal(mean, stddev));
}

// random per-pixel distribution field {C,H,W}
template <typename T>
segadapt::Tensor<T> random_prediction(int C, int H, int W, segadapt::Rng& rng) {
  segadapt::Tensor<T> q({C, H, W});
  const size_t hw = static_cast<size_t>(H) * W;
  for (size_t k = 0; k < hw; ++k) {
    T s = 0;
    for (int c = 0; c < C; ++c) {
      const T v = static_cast<T>(rng.uniform(0.05, 1.0));
      q[c * hw + k] = v;
      s += v;
    }
    for (int c = 0; c < C; ++c) q[c * hw + k] /= s;
  }
  return q;
}

template <typename T>
bool bitwise_equal(const segadapt::Tensor<T>& a, const segadapt::Tensor<T>& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), a.numel() * sizeof(T)) == 0;
}

}  // namespace testutil
