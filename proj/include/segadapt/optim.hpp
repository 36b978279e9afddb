#pragma once

#include <cmath>
#include <vector>

#include "segadapt/nn.hpp"

namespace segadapt {

// "poly" decay: base * (1 - i/I)^p
template <typename T>
T poly_lr(T base, long long i, long long total, T power) {
  if (i < 0 || i > total)
    throw ConfigError("poly_lr: iteration outside [0, total]");
  return base * static_cast<T>(std::pow(1.0 - static_cast<double>(i) / total,
                                        static_cast<double>(power)));
}

// SGD with classical momentum and L2 weight decay folded into the gradient.
template <typename T>
struct SgdOptimizer {
  T momentum = 0;
  T weight_decay = 0;
  std::vector<Tensor<T>> velocity;

  void attach(const std::vector<ParamRef<T>>& params) {
    velocity.clear();
    for (auto& p : params) velocity.emplace_back(p.value->shape());
  }

  void step(const std::vector<ParamRef<T>>& params, T lr) {
    if (velocity.size() != params.size())
      throw ShapeError("sgd: optimizer not attached to this parameter set");
    for (size_t i = 0; i < params.size(); ++i) {
      T* v = velocity[i].data();
      T* w = params[i].value->data();
      const T* g = params[i].grad->data();
      const size_t n = params[i].value->numel();
      for (size_t k = 0; k < n; ++k) {
        const T gk = g[k] + weight_decay * w[k];
        v[k] = momentum * v[k] + gk;
        w[k] -= lr * v[k];
      }
    }
  }
};

template <typename T>
struct AdamOptimizer {
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.99);
  T eps = static_cast<T>(1e-8);
  T weight_decay = 0;
  long long t = 0;
  std::vector<Tensor<T>> m, v;

  void attach(const std::vector<ParamRef<T>>& params) {
    m.clear();
    v.clear();
    t = 0;
    for (auto& p : params) {
      m.emplace_back(p.value->shape());
      v.emplace_back(p.value->shape());
    }
  }

  void step(const std::vector<ParamRef<T>>& params, T lr) {
    if (m.size() != params.size())
      throw ShapeError("adam: optimizer not attached to this parameter set");
    ++t;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), t));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), t));
    for (size_t i = 0; i < params.size(); ++i) {
      T* mi = m[i].data();
      T* vi = v[i].data();
      T* w = params[i].value->data();
      const T* g = params[i].grad->data();
      const size_t n = params[i].value->numel();
      for (size_t k = 0; k < n; ++k) {
        const T gk = g[k] + weight_decay * w[k];
        mi[k] = beta1 * mi[k] + (T(1) - beta1) * gk;
        vi[k] = beta2 * vi[k] + (T(1) - beta2) * gk * gk;
        const T mhat = mi[k] / bc1;
        const T vhat = vi[k] / bc2;
        w[k] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

}  // namespace segadapt
