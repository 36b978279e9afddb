#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "segadapt/random.hpp"
#include "segadapt/tensor.hpp"

namespace segadapt {

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
void zero_grads(const std::vector<ParamRef<T>>& params) {
  for (auto& p : params) p.grad->zero();
}

template <typename T>
size_t param_count(const std::vector<ParamRef<T>>& params) {
  size_t n = 0;
  for (auto& p : params) n += p.value->numel();
  return n;
}

template <typename T>
uint64_t params_hash(const std::vector<ParamRef<T>>& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (auto& p : params) h = content_hash(*p.value, h);
  return h;
}

template <typename T>
bool params_finite(const std::vector<ParamRef<T>>& params) {
  for (auto& p : params)
    if (!p.value->all_finite()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// 2-D convolution, CHW, weight layout [oc][ic][kh][kw].
// Lowered to im2col + GEMM. The GEMM inner loops run over the contiguous
// spatial axis (axpy / simd-reduction form), which is what makes training
// fast enough on CPU; all parallel loops assign whole output rows to one
// thread so results are bit-reproducible run to run.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
std::vector<T>& conv_scratch(int which) {
  static thread_local std::vector<T> buf0, buf1;
  return which == 0 ? buf0 : buf1;
}

}  // namespace detail

template <typename T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 1, stride = 1, pad = 0;
  Tensor<T> w, b, gw, gb;

  Conv2d() = default;
  Conv2d(int ic, int oc, int k, int s, int p)
      : in_ch(ic), out_ch(oc), ksize(k), stride(s), pad(p),
        w({oc, ic, k, k}), b({oc}), gw({oc, ic, k, k}), gb({oc}) {}

  void init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / (in_ch * ksize * ksize));
    for (size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std));
    b.zero();
  }

  int out_extent(int in) const { return (in + 2 * pad - ksize) / stride + 1; }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
  }

  // col has K = in_ch*k*k rows of length N = OH*OW
  void im2col(const Tensor<T>& x, std::vector<T>& col) const {
    const int H = x.dim(1), W = x.dim(2);
    const int OH = out_extent(H), OW = out_extent(W);
    const size_t N = static_cast<size_t>(OH) * OW;
    col.assign(static_cast<size_t>(in_ch) * ksize * ksize * N, T(0));
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < in_ch; ++ic) {
      const T* xc = x.data() + static_cast<size_t>(ic) * H * W;
      for (int ki = 0; ki < ksize; ++ki) {
        for (int kj = 0; kj < ksize; ++kj) {
          T* row = col.data() +
                   ((static_cast<size_t>(ic) * ksize + ki) * ksize + kj) * N;
          const int off = kj - pad;
          for (int oi = 0; oi < OH; ++oi) {
            const int ii = oi * stride + ki - pad;
            if (ii < 0 || ii >= H) continue;
            const T* xrow = xc + static_cast<size_t>(ii) * W;
            T* r = row + static_cast<size_t>(oi) * OW;
            int lo = 0, hi = OW;
            while (lo < hi && lo * stride + off < 0) ++lo;
            while (hi > lo && (hi - 1) * stride + off >= W) --hi;
            if (stride == 1) {
              std::memcpy(r + lo, xrow + lo + off,
                          static_cast<size_t>(hi - lo) * sizeof(T));
            } else {
              for (int oj = lo; oj < hi; ++oj) r[oj] = xrow[oj * stride + off];
            }
          }
        }
      }
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(0) != in_ch)
      throw ShapeError("conv2d: input " + shape_string(x.shape()) +
                       " incompatible with in_ch=" + std::to_string(in_ch));
    const int H = x.dim(1), W = x.dim(2);
    const int OH = out_extent(H), OW = out_extent(W);
    if (OH <= 0 || OW <= 0) throw ShapeError("conv2d: input too small");
    const int K = in_ch * ksize * ksize;
    const size_t N = static_cast<size_t>(OH) * OW;

    std::vector<T>& col = detail::conv_scratch<T>(0);
    im2col(x, col);

    Tensor<T> y({out_ch, OH, OW});
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < out_ch; ++oc) {
      T* __restrict yrow = y.data() + static_cast<size_t>(oc) * N;
      const T bias = b[static_cast<size_t>(oc)];
      for (size_t n = 0; n < N; ++n) yrow[n] = bias;
      const T* wrow = w.data() + static_cast<size_t>(oc) * K;
      for (int k = 0; k < K; ++k) {
        const T a = wrow[k];
        const T* __restrict crow = col.data() + static_cast<size_t>(k) * N;
#pragma omp simd
        for (size_t n = 0; n < N; ++n) yrow[n] += a * crow[n];
      }
    }
    return y;
  }

  // Accumulates gw/gb; returns dL/dx unless want_dx is false.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool want_dx = true) {
    const int H = x.dim(1), W = x.dim(2);
    const int OH = out_extent(H), OW = out_extent(W);
    if (dy.rank() != 3 || dy.dim(0) != out_ch || dy.dim(1) != OH || dy.dim(2) != OW)
      throw ShapeError("conv2d backward: dy shape mismatch");
    const int K = in_ch * ksize * ksize;
    const size_t N = static_cast<size_t>(OH) * OW;

    std::vector<T>& col = detail::conv_scratch<T>(0);
    im2col(x, col);

    // dW = dy * col^T, db = row sums of dy
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < out_ch; ++oc) {
      const T* __restrict dyrow = dy.data() + static_cast<size_t>(oc) * N;
      T bacc = 0;
#pragma omp simd reduction(+ : bacc)
      for (size_t n = 0; n < N; ++n) bacc += dyrow[n];
      gb[static_cast<size_t>(oc)] += bacc;
      T* gwrow = gw.data() + static_cast<size_t>(oc) * K;
      for (int k = 0; k < K; ++k) {
        const T* __restrict crow = col.data() + static_cast<size_t>(k) * N;
        T s = 0;
#pragma omp simd reduction(+ : s)
        for (size_t n = 0; n < N; ++n) s += dyrow[n] * crow[n];
        gwrow[k] += s;
      }
    }

    if (!want_dx) return Tensor<T>();
    return backward_input_sized(dy, H, W);
  }

  // dL/dx from dL/dy; weights read-only, no gradient accumulation.
  Tensor<T> backward_input(const Tensor<T>& dy) const {
    if (dy.rank() != 3 || dy.dim(0) != out_ch)
      throw ShapeError("conv2d backward_input: dy shape mismatch");
    const int OH = dy.dim(1), OW = dy.dim(2);
    const int H = (OH - 1) * stride + ksize - 2 * pad;
    const int W = (OW - 1) * stride + ksize - 2 * pad;
    return backward_input_sized(dy, H, W);
  }

  Tensor<T> backward_input_sized(const Tensor<T>& dy, int H, int W) const {
    const int OH = dy.dim(1), OW = dy.dim(2);
    const int K = in_ch * ksize * ksize;
    const size_t N = static_cast<size_t>(OH) * OW;

    // dcol = W^T * dy, then fold columns back into dx
    std::vector<T>& dcol = detail::conv_scratch<T>(1);
    dcol.assign(static_cast<size_t>(K) * N, T(0));
#pragma omp parallel for schedule(static)
    for (int k = 0; k < K; ++k) {
      T* __restrict drow = dcol.data() + static_cast<size_t>(k) * N;
      for (int oc = 0; oc < out_ch; ++oc) {
        const T a = w[static_cast<size_t>(oc) * K + k];
        const T* __restrict dyrow = dy.data() + static_cast<size_t>(oc) * N;
#pragma omp simd
        for (size_t n = 0; n < N; ++n) drow[n] += a * dyrow[n];
      }
    }

    Tensor<T> dx({in_ch, H, W});
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < in_ch; ++ic) {
      T* dxc = dx.data() + static_cast<size_t>(ic) * H * W;
      for (int ki = 0; ki < ksize; ++ki) {
        for (int kj = 0; kj < ksize; ++kj) {
          const T* row = dcol.data() +
                         ((static_cast<size_t>(ic) * ksize + ki) * ksize + kj) * N;
          const int off = kj - pad;
          for (int oi = 0; oi < OH; ++oi) {
            const int ii = oi * stride + ki - pad;
            if (ii < 0 || ii >= H) continue;
            T* dxrow = dxc + static_cast<size_t>(ii) * W;
            const T* r = row + static_cast<size_t>(oi) * OW;
            int lo = 0, hi = OW;
            while (lo < hi && lo * stride + off < 0) ++lo;
            while (hi > lo && (hi - 1) * stride + off >= W) --hi;
            if (stride == 1) {
              T* __restrict d = dxrow + off;
#pragma omp simd
              for (int oj = lo; oj < hi; ++oj) d[oj] += r[oj];
            } else {
              for (int oj = lo; oj < hi; ++oj) dxrow[oj * stride + off] += r[oj];
            }
          }
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* p = x.data();
  T* q = y.data();
  const size_t n = x.numel();
#pragma omp simd
  for (size_t i = 0; i < n; ++i) q[i] = p[i] > T(0) ? p[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  const T* p = x.data();
  const T* g = dy.data();
  T* q = dx.data();
  const size_t n = x.numel();
#pragma omp simd
  for (size_t i = 0; i < n; ++i) q[i] = p[i] > T(0) ? g[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Tensor<T> y(x.shape());
  const T* p = x.data();
  T* q = y.data();
  const size_t n = x.numel();
#pragma omp simd
  for (size_t i = 0; i < n; ++i) q[i] = p[i] > T(0) ? p[i] : slope * p[i];
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope) {
  Tensor<T> dx(x.shape());
  const T* p = x.data();
  const T* g = dy.data();
  T* q = dx.data();
  const size_t n = x.numel();
#pragma omp simd
  for (size_t i = 0; i < n; ++i) q[i] = p[i] > T(0) ? g[i] : slope * g[i];
  return dx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (size_t i = 0; i < x.numel(); ++i)
    y[i] = T(1) / (T(1) + std::exp(-x[i]));
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (size_t i = 0; i < y.numel(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Per-pixel softmax over the channel axis of a CHW tensor
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& z) {
  const int C = z.dim(0);
  const size_t hw = static_cast<size_t>(z.dim(1)) * z.dim(2);
  Tensor<T> p(z.shape());
  const T* zp = z.data();
  T* pp = p.data();
#pragma omp parallel for schedule(static)
  for (long long k = 0; k < static_cast<long long>(hw); ++k) {
    T m = zp[k];
    for (int c = 1; c < C; ++c) m = std::max(m, zp[c * hw + k]);
    T s = 0;
    for (int c = 0; c < C; ++c) {
      const T e = std::exp(zp[c * hw + k] - m);
      pp[c * hw + k] = e;
      s += e;
    }
    const T inv = T(1) / s;
    for (int c = 0; c < C; ++c) pp[c * hw + k] *= inv;
  }
  return p;
}

template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& p, const Tensor<T>& dp) {
  const int C = p.dim(0);
  const size_t hw = static_cast<size_t>(p.dim(1)) * p.dim(2);
  Tensor<T> dz(p.shape());
  const T* pp = p.data();
  const T* gp = dp.data();
  T* dzp = dz.data();
#pragma omp parallel for schedule(static)
  for (long long k = 0; k < static_cast<long long>(hw); ++k) {
    T dot = 0;
    for (int c = 0; c < C; ++c) dot += gp[c * hw + k] * pp[c * hw + k];
    for (int c = 0; c < C; ++c)
      dzp[c * hw + k] = pp[c * hw + k] * (gp[c * hw + k] - dot);
  }
  return dz;
}

// ---------------------------------------------------------------------------
// Bilinear x2 upsampling (half-pixel centers), separable, exact transpose
// in the backward pass
// ---------------------------------------------------------------------------

namespace detail {

// output index o of a length-2n axis reads inputs src0/src1 with weights
// w0/w1; border samples clamp (indices merge, weights still sum to 1)
inline void up2_taps(int o, int n, int& s0, int& s1, double& w0, double& w1) {
  if ((o & 1) == 0) {
    const int k = o / 2;
    s0 = std::max(k - 1, 0);
    s1 = k;
    w0 = 0.25;
    w1 = 0.75;
  } else {
    const int k = o / 2;
    s0 = k;
    s1 = std::min(k + 1, n - 1);
    w0 = 0.75;
    w1 = 0.25;
  }
}

}  // namespace detail

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor<T> tmp({C, H, 2 * W});
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < H; ++i) {
      const T* xr = x.data() + (static_cast<size_t>(c) * H + i) * W;
      T* tr = tmp.data() + (static_cast<size_t>(c) * H + i) * 2 * W;
      for (int o = 0; o < 2 * W; ++o) {
        int s0, s1;
        double w0, w1;
        detail::up2_taps(o, W, s0, s1, w0, w1);
        tr[o] = static_cast<T>(w0) * xr[s0] + static_cast<T>(w1) * xr[s1];
      }
    }
  }
  Tensor<T> y({C, 2 * H, 2 * W});
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int o = 0; o < 2 * H; ++o) {
      int s0, s1;
      double w0, w1;
      detail::up2_taps(o, H, s0, s1, w0, w1);
      const T* r0 = tmp.data() + (static_cast<size_t>(c) * H + s0) * 2 * W;
      const T* r1 = tmp.data() + (static_cast<size_t>(c) * H + s1) * 2 * W;
      T* yr = y.data() + (static_cast<size_t>(c) * 2 * H + o) * 2 * W;
      const T a = static_cast<T>(w0), b = static_cast<T>(w1);
#pragma omp simd
      for (int j = 0; j < 2 * W; ++j) yr[j] = a * r0[j] + b * r1[j];
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  const int C = dy.dim(0), H2 = dy.dim(1), W2 = dy.dim(2);
  const int H = H2 / 2, W = W2 / 2;
  // transpose of the column pass
  Tensor<T> tmp({C, H, W2});
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int o = 0; o < H2; ++o) {
      int s0, s1;
      double w0, w1;
      detail::up2_taps(o, H, s0, s1, w0, w1);
      const T* gr = dy.data() + (static_cast<size_t>(c) * H2 + o) * W2;
      T* t0 = tmp.data() + (static_cast<size_t>(c) * H + s0) * W2;
      T* t1 = tmp.data() + (static_cast<size_t>(c) * H + s1) * W2;
      const T a = static_cast<T>(w0), b = static_cast<T>(w1);
      for (int j = 0; j < W2; ++j) {
        t0[j] += a * gr[j];
        t1[j] += b * gr[j];
      }
    }
  }
  // transpose of the row pass
  Tensor<T> dx({C, H, W});
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < H; ++i) {
      const T* tr = tmp.data() + (static_cast<size_t>(c) * H + i) * W2;
      T* xr = dx.data() + (static_cast<size_t>(c) * H + i) * W;
      for (int o = 0; o < W2; ++o) {
        int s0, s1;
        double w0, w1;
        detail::up2_taps(o, W, s0, s1, w0, w1);
        xr[s0] += static_cast<T>(w0) * tr[o];
        xr[s1] += static_cast<T>(w1) * tr[o];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Conditional instance normalization: y = gamma * (x - mu) / sigma + beta,
// moments per channel over the spatial extent
// ---------------------------------------------------------------------------

template <typename T>
struct CinCache {
  Tensor<T> xhat;             // normalized input
  std::vector<T> inv_std;     // per channel
};

template <typename T>
Tensor<T> cin_forward(const Tensor<T>& f, const Tensor<T>& gamma,
                      const Tensor<T>& beta, CinCache<T>* cache,
                      T eps = T(1e-5)) {
  const int C = f.dim(0);
  if (gamma.numel() != static_cast<size_t>(C) ||
      beta.numel() != static_cast<size_t>(C))
    throw ShapeError("cin: style width " + std::to_string(gamma.numel()) +
                     " does not match feature channels " + std::to_string(C));
  const size_t m = static_cast<size_t>(f.dim(1)) * f.dim(2);
  Tensor<T> y(f.shape());
  if (cache) {
    cache->xhat = Tensor<T>(f.shape());
    cache->inv_std.assign(C, T(0));
  }
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const T* xc = f.data() + c * m;
    T* yc = y.data() + c * m;
    T mu = 0;
    for (size_t k = 0; k < m; ++k) mu += xc[k];
    mu /= static_cast<T>(m);
    T var = 0;
    for (size_t k = 0; k < m; ++k) {
      const T d = xc[k] - mu;
      var += d * d;
    }
    var /= static_cast<T>(m);
    const T inv = T(1) / std::sqrt(var + eps);
    const T g = gamma[static_cast<size_t>(c)], bta = beta[static_cast<size_t>(c)];
    if (cache) {
      T* hc = cache->xhat.data() + c * m;
      for (size_t k = 0; k < m; ++k) {
        hc[k] = (xc[k] - mu) * inv;
        yc[k] = g * hc[k] + bta;
      }
      cache->inv_std[static_cast<size_t>(c)] = inv;
    } else {
      for (size_t k = 0; k < m; ++k) yc[k] = g * (xc[k] - mu) * inv + bta;
    }
  }
  return y;
}

template <typename T>
Tensor<T> cin_backward(const CinCache<T>& cache, const Tensor<T>& gamma,
                       const Tensor<T>& dy, Tensor<T>& dgamma, Tensor<T>& dbeta) {
  const int C = dy.dim(0);
  const size_t m = static_cast<size_t>(dy.dim(1)) * dy.dim(2);
  Tensor<T> dx(dy.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const T* hc = cache.xhat.data() + c * m;
    const T* gc = dy.data() + c * m;
    T* dc = dx.data() + c * m;
    T sum_dy = 0, sum_dyh = 0;
    for (size_t k = 0; k < m; ++k) {
      sum_dy += gc[k];
      sum_dyh += gc[k] * hc[k];
    }
    dgamma[static_cast<size_t>(c)] += sum_dyh;
    dbeta[static_cast<size_t>(c)] += sum_dy;
    const T g = gamma[static_cast<size_t>(c)];
    const T inv = cache.inv_std[static_cast<size_t>(c)];
    const T mean_dy = sum_dy / static_cast<T>(m);
    const T mean_dyh = sum_dyh / static_cast<T>(m);
    for (size_t k = 0; k < m; ++k)
      dc[k] = g * inv * (gc[k] - mean_dy - hc[k] * mean_dyh);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Scalar head shared by the discriminators: spatial mean of a 1-channel map,
// then a sigmoid
// ---------------------------------------------------------------------------

template <typename T>
T mean_sigmoid(const Tensor<T>& map1ch, T* pre_sigmoid = nullptr) {
  T s = 0;
  for (size_t i = 0; i < map1ch.numel(); ++i) s += map1ch[i];
  s /= static_cast<T>(map1ch.numel());
  if (pre_sigmoid) *pre_sigmoid = s;
  return T(1) / (T(1) + std::exp(-s));
}

template <typename T>
Tensor<T> mean_sigmoid_backward(const Tensor<T>& map1ch, T prob, T dprob) {
  const T dz = dprob * prob * (T(1) - prob) / static_cast<T>(map1ch.numel());
  return Tensor<T>::full(map1ch.shape(), dz);
}

}  // namespace segadapt
