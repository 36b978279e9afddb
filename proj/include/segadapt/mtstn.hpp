#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "segadapt/domains.hpp"
#include "segadapt/losses.hpp"
#include "segadapt/optim.hpp"
#include "segadapt/segnet.hpp"

namespace segadapt {

// -----------------------------------------------------------------------
// A domain's style: one (gamma, beta) pair feeding every CIN site of the
// shared transfer network.
// -----------------------------------------------------------------------

template <typename T>
struct StyleVector {
  std::string domain;
  Tensor<T> gamma, beta;
  Tensor<T> ggamma, gbeta;

  StyleVector() = default;
  StyleVector(std::string name, int width)
      : domain(std::move(name)),
        gamma(Tensor<T>::full({width}, T(1))),  // identity normalization
        beta({width}),
        ggamma({width}),
        gbeta({width}) {}

  int width() const { return gamma.rank() ? gamma.dim(0) : 0; }

  std::vector<ParamRef<T>> params() {
    return {{"style." + domain + ".gamma", &gamma, &ggamma},
            {"style." + domain + ".beta", &beta, &gbeta}};
  }
};

template <typename T>
struct StyleRegistry {
  std::vector<StyleVector<T>> styles;  // registration order is persistent

  StyleVector<T>& add(const std::string& domain, int width) {
    for (auto& s : styles)
      if (s.domain == domain)
        throw ConfigError("style registry: '" + domain + "' already registered");
    styles.emplace_back(domain, width);
    return styles.back();
  }

  bool has(const std::string& domain) const {
    for (auto& s : styles)
      if (s.domain == domain) return true;
    return false;
  }

  const StyleVector<T>& get(const std::string& domain) const {
    for (auto& s : styles)
      if (s.domain == domain) return s;
    throw ConfigError("style registry: unregistered style '" + domain + "'");
  }

  StyleVector<T>& get(const std::string& domain) {
    for (auto& s : styles)
      if (s.domain == domain) return s;
    throw ConfigError("style registry: unregistered style '" + domain + "'");
  }
};

// -----------------------------------------------------------------------
// Style transfer network:
//   conv3x3 3->d/2 /2, relu
//   conv3x3 d/2->d /2, CIN, relu
//   3 residual blocks: [conv3x3 d->d, CIN, relu, conv3x3 d->d, CIN] + skip
//   up x2, conv3x3 d->d/2, relu
//   up x2, conv3x3 d/2->d/4, relu
//   conv3x3 d/4->3, sigmoid
// All 7 CIN sites read the same externally supplied (gamma, beta).
// -----------------------------------------------------------------------

template <typename T>
struct StyleTrace {
  Tensor<T> x, z1, r1, z2;
  CinCache<T> n2;
  Tensor<T> c2out, r2;
  struct Res {
    Tensor<T> in, za;
    CinCache<T> na;
    Tensor<T> aout, ra, zb;
    CinCache<T> nb;
    Tensor<T> bout, sum;
  };
  Res res[3];
  Tensor<T> u1, z3, r3, u2, z4, r4, z5, out;
};

template <typename T>
struct StyleNet {
  int d = 64;
  Conv2d<T> enc1, enc2;
  Conv2d<T> res_a[3], res_b[3];
  Conv2d<T> dec1, dec2, out;

  explicit StyleNet(int width = 64)
      : d(width),
        enc1(3, width / 2, 3, 2, 1),
        enc2(width / 2, width, 3, 2, 1),
        res_a{{width, width, 3, 1, 1}, {width, width, 3, 1, 1}, {width, width, 3, 1, 1}},
        res_b{{width, width, 3, 1, 1}, {width, width, 3, 1, 1}, {width, width, 3, 1, 1}},
        dec1(width, width / 2, 3, 1, 1),
        dec2(width / 2, width / 4, 3, 1, 1),
        out(width / 4, 3, 3, 1, 1) {
    if (width < 8 || width % 4 != 0)
      throw ConfigError("stylenet: width must be a multiple of 4, >= 8");
  }

  int style_width() const { return d; }

  std::string arch() const {
    return "stn/in3/enc" + std::to_string(d / 2) + "s2-" + std::to_string(d) +
           "s2/res3x" + std::to_string(d) + "cin/dec" + std::to_string(d / 2) +
           "-" + std::to_string(d / 4) + "/out3-sigmoid";
  }

  void init(Rng& rng) {
    enc1.init_he(rng);
    enc2.init_he(rng);
    for (int i = 0; i < 3; ++i) {
      res_a[i].init_he(rng);
      res_b[i].init_he(rng);
    }
    dec1.init_he(rng);
    dec2.init_he(rng);
    out.init_he(rng);
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> p;
    enc1.collect_params("enc1", p);
    enc2.collect_params("enc2", p);
    for (int i = 0; i < 3; ++i) {
      res_a[i].collect_params("res" + std::to_string(i) + "a", p);
      res_b[i].collect_params("res" + std::to_string(i) + "b", p);
    }
    dec1.collect_params("dec1", p);
    dec2.collect_params("dec2", p);
    out.collect_params("out", p);
    return p;
  }

  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(0) != 3)
      throw ShapeError("stylenet: expected 3xHxW image");
    if (x.dim(1) % 4 != 0 || x.dim(2) % 4 != 0)
      throw ShapeError("stylenet: image size must be divisible by 4");
  }

  const Tensor<T>& forward(const Tensor<T>& x, const StyleVector<T>& v,
                           StyleTrace<T>& t) const {
    check_input(x);
    if (v.width() != d)
      throw ShapeError("stylenet: style width " + std::to_string(v.width()) +
                       " != " + std::to_string(d));
    t.x = x;
    t.z1 = enc1.forward(x);
    t.r1 = relu(t.z1);
    t.z2 = enc2.forward(t.r1);
    t.c2out = cin_forward(t.z2, v.gamma, v.beta, &t.n2);
    t.r2 = relu(t.c2out);
    const Tensor<T>* cur = &t.r2;
    for (int i = 0; i < 3; ++i) {
      auto& r = t.res[i];
      r.in = *cur;
      r.za = res_a[i].forward(r.in);
      r.aout = cin_forward(r.za, v.gamma, v.beta, &r.na);
      r.ra = relu(r.aout);
      r.zb = res_b[i].forward(r.ra);
      r.bout = cin_forward(r.zb, v.gamma, v.beta, &r.nb);
      r.sum = r.bout;
      r.sum.add_scaled(r.in, T(1));
      cur = &r.sum;
    }
    t.u1 = upsample2(*cur);
    t.z3 = dec1.forward(t.u1);
    t.r3 = relu(t.z3);
    t.u2 = upsample2(t.r3);
    t.z4 = dec2.forward(t.u2);
    t.r4 = relu(t.z4);
    t.z5 = out.forward(t.r4);
    t.out = sigmoid(t.z5);
    return t.out;
  }

  // Inference-only transfer.
  Tensor<T> transfer(const Tensor<T>& x, const StyleVector<T>& v) const {
    StyleTrace<T> t;
    forward(x, v, t);
    return t.out;
  }

  // Accumulates conv gradients and the style's (ggamma, gbeta).
  void backward(const StyleTrace<T>& t, StyleVector<T>& v, const Tensor<T>& dout) {
    Tensor<T> g = sigmoid_backward(t.out, dout);
    g = out.backward(t.r4, g);
    g = relu_backward(t.z4, g);
    g = dec2.backward(t.u2, g);
    g = upsample2_backward(g);
    g = relu_backward(t.z3, g);
    g = dec1.backward(t.u1, g);
    g = upsample2_backward(g);
    for (int i = 2; i >= 0; --i) {
      const auto& r = t.res[i];
      Tensor<T> skip = g;  // identity branch
      Tensor<T> h = cin_backward(r.nb, v.gamma, g, v.ggamma, v.gbeta);
      h = res_b[i].backward(r.ra, h);
      h = relu_backward(r.aout, h);
      h = cin_backward(r.na, v.gamma, h, v.ggamma, v.gbeta);
      h = res_a[i].backward(r.in, h);
      h.add_scaled(skip, T(1));
      g = std::move(h);
    }
    g = relu_backward(t.c2out, g);
    g = cin_backward(t.n2, v.gamma, g, v.ggamma, v.gbeta);
    g = enc2.backward(t.r1, g);
    g = relu_backward(t.z1, g);
    enc1.backward(t.x, g, /*want_dx=*/false);
  }
};

// Registry-based transfer; the common entry point for augmentation.
template <typename T>
Tensor<T> transfer(const StyleNet<T>& net, const Tensor<T>& x,
                   const StyleRegistry<T>& registry, const std::string& domain) {
  return net.transfer(x, registry.get(domain));
}

// -----------------------------------------------------------------------
// Cross-domain adversarial loss over one image per domain:
//   L_adv = L+(x_s, id, D_s) + sum_n L-(x_tn, T_{V_s}, D_s)
//         + sum_n [ L+(x_tn, id, D_tn) + L-(x_s, T_{V_tn}, D_tn) ]
// Originals are positives for their own domain's discriminator; images
// transferred into a domain are negatives for it.
// -----------------------------------------------------------------------

template <typename T>
using DiscScore = std::function<T(const Tensor<T>&)>;

template <typename T>
T mtstn_adv(const Tensor<T>& x_s, const std::vector<Tensor<T>>& x_t,
            const StyleNet<T>& tnet, const StyleVector<T>& v_s,
            const std::vector<StyleVector<T>>& v_t, const DiscScore<T>& d_s,
            const std::vector<DiscScore<T>>& d_t) {
  if (x_t.size() != v_t.size() || x_t.size() != d_t.size())
    throw ShapeError("mtstn_adv: target image/style/discriminator counts differ");
  T value = adv_positive(d_s(x_s));
  for (size_t n = 0; n < x_t.size(); ++n)
    value += adv_negative(d_s(tnet.transfer(x_t[n], v_s)));
  for (size_t n = 0; n < x_t.size(); ++n) {
    value += adv_positive(d_t[n](x_t[n]));
    value += adv_negative(d_t[n](tnet.transfer(x_s, v_t[n])));
  }
  return value;
}

// Generator-side pass over the full loss: backpropagates the L- terms
// through the discriminators (input gradient only) into the transfer
// network and the style vectors, scaled by `scale`. Returns the loss value.
template <typename T>
T mtstn_adv_generator_step(const Tensor<T>& x_s,
                           const std::vector<Tensor<T>>& x_t, StyleNet<T>& tnet,
                           StyleVector<T>& v_s, std::vector<StyleVector<T>>& v_t,
                           const ConvDiscriminator<T>& d_s,
                           const std::vector<ConvDiscriminator<T>>& d_t,
                           T scale) {
  if (x_t.size() != v_t.size() || x_t.size() != d_t.size())
    throw ShapeError("mtstn_adv: target image/style/discriminator counts differ");
  T value = adv_positive(d_s.forward(x_s));
  for (size_t n = 0; n < x_t.size(); ++n) {
    StyleTrace<T> tr;
    tnet.forward(x_t[n], v_s, tr);
    DiscTrace<T> dtr;
    const T d = d_s.forward(tr.out, &dtr);
    value += adv_negative(d);
    Tensor<T> dimg = d_s.backward_input(dtr, scale * adv_negative_ddisc(d));
    tnet.backward(tr, v_s, dimg);
  }
  for (size_t n = 0; n < x_t.size(); ++n) {
    value += adv_positive(d_t[n].forward(x_t[n]));
    StyleTrace<T> tr;
    tnet.forward(x_s, v_t[n], tr);
    DiscTrace<T> dtr;
    const T d = d_t[n].forward(tr.out, &dtr);
    value += adv_negative(d);
    Tensor<T> dimg = d_t[n].backward_input(dtr, scale * adv_negative_ddisc(d));
    tnet.backward(tr, v_t[n], dimg);
  }
  return value;
}

}  // namespace segadapt
