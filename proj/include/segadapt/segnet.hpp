#pragma once

#include <string>
#include <vector>

#include "segadapt/nn.hpp"

namespace segadapt {

// -----------------------------------------------------------------------
// Encoder-decoder segmentation network.
//
//   conv3x3 3->16            H x W
//   conv3x3 16->32 /2        H/2 x W/2
//   conv3x3 32->64 /2        H/4 x W/4
//   conv3x3 64->64           H/4 x W/4
//   up x2, conv3x3 64->32    H/2 x W/2
//   up x2, conv3x3 32->16    H x W
//   conv1x1 16->C, softmax   H x W
//
// ~84K parameters. Output is a per-pixel probability field.
// -----------------------------------------------------------------------

template <typename T>
struct SegTrace {
  Tensor<T> x;
  Tensor<T> z1, r1, z2, r2, z3, r3, z4, r4;
  Tensor<T> u1, z5, r5, u2, z6, r6;
  Tensor<T> probs;
};

template <typename T>
struct SegNet {
  static constexpr int kDownsample = 4;

  int class_count = 7;
  Conv2d<T> c1, c2, c3, c4, d1, d2, proj;

  explicit SegNet(int classes = 7)
      : class_count(classes),
        c1(3, 16, 3, 1, 1),
        c2(16, 32, 3, 2, 1),
        c3(32, 64, 3, 2, 1),
        c4(64, 64, 3, 1, 1),
        d1(64, 32, 3, 1, 1),
        d2(32, 16, 3, 1, 1),
        proj(16, classes, 1, 1, 0) {}

  void init(Rng& rng) {
    c1.init_he(rng);
    c2.init_he(rng);
    c3.init_he(rng);
    c4.init_he(rng);
    d1.init_he(rng);
    d2.init_he(rng);
    proj.init_he(rng);
  }

  std::string arch() const {
    return "segnet3x3/in3/enc16-32s2-64s2-64/up-bilinear/dec32-16/cls" +
           std::to_string(class_count);
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    c1.collect_params("c1", out);
    c2.collect_params("c2", out);
    c3.collect_params("c3", out);
    c4.collect_params("c4", out);
    d1.collect_params("d1", out);
    d2.collect_params("d2", out);
    proj.collect_params("proj", out);
    return out;
  }

  SegNet clone() const { return *this; }

  void check_input(const Tensor<T>& image) const {
    if (image.rank() != 3 || image.dim(0) != 3)
      throw ShapeError("segnet: expected 3xHxW image, got " +
                       shape_string(image.shape()));
    if (image.dim(1) % kDownsample != 0 || image.dim(2) % kDownsample != 0)
      throw ShapeError("segnet: image size " + shape_string(image.shape()) +
                       " not divisible by downsampling factor " +
                       std::to_string(kDownsample));
  }

  // Inference path: no intermediate state kept.
  Tensor<T> predict(const Tensor<T>& image) const {
    check_input(image);
    Tensor<T> a = relu(c1.forward(image));
    a = relu(c2.forward(a));
    a = relu(c3.forward(a));
    a = relu(c4.forward(a));
    a = relu(d1.forward(upsample2(a)));
    a = relu(d2.forward(upsample2(a)));
    return softmax_channels(proj.forward(a));
  }

  // Training path: fills the trace needed by backward.
  const Tensor<T>& forward(const Tensor<T>& image, SegTrace<T>& t) const {
    check_input(image);
    t.x = image;
    t.z1 = c1.forward(t.x);
    t.r1 = relu(t.z1);
    t.z2 = c2.forward(t.r1);
    t.r2 = relu(t.z2);
    t.z3 = c3.forward(t.r2);
    t.r3 = relu(t.z3);
    t.z4 = c4.forward(t.r3);
    t.r4 = relu(t.z4);
    t.u1 = upsample2(t.r4);
    t.z5 = d1.forward(t.u1);
    t.r5 = relu(t.z5);
    t.u2 = upsample2(t.r5);
    t.z6 = d2.forward(t.u2);
    t.r6 = relu(t.z6);
    t.probs = softmax_channels(proj.forward(t.r6));
    return t.probs;
  }

  // Accumulates parameter gradients from dL/dprobs.
  void backward(const SegTrace<T>& t, const Tensor<T>& dprobs) {
    Tensor<T> dlogits = softmax_channels_backward(t.probs, dprobs);
    Tensor<T> g = proj.backward(t.r6, dlogits);
    g = relu_backward(t.z6, g);
    g = d2.backward(t.u2, g);
    g = upsample2_backward(g);
    g = relu_backward(t.z5, g);
    g = d1.backward(t.u1, g);
    g = upsample2_backward(g);
    g = relu_backward(t.z4, g);
    g = c4.backward(t.r3, g);
    g = relu_backward(t.z3, g);
    g = c3.backward(t.r2, g);
    g = relu_backward(t.z2, g);
    g = c2.backward(t.r1, g);
    g = relu_backward(t.z1, g);
    c1.backward(t.x, g, /*want_dx=*/false);
  }
};

// -----------------------------------------------------------------------
// Convolutional discriminator: stride-2 4x4 convs with leaky ReLU, a final
// 1-channel map averaged and squashed to a scalar probability. Two presets:
// the output-space discriminator consuming C-channel probability fields and
// the per-domain image discriminator consuming RGB images.
// -----------------------------------------------------------------------

template <typename T>
struct DiscTrace {
  std::vector<Tensor<T>> pre;   // conv outputs
  std::vector<Tensor<T>> act;   // layer inputs (act[0] is the network input)
  T prob = 0;
};

template <typename T>
struct ConvDiscriminator {
  std::vector<Conv2d<T>> convs;
  T lrelu_slope = static_cast<T>(0.2);
  bool trainable = true;
  std::string kind;

  static ConvDiscriminator output_space(int class_count) {
    ConvDiscriminator d;
    d.kind = "output";
    const int ch[] = {class_count, 32, 64, 64, 32, 1};
    for (int i = 0; i < 5; ++i) d.convs.emplace_back(ch[i], ch[i + 1], 4, 2, 1);
    return d;
  }

  static ConvDiscriminator image_space() {
    ConvDiscriminator d;
    d.kind = "image";
    const int ch[] = {3, 16, 32, 64, 1};
    for (int i = 0; i < 4; ++i) d.convs.emplace_back(ch[i], ch[i + 1], 4, 2, 1);
    return d;
  }

  void init(Rng& rng) {
    for (auto& c : convs) c.init_he(rng);
  }

  std::string arch() const {
    std::string s = "disc-" + kind + "/k4s2/";
    for (size_t i = 0; i < convs.size(); ++i) {
      if (i) s += "-";
      s += std::to_string(convs[i].out_ch);
    }
    s += "/in" + std::to_string(convs.front().in_ch);
    return s;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].collect_params("conv" + std::to_string(i), out);
    return out;
  }

  ConvDiscriminator clone() const { return *this; }

  T forward(const Tensor<T>& input, DiscTrace<T>* t = nullptr) const {
    Tensor<T> a = input;
    if (t) {
      t->pre.clear();
      t->act.clear();
      t->act.push_back(a);
    }
    for (size_t i = 0; i < convs.size(); ++i) {
      Tensor<T> z = convs[i].forward(a);
      if (t) t->pre.push_back(z);
      if (i + 1 < convs.size()) {
        a = leaky_relu(z, lrelu_slope);
        if (t) t->act.push_back(a);
      } else {
        a = std::move(z);
      }
    }
    const T p = mean_sigmoid(a, static_cast<T*>(nullptr));
    if (t) t->prob = p;
    return p;
  }

  // Gradient through the network into its input; parameters untouched.
  Tensor<T> backward_input(const DiscTrace<T>& t, T dprob) const {
    Tensor<T> g = mean_sigmoid_backward(t.pre.back(), t.prob, dprob);
    for (size_t i = convs.size(); i-- > 0;) {
      g = convs[i].backward_input(g);
      if (i > 0) g = leaky_relu_backward(t.pre[i - 1], g, lrelu_slope);
    }
    return g;
  }

  // Accumulates parameter gradients; optionally also returns dL/dinput.
  Tensor<T> backward(const DiscTrace<T>& t, T dprob, bool want_dx = false) {
    Tensor<T> g = mean_sigmoid_backward(t.pre.back(), t.prob, dprob);
    for (size_t i = convs.size(); i-- > 0;) {
      const bool need_dx = (i > 0) || want_dx;
      g = convs[i].backward(t.act[i], g, need_dx);
      if (i > 0) g = leaky_relu_backward(t.pre[i - 1], g, lrelu_slope);
    }
    return g;
  }
};

// -----------------------------------------------------------------------
// Teacher update: phi_T <- alpha * phi_T + (1 - alpha) * phi_S, elementwise.
// -----------------------------------------------------------------------

template <typename Net, typename T>
void ema_update(Net& teacher, Net& student, T alpha) {
  if (teacher.arch() != student.arch())
    throw ShapeError("ema_update: architecture mismatch: " + teacher.arch() +
                     " vs " + student.arch());
  auto tp = teacher.params();
  auto sp = student.params();
  if (tp.size() != sp.size())
    throw ShapeError("ema_update: parameter list mismatch");
  for (size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i].value->same_shape(*sp[i].value))
      throw ShapeError("ema_update: tensor shape mismatch at " + tp[i].name);
    T* t = tp[i].value->data();
    const T* s = sp[i].value->data();
    const size_t n = tp[i].value->numel();
    for (size_t k = 0; k < n; ++k) t[k] = alpha * t[k] + (T(1) - alpha) * s[k];
  }
}

}  // namespace segadapt
