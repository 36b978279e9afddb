#pragma once

#include <memory>
#include <string>
#include <vector>

#include "segadapt/augment.hpp"
#include "segadapt/checkpoint.hpp"
#include "segadapt/config.hpp"
#include "segadapt/eval.hpp"
#include "segadapt/image_io.hpp"
#include "segadapt/losses.hpp"
#include "segadapt/mtstn.hpp"
#include "segadapt/optim.hpp"

namespace segadapt {

// -----------------------------------------------------------------------
// Style assets: the shared transfer network, one style vector per domain
// and one image discriminator per domain.
// -----------------------------------------------------------------------

template <typename T>
struct StyleAssets {
  StyleNet<T> tnet;
  StyleRegistry<T> registry;
  std::vector<ConvDiscriminator<T>> discs;  // aligned with registry order
  std::vector<std::string> domains;         // registry order; [0] is the source

  explicit StyleAssets(int width = 64) : tnet(width) {}

  const StyleVector<T>& source_style() const { return registry.get(domains.at(0)); }
};

template <typename T>
void save_style_assets(const StyleAssets<T>& assets, const std::string& path,
                       uint64_t seed) {
  CheckpointWriter w("mtstn");
  StyleAssets<T>& a = const_cast<StyleAssets<T>&>(assets);  // params() is non-const
  w.add_section("tnet", assets.tnet.arch(), a.tnet.params());
  for (size_t i = 0; i < assets.domains.size(); ++i) {
    w.add_section("style." + assets.domains[i],
                  "style/d" + std::to_string(assets.tnet.style_width()),
                  a.registry.get(assets.domains[i]).params());
    w.add_section("disc." + assets.domains[i], assets.discs[i].arch(),
                  a.discs[i].params());
  }
  w.meta()["extra"] = {{"domains", assets.domains},
                       {"cin_width", assets.tnet.style_width()},
                       {"seed", seed}};
  w.write(path);
}

template <typename T>
StyleAssets<T> load_style_assets(const std::string& path) {
  const Checkpoint c = Checkpoint::read(path);
  if (c.kind() != "mtstn")
    throw IoError("checkpoint '" + path + "': manifest mismatch: kind '" +
                  c.kind() + "', expected 'mtstn'");
  const auto& extra = c.meta().at("extra");
  const int width = extra.at("cin_width").get<int>();
  StyleAssets<T> assets(width);
  c.load_section("tnet", assets.tnet.arch(), assets.tnet.params());
  for (const auto& d : extra.at("domains")) {
    const std::string name = d.get<std::string>();
    assets.domains.push_back(name);
    StyleVector<T>& v = assets.registry.add(name, width);
    c.load_section("style." + name, "style/d" + std::to_string(width), v.params());
    assets.discs.push_back(ConvDiscriminator<T>::image_space());
    c.load_section("disc." + name, assets.discs.back().arch(),
                   assets.discs.back().params());
  }
  return assets;
}

// -----------------------------------------------------------------------
// Style transfer training: alternating discriminator ascent on the
// cross-domain loss and generator descent on reconstruction + weighted
// adversarial terms. Minibatch: one source image and one target image,
// targets visited round-robin.
// -----------------------------------------------------------------------

template <typename T>
struct MtstnResult {
  StyleAssets<T> assets;
  Series curve;  // epoch, rec, adv_gen, adv_disc

  explicit MtstnResult(int width) : assets(width) {}
};

template <typename T>
MtstnResult<T> train_mtstn(const Benchmark& bench, const MtstnConfig& cfg,
                           uint64_t seed) {
  cfg.validate();
  MtstnResult<T> result(cfg.cin_width);
  StyleAssets<T>& A = result.assets;
  Rng master(splitmix64(seed ^ 0x7374796c65ULL));  // "style"
  Rng init_rng = master.fork(1);
  Rng sampler = master.fork(2);

  A.tnet.init(init_rng);
  A.domains.push_back(bench.source.train->spec().name);
  for (const auto& t : bench.targets) A.domains.push_back(t.train->spec().name);
  for (const auto& name : A.domains) {
    A.registry.add(name, cfg.cin_width);
    A.discs.push_back(ConvDiscriminator<T>::image_space());
    A.discs.back().init(init_rng);
  }

  std::vector<ParamRef<T>> gen_params = A.tnet.params();
  for (auto& s : A.registry.styles)
    for (auto& p : s.params()) gen_params.push_back(p);
  AdamOptimizer<T> gen_opt;
  gen_opt.weight_decay = static_cast<T>(cfg.weight_decay);
  gen_opt.attach(gen_params);

  std::vector<AdamOptimizer<T>> disc_opts(A.discs.size());
  for (size_t i = 0; i < A.discs.size(); ++i) {
    disc_opts[i].weight_decay = static_cast<T>(cfg.weight_decay);
    disc_opts[i].attach(A.discs[i].params());
  }

  const size_t steps_per_epoch = bench.source.train->size();
  const size_t num_targets = bench.targets.size();
  result.curve.columns = {"epoch", "rec", "adv_gen", "adv_disc"};

  const T lam = static_cast<T>(cfg.lambda_adv);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double rec_sum = 0, advg_sum = 0, advd_sum = 0;
    for (size_t step = 0; step < steps_per_epoch; ++step) {
      const size_t n = step % num_targets;
      const Dataset& src = *bench.source.train;
      const Dataset& tgt = *bench.targets[n].train;
      const Tensor<T> x_s = src.image(sampler.uniform_int(src.size())).template cast<T>();
      const Tensor<T> x_t = tgt.image(sampler.uniform_int(tgt.size())).template cast<T>();
      StyleVector<T>& v_s = A.registry.get(A.domains[0]);
      StyleVector<T>& v_t = A.registry.get(A.domains[1 + n]);
      ConvDiscriminator<T>& d_s = A.discs[0];
      ConvDiscriminator<T>& d_t = A.discs[1 + n];

      // discriminator ascent on detached transfers
      const Tensor<T> t_to_s = A.tnet.transfer(x_t, v_s);
      const Tensor<T> s_to_t = A.tnet.transfer(x_s, v_t);
      double adv_disc = 0;
      {
        zero_grads(d_s.params());
        DiscTrace<T> tr;
        const T dpos = d_s.forward(x_s, &tr);
        adv_disc += adv_positive(dpos);
        d_s.backward(tr, -adv_positive_ddisc(dpos));
        DiscTrace<T> tr2;
        const T dneg = d_s.forward(t_to_s, &tr2);
        adv_disc += adv_negative(dneg);
        d_s.backward(tr2, -adv_negative_ddisc(dneg));
        disc_opts[0].step(d_s.params(), static_cast<T>(cfg.disc_lr));
      }
      {
        zero_grads(d_t.params());
        DiscTrace<T> tr;
        const T dpos = d_t.forward(x_t, &tr);
        adv_disc += adv_positive(dpos);
        d_t.backward(tr, -adv_positive_ddisc(dpos));
        DiscTrace<T> tr2;
        const T dneg = d_t.forward(s_to_t, &tr2);
        adv_disc += adv_negative(dneg);
        d_t.backward(tr2, -adv_negative_ddisc(dneg));
        disc_opts[1 + n].step(d_t.params(), static_cast<T>(cfg.disc_lr));
      }

      // generator descent: reconstruction plus fooling terms
      zero_grads(gen_params);
      double rec = 0, adv_gen = 0;
      {
        StyleTrace<T> tr;
        A.tnet.forward(x_s, v_s, tr);
        Tensor<T> dxh;
        rec += reconstruction(x_s, tr.out, &dxh);
        A.tnet.backward(tr, v_s, dxh);
      }
      {
        StyleTrace<T> tr;
        A.tnet.forward(x_t, v_t, tr);
        Tensor<T> dxh;
        rec += reconstruction(x_t, tr.out, &dxh);
        A.tnet.backward(tr, v_t, dxh);
      }
      {
        StyleTrace<T> tr;
        A.tnet.forward(x_t, v_s, tr);
        DiscTrace<T> dtr;
        const T d = d_s.forward(tr.out, &dtr);
        adv_gen += adv_negative(d);
        Tensor<T> dimg = d_s.backward_input(dtr, lam * adv_negative_ddisc(d));
        A.tnet.backward(tr, v_s, dimg);
      }
      {
        StyleTrace<T> tr;
        A.tnet.forward(x_s, v_t, tr);
        DiscTrace<T> dtr;
        const T d = d_t.forward(tr.out, &dtr);
        adv_gen += adv_negative(d);
        Tensor<T> dimg = d_t.backward_input(dtr, lam * adv_negative_ddisc(d));
        A.tnet.backward(tr, v_t, dimg);
      }
      gen_opt.step(gen_params, static_cast<T>(cfg.gen_lr));

      if (!std::isfinite(rec) || !std::isfinite(adv_gen) || !std::isfinite(adv_disc))
        throw NumericError("mtstn: non-finite loss at epoch " +
                           std::to_string(epoch) + " step " + std::to_string(step) +
                           " (rec=" + std::to_string(rec) +
                           ", adv_gen=" + std::to_string(adv_gen) +
                           ", adv_disc=" + std::to_string(adv_disc) + ")");
      rec_sum += rec;
      advg_sum += adv_gen;
      advd_sum += adv_disc;
    }
    result.curve.rows.push_back({static_cast<double>(epoch),
                                 rec_sum / steps_per_epoch,
                                 advg_sum / steps_per_epoch,
                                 advd_sum / steps_per_epoch});
  }
  return result;
}

// Mean own-style reconstruction L1 over an evaluation split.
template <typename T>
double mtstn_reconstruction_error(const StyleAssets<T>& assets, const Dataset& eval_set) {
  const StyleVector<T>& v = assets.registry.get(eval_set.spec().name);
  double sum = 0;
  for (size_t i = 0; i < eval_set.size(); ++i) {
    const Tensor<T> x = eval_set.eval_image(i).template cast<T>();
    sum += reconstruction(x, assets.tnet.transfer(x, v));
  }
  return sum / eval_set.size();
}

// -----------------------------------------------------------------------
// MT-KD: per iteration, (a) one labeled source image and one unlabeled
// image pair from each target, (b) student step on
// CE + lambda_con * consistency + lambda_out * (fooling terms),
// (c) discriminator ascent on the detached predictions, (d) EMA.
// -----------------------------------------------------------------------

struct MtkdDataView {
  const Dataset* source = nullptr;
  std::vector<const Dataset*> targets;
};

template <typename T>
AugmentedSample<T> make_augmented_sample(const Tensor<T>& x_a, const Tensor<T>& x_b,
                                         const TrainConfig& cfg,
                                         const StyleAssets<T>* style,
                                         const std::string& source_domain,
                                         const SegNet<T>& teacher, Rng& rng) {
  const bool stn = cfg.use_style_transfer && style != nullptr;
  switch (cfg.augmentation) {
    case AugmentKind::cutmix: {
      if (stn)
        return compose_A_mtkd(x_a, x_b, style->tnet,
                              style->registry.get(source_domain), teacher, rng,
                              cfg.teacher_view);
      return compose_A_utkd(x_a, x_b, teacher, rng);
    }
    case AugmentKind::gaussian: {
      Tensor<T> base =
          stn ? style->tnet.transfer(x_a, style->registry.get(source_domain)) : x_a;
      Tensor<T> pseudo = teacher.predict(
          (!stn || cfg.teacher_view == TeacherView::raw) ? x_a : base);
      return {gaussian_noise(base, cfg.gaussian_sigma, rng), std::move(pseudo)};
    }
    case AugmentKind::none:  // A = identity, style transfer included
      return {x_a, teacher.predict(x_a)};
  }
  throw ConfigError("unknown augmentation kind");
}

template <typename T>
class MtkdTrainer {
 public:
  MtkdTrainer(const MtkdDataView& view, const TrainConfig& cfg, int class_count,
              const StyleAssets<T>* style)
      : view_(view), cfg_(cfg), style_(style), student_(class_count),
        teacher_(class_count),
        d_out_(ConvDiscriminator<T>::output_space(class_count)) {
    cfg_.validate();
    if (!view_.source || view_.targets.empty())
      throw ConfigError("mtkd: a source and at least one target are required");
    const bool style_needed = cfg_.use_style_transfer && cfg_.lambda_con > 0 &&
                              cfg_.augmentation != AugmentKind::none;
    if (style_needed && !style_)
      throw ConfigError(
          "mtkd: style transfer requested but no style assets given; train "
          "them first or set use_style_transfer=false");

    Rng master(splitmix64(cfg_.seed ^ 0x6d746b64ULL));  // "mtkd"
    Rng init_rng = master.fork(1);
    sampler_ = master.fork(2);
    student_.init(init_rng);
    d_out_.init(init_rng);
    teacher_ = student_.clone();  // teacher starts as a copy of the student

    sgd_.momentum = static_cast<T>(cfg_.student_momentum);
    sgd_.weight_decay = static_cast<T>(cfg_.weight_decay);
    sgd_.attach(student_.params());
    adam_.beta1 = static_cast<T>(cfg_.disc_beta1);
    adam_.beta2 = static_cast<T>(cfg_.disc_beta2);
    adam_.weight_decay = static_cast<T>(cfg_.weight_decay);
    adam_.attach(d_out_.params());

    curve_.columns = {"iter", "lr", "ce", "con", "out_disc", "out_student"};
  }

  long long iteration() const { return iter_; }
  bool done() const { return iter_ >= cfg_.iterations; }
  SegNet<T>& student() { return student_; }
  SegNet<T>& teacher() { return teacher_; }
  ConvDiscriminator<T>& d_out() { return d_out_; }
  const Series& curve() const { return curve_; }
  const TrainConfig& config() const { return cfg_; }

  void step() {
    const T lr_s = poly_lr(static_cast<T>(cfg_.student_lr), iter_, cfg_.iterations,
                           static_cast<T>(cfg_.poly_power));
    const T lr_d = poly_lr(static_cast<T>(cfg_.disc_lr), iter_, cfg_.iterations,
                           static_cast<T>(cfg_.poly_power));
    const double ramp =
        cfg_.lambda_warmup > 0
            ? std::min(1.0, static_cast<double>(iter_ + 1) / cfg_.lambda_warmup)
            : 1.0;
    const double lam_con = cfg_.lambda_con * ramp;
    const double lam_out = cfg_.lambda_out * ramp;
    const bool want_con = cfg_.lambda_con > 0;
    const bool want_out = cfg_.lambda_out > 0;
    const bool touch_targets = want_con || want_out;

    zero_grads(student_.params());

    // supervised source term
    const Dataset& src = *view_.source;
    const size_t idx_s = sampler_.uniform_int(src.size());
    const Tensor<T> x_s = src.image(idx_s).template cast<T>();
    const Tensor<T> y_s = one_hot<T>(src.train_label(idx_s), student_.class_count);
    SegTrace<T> tr_src;
    student_.forward(x_s, tr_src);
    Tensor<T> dq;
    const double ce = cross_entropy(y_s, tr_src.probs, &dq);
    student_.backward(tr_src, dq);

    double con_total = 0, out_student = 0, out_disc = 0;
    std::vector<SegTrace<T>> adv_traces;
    std::vector<Tensor<T>> adv_preds;
    if (touch_targets) {
      for (const Dataset* tgt : view_.targets) {
        const size_t ia = sampler_.uniform_int(tgt->size());
        const size_t ib = sampler_.uniform_int(tgt->size());
        const Tensor<T> x_a = tgt->image(ia).template cast<T>();
        const Tensor<T> x_b = tgt->image(ib).template cast<T>();
        if (want_con) {
          AugmentedSample<T> s =
              make_augmented_sample(x_a, x_b, cfg_, style_,
                                    view_.source->spec().name, teacher_, sampler_);
          SegTrace<T> tr;
          student_.forward(s.student_input, tr);
          Tensor<T> dqc;
          con_total += consistency(tr.probs, s.pseudo_label, &dqc);
          dqc.scale(static_cast<T>(lam_con));
          student_.backward(tr, dqc);
        }
        if (want_out) {
          adv_traces.emplace_back();
          student_.forward(x_a, adv_traces.back());
          adv_preds.push_back(adv_traces.back().probs);
        }
      }
      if (want_out) {
        std::vector<Tensor<T>> dpreds;
        out_student = mtkd_output_adv_student(adv_preds, d_out_, &dpreds);
        for (size_t n = 0; n < dpreds.size(); ++n) {
          dpreds[n].scale(static_cast<T>(lam_out));
          student_.backward(adv_traces[n], dpreds[n]);
        }
      }
    }

    if (!std::isfinite(ce) || !std::isfinite(con_total) || !std::isfinite(out_student))
      throw NumericError("mtkd: non-finite loss at iteration " + std::to_string(iter_) +
                         " (ce=" + std::to_string(ce) +
                         ", con=" + std::to_string(con_total) +
                         ", out=" + std::to_string(out_student) + ")");

    sgd_.step(student_.params(), lr_s);

    if (want_out && touch_targets) {
      zero_grads(d_out_.params());
      out_disc = mtkd_output_adv_disc_step(tr_src.probs, adv_preds, d_out_);
      adam_.step(d_out_.params(), lr_d);
      if (!std::isfinite(out_disc))
        throw NumericError("mtkd: non-finite discriminator loss at iteration " +
                           std::to_string(iter_));
    }

    ema_update(teacher_, student_, static_cast<T>(cfg_.alpha));

    if (iter_ % cfg_.log_stride == 0 || iter_ + 1 == cfg_.iterations)
      curve_.rows.push_back({static_cast<double>(iter_), static_cast<double>(lr_s),
                             ce, con_total, out_disc, out_student});
    ++iter_;
  }

  void run_to_end() {
    while (!done()) step();
  }

  // Full state for --resume: networks, optimizer slots, sampler and curve.
  void save_state(CheckpointWriter& w) {
    w.add_section("student", student_.arch(), student_.params());
    w.add_section("teacher", teacher_.arch(), teacher_.params());
    w.add_section("d_out", d_out_.arch(), d_out_.params());
    w.add_section("opt_student", "sgd-velocity", opt_refs(sgd_.velocity, "v"));
    w.add_section("opt_dout_m", "adam-m", opt_refs(adam_.m, "m"));
    w.add_section("opt_dout_v", "adam-v", opt_refs(adam_.v, "v"));
    w.meta()["extra"] = {{"iteration", iter_},
                         {"adam_t", adam_.t},
                         {"sampler_rng", sampler_.state()},
                         {"curve", curve_.rows}};
  }

  void restore_state(const Checkpoint& c) {
    c.load_section("student", student_.arch(), student_.params());
    c.load_section("teacher", teacher_.arch(), teacher_.params());
    c.load_section("d_out", d_out_.arch(), d_out_.params());
    c.load_section("opt_student", "sgd-velocity", opt_refs(sgd_.velocity, "v"));
    c.load_section("opt_dout_m", "adam-m", opt_refs(adam_.m, "m"));
    c.load_section("opt_dout_v", "adam-v", opt_refs(adam_.v, "v"));
    const auto& extra = c.meta().at("extra");
    iter_ = extra.at("iteration").get<long long>();
    adam_.t = extra.at("adam_t").get<long long>();
    sampler_.set_state(extra.at("sampler_rng").get<std::string>());
    curve_.rows = extra.at("curve").get<std::vector<std::vector<double>>>();
  }

 private:
  std::vector<ParamRef<T>> opt_refs(std::vector<Tensor<T>>& slots,
                                    const std::string& prefix) {
    std::vector<ParamRef<T>> out;
    for (size_t i = 0; i < slots.size(); ++i)
      out.push_back({prefix + std::to_string(i), &slots[i], &slots[i]});
    return out;
  }

  MtkdDataView view_;
  TrainConfig cfg_;
  const StyleAssets<T>* style_;
  SegNet<T> student_, teacher_;
  ConvDiscriminator<T> d_out_;
  SgdOptimizer<T> sgd_;
  AdamOptimizer<T> adam_;
  Rng sampler_;
  Series curve_;
  long long iter_ = 0;
};

// -----------------------------------------------------------------------
// UT-KD: adaptation to an unseen domain from a pretrained teacher and a
// frozen discriminator. The signature admits no handle to source or known
// target data; self-distillation plus one-way adversarial descent only,
// and never a discriminator update.
// -----------------------------------------------------------------------

template <typename T>
class UtkdTrainer {
 public:
  UtkdTrainer(const SegNet<T>& pretrained_teacher,
              const ConvDiscriminator<T>& pretrained_dout, const Dataset& unseen,
              const TrainConfig& cfg)
      : cfg_(cfg), unseen_(&unseen), student_(pretrained_teacher.class_count),
        teacher_(pretrained_teacher.clone()),
        frozen_teacher_(pretrained_teacher.clone()), d_out_(pretrained_dout.clone()) {
    cfg_.validate();
    d_out_.trainable = false;
    Rng master(splitmix64(cfg_.seed ^ 0x75746b64ULL));  // "utkd"
    Rng init_rng = master.fork(1);
    sampler_ = master.fork(2);
    if (cfg_.utkd_init_from_pretrained)
      student_ = pretrained_teacher.clone();
    else
      student_.init(init_rng);
    sgd_.momentum = static_cast<T>(cfg_.student_momentum);
    sgd_.weight_decay = static_cast<T>(cfg_.weight_decay);
    sgd_.attach(student_.params());
    curve_.columns = {"iter", "lr", "con", "out"};
  }

  long long iteration() const { return iter_; }
  bool done() const { return iter_ >= cfg_.adapt_iterations; }
  SegNet<T>& student() { return student_; }
  SegNet<T>& teacher() { return teacher_; }
  SegNet<T>& frozen_teacher() { return frozen_teacher_; }
  ConvDiscriminator<T>& d_out() { return d_out_; }
  const Series& curve() const { return curve_; }

  void step() {
    const T lr = poly_lr(static_cast<T>(cfg_.student_lr), iter_,
                         cfg_.adapt_iterations, static_cast<T>(cfg_.poly_power));
    zero_grads(student_.params());

    const size_t ia = sampler_.uniform_int(unseen_->size());
    const size_t ib = sampler_.uniform_int(unseen_->size());
    const Tensor<T> x_a = unseen_->image(ia).template cast<T>();
    const Tensor<T> x_b = unseen_->image(ib).template cast<T>();

    double con = 0, out = 0;
    if (cfg_.lambda_con > 0) {
      const SegNet<T>& pseudo_teacher =
          cfg_.utkd_frozen_consistency ? frozen_teacher_ : teacher_;
      // no style transfer on the unseen domain
      TrainConfig aug_cfg = cfg_;
      aug_cfg.use_style_transfer = false;
      AugmentedSample<T> s = make_augmented_sample<T>(
          x_a, x_b, aug_cfg, nullptr, "", pseudo_teacher, sampler_);
      SegTrace<T> tr;
      student_.forward(s.student_input, tr);
      Tensor<T> dqc;
      if (cfg_.utkd_frozen_consistency)
        con = frozen_consistency(tr.probs, s.pseudo_label, &dqc);
      else
        con = consistency(tr.probs, s.pseudo_label, &dqc);
      dqc.scale(static_cast<T>(cfg_.lambda_con));
      student_.backward(tr, dqc);
    }
    if (cfg_.lambda_out > 0) {
      SegTrace<T> tr;
      student_.forward(x_a, tr);
      Tensor<T> dpred;
      out = utkd_one_way(tr.probs, d_out_, &dpred);
      dpred.scale(static_cast<T>(cfg_.lambda_out));
      student_.backward(tr, dpred);
    }

    if (!std::isfinite(con) || !std::isfinite(out))
      throw NumericError("utkd: non-finite loss at iteration " + std::to_string(iter_));

    sgd_.step(student_.params(), lr);
    ema_update(teacher_, student_, static_cast<T>(cfg_.alpha));

    if (iter_ % cfg_.log_stride == 0 || iter_ + 1 == cfg_.adapt_iterations)
      curve_.rows.push_back({static_cast<double>(iter_), static_cast<double>(lr),
                             con, out});
    ++iter_;
  }

  void run_to_end() {
    while (!done()) step();
  }

  void save_state(CheckpointWriter& w) {
    w.add_section("student", student_.arch(), student_.params());
    w.add_section("teacher", teacher_.arch(), teacher_.params());
    w.add_section("d_out", d_out_.arch(), d_out_.params());
    w.add_section("opt_student", "sgd-velocity", opt_refs(sgd_.velocity));
    w.meta()["extra"] = {{"iteration", iter_},
                         {"sampler_rng", sampler_.state()},
                         {"curve", curve_.rows}};
  }

  void restore_state(const Checkpoint& c) {
    c.load_section("student", student_.arch(), student_.params());
    c.load_section("teacher", teacher_.arch(), teacher_.params());
    c.load_section("d_out", d_out_.arch(), d_out_.params());
    c.load_section("opt_student", "sgd-velocity", opt_refs(sgd_.velocity));
    const auto& extra = c.meta().at("extra");
    iter_ = extra.at("iteration").get<long long>();
    sampler_.set_state(extra.at("sampler_rng").get<std::string>());
    curve_.rows = extra.at("curve").get<std::vector<std::vector<double>>>();
  }

 private:
  std::vector<ParamRef<T>> opt_refs(std::vector<Tensor<T>>& slots) {
    std::vector<ParamRef<T>> out;
    for (size_t i = 0; i < slots.size(); ++i)
      out.push_back({"v" + std::to_string(i), &slots[i], &slots[i]});
    return out;
  }

  TrainConfig cfg_;
  const Dataset* unseen_;
  SegNet<T> student_, teacher_, frozen_teacher_;
  ConvDiscriminator<T> d_out_;
  SgdOptimizer<T> sgd_;
  Rng sampler_;
  Series curve_;
  long long iter_ = 0;
};

// -----------------------------------------------------------------------
// Harness modes: who trains on what, and with which data visibility.
// -----------------------------------------------------------------------

template <typename T>
struct RunSettingResult {
  MetricsReport report;
  std::unique_ptr<MtkdTrainer<T>> stage1;
  std::unique_ptr<UtkdTrainer<T>> stage2;  // utkd / source_free_like only
};

template <typename T>
MetricsReport evaluate_all_domains(const SegNet<T>& model, const Benchmark& bench,
                                   const std::string& mode, uint64_t seed,
                                   long long iteration) {
  MetricsReport rep;
  rep.mode = mode;
  rep.seed = seed;
  rep.iteration = iteration;
  rep.domains.push_back(
      evaluate_on(model, *bench.source.eval, bench.source.eval->spec().name));
  for (const auto& t : bench.targets)
    rep.domains.push_back(evaluate_on(model, *t.eval, t.eval->spec().name));
  rep.domains.push_back(
      evaluate_on(model, *bench.unseen.eval, bench.unseen.eval->spec().name));
  rep.finalize();
  return rep;
}

inline const Dataset* find_train_set(const Benchmark& bench, const std::string& name) {
  if (name == "unseen" || name == bench.unseen.train->spec().name)
    return bench.unseen.train.get();
  if (name == bench.source.train->spec().name) return bench.source.train.get();
  for (const auto& t : bench.targets)
    if (t.train->spec().name == name) return t.train.get();
  throw ConfigError("unknown domain '" + name + "'");
}

template <typename T>
RunSettingResult<T> run_setting(const ExperimentConfig& cfg, const Benchmark& bench,
                                const StyleAssets<T>* style) {
  RunSettingResult<T> result;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  MtkdDataView view;
  view.source = bench.source.train.get();
  bool unseen_visible_stage1 = false;

  switch (cfg.mode) {
    case RunMode::no_adaptation:
    case RunMode::source_free_like:
      tc.lambda_con = 0;
      tc.lambda_out = 0;
      view.targets = {bench.targets[0].train.get()};  // sampled only if lambdas > 0
      break;
    case RunMode::single_target: {
      const Dataset* t = find_train_set(bench, cfg.single_target);
      if (t == bench.source.train.get())
        throw ConfigError("single_target: target cannot be the source domain");
      view.targets = {t};
      unseen_visible_stage1 = (t == bench.unseen.train.get());
      break;
    }
    case RunMode::multi_target:
    case RunMode::utkd: {
      if (cfg.multi_targets.empty()) {
        for (const auto& t : bench.targets) view.targets.push_back(t.train.get());
      } else {
        for (const auto& name : cfg.multi_targets) {
          const Dataset* t = find_train_set(bench, name);
          view.targets.push_back(t);
          if (t == bench.unseen.train.get()) unseen_visible_stage1 = true;
        }
      }
      if (cfg.mode == RunMode::multi_target && cfg.multi_target_include_unseen) {
        view.targets.push_back(bench.unseen.train.get());
        unseen_visible_stage1 = true;
      }
      if (cfg.mode == RunMode::utkd && unseen_visible_stage1)
        throw IsolationError("utkd: the unseen domain cannot be a stage-1 target");
      break;
    }
  }

  bench.reset_reads();
  const StyleAssets<T>* stage1_style = nullptr;
  if (tc.use_style_transfer && tc.lambda_con > 0 &&
      tc.augmentation != AugmentKind::none) {
    if (!style)
      throw ConfigError("mode '" + std::string(to_string(cfg.mode)) +
                        "' requires style assets; train-mtstn first or set "
                        "use_style_transfer=false");
    stage1_style = style;
  } else {
    tc.use_style_transfer = false;
  }
  result.stage1 = std::make_unique<MtkdTrainer<T>>(view, tc, bench.class_count,
                                                   stage1_style);
  result.stage1->run_to_end();

  if (!unseen_visible_stage1 && bench.unseen.train->reads() != 0)
    throw IsolationError("stage 1 read the unseen domain in mode " +
                         std::string(to_string(cfg.mode)));

  const SegNet<T>* final_model = &result.stage1->teacher();
  long long final_iteration = result.stage1->iteration();

  if (cfg.mode == RunMode::utkd || cfg.mode == RunMode::source_free_like) {
    TrainConfig atc = cfg.train;
    atc.seed = cfg.seed;
    if (cfg.mode == RunMode::source_free_like) atc.lambda_out = 0;
    const uint64_t external_before = bench.external_reads();
    result.stage2 = std::make_unique<UtkdTrainer<T>>(
        result.stage1->teacher(), result.stage1->d_out(), *bench.unseen.train, atc);
    result.stage2->run_to_end();
    if (bench.external_reads() != external_before)
      throw IsolationError("stage 2 read source/target data");
    final_model = &result.stage2->teacher();
    final_iteration = result.stage2->iteration();
  }

  result.report = evaluate_all_domains(*final_model, bench, to_string(cfg.mode),
                                       cfg.seed, final_iteration);
  return result;
}

}  // namespace segadapt
