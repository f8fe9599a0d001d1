#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iderase/config.hpp"
#include "iderase/dataset.hpp"
#include "iderase/extractor.hpp"
#include "iderase/fpm.hpp"
#include "iderase/frg.hpp"
#include "iderase/interference.hpp"
#include "iderase/losses.hpp"
#include "iderase/serialize.hpp"

namespace iderase {

namespace detail {

inline std::string fmt_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::vector<std::int64_t> parse_i64_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::string cur;
  auto flush = [&] {
    check(!cur.empty(), "empty entry in integer list: '" + s + "'");
    std::size_t pos = 0;
    std::int64_t v = std::stoll(cur, &pos);
    check(pos == cur.size(), "bad integer in list: '" + cur + "'");
    out.push_back(v);
    cur.clear();
  };
  for (char c : s) {
    if (c == ',')
      flush();
    else if (!std::isspace(static_cast<unsigned char>(c)))
      cur += c;
  }
  if (!cur.empty()) flush();
  check(!out.empty(), "empty integer list");
  return out;
}

inline std::string join_i64_list(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

// Temporarily drops the requires-grad flag on a set of parameter stores so
// forwards through them build no backprop closures (e.g. the generator during
// a discriminator update).
template <class T>
class ScopedFreeze {
 public:
  explicit ScopedFreeze(std::initializer_list<ParamStore<T>*> stores) {
    for (auto* s : stores)
      for (auto& v : s->vars())
        if (v->needs_grad) {
          v->needs_grad = false;
          restore_.push_back(v);
        }
  }
  ~ScopedFreeze() {
    for (auto& v : restore_) v->needs_grad = true;
  }
  ScopedFreeze(const ScopedFreeze&) = delete;
  ScopedFreeze& operator=(const ScopedFreeze&) = delete;

 private:
  std::vector<Var<T>> restore_;
};

}  // namespace detail

struct TrainConfig {
  std::int64_t epochs = 20;
  std::int64_t batch_size = 16;
  double lr_gen = 2e-4;
  double lr_fpm = 0;   // 0 -> lr_gen / 2
  double lr_disc = 0;  // 0 -> lr_gen
  double beta1 = 0.5;
  double beta2 = 0.999;
  double alpha = 0.05;
  LossWeights weights;
  std::int64_t disc_period = 2;
  std::uint64_t seed = 1;
  std::int64_t resolution = 64;
  std::int64_t d_f = 128;
  std::int64_t d_h = 0;   // 0 -> 2 * d_f
  std::int64_t d_hp = 0;  // 0 -> d_f
  std::int64_t frg_c1 = 32;
  std::int64_t frg_c2 = 64;
  std::int64_t frg_window = 4;
  std::vector<std::int64_t> disc_channels = {32, 64, 128, 256};
  InterferenceSpec interference;

  double resolved_lr_fpm() const { return lr_fpm > 0 ? lr_fpm : lr_gen / 2; }
  double resolved_lr_disc() const { return lr_disc > 0 ? lr_disc : lr_gen; }
  std::int64_t resolved_d_h() const { return d_h > 0 ? d_h : 2 * d_f; }
  std::int64_t resolved_d_hp() const { return d_hp > 0 ? d_hp : d_f; }

  void validate() const {
    check(epochs >= 0, "epochs must be >= 0");
    check(batch_size >= 1, "batch_size must be >= 1");
    check(lr_gen > 0 && resolved_lr_fpm() > 0 && resolved_lr_disc() > 0,
          "learning rates must be positive");
    check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
          "adam betas must lie in [0,1)");
    check(alpha >= 0, "alpha must be >= 0");
    check(disc_period >= 1, "disc_period must be >= 1");
    check(resolution > 0 && resolution % 4 == 0,
          "resolution must be a positive multiple of 4");
    check(d_f >= 1 && resolved_d_h() >= 1 && resolved_d_hp() >= 1,
          "embedding widths must be >= 1");
    check(frg_c1 >= 1 && frg_c2 >= 1 && frg_window >= 1,
          "generator channel plan invalid");
    check(!disc_channels.empty(), "disc_channels must be non-empty");
    weights.validate();
    interference.validate();
  }

  // Every tunable, flat key=value. The same keys are accepted in run config
  // files and stored in checkpoints, so a checkpoint fully describes its run.
  std::vector<std::pair<std::string, std::string>> to_items() const {
    using detail::fmt_g17;
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {
        {"epochs", std::to_string(epochs)},
        {"batch_size", std::to_string(batch_size)},
        {"lr_gen", fmt_g17(lr_gen)},
        {"lr_fpm", fmt_g17(lr_fpm)},
        {"lr_disc", fmt_g17(lr_disc)},
        {"beta1", fmt_g17(beta1)},
        {"beta2", fmt_g17(beta2)},
        {"alpha", fmt_g17(alpha)},
        {"lambda_adv", fmt_g17(weights.lambda_a)},
        {"lambda_pixel", fmt_g17(weights.lambda_p)},
        {"lambda_lpips", fmt_g17(weights.lambda_l)},
        {"lambda_deviate", fmt_g17(weights.lambda_d)},
        {"disc_period", std::to_string(disc_period)},
        {"seed", std::to_string(seed)},
        {"resolution", std::to_string(resolution)},
        {"d_f", std::to_string(d_f)},
        {"d_h", std::to_string(d_h)},
        {"d_hp", std::to_string(d_hp)},
        {"frg_c1", std::to_string(frg_c1)},
        {"frg_c2", std::to_string(frg_c2)},
        {"frg_window", std::to_string(frg_window)},
        {"disc_channels", detail::join_i64_list(disc_channels)},
        {"tfm_crop", b(interference.crop)},
        {"tfm_rotation", b(interference.rotation)},
        {"tfm_flip", b(interference.flip)},
        {"tfm_resize", b(interference.resize)},
        {"tfm_blur", b(interference.blur)},
        {"tfm_prob", fmt_g17(interference.prob)},
        {"tfm_crop_keep_min", fmt_g17(interference.crop_keep_min)},
        {"tfm_crop_keep_max", fmt_g17(interference.crop_keep_max)},
        {"tfm_rotation_max_deg", fmt_g17(interference.rotation_max_deg)},
        {"tfm_resize_min", fmt_g17(interference.resize_min)},
        {"tfm_resize_max", fmt_g17(interference.resize_max)},
        {"tfm_blur_sigma_min", fmt_g17(interference.blur_sigma_min)},
        {"tfm_blur_sigma_max", fmt_g17(interference.blur_sigma_max)},
    };
  }

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = [] {
      std::set<std::string> k;
      for (const auto& [key, value] : TrainConfig().to_items()) k.insert(key);
      return k;
    }();
    return keys;
  }

  static TrainConfig from_config(const Config& c) {
    TrainConfig t;
    t.epochs = c.get_i64("epochs", t.epochs);
    t.batch_size = c.get_i64("batch_size", t.batch_size);
    t.lr_gen = c.get_f64("lr_gen", t.lr_gen);
    t.lr_fpm = c.get_f64("lr_fpm", t.lr_fpm);
    t.lr_disc = c.get_f64("lr_disc", t.lr_disc);
    t.beta1 = c.get_f64("beta1", t.beta1);
    t.beta2 = c.get_f64("beta2", t.beta2);
    t.alpha = c.get_f64("alpha", t.alpha);
    t.weights.lambda_a = c.get_f64("lambda_adv", t.weights.lambda_a);
    t.weights.lambda_p = c.get_f64("lambda_pixel", t.weights.lambda_p);
    t.weights.lambda_l = c.get_f64("lambda_lpips", t.weights.lambda_l);
    t.weights.lambda_d = c.get_f64("lambda_deviate", t.weights.lambda_d);
    t.disc_period = c.get_i64("disc_period", t.disc_period);
    t.seed = static_cast<std::uint64_t>(c.get_i64("seed", static_cast<std::int64_t>(t.seed)));
    t.resolution = c.get_i64("resolution", t.resolution);
    t.d_f = c.get_i64("d_f", t.d_f);
    t.d_h = c.get_i64("d_h", t.d_h);
    t.d_hp = c.get_i64("d_hp", t.d_hp);
    t.frg_c1 = c.get_i64("frg_c1", t.frg_c1);
    t.frg_c2 = c.get_i64("frg_c2", t.frg_c2);
    t.frg_window = c.get_i64("frg_window", t.frg_window);
    if (c.has("disc_channels"))
      t.disc_channels = detail::parse_i64_list(c.get_str("disc_channels"));
    t.interference.crop = c.get_bool("tfm_crop", t.interference.crop);
    t.interference.rotation = c.get_bool("tfm_rotation", t.interference.rotation);
    t.interference.flip = c.get_bool("tfm_flip", t.interference.flip);
    t.interference.resize = c.get_bool("tfm_resize", t.interference.resize);
    t.interference.blur = c.get_bool("tfm_blur", t.interference.blur);
    t.interference.prob = c.get_f64("tfm_prob", t.interference.prob);
    t.interference.crop_keep_min =
        c.get_f64("tfm_crop_keep_min", t.interference.crop_keep_min);
    t.interference.crop_keep_max =
        c.get_f64("tfm_crop_keep_max", t.interference.crop_keep_max);
    t.interference.rotation_max_deg =
        c.get_f64("tfm_rotation_max_deg", t.interference.rotation_max_deg);
    t.interference.resize_min = c.get_f64("tfm_resize_min", t.interference.resize_min);
    t.interference.resize_max = c.get_f64("tfm_resize_max", t.interference.resize_max);
    t.interference.blur_sigma_min =
        c.get_f64("tfm_blur_sigma_min", t.interference.blur_sigma_min);
    t.interference.blur_sigma_max =
        c.get_f64("tfm_blur_sigma_max", t.interference.blur_sigma_max);
    t.validate();
    return t;
  }
};

// The protected-image generator bundle: perturbation MLP + reviving
// generator + least-squares critic, with run bookkeeping.
template <class T>
class Protector {
 public:
  Protector() = default;

  explicit Protector(const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rf = derive_rng(cfg_.seed, "init-fpm");
    fpm_ = Fpm<T>(cfg_.d_f, cfg_.resolved_d_h(), rf);
    Rng rg = derive_rng(cfg_.seed, "init-frg");
    frg_ = Frg<T>(cfg_.d_f, cfg_.resolution, cfg_.frg_c1, cfg_.frg_c2,
                  cfg_.frg_window, cfg_.resolved_d_hp(), rg);
    Rng rd = derive_rng(cfg_.seed, "init-disc");
    disc_ = Discriminator<T>(cfg_.resolution, cfg_.disc_channels, rd);
  }

  const TrainConfig& cfg() const { return cfg_; }
  Fpm<T>& fpm() { return fpm_; }
  const Fpm<T>& fpm() const { return fpm_; }
  Frg<T>& frg() { return frg_; }
  const Frg<T>& frg() const { return frg_; }
  Discriminator<T>& disc() { return disc_; }
  const Discriminator<T>& disc() const { return disc_; }

  std::int64_t step() const { return step_; }
  std::int64_t epoch() const { return epoch_; }
  void set_step(std::int64_t s) { step_ = s; }
  void set_epoch(std::int64_t e) { epoch_ = e; }

  // Used by the alpha-sweep protocol: fine-tune the same weights at a
  // different perturbation strength for a few extra epochs.
  void set_alpha(double a) {
    check(a >= 0, "alpha must be >= 0");
    cfg_.alpha = a;
  }

  void set_epochs(std::int64_t e) {
    check(e >= 0, "epochs must be >= 0");
    cfg_.epochs = e;
  }

  // Full protection forward: perturb the source embedding, regenerate.
  Var<T> protect_var(const Var<T>& image, const Var<T>& src_emb) const {
    return frg_.revive(image, fpm_.perturb(src_emb, cfg_.alpha));
  }

  Tensor<float> protect(const Tensor<float>& image, const Tensor<T>& src_emb) const {
    check_face_image(image);
    check(image.dim(1) == cfg_.resolution,
          "protect: image resolution does not match the trained model");
    auto out = protect_var(make_leaf<T>(image.template cast<T>()),
                           make_leaf<T>(src_emb));
    return out->val.template cast<float>();
  }

  void save_params(ArchiveWriter& w) const {
    w.put_meta("kind", "protector-ckpt");
    w.put_meta("step", std::to_string(step_));
    w.put_meta("epoch", std::to_string(epoch_));
    for (const auto& [k, v] : cfg_.to_items()) w.put_meta("cfg." + k, v);
    for (const auto& [n, v] : fpm_.params().items()) w.put_tensor("fpm." + n, v->val);
    for (const auto& [n, v] : frg_.params().items()) w.put_tensor("frg." + n, v->val);
    for (const auto& [n, v] : disc_.params().items()) w.put_tensor("disc." + n, v->val);
  }

  static Protector<T> load(const ArchiveReader& r) {
    check(r.has_meta("kind") && r.meta("kind") == "protector-ckpt",
          "not a protector checkpoint");
    Config c;
    for (const auto& k : TrainConfig::known_keys())
      if (r.has_meta("cfg." + k)) c.set(k, r.meta("cfg." + k));
    Protector<T> p(TrainConfig::from_config(c));
    auto assign = [&r](const std::string& prefix, ParamStore<T>& ps) {
      for (const auto& [n, v] : ps.items()) {
        Tensor<T> t = r.template tensor<T>(prefix + n);
        check(t.shape == v->val.shape,
              "checkpoint tensor shape mismatch for " + prefix + n);
        v->val = std::move(t);
      }
    };
    assign("fpm.", p.fpm_.params());
    assign("frg.", p.frg_.params());
    assign("disc.", p.disc_.params());
    p.step_ = std::stoll(r.meta("step"));
    p.epoch_ = std::stoll(r.meta("epoch"));
    return p;
  }

  static Protector<T> load(const std::string& path) {
    return load(ArchiveReader(path));
  }

 private:
  TrainConfig cfg_;
  Fpm<T> fpm_;
  Frg<T> frg_;
  Discriminator<T> disc_;
  std::int64_t step_ = 0;
  std::int64_t epoch_ = 0;
};

struct LossRecord {
  std::int64_t step = 0;
  double l_adv = 0, l_dis = 0, l_pixel = 0, l_lpips = 0, l_deviate = 0, l_total = 0;
};

inline std::string format_loss_row(const LossRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%" PRId64 ",%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.step, r.l_adv,
                r.l_dis, r.l_pixel, r.l_lpips, r.l_deviate, r.l_total);
  return buf;
}

constexpr const char* kLossCsvHeader =
    "step,L_adv,L_dis,L_pixel,L_lpips,L_deviate,L_total";

// Joint optimization driver. One train_step runs, in order:
//   1. on scheduled steps (step % disc_period == 0): a critic update on
//      real/protected pairs, with the generator side frozen (protected images
//      enter the critic loss as constants);
//   2. a generator update of FPM + FRG on the weighted total loss, through the
//      frozen extractor and a fresh interference draw per sample.
// Gradients are accumulated sample-by-sample (backward seeded with 1/B), so
// peak memory holds a single-sample graph.
template <class T>
class Trainer {
 public:
  Trainer(Protector<T>& protector, const Extractor<T>& extractor)
      : p_(&protector), ex_(&extractor), cfg_(protector.cfg()) {
    check(ex_->frozen(), "trainer: extractor must be frozen");
    check(ex_->d_f() == cfg_.d_f,
          "trainer: extractor embedding width does not match d_f");
    check(ex_->resolution() == cfg_.resolution,
          "trainer: extractor resolution does not match run resolution");
    opt_fpm_ = Adam<T>(p_->fpm().params().vars(), cfg_.resolved_lr_fpm(),
                       cfg_.beta1, cfg_.beta2);
    opt_frg_ = Adam<T>(p_->frg().params().vars(), cfg_.lr_gen, cfg_.beta1,
                       cfg_.beta2);
    opt_disc_ = Adam<T>(p_->disc().params().vars(), cfg_.resolved_lr_disc(),
                        cfg_.beta1, cfg_.beta2);
  }

  Protector<T>& protector() { return *p_; }
  const TrainConfig& cfg() const { return cfg_; }
  const LossRecord& last_record() const { return last_record_; }

  // Precomputes source embeddings and perceptual taps once per run; both are
  // constants of the frozen extractor.
  void build_caches(const std::vector<LabeledFace>& faces) {
    emb_cache_.clear();
    tap_cache_.clear();
    for (const auto& f : faces) {
      auto img = make_leaf<T>(f.image.template cast<T>());
      emb_cache_[f.sample_id] = ex_->embed(img)->val;
      std::vector<Tensor<T>> taps;
      for (const auto& t : ex_->taps(img)) taps.push_back(t->val);
      tap_cache_[f.sample_id] = std::move(taps);
    }
  }

  LossRecord train_step(const std::vector<const LabeledFace*>& batch) {
    check(!batch.empty(), "train_step: empty batch");
    const std::int64_t step = p_->step();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const T bw = static_cast<T>(inv_b);

    double l_dis_val = last_l_dis_;
    const bool disc_turn = (step % cfg_.disc_period == 0);
    if (disc_turn) {
      opt_disc_.zero_grad();
      double acc = 0;
      {
        detail::ScopedFreeze<T> freeze_gen(
            {&p_->fpm().params(), &p_->frg().params()});
        for (const LabeledFace* f : batch) {
          auto img = make_leaf<T>(f->image.template cast<T>());
          auto emb = make_leaf<T>(source_embedding(*f));
          auto prot = p_->protect_var(img, emb);  // constant: generator frozen
          auto ld = loss_discriminator(p_->disc().scores(img),
                                       p_->disc().scores(prot));
          backward(ld, bw);
          acc += static_cast<double>(ld->val.v[0]) * inv_b;
        }
      }
      abort_if_not_finite(acc, "L_dis", step);
      opt_disc_.step();
      l_dis_val = acc;
      last_l_dis_ = acc;
    }

    opt_fpm_.zero_grad();
    opt_frg_.zero_grad();
    double a_adv = 0, a_pix = 0, a_lpips = 0, a_dev = 0, a_tot = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const LabeledFace& f = *batch[i];
      auto img = make_leaf<T>(f.image.template cast<T>());
      auto emb = make_leaf<T>(source_embedding(f));
      auto prot = p_->protect_var(img, emb);

      Rng tfm_rng = derive_rng(cfg_.seed, "tfm", static_cast<std::uint64_t>(step),
                               static_cast<std::uint64_t>(i));
      auto tfm = sample_transform(cfg_.interference, tfm_rng, cfg_.resolution);
      auto prot_emb = ex_->embed(apply_transform(tfm, prot));

      auto l_dev = loss_deviate(emb, prot_emb);
      auto l_pix = loss_pixel(img, prot);
      std::vector<Var<T>> src_feats;
      for (const auto& t : source_taps(f)) src_feats.push_back(make_leaf<T>(t));
      auto l_lp = loss_perceptual(src_feats, ex_->taps(prot));
      auto l_adv = loss_adv_generator(p_->disc().scores(prot));

      Var<T> l_tot;
      try {
        l_tot = loss_total(l_adv, l_pix, l_lp, l_dev, cfg_.weights);
      } catch (const RuntimeFailure& e) {
        throw RuntimeFailure(std::string(e.what()) + " at step " +
                             std::to_string(step) + "; last finite record: " +
                             format_loss_row(last_record_));
      }
      backward(l_tot, bw);

      a_adv += static_cast<double>(l_adv->val.v[0]) * inv_b;
      a_pix += static_cast<double>(l_pix->val.v[0]) * inv_b;
      a_lpips += static_cast<double>(l_lp->val.v[0]) * inv_b;
      a_dev += static_cast<double>(l_dev->val.v[0]) * inv_b;
      a_tot += static_cast<double>(l_tot->val.v[0]) * inv_b;
    }
    abort_if_not_finite(a_tot, "L_total", step);
    opt_fpm_.step();
    opt_frg_.step();
    // The generator pass leaks adversarial gradients into the critic's
    // parameters; they are cleared by zero_grad at its next scheduled update.

    p_->set_step(step + 1);
    last_record_ = LossRecord{step, a_adv, l_dis_val, a_pix, a_lpips, a_dev, a_tot};
    return last_record_;
  }

  void save_checkpoint(const std::string& path) const {
    ArchiveWriter w;
    p_->save_params(w);
    w.put_meta("last_l_dis", detail::fmt_g17(last_l_dis_));
    save_opt(w, "opt.fpm.", opt_fpm_, p_->fpm().params());
    save_opt(w, "opt.frg.", opt_frg_, p_->frg().params());
    save_opt(w, "opt.disc.", opt_disc_, p_->disc().params());
    w.save(path);
  }

  // Restores optimizer moments + step counters from a checkpoint written by
  // save_checkpoint; the protector itself is restored via Protector::load.
  void restore_optimizer(const ArchiveReader& r) {
    if (r.has_meta("last_l_dis")) last_l_dis_ = std::stod(r.meta("last_l_dis"));
    last_record_ = LossRecord{};
    load_opt(r, "opt.fpm.", opt_fpm_, p_->fpm().params());
    load_opt(r, "opt.frg.", opt_frg_, p_->frg().params());
    load_opt(r, "opt.disc.", opt_disc_, p_->disc().params());
  }

 private:
  Tensor<T> source_embedding(const LabeledFace& f) const {
    auto it = emb_cache_.find(f.sample_id);
    if (it != emb_cache_.end()) return it->second;
    return ex_->extract(f.image, /*allow_resize=*/false);
  }

  std::vector<Tensor<T>> source_taps(const LabeledFace& f) const {
    auto it = tap_cache_.find(f.sample_id);
    if (it != tap_cache_.end()) return it->second;
    std::vector<Tensor<T>> taps;
    for (const auto& t : ex_->taps(make_leaf<T>(f.image.template cast<T>())))
      taps.push_back(t->val);
    return taps;
  }

  void abort_if_not_finite(double v, const char* term, std::int64_t step) const {
    if (std::isfinite(v)) return;
    throw RuntimeFailure(std::string("non-finite loss term: ") + term +
                         " at step " + std::to_string(step) +
                         "; last finite record: " + format_loss_row(last_record_));
  }

  static void save_opt(ArchiveWriter& w, const std::string& prefix,
                       const Adam<T>& opt, const ParamStore<T>& ps) {
    auto& m1 = const_cast<Adam<T>&>(opt).moments1();
    auto& m2 = const_cast<Adam<T>&>(opt).moments2();
    const auto& items = ps.items();
    check(m1.size() == items.size(), "optimizer/parameter count mismatch");
    w.put_meta(prefix + "t", std::to_string(opt.step_count()));
    for (std::size_t i = 0; i < items.size(); ++i) {
      w.put_tensor(prefix + items[i].first + ".m1", m1[i]);
      w.put_tensor(prefix + items[i].first + ".m2", m2[i]);
    }
  }

  static void load_opt(const ArchiveReader& r, const std::string& prefix,
                       Adam<T>& opt, const ParamStore<T>& ps) {
    auto& m1 = opt.moments1();
    auto& m2 = opt.moments2();
    const auto& items = ps.items();
    check(m1.size() == items.size(), "optimizer/parameter count mismatch");
    opt.set_step_count(std::stoll(r.meta(prefix + "t")));
    for (std::size_t i = 0; i < items.size(); ++i) {
      Tensor<double> t1 = r.template tensor<double>(prefix + items[i].first + ".m1");
      Tensor<double> t2 = r.template tensor<double>(prefix + items[i].first + ".m2");
      check(t1.shape == m1[i].shape && t2.shape == m2[i].shape,
            "optimizer moment shape mismatch for " + prefix + items[i].first);
      m1[i] = std::move(t1);
      m2[i] = std::move(t2);
    }
  }

  Protector<T>* p_ = nullptr;
  const Extractor<T>* ex_ = nullptr;
  TrainConfig cfg_;
  Adam<T> opt_fpm_, opt_frg_, opt_disc_;
  double last_l_dis_ = 0;
  LossRecord last_record_;
  std::map<std::string, Tensor<T>> emb_cache_;
  std::map<std::string, std::vector<Tensor<T>>> tap_cache_;
};

// Epoch loop over the train split: derives a fresh shuffle per epoch, steps
// over batches (last partial batch included), appends one CSV row per step,
// and writes ckpt_epoch_<n>.bin after each completed epoch. Resuming from a
// checkpoint mid-run continues the schedule exactly where it stopped.
template <class T>
void run_training(Trainer<T>& tr, const std::vector<LabeledFace>& faces,
                  const std::filesystem::path& run_dir) {
  const TrainConfig& cfg = tr.cfg();
  check(!faces.empty(), "training requires a non-empty train split");
  for (const auto& f : faces) {
    check_face_image(f.image);
    check(f.image.dim(1) == cfg.resolution,
          "train image resolution mismatch for sample " + f.sample_id);
  }
  Protector<T>& p = tr.protector();
  check(p.epoch() <= cfg.epochs, "checkpoint epoch exceeds configured epochs");

  std::filesystem::create_directories(run_dir);
  const auto csv_path = run_dir / "losses.csv";
  const bool fresh = p.step() == 0 || !std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, fresh ? std::ios::trunc : std::ios::app);
  check(csv.good(), "cannot open loss log: " + csv_path.string());
  if (fresh) csv << kLossCsvHeader << "\n";

  tr.build_caches(faces);
  const auto n = static_cast<std::int64_t>(faces.size());
  for (std::int64_t epoch = p.epoch(); epoch < cfg.epochs; ++epoch) {
    std::vector<std::int64_t> order(n);
    for (std::int64_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng =
        derive_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    for (std::int64_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::int64_t end = std::min(n, begin + cfg.batch_size);
      std::vector<const LabeledFace*> batch;
      batch.reserve(end - begin);
      for (std::int64_t i = begin; i < end; ++i)
        batch.push_back(&faces[order[i]]);
      csv << format_loss_row(tr.train_step(batch)) << "\n";
      csv.flush();
    }
    p.set_epoch(epoch + 1);
    tr.save_checkpoint(
        (run_dir / ("ckpt_epoch_" + std::to_string(epoch + 1) + ".bin")).string());
  }
}

}  // namespace iderase
