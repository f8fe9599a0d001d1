#pragma once

#include <string>
#include <vector>

#include "iderase/dataset.hpp"
#include "iderase/extractor.hpp"
#include "iderase/losses.hpp"
#include "iderase/serialize.hpp"

namespace iderase {

// Minimal identity-injection face swapper: a conv encoder over the target
// (content pathway), an additive broadcast of the source identity embedding
// at the bottleneck, and a conv decoder. The source enters ONLY through its
// embedding — never through pixels. Two variants ship with different fusion
// depths: "shallow" fuses at R/4, "deep" at R/8.
template <class T>
class SwapModel {
 public:
  SwapModel() = default;

  SwapModel(const std::string& variant, const Extractor<T>& extractor, Rng& rng)
      : variant_(variant), ex_(&extractor), r_(extractor.resolution()) {
    const std::int64_t depth = depth_for(variant);
    check(r_ % (std::int64_t(1) << depth) == 0,
          "swap: resolution incompatible with variant depth");
    static const std::int64_t plan[] = {3, 32, 64, 96};
    for (std::int64_t s = 0; s < depth; ++s)
      enc_.emplace_back(ps_, "enc" + std::to_string(s + 1), plan[s], plan[s + 1],
                        3, 2, 1, rng);
    const std::int64_t cb = plan[depth];
    fuse_w3_ = ps_.add("fuse.w3", init::fan_in_uniform<T>(
                                     {ex_->d_f(), ex_->d_f()}, ex_->d_f(), rng));
    fuse_w4_ = ps_.add("fuse.w4",
                       init::fan_in_uniform<T>({cb, ex_->d_f()}, ex_->d_f(), rng));
    mix_ = Conv2d<T>(ps_, "mix", cb, cb, 3, 1, 1, rng);
    for (std::int64_t s = depth; s > 0; --s) {
      const std::int64_t ci = plan[s];
      const std::int64_t co = s >= 2 ? plan[s - 1] : 32;
      dec_.emplace_back(ps_, "dec" + std::to_string(depth - s + 1), ci, co, 2, 2,
                        0, rng);
    }
    out_ = Conv2d<T>(ps_, "out", 32, 3, 3, 1, 1, rng);
  }

  static std::int64_t depth_for(const std::string& variant) {
    if (variant == "shallow") return 2;
    if (variant == "deep") return 3;
    throw ValidationError("unknown swap variant: " + variant +
                          " (expected shallow|deep)");
  }

  const std::string& variant() const { return variant_; }
  std::int64_t resolution() const { return r_; }
  const Extractor<T>& extractor() const { return *ex_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }

  // Differentiable pathway used in training: target pixels + source embedding.
  Var<T> swap_var(const Var<T>& target, const Var<T>& src_emb) const {
    check(target->val.ndim() == 3 && target->val.dim(0) == 3 &&
              target->val.dim(1) == r_ && target->val.dim(2) == r_,
          "swap: target must be 3xRxR at the model resolution");
    Var<T> h = target;
    for (const auto& e : enc_) h = relu(e(h));
    auto inject = linear(relu(linear(src_emb, fuse_w3_, Var<T>{})), fuse_w4_,
                         Var<T>{});
    h = broadcast_add_channels(h, inject);
    h = relu(mix_(h));
    for (const auto& d : dec_) h = relu(d(h));
    return tanh_op(out_(h));
  }

  // Inference: extracts the source identity, injects it into the target.
  Tensor<float> swap(const Tensor<float>& source, const Tensor<float>& target) const {
    Tensor<T> emb = ex_->extract(source, /*allow_resize=*/false);
    auto out = swap_var(make_leaf<T>(target.template cast<T>()), make_leaf<T>(emb));
    return out->val.template cast<float>();
  }

  void save(const std::string& path) const {
    ArchiveWriter w;
    w.put_meta("kind", "swap-ckpt");
    w.put_meta("variant", variant_);
    w.put_meta("resolution", std::to_string(r_));
    w.put_meta("d_f", std::to_string(ex_->d_f()));
    w.put_meta("extractor_backend", ex_->backend_id());
    for (const auto& [n, v] : ps_.items()) w.put_tensor(n, v->val);
    w.save(path);
  }

  static SwapModel<T> load(const std::string& path, const Extractor<T>& extractor) {
    ArchiveReader r(path);
    check(r.has_meta("kind") && r.meta("kind") == "swap-ckpt",
          "not a swap checkpoint");
    check(std::stoll(r.meta("resolution")) == extractor.resolution(),
          "swap checkpoint resolution does not match extractor");
    check(std::stoll(r.meta("d_f")) == extractor.d_f(),
          "swap checkpoint embedding width does not match extractor");
    check(r.meta("extractor_backend") == extractor.backend_id(),
          "swap checkpoint was trained with a different extractor backend");
    Rng tmp(0);
    SwapModel<T> m(r.meta("variant"), extractor, tmp);
    for (const auto& [n, v] : m.ps_.items()) {
      Tensor<T> t = r.template tensor<T>(n);
      check(t.shape == v->val.shape, "swap checkpoint shape mismatch for " + n);
      v->val = std::move(t);
    }
    return m;
  }

 private:
  std::string variant_;
  const Extractor<T>* ex_ = nullptr;
  std::int64_t r_ = 0;
  ParamStore<T> ps_;
  std::vector<Conv2d<T>> enc_;
  Var<T> fuse_w3_, fuse_w4_;
  Conv2d<T> mix_;
  std::vector<ConvTranspose2d<T>> dec_;
  Conv2d<T> out_;
};

struct SwapTrainReport {
  double identity_cos = 0;  // held-out mean cos(extract(out), extract(src))
  double out_tgt_mse = 0;   // held-out structure: output vs target pixels
  double out_src_mse = 0;   // held-out structure: output vs source pixels
  std::int64_t pairs = 0;
};

// Trains a proxy on the train split with three terms per sample:
//   reconstruction  mse(swap(src->src), src)
//   structure       mse(swap(src->tgt), tgt) for a random cross target
//   identity        1 - cos(embed(out), embed(src)) on both passes
// Post-condition: held-out cross-pair identity transfer >= 0.7, else a
// threshold error reporting the achieved numbers.
template <class T>
SwapModel<T> train_swap(const std::vector<LabeledFace>& train_faces,
                        const Extractor<T>& extractor, std::int64_t epochs,
                        std::uint64_t seed, const std::string& variant = "shallow",
                        SwapTrainReport* report = nullptr) {
  check(extractor.frozen(), "train_swap: extractor must be frozen");
  check(epochs >= 1, "train_swap: epochs must be >= 1");
  std::set<std::string> ids;
  for (const auto& f : train_faces) {
    check_face_image(f.image);
    check(f.image.dim(1) == extractor.resolution(),
          "train_swap: image resolution mismatch for sample " + f.sample_id);
    ids.insert(f.identity_id);
  }
  check(ids.size() >= 2, "train_swap: need at least 2 identities");

  // Per-identity holdout for the post-training transfer check.
  std::map<std::string, std::vector<std::int64_t>> by_id;
  for (std::size_t i = 0; i < train_faces.size(); ++i)
    by_id[train_faces[i].identity_id].push_back(static_cast<std::int64_t>(i));
  std::vector<std::int64_t> fit_idx, held_idx;
  for (auto& [id, idxs] : by_id) {
    Rng r = derive_rng(seed, "swap-holdout", fnv1a(id));
    r.shuffle(idxs.begin(), idxs.end());
    const std::int64_t n_held =
        idxs.size() >= 4 ? std::max<std::int64_t>(1, idxs.size() / 10) : 1;
    check(static_cast<std::int64_t>(idxs.size()) > n_held,
          "train_swap: identity " + id + " has too few samples");
    for (std::size_t k = 0; k < idxs.size(); ++k)
      (k < static_cast<std::size_t>(n_held) ? held_idx : fit_idx).push_back(idxs[k]);
  }
  std::sort(fit_idx.begin(), fit_idx.end());
  std::sort(held_idx.begin(), held_idx.end());

  Rng init_rng = derive_rng(seed, "swap-init", fnv1a(variant));
  SwapModel<T> model(variant, extractor, init_rng);
  Adam<T> opt(model.params().vars(), 1e-3, 0.9, 0.999);

  std::map<std::int64_t, Tensor<T>> emb_cache;
  for (std::int64_t i : fit_idx)
    emb_cache[i] = extractor.extract(train_faces[i].image, false);

  constexpr double kWRec = 1.0, kWStruct = 0.25, kWId = 0.75;
  const std::int64_t batch = 16;
  const auto n = static_cast<std::int64_t>(fit_idx.size());
  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::int64_t> order = fit_idx;
    Rng sh = derive_rng(seed, "swap-shuffle", static_cast<std::uint64_t>(epoch));
    sh.shuffle(order.begin(), order.end());
    for (std::int64_t begin = 0; begin < n; begin += batch) {
      const std::int64_t end = std::min(n, begin + batch);
      const double inv_b = 1.0 / static_cast<double>(end - begin);
      opt.zero_grad();
      double acc = 0;
      for (std::int64_t k = begin; k < end; ++k) {
        const LabeledFace& src = train_faces[order[k]];
        Rng pair_rng = derive_rng(seed, "swap-pair",
                                  static_cast<std::uint64_t>(step),
                                  static_cast<std::uint64_t>(k - begin));
        std::int64_t other = order[k];
        if (n > 1) {
          const std::int64_t j = static_cast<std::int64_t>(
              pair_rng.uniform_index(static_cast<std::uint64_t>(n)));
          other = fit_idx[j];
          if (other == order[k]) other = fit_idx[(j + 1) % n];
        }
        const LabeledFace& tgt = train_faces[other];

        auto src_img = make_leaf<T>(src.image.template cast<T>());
        auto tgt_img = make_leaf<T>(tgt.image.template cast<T>());
        auto emb = make_leaf<T>(emb_cache.at(order[k]));
        auto one = make_leaf<T>(Tensor<T>::scalar(T(1)));

        auto out_self = model.swap_var(src_img, emb);
        auto out_cross = model.swap_var(tgt_img, emb);
        auto id_self = sub(one, cosine(extractor.embed(out_self), emb));
        auto id_cross = sub(one, cosine(extractor.embed(out_cross), emb));
        auto loss = weighted_sum<T>(
            {mse(out_self, src_img), mse(out_cross, tgt_img), id_self, id_cross},
            {kWRec, kWStruct, kWId / 2, kWId / 2});
        backward(loss, static_cast<T>(inv_b));
        acc += static_cast<double>(loss->val.v[0]) * inv_b;
      }
      if (!std::isfinite(acc))
        throw RuntimeFailure("train_swap: non-finite loss at step " +
                             std::to_string(step));
      opt.step();
      ++step;
    }
  }

  // Held-out identity-transfer check on cross-identity pairs.
  SwapTrainReport rep;
  const auto h = static_cast<std::int64_t>(held_idx.size());
  for (std::int64_t k = 0; k < h; ++k) {
    const LabeledFace& src = train_faces[held_idx[k]];
    std::int64_t t = (k + 1) % h;
    while (train_faces[held_idx[t]].identity_id == src.identity_id && t != k)
      t = (t + 1) % h;
    if (train_faces[held_idx[t]].identity_id == src.identity_id) continue;
    const LabeledFace& tgt = train_faces[held_idx[t]];
    Tensor<float> out = model.swap(src.image, tgt.image);
    Tensor<T> out_emb = extractor.extract(out, false);
    Tensor<T> src_emb = extractor.extract(src.image, false);
    double dot = 0;
    for (std::int64_t j = 0; j < out_emb.numel(); ++j)
      dot += static_cast<double>(out_emb.v[j]) * static_cast<double>(src_emb.v[j]);
    rep.identity_cos += dot;
    double m_t = 0, m_s = 0;
    for (std::int64_t j = 0; j < out.numel(); ++j) {
      const double dt = out.v[j] - tgt.image.v[j];
      const double ds = out.v[j] - src.image.v[j];
      m_t += dt * dt;
      m_s += ds * ds;
    }
    rep.out_tgt_mse += m_t / out.numel();
    rep.out_src_mse += m_s / out.numel();
    rep.pairs += 1;
  }
  check(rep.pairs > 0, "train_swap: no cross-identity held-out pairs");
  rep.identity_cos /= rep.pairs;
  rep.out_tgt_mse /= rep.pairs;
  rep.out_src_mse /= rep.pairs;
  if (report) *report = rep;
  if (rep.identity_cos < 0.7) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "swap proxy failed identity transfer: held-out cos %.4f < "
                  "0.70 (structure mse to target %.4f, to source %.4f)",
                  rep.identity_cos, rep.out_tgt_mse, rep.out_src_mse);
    throw ThresholdError(buf);
  }
  return model;
}

}  // namespace iderase
