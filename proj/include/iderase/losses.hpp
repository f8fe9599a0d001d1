#pragma once

#include <vector>

#include "iderase/nn.hpp"

namespace iderase {

// Patch-level least-squares critic: stride-2 4x4 convs with leaky ReLU,
// then a 3x3 conv to a 1-channel raw score map (no sigmoid; the LSGAN
// objective operates on raw scores).
template <class T>
class Discriminator {
 public:
  Discriminator() = default;

  Discriminator(std::int64_t resolution, std::vector<std::int64_t> channels,
                Rng& rng)
      : resolution_(resolution), channels_(std::move(channels)) {
    check(!channels_.empty(), "discriminator: need at least one stage");
    std::int64_t side = resolution_;
    std::int64_t in_ch = 3;
    for (std::size_t s = 0; s < channels_.size(); ++s) {
      check(side % 2 == 0 && side >= 2,
            "discriminator: too many stages for resolution " +
                std::to_string(resolution_));
      stages_.emplace_back(ps_, "d" + std::to_string(s + 1), in_ch, channels_[s],
                           4, 2, 1, rng);
      in_ch = channels_[s];
      side /= 2;
    }
    score_ = Conv2d<T>(ps_, "score", in_ch, 1, 3, 1, 1, rng);
  }

  std::int64_t resolution() const { return resolution_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }

  Var<T> scores(const Var<T>& img) const {
    check(img->val.ndim() == 3 && img->val.dim(0) == 3,
          "discriminator: input must be 3xRxR");
    check(img->val.dim(1) == resolution_ && img->val.dim(2) == resolution_,
          "discriminator: input resolution mismatch");
    Var<T> h = img;
    for (const auto& st : stages_) h = leaky_relu(st(h), 0.2);
    return score_(h);
  }

 private:
  std::int64_t resolution_ = 0;
  std::vector<std::int64_t> channels_;
  ParamStore<T> ps_;
  std::vector<Conv2d<T>> stages_;
  Conv2d<T> score_;
};

// ---------------------------------------------------------------------------
// Loss terms
// ---------------------------------------------------------------------------

// Cosine similarity between source and protected embeddings; training
// minimizes it to push the protected identity away from the source.
template <class T>
Var<T> loss_deviate(const Var<T>& src_emb, const Var<T>& prot_emb) {
  return cosine(src_emb, prot_emb);
}

// Mean squared pixel error.
template <class T>
Var<T> loss_pixel(const Var<T>& src, const Var<T>& prot) {
  return mse(src, prot);
}

// Mean over feature layers of the mean-squared feature distance.
template <class T>
Var<T> loss_perceptual(const std::vector<Var<T>>& src_feats,
                       const std::vector<Var<T>>& prot_feats) {
  check(!src_feats.empty(), "perceptual loss: empty feature set");
  check(src_feats.size() == prot_feats.size(),
        "perceptual loss: tap count mismatch");
  std::vector<Var<T>> layers;
  layers.reserve(src_feats.size());
  for (std::size_t i = 0; i < src_feats.size(); ++i)
    layers.push_back(mse(src_feats[i], prot_feats[i]));
  return weighted_sum(layers,
                      std::vector<double>(layers.size(), 1.0 / layers.size()));
}

// Generator side of the LSGAN pair: E[(D(I_p) - 1)^2].
template <class T>
Var<T> loss_adv_generator(const Var<T>& prot_scores) {
  auto ones = make_leaf<T>(Tensor<T>::full(prot_scores->val.shape, T(1)));
  return mse(prot_scores, ones);
}

// Critic side: E[(D(I_s) - 1)^2] + E[D(I_p)^2].
template <class T>
Var<T> loss_discriminator(const Var<T>& src_scores, const Var<T>& prot_scores) {
  auto ones = make_leaf<T>(Tensor<T>::full(src_scores->val.shape, T(1)));
  auto zeros = make_leaf<T>(Tensor<T>::zeros(prot_scores->val.shape));
  return add(mse(src_scores, ones), mse(prot_scores, zeros));
}

struct LossWeights {
  double lambda_a = 0.2;   // adversarial
  double lambda_p = 0.5;   // pixel
  double lambda_l = 1.0;   // perceptual
  double lambda_d = 0.15;  // identity deviation

  void validate() const {
    for (double w : {lambda_a, lambda_p, lambda_l, lambda_d})
      check(std::isfinite(w) && w >= 0, "loss weights must be finite and >= 0");
  }
};

// lambda_a * L_adv + lambda_p * L_pixel + lambda_l * L_lpips + lambda_d * L_deviate.
// Rejects non-finite parts by name so a diverging run fails loudly.
template <class T>
Var<T> loss_total(const Var<T>& adv, const Var<T>& pixel, const Var<T>& lpips,
                  const Var<T>& deviate, const LossWeights& w) {
  w.validate();
  const char* names[] = {"L_adv", "L_pixel", "L_lpips", "L_deviate"};
  const Var<T>* parts[] = {&adv, &pixel, &lpips, &deviate};
  for (int i = 0; i < 4; ++i) {
    check((*parts[i])->val.numel() == 1, std::string(names[i]) + " is not scalar");
    if (!std::isfinite(static_cast<double>((*parts[i])->val.v[0])))
      throw RuntimeFailure(std::string("non-finite loss term: ") + names[i]);
  }
  return weighted_sum<T>({adv, pixel, lpips, deviate},
                         {w.lambda_a, w.lambda_p, w.lambda_l, w.lambda_d});
}

}  // namespace iderase
