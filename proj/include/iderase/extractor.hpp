#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "iderase/dataset.hpp"
#include "iderase/nn.hpp"
#include "iderase/serialize.hpp"

namespace iderase {

// Frozen identity-embedding network. Two backends share the interface: a
// stack of stride-2 conv stages, global average pooling, and a linear head
// whose output is L2-normalized. Intermediate stage activations double as
// the perceptual feature taps.
template <class T>
class Extractor {
 public:
  Extractor() = default;

  Extractor(const std::string& backend_id, std::int64_t d_f,
            std::int64_t resolution, Rng& rng)
      : backend_id_(backend_id), d_f_(d_f), resolution_(resolution) {
    check(d_f > 0, "extractor: d_f must be positive");
    check(resolution > 0 && resolution % 4 == 0,
          "extractor: resolution must be a positive multiple of 4");
    if (backend_id == "base") {
      channels_ = {16, 32, 64, 128};
    } else if (backend_id == "alt") {
      channels_ = {24, 48, 96};
    } else {
      throw ValidationError("unknown extractor backend: " + backend_id);
    }
    std::int64_t in_ch = 3;
    for (std::size_t s = 0; s < channels_.size(); ++s) {
      stages_.emplace_back(ps_, "s" + std::to_string(s + 1), in_ch, channels_[s],
                           3, 2, 1, rng);
      in_ch = channels_[s];
    }
    head_ = Linear<T>(ps_, "head", in_ch, d_f, rng);
    // taps: every stage except the last
    for (std::size_t s = 0; s + 1 < channels_.size(); ++s)
      tap_points_.push_back("s" + std::to_string(s + 1));
  }

  const std::string& backend_id() const { return backend_id_; }
  std::int64_t d_f() const { return d_f_; }
  std::int64_t resolution() const { return resolution_; }
  const std::vector<std::string>& tap_points() const { return tap_points_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }
  bool frozen() const { return frozen_; }

  void freeze() {
    ps_.freeze();
    frozen_ = true;
  }

  // Differentiable unit-norm embedding of a CHW image variable.
  Var<T> embed(const Var<T>& img) const {
    return l2_normalize(head_(penultimate_var(img)));
  }

  // Pooled trunk output (pre-head); the feature the Fréchet metric uses.
  Var<T> penultimate_var(const Var<T>& img) const {
    check_input(img->val);
    Var<T> h = img;
    for (const auto& st : stages_) h = relu(st(h));
    return global_avg_pool(h);
  }

  // Perceptual tap activations, ordered by depth.
  std::vector<Var<T>> taps(const Var<T>& img) const {
    check_input(img->val);
    std::vector<Var<T>> out;
    Var<T> h = img;
    for (std::size_t s = 0; s + 1 < stages_.size(); ++s) {
      h = relu(stages_[s](h));
      out.push_back(h);
    }
    return out;
  }

  Var<T> tap_by_name(const Var<T>& img, const std::string& name) const {
    for (std::size_t s = 0; s < tap_points_.size(); ++s)
      if (tap_points_[s] == name) return taps(img)[s];
    throw ValidationError("unknown tap point: " + name);
  }

  // -- tensor-in / tensor-out inference (resizes when permitted) --

  Tensor<T> extract(const Tensor<float>& img, bool allow_resize = true) const {
    return embed(make_leaf<T>(prep(img, allow_resize)))->val;
  }

  std::vector<Tensor<T>> trunk_features(const Tensor<float>& img,
                                        bool allow_resize = true) const {
    std::vector<Tensor<T>> out;
    for (auto& t : taps(make_leaf<T>(prep(img, allow_resize)))) out.push_back(t->val);
    return out;
  }

  Tensor<T> penultimate(const Tensor<float>& img, bool allow_resize = true) const {
    return penultimate_var(make_leaf<T>(prep(img, allow_resize)))->val;
  }

  // -- persistence --

  void save(const std::filesystem::path& path) const {
    ArchiveWriter w;
    w.put_meta("kind", "extractor");
    w.put_meta("backend_id", backend_id_);
    w.put_meta("d_f", std::to_string(d_f_));
    w.put_meta("resolution", std::to_string(resolution_));
    std::string taps_joined;
    for (std::size_t i = 0; i < tap_points_.size(); ++i)
      taps_joined += (i ? "," : "") + tap_points_[i];
    w.put_meta("tap_points", taps_joined);
    for (const auto& [name, var] : ps_.items()) w.put_tensor(name, var->val);
    w.save(path);
  }

  static Extractor load(const std::filesystem::path& path) {
    ArchiveReader r(path);
    if (r.meta("kind") != "extractor")
      throw RuntimeFailure("checkpoint is not an extractor: " + path.string());
    Rng rng(0);
    Extractor e(r.meta("backend_id"), std::stoll(r.meta("d_f")),
                std::stoll(r.meta("resolution")), rng);
    for (auto& [name, var] : e.ps_.items()) {
      Tensor<T> t = r.tensor<T>(name);
      check(t.same_shape(var->val), "extractor checkpoint shape mismatch: " + name);
      var->val = std::move(t);
    }
    e.freeze();
    return e;
  }

 private:
  void check_input(const Tensor<T>& img) const {
    check(img.ndim() == 3 && img.dim(0) == 3, "extractor: input must be 3xRxR");
    check(img.dim(1) == resolution_ && img.dim(2) == resolution_,
          "extractor: input resolution " + std::to_string(img.dim(1)) +
              " does not match expected " + std::to_string(resolution_));
  }

  Tensor<T> prep(const Tensor<float>& img, bool allow_resize) const {
    check(img.ndim() == 3 && img.dim(0) == 3, "extractor: input must be 3xRxR");
    Tensor<float> sized = img;
    if (img.dim(1) != resolution_ || img.dim(2) != resolution_) {
      check(allow_resize, "extractor: input resolution mismatch and internal "
                          "resize disabled");
      sized = bilinear_resize(img, resolution_, resolution_);
    }
    if constexpr (std::is_same_v<T, float>) return sized;
    else return sized.template cast<T>();
  }

  std::string backend_id_;
  std::int64_t d_f_ = 0, resolution_ = 0;
  std::vector<std::int64_t> channels_;
  ParamStore<T> ps_;
  std::vector<Conv2d<T>> stages_;
  Linear<T> head_;
  std::vector<std::string> tap_points_;
  bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Extractor training (margin softmax over training identities)
// ---------------------------------------------------------------------------

struct ExtractorTrainReport {
  double intra = 0, inter = 0;  // held-out cosine means
  double final_loss = 0;
};

// Trains a backend on the identities in `train_faces` with an additive
// cosine margin, validates the separation margin on held-out samples, and
// returns the frozen extractor. Throws ThresholdError (with the achieved
// margins) if intra < inter + 0.3.
template <class T>
Extractor<T> train_extractor(const std::vector<LabeledFace>& train_faces,
                             std::int64_t d_f, std::int64_t epochs,
                             std::uint64_t seed,
                             const std::string& backend_id = "base",
                             std::int64_t resolution = 0,
                             ExtractorTrainReport* report = nullptr) {
  check(!train_faces.empty(), "train_extractor: empty input");
  if (resolution == 0) resolution = train_faces.front().image.dim(1);

  // identity -> label, grouped sample indices
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < train_faces.size(); ++i)
    groups[train_faces[i].identity_id].push_back(i);
  check(groups.size() >= 2, "train_extractor: need at least 2 identities, got " +
                                std::to_string(groups.size()));

  std::vector<std::string> identities;
  for (const auto& [id, v] : groups) identities.push_back(id);
  std::map<std::string, std::int64_t> label_of;
  for (std::size_t i = 0; i < identities.size(); ++i)
    label_of[identities[i]] = static_cast<std::int64_t>(i);

  // Per-identity held-out samples for the margin check.
  std::vector<std::size_t> train_idx, held_idx;
  for (const auto& [identity, idxs] : groups) {
    std::vector<std::size_t> order = idxs;
    Rng r = derive_rng(seed, "extractor-holdout", fnv1a(identity));
    r.shuffle(order.begin(), order.end());
    std::size_t n_hold = order.size() >= 4 ? std::max<std::size_t>(1, order.size() / 10)
                                           : (order.size() >= 2 ? 1 : 0);
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_hold ? held_idx : train_idx).push_back(order[i]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(held_idx.begin(), held_idx.end());

  Rng init_rng = derive_rng(seed, "extractor-init");
  Extractor<T> ex(backend_id, d_f, resolution, init_rng);

  Rng head_rng = derive_rng(seed, "extractor-classhead");
  auto n_classes = static_cast<std::int64_t>(identities.size());
  auto class_w = make_leaf<T>(
      init::fan_in_uniform<T>({n_classes, d_f}, d_f, head_rng), true);

  std::vector<Var<T>> all_params = ex.params().vars();
  all_params.push_back(class_w);
  Adam<T> opt(all_params, 1e-3, 0.9, 0.999);

  const double margin = 0.2, scale = 16.0;
  const std::int64_t batch = 16;
  double last_loss = 0;
  for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    Rng sh = derive_rng(seed, "extractor-shuffle", static_cast<std::uint64_t>(epoch));
    sh.shuffle(order.begin(), order.end());
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      std::size_t b1 = std::min(order.size(), b0 + batch);
      opt.zero_grad();
      double batch_loss = 0;
      for (std::size_t i = b0; i < b1; ++i) {
        const LabeledFace& f = train_faces[order[i]];
        auto img = make_leaf<T>(f.image.template cast<T>());
        auto emb = ex.embed(img);
        auto cosines = linear(emb, l2_normalize_rows(class_w), Var<T>{});
        std::int64_t label = label_of.at(f.identity_id);
        Tensor<T> onehot = Tensor<T>::zeros({n_classes});
        onehot.v[label] = T(1);
        auto logits = mul_scalar(
            axpy(cosines, make_leaf<T>(std::move(onehot)), -margin), scale);
        auto loss = softmax_cross_entropy(logits, label);
        batch_loss += static_cast<double>(loss->val.v[0]);
        backward(loss, static_cast<T>(1.0 / static_cast<double>(b1 - b0)));
      }
      last_loss = batch_loss / static_cast<double>(b1 - b0);
      if (!std::isfinite(last_loss))
        throw RuntimeFailure("extractor training diverged (non-finite loss)");
      opt.step();
    }
  }
  ex.freeze();

  // Margin check: held-out vs training-set embeddings.
  std::vector<Tensor<T>> train_emb(train_faces.size());
  auto emb_of = [&](std::size_t i) -> const Tensor<T>& {
    if (train_emb[i].numel() == 0)
      train_emb[i] = ex.extract(train_faces[i].image);
    return train_emb[i];
  };
  auto cos_of = [](const Tensor<T>& a, const Tensor<T>& b) {
    double s = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
      s += static_cast<double>(a.v[i]) * static_cast<double>(b.v[i]);
    return s;  // embeddings are unit-norm
  };
  double intra = 0, inter = 0;
  std::int64_t n_intra = 0, n_inter = 0;
  for (auto hi : held_idx) {
    const auto& he = emb_of(hi);
    for (auto ti : train_idx) {
      double c = cos_of(he, emb_of(ti));
      if (train_faces[hi].identity_id == train_faces[ti].identity_id) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  }
  check(n_intra > 0 && n_inter > 0,
        "train_extractor: not enough samples for the margin check");
  intra /= n_intra;
  inter /= n_inter;
  if (report) *report = {intra, inter, last_loss};
  if (intra < inter + 0.3) {
    std::ostringstream os;
    os << "extractor separation margin not reached: intra-identity cosine "
       << intra << " < inter-identity cosine " << inter << " + 0.3";
    throw ThresholdError(os.str());
  }
  return ex;
}

}  // namespace iderase
