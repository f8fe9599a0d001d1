#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "iderase/dataset.hpp"
#include "iderase/extractor.hpp"

namespace iderase {

struct GalleryEntry {
  std::string identity_id;
  std::string sample_id;
  Tensor<float> emb;  // unit-norm
};

// Enrolled database of clean identity embeddings.
struct GalleryIndex {
  std::string backend_id;
  std::vector<GalleryEntry> entries;

  template <class T>
  static GalleryIndex build(const std::vector<LabeledFace>& gallery_faces,
                            const Extractor<T>& ex) {
    check(!gallery_faces.empty(), "gallery: no enrolled images");
    GalleryIndex g;
    g.backend_id = ex.backend_id();
    g.entries.reserve(gallery_faces.size());
    for (const auto& f : gallery_faces) {
      Tensor<T> e = ex.extract(f.image, false);
      g.entries.push_back({f.identity_id, f.sample_id, e.template cast<float>()});
    }
    return g;
  }

  std::vector<std::string> identity_ids() const {
    std::vector<std::string> ids;
    for (const auto& e : entries)
      if (std::find(ids.begin(), ids.end(), e.identity_id) == ids.end())
        ids.push_back(e.identity_id);
    return ids;
  }
};

struct ProbeEmbedding {
  std::string identity_id;
  Tensor<float> emb;
};

struct TopkResult {
  double accuracy = 0;        // over evaluated probes
  std::int64_t hits = 0;
  std::int64_t evaluated = 0;
  std::int64_t excluded = 0;  // probes whose identity is absent from the gallery
};

namespace detail {

inline double dot_f(const Tensor<float>& a, const Tensor<float>& b) {
  check(a.numel() == b.numel(), "embedding width mismatch");
  double s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    s += static_cast<double>(a.v[i]) * static_cast<double>(b.v[i]);
  return s;
}

}  // namespace detail

// Fraction of probes whose true identity ranks among the k best gallery
// candidates by cosine similarity. Candidates are identities by default (each
// identity scored by its best-matching gallery sample); sample_level ranks raw
// gallery samples instead. Ties break by stable entry order. Probes whose
// identity has no gallery enrollment are excluded from the rate and counted.
inline TopkResult topk_accuracy(const std::vector<ProbeEmbedding>& probes,
                                const GalleryIndex& gallery, std::int64_t k,
                                bool sample_level = false) {
  check(k >= 1, "topk: k must be >= 1");
  check(!gallery.entries.empty(), "topk: empty gallery");

  // identity -> first-entry order and presence lookup
  std::vector<std::string> id_order = gallery.identity_ids();

  TopkResult res;
  for (const auto& probe : probes) {
    const bool enrolled =
        std::find(id_order.begin(), id_order.end(), probe.identity_id) !=
        id_order.end();
    if (!enrolled) {
      ++res.excluded;
      continue;
    }
    ++res.evaluated;

    bool hit = false;
    if (sample_level) {
      // Rank individual gallery samples; hit if any of the k best belongs to
      // the probe's identity.
      std::vector<std::pair<double, std::size_t>> scored(gallery.entries.size());
      for (std::size_t i = 0; i < gallery.entries.size(); ++i)
        scored[i] = {detail::dot_f(probe.emb, gallery.entries[i].emb), i};
      std::stable_sort(scored.begin(), scored.end(),
                       [](const auto& a, const auto& b) {
                         if (a.first != b.first) return a.first > b.first;
                         return a.second < b.second;
                       });
      const auto kk = std::min<std::size_t>(k, scored.size());
      for (std::size_t i = 0; i < kk && !hit; ++i)
        hit = gallery.entries[scored[i].second].identity_id == probe.identity_id;
    } else {
      // Aggregate to identity scores: best-matching sample per identity.
      std::vector<double> best(id_order.size(),
                               -std::numeric_limits<double>::infinity());
      for (const auto& e : gallery.entries) {
        const auto pos = static_cast<std::size_t>(
            std::find(id_order.begin(), id_order.end(), e.identity_id) -
            id_order.begin());
        best[pos] = std::max(best[pos], detail::dot_f(probe.emb, e.emb));
      }
      std::vector<std::pair<double, std::size_t>> scored(id_order.size());
      for (std::size_t i = 0; i < id_order.size(); ++i) scored[i] = {best[i], i};
      std::stable_sort(scored.begin(), scored.end(),
                       [](const auto& a, const auto& b) {
                         if (a.first != b.first) return a.first > b.first;
                         return a.second < b.second;
                       });
      const auto kk = std::min<std::size_t>(k, scored.size());
      for (std::size_t i = 0; i < kk && !hit; ++i)
        hit = id_order[scored[i].second] == probe.identity_id;
    }
    if (hit) ++res.hits;
  }
  res.accuracy =
      res.evaluated > 0 ? static_cast<double>(res.hits) / res.evaluated : 0.0;
  return res;
}

// Mean cosine between a protected image and clean images of the same identity.
template <class T>
double sim_id(const Tensor<float>& protected_img,
              const std::vector<const Tensor<float>*>& clean_same_identity,
              const Extractor<T>& ex) {
  check(!clean_same_identity.empty(), "sim_id: empty clean set");
  Tensor<float> p = ex.extract(protected_img, false).template cast<float>();
  double acc = 0;
  for (const auto* c : clean_same_identity) {
    Tensor<float> e = ex.extract(*c, false).template cast<float>();
    acc += detail::dot_f(p, e);
  }
  return acc / clean_same_identity.size();
}

// Cosine between an image and its protected counterpart.
template <class T>
double sim_pair(const Tensor<float>& original, const Tensor<float>& protected_img,
                const Extractor<T>& ex) {
  Tensor<float> a = ex.extract(original, false).template cast<float>();
  Tensor<float> b = ex.extract(protected_img, false).template cast<float>();
  return detail::dot_f(a, b);
}

}  // namespace iderase
