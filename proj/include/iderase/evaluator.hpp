#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iderase/degradation.hpp"
#include "iderase/gallery.hpp"
#include "iderase/metrics.hpp"
#include "iderase/report.hpp"
#include "iderase/swap.hpp"
#include "iderase/trainer.hpp"

namespace iderase {

// Protects every face with its own clean embedding (the deployment path).
template <class T>
std::vector<Tensor<float>> protect_all(const Protector<T>& p,
                                       const Extractor<T>& ex,
                                       const std::vector<LabeledFace>& faces) {
  std::vector<Tensor<float>> out;
  out.reserve(faces.size());
  for (const auto& f : faces)
    out.push_back(p.protect(f.image, ex.extract(f.image, false)));
  return out;
}

// ---------------------------------------------------------------------------
// id: gallery identification + intra-identity similarity
// ---------------------------------------------------------------------------

struct IdentificationResult {
  double clean_top1 = 0, clean_top5 = 0;
  double prot_top1 = 0, prot_top5 = 0;
  double mean_sim_id = 0, mean_sim_pair = 0;
  std::int64_t probes = 0, excluded = 0;
  EvalReport report;
};

template <class T>
IdentificationResult eval_identification(const Protector<T>& protector,
                                         const Extractor<T>& ex,
                                         const std::vector<LabeledFace>& gallery_faces,
                                         const std::vector<LabeledFace>& probe_faces,
                                         std::uint64_t seed,
                                         std::uint64_t fingerprint) {
  check(!probe_faces.empty(), "id protocol: no probes");
  GalleryIndex gallery = GalleryIndex::build(gallery_faces, ex);

  std::vector<ProbeEmbedding> clean, prot;
  double sim_pair_acc = 0, sim_id_acc = 0;
  std::int64_t sim_id_n = 0;
  for (const auto& f : probe_faces) {
    Tensor<float> ce = ex.extract(f.image, false).template cast<float>();
    Tensor<float> pimg = protector.protect(f.image, ex.extract(f.image, false));
    Tensor<float> pe = ex.extract(pimg, false).template cast<float>();
    sim_pair_acc += detail::dot_f(ce, pe);
    double acc = 0;
    std::int64_t n = 0;
    for (const auto& e : gallery.entries)
      if (e.identity_id == f.identity_id) {
        acc += detail::dot_f(pe, e.emb);
        ++n;
      }
    if (n > 0) {
      sim_id_acc += acc / n;
      ++sim_id_n;
    }
    clean.push_back({f.identity_id, std::move(ce)});
    prot.push_back({f.identity_id, std::move(pe)});
  }

  IdentificationResult r;
  auto c1 = topk_accuracy(clean, gallery, 1);
  auto c5 = topk_accuracy(clean, gallery, 5);
  auto p1 = topk_accuracy(prot, gallery, 1);
  auto p5 = topk_accuracy(prot, gallery, 5);
  r.clean_top1 = c1.accuracy;
  r.clean_top5 = c5.accuracy;
  r.prot_top1 = p1.accuracy;
  r.prot_top5 = p5.accuracy;
  r.mean_sim_pair = sim_pair_acc / static_cast<double>(probe_faces.size());
  r.mean_sim_id = sim_id_n > 0 ? sim_id_acc / sim_id_n : 0.0;
  r.probes = c1.evaluated;
  r.excluded = c1.excluded;

  r.report.protocol = "id";
  r.report.fingerprint = fingerprint;
  r.report.seed = seed;
  r.report.columns = {"metric", "value"};
  r.report.add_row({"clean_top1", fmt_cell(r.clean_top1)});
  r.report.add_row({"clean_top5", fmt_cell(r.clean_top5)});
  r.report.add_row({"protected_top1", fmt_cell(r.prot_top1)});
  r.report.add_row({"protected_top5", fmt_cell(r.prot_top5)});
  r.report.add_row({"sim_id", fmt_cell(r.mean_sim_id)});
  r.report.add_row({"sim_pair", fmt_cell(r.mean_sim_pair)});
  r.report.add_row({"probes_evaluated", std::to_string(r.probes)});
  r.report.add_row({"probes_excluded", std::to_string(r.excluded)});
  return r;
}

// ---------------------------------------------------------------------------
// quality: fidelity of protected images
// ---------------------------------------------------------------------------

struct QualityResult {
  double psnr_mean = 0, ssim_mean = 0, perceptual_mean = 0, frechet = 0;
  std::int64_t pairs = 0;
  EvalReport report;
};

template <class T>
QualityResult eval_quality(const Protector<T>& protector, const Extractor<T>& ex,
                           const std::vector<LabeledFace>& probe_faces,
                           std::uint64_t seed, std::uint64_t fingerprint) {
  check(probe_faces.size() >= 2, "quality protocol: need at least 2 probes");
  QualityResult r;
  std::vector<Tensor<float>> feats_orig, feats_prot;
  for (const auto& f : probe_faces) {
    Tensor<float> pimg = protector.protect(f.image, ex.extract(f.image, false));
    r.psnr_mean += psnr(f.image, pimg);
    r.ssim_mean += ssim(f.image, pimg);
    r.perceptual_mean += perceptual_distance(ex, f.image, pimg);
    feats_orig.push_back(ex.penultimate(f.image, false).template cast<float>());
    feats_prot.push_back(ex.penultimate(pimg, false).template cast<float>());
    ++r.pairs;
  }
  r.psnr_mean /= r.pairs;
  r.ssim_mean /= r.pairs;
  r.perceptual_mean /= r.pairs;
  r.frechet = frechet_distance(feats_orig, feats_prot);

  r.report.protocol = "quality";
  r.report.fingerprint = fingerprint;
  r.report.seed = seed;
  r.report.columns = {"metric", "value"};
  r.report.add_row({"psnr_db", fmt_cell(r.psnr_mean)});
  r.report.add_row({"ssim", fmt_cell(r.ssim_mean)});
  r.report.add_row({"perceptual", fmt_cell(r.perceptual_mean)});
  // Feature-space Frechet over this library's extractor - not Inception-FID.
  r.report.add_row({"frechet_extractor_features", fmt_cell(r.frechet)});
  r.report.add_row({"pairs", std::to_string(r.pairs)});
  return r;
}

// ---------------------------------------------------------------------------
// swap: defense transfer to face-swap proxies
// ---------------------------------------------------------------------------

struct SwapDefenseRow {
  std::string variant;
  double baseline = 0;  // cos(extract(swap_clean), extract(source))
  double pair_sim = 0;  // cos(extract(swap_clean), extract(swap_protected))
  double p_score = 0;   // cos(extract(source), extract(swap_protected))
  std::int64_t pairs = 0;
};

struct SwapDefenseResult {
  std::vector<SwapDefenseRow> per_model;
  EvalReport report;
};

template <class T>
SwapDefenseResult eval_swap_defense(const Protector<T>& protector,
                                    const Extractor<T>& ex,
                                    const std::vector<const SwapModel<T>*>& models,
                                    const std::vector<LabeledFace>& source_faces,
                                    const std::vector<LabeledFace>& target_faces,
                                    std::uint64_t seed, std::uint64_t fingerprint) {
  check(!models.empty(), "swap protocol: no swap models");
  check(!source_faces.empty() && !target_faces.empty(),
        "swap protocol: need sources and targets");
  for (const auto& s : source_faces)
    for (const auto& t : target_faces)
      check(s.identity_id != t.identity_id,
            "swap protocol: sources and targets must be identity-disjoint");

  std::vector<Tensor<float>> protecteds = protect_all(protector, ex, source_faces);
  std::vector<Tensor<float>> src_embs;
  for (const auto& s : source_faces)
    src_embs.push_back(ex.extract(s.image, false).template cast<float>());

  SwapDefenseResult out;
  out.report.protocol = "swap";
  out.report.fingerprint = fingerprint;
  out.report.seed = seed;
  out.report.columns = {"variant", "baseline_transfer", "swap_pair_sim",
                        "p_score", "pairs"};
  for (const SwapModel<T>* m : models) {
    SwapDefenseRow row;
    row.variant = m->variant();
    for (std::size_t i = 0; i < source_faces.size(); ++i) {
      const auto& tgt = target_faces[i % target_faces.size()];
      Tensor<float> swap_o = m->swap(source_faces[i].image, tgt.image);
      Tensor<float> swap_p = m->swap(protecteds[i], tgt.image);
      Tensor<float> eo = ex.extract(swap_o, false).template cast<float>();
      Tensor<float> ep = ex.extract(swap_p, false).template cast<float>();
      row.baseline += detail::dot_f(eo, src_embs[i]);
      row.pair_sim += detail::dot_f(eo, ep);
      row.p_score += detail::dot_f(src_embs[i], ep);
      ++row.pairs;
    }
    row.baseline /= row.pairs;
    row.pair_sim /= row.pairs;
    row.p_score /= row.pairs;
    out.report.add_row({row.variant, fmt_cell(row.baseline), fmt_cell(row.pair_sim),
                        fmt_cell(row.p_score), std::to_string(row.pairs)});
    out.per_model.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// robust: identification stability under image degradations
// ---------------------------------------------------------------------------

struct RobustnessResult {
  double none_top1 = 0;
  // aggregate protected top-1 per degradation kind (probes split evenly
  // across the kind's grid by sample order)
  std::map<std::string, double> kind_top1;
  std::vector<EvalReport> per_kind;  // one report per kind incl. per-value rows
  EvalReport summary;
};

template <class T>
RobustnessResult eval_robustness(const Protector<T>& protector,
                                 const Extractor<T>& ex,
                                 const std::vector<LabeledFace>& gallery_faces,
                                 const std::vector<LabeledFace>& probe_faces,
                                 std::uint64_t seed, std::uint64_t fingerprint,
                                 const std::vector<DegradationSpec>& sweep =
                                     DegradationSpec::standard_sweep()) {
  check(!probe_faces.empty(), "robust protocol: no probes");
  GalleryIndex gallery = GalleryIndex::build(gallery_faces, ex);
  std::vector<Tensor<float>> protecteds = protect_all(protector, ex, probe_faces);

  RobustnessResult out;
  out.summary.protocol = "robust";
  out.summary.fingerprint = fingerprint;
  out.summary.seed = seed;
  out.summary.columns = {"kind", "top1", "delta_vs_none", "evaluated"};

  for (std::size_t ki = 0; ki < sweep.size(); ++ki) {
    const auto& spec = sweep[ki];
    spec.validate();
    const std::string kind = degradation_name(spec.kind);
    const auto g = static_cast<std::int64_t>(spec.grid.size());

    EvalReport rep;
    rep.protocol = "robust-" + kind;
    rep.fingerprint = fingerprint;
    rep.seed = seed;
    rep.columns = {"kind", "value", "top1", "evaluated"};

    std::vector<std::int64_t> hits(std::max<std::int64_t>(g, 1), 0),
        counts(std::max<std::int64_t>(g, 1), 0);
    std::int64_t total_hits = 0, total_eval = 0;
    for (std::size_t pi = 0; pi < probe_faces.size(); ++pi) {
      const std::int64_t cell = g > 0 ? static_cast<std::int64_t>(pi) % g : 0;
      Rng noise = derive_rng(seed, "degrade-noise", static_cast<std::uint64_t>(ki),
                             static_cast<std::uint64_t>(pi));
      Tensor<float> img =
          spec.kind == DegradationKind::None
              ? protecteds[pi]
              : apply_degradation(protecteds[pi], spec.kind, spec.grid[cell], noise);
      std::vector<ProbeEmbedding> one;
      one.push_back({probe_faces[pi].identity_id,
                     ex.extract(img, false).template cast<float>()});
      auto res = topk_accuracy(one, gallery, 1);
      if (res.evaluated == 0) continue;
      hits[cell] += res.hits;
      counts[cell] += 1;
      total_hits += res.hits;
      total_eval += 1;
    }

    const double agg = total_eval > 0 ? static_cast<double>(total_hits) / total_eval : 0;
    if (spec.kind == DegradationKind::None) {
      out.none_top1 = agg;
      rep.add_row({kind, "-", fmt_cell(agg), std::to_string(total_eval)});
    } else {
      for (std::int64_t c = 0; c < g; ++c) {
        const double v = counts[c] > 0 ? static_cast<double>(hits[c]) / counts[c] : 0;
        rep.add_row({kind, fmt_cell(spec.grid[c]), fmt_cell(v),
                     std::to_string(counts[c])});
      }
      rep.add_row({kind, "all", fmt_cell(agg), std::to_string(total_eval)});
    }
    out.kind_top1[kind] = agg;
    out.per_kind.push_back(std::move(rep));
  }

  for (const auto& spec : sweep) {
    const std::string kind = degradation_name(spec.kind);
    out.summary.add_row({kind, fmt_cell(out.kind_top1.at(kind)),
                         fmt_cell(out.kind_top1.at(kind) - out.none_top1),
                         std::to_string(static_cast<std::int64_t>(
                             spec.kind == DegradationKind::None
                                 ? probe_faces.size()
                                 : probe_faces.size()))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// alpha: fidelity / erasure trade-off sweep
// ---------------------------------------------------------------------------

struct AlphaRow {
  double alpha = 0;
  double psnr_db = 0, ssim_v = 0, perceptual = 0;
  double prot_top1 = 0, sim_pair = 0;
};

struct AlphaSweepResult {
  std::vector<AlphaRow> rows;
  EvalReport report;
};

// Fine-tunes the base checkpoint at each alpha (optimizer state restored, a
// few extra epochs at the new perturbation strength), then evaluates quality
// and identification. Each alpha gets its own run subdirectory.
template <class T>
AlphaSweepResult eval_alpha_sweep(const std::string& base_ckpt,
                                  const std::vector<double>& alphas,
                                  std::int64_t finetune_epochs,
                                  const Extractor<T>& ex,
                                  const std::vector<LabeledFace>& train_faces,
                                  const std::vector<LabeledFace>& gallery_faces,
                                  const std::vector<LabeledFace>& probe_faces,
                                  const std::filesystem::path& out_dir,
                                  std::uint64_t seed, std::uint64_t fingerprint) {
  check(!alphas.empty(), "alpha protocol: empty grid");
  check(finetune_epochs >= 0, "alpha protocol: negative finetune epochs");
  for (double a : alphas) check(a >= 0, "alpha protocol: negative alpha");

  AlphaSweepResult out;
  out.report.protocol = "alpha";
  out.report.fingerprint = fingerprint;
  out.report.seed = seed;
  out.report.columns = {"alpha", "psnr_db", "ssim", "perceptual",
                        "protected_top1", "sim_pair"};
  for (double a : alphas) {
    ArchiveReader reader(base_ckpt);
    Protector<T> p = Protector<T>::load(reader);
    p.set_alpha(a);
    p.set_epochs(p.epoch() + finetune_epochs);
    Trainer<T> tr(p, ex);
    tr.restore_optimizer(reader);
    if (finetune_epochs > 0) {
      char tag[32];
      std::snprintf(tag, sizeof(tag), "alpha_%g", a);
      run_training(tr, train_faces, out_dir / tag);
    }
    auto q = eval_quality(p, ex, probe_faces, seed, fingerprint);
    auto id = eval_identification(p, ex, gallery_faces, probe_faces, seed, fingerprint);
    AlphaRow row;
    row.alpha = a;
    row.psnr_db = q.psnr_mean;
    row.ssim_v = q.ssim_mean;
    row.perceptual = q.perceptual_mean;
    row.prot_top1 = id.prot_top1;
    row.sim_pair = id.mean_sim_pair;
    out.report.add_row({fmt_cell(a), fmt_cell(row.psnr_db), fmt_cell(row.ssim_v),
                        fmt_cell(row.perceptual), fmt_cell(row.prot_top1),
                        fmt_cell(row.sim_pair)});
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace iderase
