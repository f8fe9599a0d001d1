// Command-line front end: dataset generation, extractor/protector/swap-proxy
// training, batch protection, and the evaluation protocols. Every command
// honors --seed; artifacts land in self-contained run directories.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iderase/iderase.hpp"

namespace fs = std::filesystem;
using namespace iderase;

namespace {

using F = float;

std::uint64_t train_config_fingerprint(const TrainConfig& cfg) {
  Config c;
  for (const auto& [k, v] : cfg.to_items()) c.set(k, v);
  return c.fingerprint();
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

void write_config_snapshot(const TrainConfig& cfg, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  std::ofstream out(run_dir / "config.snapshot", std::ios::trunc);
  check(out.good(), "cannot write config snapshot");
  out << "# fingerprint=" << fingerprint_hex(train_config_fingerprint(cfg)) << "\n";
  for (const auto& [k, v] : cfg.to_items()) out << k << "=" << v << "\n";
  check(out.good(), "config snapshot write failed");
}

std::vector<double> parse_alpha_grid(const std::string& s) {
  std::vector<double> out;
  std::string cur;
  auto flush = [&] {
    check(!cur.empty(), "empty entry in --alpha-grid");
    std::size_t pos = 0;
    out.push_back(std::stod(cur, &pos));
    check(pos == cur.size(), "bad alpha value: " + cur);
    cur.clear();
  };
  for (char c : s) {
    if (c == ',')
      flush();
    else if (!std::isspace(static_cast<unsigned char>(c)))
      cur += c;
  }
  if (!cur.empty()) flush();
  check(!out.empty(), "--alpha-grid is empty");
  return out;
}

struct SplitFaces {
  DatasetManifest manifest;
  std::vector<LabeledFace> train, gallery, probe, target;
};

SplitFaces load_splits(const fs::path& manifest_path, std::int64_t resolution) {
  SplitFaces s;
  s.manifest = parse_manifest(manifest_path);
  auto faces = load_dataset(manifest_path, resolution);
  s.train = select_split(faces, s.manifest, "train");
  s.gallery = select_split(faces, s.manifest, "gallery");
  s.probe = select_split(faces, s.manifest, "probe");
  s.target = select_split(faces, s.manifest, "target");
  return s;
}

void plot_losses_csv(const fs::path& csv_path, const fs::path& png_path) {
  std::ifstream in(csv_path);
  check(in.good(), "cannot read loss log: " + csv_path.string());
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "empty loss log");
  std::vector<std::string> names = {"L_adv",   "L_dis",     "L_pixel",
                                    "L_lpips", "L_deviate", "L_total"};
  std::vector<plot::Series> series(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) series[i].label = names[i];
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> cells;
    std::string cur;
    for (char c : line + ",") {
      if (c == ',') {
        cells.push_back(std::stod(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (cells.size() != 7) continue;
    for (std::size_t i = 0; i < names.size(); ++i) {
      series[i].xs.push_back(cells[0]);
      series[i].ys.push_back(cells[i + 1]);
    }
  }
  if (series[0].xs.empty()) return;  // vacuous run: nothing to plot
  fs::create_directories(png_path.parent_path());
  plot::render_line_plot(series, "training losses", "step", "loss", png_path);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct MakeDatasetArgs {
  std::string out;
  std::int64_t identities = 36;
  std::int64_t samples = 20;
  std::int64_t resolution = 64;
  std::int64_t target_identities = 4;
  double train_fraction = 0.5;
  double gallery_fraction = 0.5;
  std::uint64_t seed = 1;
};

void cmd_make_dataset(const MakeDatasetArgs& a) {
  auto faces = make_synthetic_identities(a.identities, a.samples, a.resolution, a.seed);
  DatasetManifest m = compose_manifest(faces, a.train_fraction, a.gallery_fraction,
                                       a.target_identities, a.seed);
  const fs::path root(a.out);
  fs::create_directories(root);
  write_face_pngs(faces, root);
  m.root = root;
  write_manifest(m, root / "manifest.tsv");
  std::map<std::string, std::int64_t> counts;
  for (const auto& e : m.entries) counts[e.split]++;
  std::cout << "dataset written to " << root.string() << "\n";
  for (const auto& [split, n] : counts)
    std::cout << "  " << split << ": " << n << " samples\n";
}

struct TrainExtractorArgs {
  std::string manifest, out;
  std::string backend = "base";
  std::int64_t d_f = 128;
  std::int64_t epochs = 12;
  std::int64_t resolution = 64;
  std::uint64_t seed = 1;
};

void cmd_train_extractor(const TrainExtractorArgs& a) {
  auto s = load_splits(a.manifest, a.resolution);
  check(!s.train.empty(), "manifest has no train split");
  ExtractorTrainReport rep;
  Extractor<F> ex = train_extractor<F>(s.train, a.d_f, a.epochs, a.seed,
                                       a.backend, a.resolution, &rep);
  fs::create_directories(fs::path(a.out).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(a.out).parent_path());
  ex.save(a.out);
  std::cout << "extractor saved to " << a.out << "\n";
  std::cout << "  held-out intra-identity cosine: " << rep.intra << "\n";
  std::cout << "  held-out inter-identity cosine: " << rep.inter << "\n";
}

struct TrainArgs {
  std::string config, manifest, extractor, out, resume;
  std::int64_t seed_override = -1;
  std::int64_t resolution_override = -1;
};

void cmd_train(const TrainArgs& a) {
  Extractor<F> ex = Extractor<F>::load(a.extractor);

  Protector<F> p;
  if (!a.resume.empty()) {
    ArchiveReader reader(a.resume);
    p = Protector<F>::load(reader);
    auto s = load_splits(a.manifest, p.cfg().resolution);
    check(ex.d_f() == p.cfg().d_f, "extractor does not match checkpoint d_f");
    Trainer<F> tr(p, ex);
    tr.restore_optimizer(reader);
    write_config_snapshot(p.cfg(), a.out);
    run_training(tr, s.train, a.out);
  } else {
    check(!a.config.empty(), "train: --config is required (or --resume)");
    Config c = Config::load(a.config);
    c.require_known(TrainConfig::known_keys());
    TrainConfig cfg = TrainConfig::from_config(c);
    if (a.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed_override);
    if (a.resolution_override > 0) cfg.resolution = a.resolution_override;
    cfg.validate();
    auto s = load_splits(a.manifest, cfg.resolution);
    p = Protector<F>(cfg);
    Trainer<F> tr(p, ex);
    write_config_snapshot(cfg, a.out);
    run_training(tr, s.train, a.out);
  }
  plot_losses_csv(fs::path(a.out) / "losses.csv",
                  fs::path(a.out) / "plots" / "losses.png");
  std::cout << "run complete: " << p.step() << " steps, " << p.epoch()
            << " epochs -> " << a.out << "\n";
}

struct TrainSwapArgs {
  std::string manifest, extractor, out;
  std::string variant = "shallow";
  std::int64_t epochs = 8;
  std::uint64_t seed = 1;
};

void cmd_train_swap(const TrainSwapArgs& a) {
  Extractor<F> ex = Extractor<F>::load(a.extractor);
  auto s = load_splits(a.manifest, ex.resolution());
  check(!s.train.empty(), "manifest has no train split");
  SwapTrainReport rep;
  SwapModel<F> m = train_swap(s.train, ex, a.epochs, a.seed, a.variant, &rep);
  m.save(a.out);
  std::cout << "swap proxy (" << a.variant << ") saved to " << a.out << "\n";
  std::cout << "  held-out identity transfer: " << rep.identity_cos << "\n";
  std::cout << "  held-out mse to target: " << rep.out_tgt_mse
            << ", to source: " << rep.out_src_mse << "\n";
}

struct ProtectArgs {
  std::string ckpt, extractor, in, out;
};

void cmd_protect(const ProtectArgs& a) {
  Protector<F> p = Protector<F>::load(a.ckpt);
  Extractor<F> ex = Extractor<F>::load(a.extractor);
  check(ex.d_f() == p.cfg().d_f, "extractor does not match checkpoint d_f");
  const std::string fp = fingerprint_hex(train_config_fingerprint(p.cfg()));

  std::vector<fs::path> inputs;
  check(fs::is_directory(a.in), "input directory missing: " + a.in);
  for (const auto& e : fs::directory_iterator(a.in))
    if (e.is_regular_file() && e.path().extension() == ".png")
      inputs.push_back(e.path());
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) {
    std::cerr << "warning: no .png inputs in " << a.in << "\n";
    return;
  }
  fs::create_directories(a.out);
  const auto r = p.cfg().resolution;
  std::int64_t failures = 0;
  for (const auto& path : inputs) {
    try {
      auto img = png_read(path);
      check(img.chw.dim(1) == img.chw.dim(2), "image not square");
      Tensor<float> face = img.chw.dim(1) == r
                               ? img.chw
                               : bilinear_resize(img.chw, r, r);
      Tensor<float> out = p.protect(face, ex.extract(face, false));
      png_write(fs::path(a.out) / path.filename(), out, {{"fingerprint", fp}});
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "error: " << path.string() << ": " << e.what() << "\n";
    }
  }
  std::cout << (inputs.size() - failures) << "/" << inputs.size()
            << " images protected -> " << a.out << "\n";
  if (failures > 0)
    throw RuntimeFailure(std::to_string(failures) + " input(s) failed");
}

struct EvalArgs {
  std::string protocol, ckpt, extractor, manifest, out;
  std::vector<std::string> swap_ckpts;
  std::string alpha_grid = "0.05,0.1,0.25,0.5";
  std::int64_t finetune_epochs = 4;
  std::int64_t seed_override = -1;
};

void cmd_eval(const EvalArgs& a) {
  static const std::vector<std::string> kProtocols = {"id", "swap", "quality",
                                                      "robust", "alpha"};
  if (std::find(kProtocols.begin(), kProtocols.end(), a.protocol) ==
      kProtocols.end()) {
    std::string valid;
    for (const auto& p : kProtocols) valid += (valid.empty() ? "" : ", ") + p;
    throw ValidationError("unknown protocol '" + a.protocol +
                          "' (valid: " + valid + ")");
  }
  Protector<F> p = Protector<F>::load(a.ckpt);
  Extractor<F> ex = Extractor<F>::load(a.extractor);
  check(ex.d_f() == p.cfg().d_f, "extractor does not match checkpoint d_f");
  check(ex.resolution() == p.cfg().resolution,
        "extractor resolution does not match checkpoint");
  auto s = load_splits(a.manifest, p.cfg().resolution);
  const std::uint64_t seed = a.seed_override >= 0
                                 ? static_cast<std::uint64_t>(a.seed_override)
                                 : p.cfg().seed;
  const std::uint64_t fp = train_config_fingerprint(p.cfg());
  const fs::path reports = fs::path(a.out) / "reports";
  const fs::path plots = fs::path(a.out) / "plots";
  fs::create_directories(reports);
  fs::create_directories(plots);

  if (a.protocol == "id") {
    auto r = eval_identification(p, ex, s.gallery, s.probe, seed, fp);
    write_report_csv(r.report, reports / "id.csv");
    write_report_json(r.report, reports / "id.json");
    plot::render_bar_plot({"clean top1", "prot top1", "clean top5", "prot top5"},
                          {r.clean_top1, r.prot_top1, r.clean_top5, r.prot_top5},
                          "gallery identification", "accuracy",
                          plots / "id_accuracy.png");
    std::cout << "clean top1 " << r.clean_top1 << ", protected top1 "
              << r.prot_top1 << ", sim_pair " << r.mean_sim_pair << "\n";
  } else if (a.protocol == "quality") {
    auto r = eval_quality(p, ex, s.probe, seed, fp);
    write_report_csv(r.report, reports / "quality.csv");
    write_report_json(r.report, reports / "quality.json");
    plot::render_bar_plot({"psnr db"}, {r.psnr_mean}, "protected image quality",
                          "db", plots / "quality_psnr.png");
    plot::render_bar_plot({"ssim", "perceptual"}, {r.ssim_mean, r.perceptual_mean},
                          "protected image quality", "value",
                          plots / "quality_ssim.png");
    std::cout << "psnr " << r.psnr_mean << " dB, ssim " << r.ssim_mean
              << ", frechet " << r.frechet << "\n";
  } else if (a.protocol == "swap") {
    check(!a.swap_ckpts.empty(), "swap protocol needs at least one --swap-ckpt");
    std::vector<SwapModel<F>> models;
    models.reserve(a.swap_ckpts.size());
    for (const auto& path : a.swap_ckpts)
      models.push_back(SwapModel<F>::load(path, ex));
    std::vector<const SwapModel<F>*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    auto r = eval_swap_defense(p, ex, ptrs, s.probe, s.target, seed, fp);
    write_report_csv(r.report, reports / "swap.csv");
    write_report_json(r.report, reports / "swap.json");
    std::vector<std::string> labels;
    std::vector<double> vals;
    for (const auto& row : r.per_model) {
      labels.push_back(row.variant + " base");
      vals.push_back(row.baseline);
      labels.push_back(row.variant + " pair");
      vals.push_back(row.pair_sim);
    }
    plot::render_bar_plot(labels, vals, "swap defense", "cosine",
                          plots / "swap_similarity.png");
    for (const auto& row : r.per_model)
      std::cout << row.variant << ": baseline " << row.baseline << ", pair sim "
                << row.pair_sim << ", p-score " << row.p_score << "\n";
  } else if (a.protocol == "robust") {
    auto r = eval_robustness(p, ex, s.gallery, s.probe, seed, fp);
    for (const auto& rep : r.per_kind) {
      const std::string kind = rep.protocol.substr(std::string("robust-").size());
      write_report_csv(rep, reports / ("robust_" + kind + ".csv"));
    }
    write_report_csv(r.summary, reports / "robust.csv");
    write_report_json(r.summary, reports / "robust.json");
    std::vector<std::string> labels;
    std::vector<double> vals;
    for (const auto& [kind, top1] : r.kind_top1) {
      labels.push_back(kind);
      vals.push_back(top1);
    }
    plot::render_bar_plot(labels, vals, "protected top1 under degradation",
                          "top1", plots / "robust.png");
    for (const auto& [kind, top1] : r.kind_top1)
      std::cout << kind << ": top1 " << top1 << " (delta "
                << top1 - r.none_top1 << ")\n";
  } else {  // alpha
    auto alphas = parse_alpha_grid(a.alpha_grid);
    auto r = eval_alpha_sweep(a.ckpt, alphas, a.finetune_epochs, ex, s.train,
                              s.gallery, s.probe, fs::path(a.out), seed, fp);
    write_report_csv(r.report, reports / "alpha.csv");
    write_report_json(r.report, reports / "alpha.json");
    plot::Series psnr_s{"psnr db", {}, {}}, top1_s{"prot top1", {}, {}},
        pair_s{"sim pair", {}, {}};
    for (const auto& row : r.rows) {
      psnr_s.xs.push_back(row.alpha);
      psnr_s.ys.push_back(row.psnr_db);
      top1_s.xs.push_back(row.alpha);
      top1_s.ys.push_back(row.prot_top1);
      pair_s.xs.push_back(row.alpha);
      pair_s.ys.push_back(row.sim_pair);
    }
    plot::render_line_plot({psnr_s}, "fidelity vs alpha", "alpha", "psnr db",
                           plots / "alpha_psnr.png");
    plot::render_line_plot({top1_s, pair_s}, "erasure vs alpha", "alpha",
                           "value", plots / "alpha_identification.png");
    for (const auto& row : r.rows)
      std::cout << "alpha " << row.alpha << ": psnr " << row.psnr_db
                << ", prot top1 " << row.prot_top1 << ", sim_pair "
                << row.sim_pair << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-space proactive defense against face swapping"};
  app.require_subcommand(1);

  MakeDatasetArgs mk;
  auto* c_mk = app.add_subcommand("make-dataset", "generate a synthetic face corpus");
  c_mk->add_option("--out", mk.out, "output dataset directory")->required();
  c_mk->add_option("--identities", mk.identities, "number of identities");
  c_mk->add_option("--samples", mk.samples, "samples per identity");
  c_mk->add_option("--resolution", mk.resolution, "image resolution");
  c_mk->add_option("--target-identities", mk.target_identities,
                   "identities reserved as swap targets");
  c_mk->add_option("--train-fraction", mk.train_fraction,
                   "per-identity fraction of samples put in train");
  c_mk->add_option("--gallery-fraction", mk.gallery_fraction,
                   "fraction of remaining samples enrolled in the gallery");
  c_mk->add_option("--seed", mk.seed, "random seed");

  TrainExtractorArgs tx;
  auto* c_tx = app.add_subcommand("train-extractor", "train the identity extractor");
  c_tx->add_option("--manifest", tx.manifest, "dataset manifest")->required();
  c_tx->add_option("--out", tx.out, "output extractor file")->required();
  c_tx->add_option("--backend", tx.backend, "extractor backend (base|alt)");
  c_tx->add_option("--d-f", tx.d_f, "embedding width");
  c_tx->add_option("--epochs", tx.epochs, "training epochs");
  c_tx->add_option("--resolution", tx.resolution, "image resolution");
  c_tx->add_option("--seed", tx.seed, "random seed");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train the protection model");
  c_tr->add_option("--config", tr.config, "run config file (key=value)");
  c_tr->add_option("--manifest", tr.manifest, "dataset manifest")->required();
  c_tr->add_option("--extractor", tr.extractor, "trained extractor file")->required();
  c_tr->add_option("--out", tr.out, "run directory")->required();
  c_tr->add_option("--resume", tr.resume, "checkpoint to resume from");
  c_tr->add_option("--seed", tr.seed_override, "override config seed");
  c_tr->add_option("--resolution", tr.resolution_override, "override config resolution");

  TrainSwapArgs ts;
  auto* c_ts = app.add_subcommand("train-swap", "train a face-swap proxy");
  c_ts->add_option("--manifest", ts.manifest, "dataset manifest")->required();
  c_ts->add_option("--extractor", ts.extractor, "trained extractor file")->required();
  c_ts->add_option("--out", ts.out, "output checkpoint file")->required();
  c_ts->add_option("--variant", ts.variant, "proxy variant (shallow|deep)");
  c_ts->add_option("--epochs", ts.epochs, "training epochs");
  c_ts->add_option("--seed", ts.seed, "random seed");

  ProtectArgs pr;
  auto* c_pr = app.add_subcommand("protect", "protect a directory of face images");
  c_pr->add_option("--ckpt", pr.ckpt, "protector checkpoint")->required();
  c_pr->add_option("--extractor", pr.extractor, "trained extractor file")->required();
  c_pr->add_option("--in", pr.in, "input directory of .png faces")->required();
  c_pr->add_option("--out", pr.out, "output directory")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "run an evaluation protocol");
  c_ev->add_option("--protocol", ev.protocol,
                   "protocol: id|swap|quality|robust|alpha")->required();
  c_ev->add_option("--ckpt", ev.ckpt, "protector checkpoint")->required();
  c_ev->add_option("--extractor", ev.extractor, "trained extractor file")->required();
  c_ev->add_option("--manifest", ev.manifest, "dataset manifest")->required();
  c_ev->add_option("--out", ev.out, "output run directory")->required();
  c_ev->add_option("--swap-ckpt", ev.swap_ckpts,
                   "swap proxy checkpoint (repeatable; swap protocol)");
  c_ev->add_option("--alpha-grid", ev.alpha_grid,
                   "comma-separated alphas (alpha protocol)");
  c_ev->add_option("--finetune-epochs", ev.finetune_epochs,
                   "fine-tune epochs per alpha (alpha protocol)");
  c_ev->add_option("--seed", ev.seed_override, "override checkpoint seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_mk->parsed()) cmd_make_dataset(mk);
    if (c_tx->parsed()) cmd_train_extractor(tx);
    if (c_tr->parsed()) cmd_train(tr);
    if (c_ts->parsed()) cmd_train_swap(ts);
    if (c_pr->parsed()) cmd_protect(pr);
    if (c_ev->parsed()) cmd_eval(ev);
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ThresholdError& e) {
    std::cerr << "threshold failure: " << e.what() << "\n";
    return 3;
  } catch (const RuntimeFailure& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}
