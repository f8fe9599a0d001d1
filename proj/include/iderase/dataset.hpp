#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "iderase/image.hpp"
#include "iderase/rng.hpp"
#include "iderase/tensor.hpp"

namespace iderase {

// Pixel data is CHW float in [-1, 1], RGB channel order, square, with side a
// multiple of 4 (two clean downsampling stages).
struct LabeledFace {
  Tensor<float> image;
  std::string identity_id;
  std::string sample_id;
};

inline void check_face_image(const Tensor<float>& img) {
  check(img.ndim() == 3 && img.dim(0) == 3, "face image must be 3xRxR");
  check(img.dim(1) == img.dim(2), "face image must be square");
  check(img.dim(1) > 0 && img.dim(1) % 4 == 0,
        "face resolution must be a positive multiple of 4");
  for (float x : img.v)
    check(x >= -1.0f && x <= 1.0f, "face pixel outside [-1, 1]");
}

struct ManifestEntry {
  std::string sample_id;
  std::string identity_id;
  std::string relative_path;
  std::string split;  // train | gallery | probe | target
};

struct DatasetManifest {
  std::filesystem::path root;  // directory relative paths resolve against
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(e);
    return out;
  }
};

inline const std::set<std::string>& manifest_splits() {
  static const std::set<std::string> s{"train", "gallery", "probe", "target"};
  return s;
}

inline void validate_manifest(const DatasetManifest& m) {
  std::set<std::string> ids;
  std::set<std::string> probe_identities, target_identities;
  std::map<std::string, std::set<std::string>> gallery_by_id, probe_by_id;
  for (const auto& e : m.entries) {
    check(!e.sample_id.empty() && !e.identity_id.empty() && !e.relative_path.empty(),
          "manifest entry with empty field");
    check(manifest_splits().count(e.split),
          "manifest entry " + e.sample_id + ": unknown split '" + e.split + "'");
    check(ids.insert(e.sample_id).second,
          "duplicate sample_id in manifest: " + e.sample_id);
    if (e.split == "probe") probe_identities.insert(e.identity_id);
    if (e.split == "target") target_identities.insert(e.identity_id);
    if (e.split == "gallery") gallery_by_id[e.identity_id].insert(e.sample_id);
    if (e.split == "probe") probe_by_id[e.identity_id].insert(e.sample_id);
  }
  for (const auto& id : target_identities)
    check(!probe_identities.count(id),
          "target split shares identity with probe split: " + id);
  for (const auto& [id, g] : gallery_by_id)
    for (const auto& s : probe_by_id[id])
      check(!g.count(s), "sample in both gallery and probe: " + s);
}

// One record per line: sample_id<TAB>identity_id<TAB>relative_path<TAB>split
inline DatasetManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open manifest: " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos
                                              ? std::string::npos
                                              : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    check(fields.size() == 4, "manifest line " + std::to_string(lineno) +
                                  ": expected 4 tab-separated fields, got " +
                                  std::to_string(fields.size()));
    m.entries.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  validate_manifest(m);
  return m;
}

inline void write_manifest(const DatasetManifest& m,
                           const std::filesystem::path& path) {
  validate_manifest(m);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot write manifest: " + path.string());
  for (const auto& e : m.entries)
    f << e.sample_id << '\t' << e.identity_id << '\t' << e.relative_path << '\t'
      << e.split << '\n';
  if (!f) throw RuntimeFailure("manifest write failed: " + path.string());
}

// Reads every manifest entry, resizes to `resolution`, normalizes to [-1,1].
// Order matches the manifest. Failures are itemized per sample.
inline std::vector<LabeledFace> load_dataset(
    const std::filesystem::path& manifest_path, std::int64_t resolution) {
  check(resolution > 0 && resolution % 4 == 0,
        "resolution must be a positive multiple of 4");
  DatasetManifest m = parse_manifest(manifest_path);
  std::vector<LabeledFace> out;
  out.reserve(m.entries.size());
  std::string errors;
  for (const auto& e : m.entries) {
    try {
      auto img = png_read(m.root / e.relative_path);
      check(img.chw.dim(1) == img.chw.dim(2), "image not square");
      LabeledFace f;
      f.image = bilinear_resize(img.chw, resolution, resolution);
      f.identity_id = e.identity_id;
      f.sample_id = e.sample_id;
      out.push_back(std::move(f));
    } catch (const std::exception& ex) {
      errors += "  " + e.sample_id + ": " + ex.what() + "\n";
    }
  }
  if (!errors.empty())
    throw ValidationError("failed to load dataset items:\n" + errors);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic identity corpus
// ---------------------------------------------------------------------------

namespace detail {

// Fixed low-frequency description of one synthetic person: face geometry
// plus a bank of identity-specific cosine waves.
struct IdentityTemplate {
  double face_cy, face_cx, face_ry, face_rx;
  double eye_dy, eye_dx, eye_r;
  double mouth_dy, mouth_w, mouth_h;
  double skin[3];
  double bg0[3], bgy[3], bgx[3];
  static constexpr int kWaves = 4;
  double wave_fy[kWaves], wave_fx[kWaves], wave_ph[kWaves];
  double wave_amp[kWaves][3];
};

inline IdentityTemplate make_identity_template(std::uint64_t seed,
                                               std::int64_t identity_index) {
  Rng rng = derive_rng(seed, "identity-template", static_cast<std::uint64_t>(identity_index));
  IdentityTemplate t{};
  t.face_cy = rng.uniform(0.46, 0.54);
  t.face_cx = rng.uniform(0.46, 0.54);
  t.face_ry = rng.uniform(0.30, 0.40);
  t.face_rx = rng.uniform(0.26, 0.36);
  t.eye_dy = rng.uniform(0.08, 0.14);
  t.eye_dx = rng.uniform(0.10, 0.17);
  t.eye_r = rng.uniform(0.025, 0.05);
  t.mouth_dy = rng.uniform(0.14, 0.21);
  t.mouth_w = rng.uniform(0.08, 0.15);
  t.mouth_h = rng.uniform(0.015, 0.035);
  for (int c = 0; c < 3; ++c) {
    t.skin[c] = rng.uniform(0.0, 0.55);
    t.bg0[c] = rng.uniform(-0.65, -0.1);
    t.bgy[c] = rng.uniform(-0.2, 0.2);
    t.bgx[c] = rng.uniform(-0.2, 0.2);
  }
  for (int k = 0; k < IdentityTemplate::kWaves; ++k) {
    t.wave_fy[k] = rng.uniform(0.5, 3.0);
    t.wave_fx[k] = rng.uniform(0.5, 3.0);
    t.wave_ph[k] = rng.uniform(0.0, 2.0 * M_PI);
    for (int c = 0; c < 3; ++c) t.wave_amp[k][c] = rng.uniform(-0.16, 0.16);
  }
  return t;
}

// Evaluates the template at normalized coordinates (u, v) in [0,1]^2,
// returning a pre-illumination color on the [0,1] scale.
inline void eval_identity_template(const IdentityTemplate& t, double u, double v,
                                   double rgb[3]) {
  double wave[3] = {0, 0, 0};
  for (int k = 0; k < IdentityTemplate::kWaves; ++k) {
    double s = std::cos(2.0 * M_PI * (t.wave_fy[k] * u + t.wave_fx[k] * v) +
                        t.wave_ph[k]);
    for (int c = 0; c < 3; ++c) wave[c] += t.wave_amp[k][c] * s;
  }
  double dy = (u - t.face_cy) / t.face_ry;
  double dx = (v - t.face_cx) / t.face_rx;
  double d = std::sqrt(dy * dy + dx * dx);
  double face_mask = 1.0 / (1.0 + std::exp((d - 1.0) / 0.06));

  auto blob = [&](double cy, double cx, double ry, double rx) {
    double py = (u - cy) / ry, px = (v - cx) / rx;
    return std::exp(-0.5 * (py * py + px * px));
  };
  double eyes = blob(t.face_cy - t.eye_dy, t.face_cx - t.eye_dx, t.eye_r, t.eye_r) +
                blob(t.face_cy - t.eye_dy, t.face_cx + t.eye_dx, t.eye_r, t.eye_r);
  double mouth = blob(t.face_cy + t.mouth_dy, t.face_cx, t.mouth_h, t.mouth_w);

  for (int c = 0; c < 3; ++c) {
    double bg = t.bg0[c] + t.bgy[c] * u + t.bgx[c] * v;  // in [-1,1]-ish units
    double face = t.skin[c] + wave[c] - 0.75 * eyes - 0.55 * mouth;
    double val = face_mask * face + (1.0 - face_mask) * bg;
    rgb[c] = std::clamp(0.5 * (val + 1.0), 0.0, 1.0);  // to [0,1]
  }
}

}  // namespace detail

// Procedurally generated face-like corpus: per-identity low-frequency
// structure, per-sample nuisance (shift <= 10% of R, illumination in
// [0.8, 1.2], Gaussian pixel noise sigma=0.02). Outputs are quantized to the
// 8-bit grid so in-memory tensors match PNG round-trips byte for byte.
inline std::vector<LabeledFace> make_synthetic_identities(
    std::int64_t num_identities, std::int64_t samples_per_identity,
    std::int64_t resolution, std::uint64_t seed) {
  check(num_identities > 0 && samples_per_identity > 0,
        "identity/sample counts must be positive");
  check(resolution > 0 && resolution % 4 == 0,
        "resolution must be a positive multiple of 4");
  std::vector<LabeledFace> out;
  out.reserve(static_cast<std::size_t>(num_identities * samples_per_identity));
  for (std::int64_t id = 0; id < num_identities; ++id) {
    auto tmpl = detail::make_identity_template(seed, id);
    char id_name[32];
    std::snprintf(id_name, sizeof(id_name), "id%03lld", static_cast<long long>(id));
    for (std::int64_t s = 0; s < samples_per_identity; ++s) {
      Rng rng = derive_rng(seed, "identity-sample", static_cast<std::uint64_t>(id),
                           static_cast<std::uint64_t>(s));
      double shift_u = rng.uniform(-0.10, 0.10);
      double shift_v = rng.uniform(-0.10, 0.10);
      double illum = rng.uniform(0.8, 1.2);
      LabeledFace f;
      f.image = Tensor<float>({3, resolution, resolution});
      for (std::int64_t y = 0; y < resolution; ++y)
        for (std::int64_t x = 0; x < resolution; ++x) {
          double u = (y + 0.5) / resolution - shift_u;
          double v = (x + 0.5) / resolution - shift_v;
          double rgb[3];
          detail::eval_identity_template(tmpl, u, v, rgb);
          for (int c = 0; c < 3; ++c) {
            double p01 = std::clamp(rgb[c] * illum, 0.0, 1.0);
            double unit = 2.0 * p01 - 1.0 + 0.02 * rng.normal();
            float q = u8_to_unit(unit_to_u8(static_cast<float>(
                std::clamp(unit, -1.0, 1.0))));
            f.image.v[c * resolution * resolution + y * resolution + x] = q;
          }
        }
      char s_name[48];
      std::snprintf(s_name, sizeof(s_name), "%s_s%03lld", id_name,
                    static_cast<long long>(s));
      f.identity_id = id_name;
      f.sample_id = s_name;
      out.push_back(std::move(f));
    }
  }
  return out;
}

namespace detail {

// Deterministic per-identity partition: shuffle sample positions, take the
// first `take` for the named split.
inline std::map<std::string, std::vector<std::size_t>> group_by_identity(
    const std::vector<LabeledFace>& faces) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < faces.size(); ++i)
    groups[faces[i].identity_id].push_back(i);
  return groups;
}

inline std::string face_rel_path(const LabeledFace& f) {
  return f.identity_id + "/" + f.sample_id + ".png";
}

}  // namespace detail

// Gallery/probe manifest over every identity: per identity at least one
// sample on each side, sample-disjoint, deterministic in (faces, fraction,
// seed).
inline DatasetManifest build_splits(const std::vector<LabeledFace>& faces,
                                    double gallery_fraction, std::uint64_t seed) {
  check(gallery_fraction > 0.0 && gallery_fraction < 1.0,
        "gallery_fraction must be in (0, 1)");
  auto groups = detail::group_by_identity(faces);
  DatasetManifest m;
  for (const auto& [identity, idxs] : groups) {
    check(idxs.size() >= 2,
          "identity needs >= 2 samples to split into gallery and probe: " + identity);
    std::vector<std::size_t> order = idxs;
    Rng rng = derive_rng(seed, "split", fnv1a(identity));
    rng.shuffle(order.begin(), order.end());
    auto n = static_cast<std::size_t>(order.size());
    auto n_gal = static_cast<std::size_t>(std::lround(gallery_fraction * n));
    n_gal = std::clamp<std::size_t>(n_gal, 1, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const LabeledFace& f = faces[order[i]];
      m.entries.push_back({f.sample_id, f.identity_id, detail::face_rel_path(f),
                           i < n_gal ? "gallery" : "probe"});
    }
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.sample_id < b.sample_id;
            });
  validate_manifest(m);
  return m;
}

// Full four-way manifest: the last `target_identities` identities go wholly
// to the target split (identity-disjoint from everything else); remaining
// identities split per-identity into train, then gallery/probe.
inline DatasetManifest compose_manifest(const std::vector<LabeledFace>& faces,
                                        double train_fraction,
                                        double gallery_fraction,
                                        std::int64_t target_identities,
                                        std::uint64_t seed) {
  check(train_fraction >= 0.0 && train_fraction < 1.0,
        "train_fraction must be in [0, 1)");
  check(gallery_fraction > 0.0 && gallery_fraction < 1.0,
        "gallery_fraction must be in (0, 1)");
  auto groups = detail::group_by_identity(faces);
  check(static_cast<std::int64_t>(groups.size()) > target_identities,
        "need more identities than reserved target identities");
  std::vector<std::string> identities;
  for (const auto& [id, v] : groups) identities.push_back(id);
  // deterministic reservation: last identities in sorted order become targets
  std::set<std::string> target_set(identities.end() - target_identities,
                                   identities.end());

  DatasetManifest m;
  for (const auto& [identity, idxs] : groups) {
    if (target_set.count(identity)) {
      for (auto i : idxs) {
        const LabeledFace& f = faces[i];
        m.entries.push_back(
            {f.sample_id, f.identity_id, detail::face_rel_path(f), "target"});
      }
      continue;
    }
    std::vector<std::size_t> order = idxs;
    Rng rng = derive_rng(seed, "split", fnv1a(identity));
    rng.shuffle(order.begin(), order.end());
    auto n = order.size();
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * n));
    if (n - n_train < 2) n_train = n - 2;  // keep room for gallery+probe
    auto rest = n - n_train;
    auto n_gal = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(gallery_fraction * rest)), 1, rest - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const LabeledFace& f = faces[order[i]];
      std::string split = i < n_train              ? "train"
                          : i < n_train + n_gal ? "gallery"
                                                : "probe";
      m.entries.push_back(
          {f.sample_id, f.identity_id, detail::face_rel_path(f), split});
    }
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.sample_id < b.sample_id;
            });
  validate_manifest(m);
  return m;
}

// Writes faces as PNGs under root following the manifest layout convention.
inline void write_face_pngs(const std::vector<LabeledFace>& faces,
                            const std::filesystem::path& root) {
  for (const auto& f : faces) {
    auto dir = root / f.identity_id;
    std::filesystem::create_directories(dir);
    png_write(dir / (f.sample_id + ".png"), f.image);
  }
}

// In-memory selection of manifest split entries from an id-indexed corpus.
inline std::vector<LabeledFace> select_split(const std::vector<LabeledFace>& faces,
                                             const DatasetManifest& m,
                                             const std::string& split) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < faces.size(); ++i) by_id[faces[i].sample_id] = i;
  std::vector<LabeledFace> out;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    auto it = by_id.find(e.sample_id);
    check(it != by_id.end(), "manifest sample not in corpus: " + e.sample_id);
    out.push_back(faces[it->second]);
  }
  return out;
}

}  // namespace iderase
