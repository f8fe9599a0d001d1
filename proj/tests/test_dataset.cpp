#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "iderase/dataset.hpp"

using namespace iderase;
namespace fs = std::filesystem;

namespace {

std::map<std::string, int> split_counts(const DatasetManifest& m) {
  std::map<std::string, int> c;
  for (const auto& e : m.entries) c[e.split]++;
  return c;
}

double pixel_cos(const Tensor<float>& a, const Tensor<float>& b) {
  double num = 0, na = 0, nb = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    num += double(a.v[i]) * b.v[i];
    na += double(a.v[i]) * a.v[i];
    nb += double(b.v[i]) * b.v[i];
  }
  return num / std::sqrt(na * nb);
}

}  // namespace

TEST(Synthetic, ShapesRangeDeterminism) {
  auto faces = make_synthetic_identities(4, 3, 32, 11);
  ASSERT_EQ(faces.size(), 12u);
  std::set<std::string> ids;
  for (const auto& f : faces) {
    EXPECT_EQ(f.image.shape, (std::vector<std::int64_t>{3, 32, 32}));
    for (float x : f.image.v) {
      ASSERT_GE(x, -1.0f);
      ASSERT_LE(x, 1.0f);
    }
    // 8-bit lattice (in the [-1,1] convention) so PNG round trips are exact
    for (float x : f.image.v) {
      float steps = (x + 1.0f) * 127.5f;
      ASSERT_NEAR(steps, std::round(steps), 1e-3);
    }
    ids.insert(f.identity_id);
  }
  EXPECT_EQ(ids.size(), 4u);

  auto again = make_synthetic_identities(4, 3, 32, 11);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    EXPECT_EQ(faces[i].sample_id, again[i].sample_id);
    EXPECT_EQ(faces[i].image.v, again[i].image.v);
  }
  auto other = make_synthetic_identities(4, 3, 32, 12);
  EXPECT_NE(faces[0].image.v, other[0].image.v);
}

TEST(Synthetic, IntraIdentityMoreSimilarThanInter) {
  auto faces = make_synthetic_identities(6, 4, 32, 3);
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (std::size_t j = i + 1; j < faces.size(); ++j) {
      double c = pixel_cos(faces[i].image, faces[j].image);
      if (faces[i].identity_id == faces[j].identity_id) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  intra /= n_intra;
  inter /= n_inter;
  EXPECT_GT(intra, inter + 0.01)
      << "same-identity images must correlate more than cross-identity";
}

TEST(BuildSplits, HalfAndHalfExample) {
  // 32 identities x 20 samples at 50% -> 320 gallery / 320 probe.
  auto faces = make_synthetic_identities(32, 20, 8, 5);
  auto m = build_splits(faces, 0.5, 17);
  auto c = split_counts(m);
  EXPECT_EQ(c["gallery"], 320);
  EXPECT_EQ(c["probe"], 320);
  EXPECT_EQ(m.entries.size(), 640u);

  // per identity: disjoint samples, both sides non-empty
  std::map<std::string, std::set<std::string>> gal, prb;
  for (const auto& e : m.entries)
    (e.split == "gallery" ? gal : prb)[e.identity_id].insert(e.sample_id);
  for (const auto& [id, g] : gal) {
    ASSERT_TRUE(prb.count(id));
    EXPECT_EQ(g.size(), 10u);
    EXPECT_EQ(prb[id].size(), 10u);
    for (const auto& s : g) EXPECT_FALSE(prb[id].count(s));
  }
}

TEST(BuildSplits, DeterministicInSeed) {
  auto faces = make_synthetic_identities(5, 6, 8, 2);
  auto a = build_splits(faces, 0.4, 9);
  auto b = build_splits(faces, 0.4, 9);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].sample_id, b.entries[i].sample_id);
    EXPECT_EQ(a.entries[i].split, b.entries[i].split);
  }
  auto c = build_splits(faces, 0.4, 10);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i)
    any_diff |= a.entries[i].split != c.entries[i].split;
  EXPECT_TRUE(any_diff);
}

TEST(BuildSplits, EdgeFractionsKeepBothSides) {
  auto faces = make_synthetic_identities(3, 2, 8, 2);
  for (double frac : {0.05, 0.95}) {
    auto m = build_splits(faces, frac, 1);
    auto c = split_counts(m);
    EXPECT_EQ(c["gallery"], 3);  // one per identity
    EXPECT_EQ(c["probe"], 3);
  }
  EXPECT_THROW(build_splits(faces, 0.0, 1), ValidationError);
  EXPECT_THROW(build_splits(faces, 1.0, 1), ValidationError);
}

TEST(ComposeManifest, TargetsIdentityDisjoint) {
  auto faces = make_synthetic_identities(10, 6, 8, 4);
  auto m = compose_manifest(faces, 0.5, 0.5, 3, 21);
  std::set<std::string> target_ids, other_ids;
  for (const auto& e : m.entries)
    (e.split == "target" ? target_ids : other_ids).insert(e.identity_id);
  EXPECT_EQ(target_ids.size(), 3u);
  EXPECT_EQ(other_ids.size(), 7u);
  for (const auto& id : target_ids) EXPECT_FALSE(other_ids.count(id));

  auto c = split_counts(m);
  EXPECT_EQ(c["target"], 18);
  EXPECT_EQ(c["train"], 21);             // 3 of 6 per non-target identity
  EXPECT_EQ(c["gallery"] + c["probe"], 21);
  EXPECT_GE(c["gallery"], 7);            // at least one per identity
  EXPECT_GE(c["probe"], 7);
}

TEST(Manifest, FileRoundTrip) {
  auto faces = make_synthetic_identities(4, 4, 8, 6);
  auto m = compose_manifest(faces, 0.25, 0.5, 1, 3);
  auto dir = fs::temp_directory_path() / "iderase_manifest_rt";
  fs::create_directories(dir);
  m.root = dir;
  write_manifest(m, dir / "manifest.tsv");
  auto back = parse_manifest(dir / "manifest.tsv");
  ASSERT_EQ(back.entries.size(), m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].sample_id, m.entries[i].sample_id);
    EXPECT_EQ(back.entries[i].identity_id, m.entries[i].identity_id);
    EXPECT_EQ(back.entries[i].relative_path, m.entries[i].relative_path);
    EXPECT_EQ(back.entries[i].split, m.entries[i].split);
  }
  fs::remove_all(dir);
}

TEST(Manifest, LoadDatasetAndSelectSplit) {
  auto faces = make_synthetic_identities(3, 4, 16, 8);
  auto m = compose_manifest(faces, 0.5, 0.5, 1, 4);
  auto dir = fs::temp_directory_path() / "iderase_dataset_rt";
  fs::remove_all(dir);
  write_face_pngs(faces, dir);
  m.root = dir;
  write_manifest(m, dir / "manifest.tsv");

  auto loaded = load_dataset(dir / "manifest.tsv", 16);
  EXPECT_EQ(loaded.size(), faces.size());
  // PNG storage is exact on the 8-bit lattice: loaded pixels match originals.
  std::map<std::string, const LabeledFace*> by_sample;
  for (const auto& f : faces) by_sample[f.sample_id] = &f;
  for (const auto& f : loaded) {
    const auto* orig = by_sample.at(f.sample_id);
    ASSERT_EQ(f.image.v, orig->image.v);
  }

  auto train = select_split(loaded, m, "train");
  auto c = split_counts(m);
  EXPECT_EQ(static_cast<int>(train.size()), c["train"]);
  for (const auto& f : train) EXPECT_NE(f.identity_id, "");

  // resize-on-load path
  auto small = load_dataset(dir / "manifest.tsv", 8);
  EXPECT_EQ(small.front().image.shape, (std::vector<std::int64_t>{3, 8, 8}));
  fs::remove_all(dir);
}

TEST(Manifest, ValidationCatchesBadRows) {
  DatasetManifest m;
  m.entries.push_back({"s0", "id0", "id0/s0.png", "nonsense"});
  EXPECT_THROW(validate_manifest(m), ValidationError);

  DatasetManifest dup;
  dup.entries.push_back({"s0", "id0", "id0/s0.png", "gallery"});
  dup.entries.push_back({"s0", "id0", "id0/s0.png", "probe"});
  EXPECT_THROW(validate_manifest(dup), ValidationError);
}
