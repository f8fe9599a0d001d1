#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "iderase/dataset.hpp"
#include "iderase/extractor.hpp"

using namespace iderase;
namespace fs = std::filesystem;

namespace {

Extractor<float> frozen_random(const std::string& backend = "alt",
                               std::int64_t d_f = 8, std::int64_t r = 16,
                               std::uint64_t seed = 3) {
  Rng rng = derive_rng(seed, "test-ex");
  Extractor<float> ex(backend, d_f, r, rng);
  ex.freeze();
  return ex;
}

}  // namespace

TEST(Extractor, EmbeddingsAreUnitNorm) {
  auto ex = frozen_random();
  auto faces = make_synthetic_identities(2, 2, 16, 9);
  for (const auto& f : faces) {
    auto e = ex.extract(f.image, false);
    EXPECT_EQ(e.numel(), 8);
    EXPECT_NEAR(l2_norm(e), 1.0, 1e-5);
  }
}

TEST(Extractor, DeterministicAndSeedSensitive) {
  auto a = frozen_random("alt", 8, 16, 3);
  auto b = frozen_random("alt", 8, 16, 3);
  auto c = frozen_random("alt", 8, 16, 4);
  auto faces = make_synthetic_identities(1, 1, 16, 2);
  auto ea = a.extract(faces[0].image, false);
  auto eb = b.extract(faces[0].image, false);
  auto ec = c.extract(faces[0].image, false);
  EXPECT_EQ(ea.v, eb.v);
  EXPECT_NE(ea.v, ec.v);
}

TEST(Extractor, ResizePolicy) {
  auto ex = frozen_random();
  auto faces = make_synthetic_identities(1, 1, 32, 5);
  EXPECT_THROW(ex.extract(faces[0].image, false), ValidationError);
  auto e = ex.extract(faces[0].image, true);  // resized internally
  EXPECT_EQ(e.numel(), 8);
}

TEST(Extractor, TapsAndPenultimate) {
  auto ex = frozen_random("base", 8, 16, 7);
  auto faces = make_synthetic_identities(1, 1, 16, 11);
  auto feats = ex.trunk_features(faces[0].image, false);
  ASSERT_EQ(feats.size(), 3u);  // base backend: taps on all but the last stage
  for (const auto& f : feats) EXPECT_TRUE(f.all_finite());
  auto pen = ex.penultimate(faces[0].image, false);
  EXPECT_GT(pen.numel(), 0);
  EXPECT_TRUE(pen.all_finite());

  auto alt = frozen_random("alt", 8, 16, 7);
  EXPECT_EQ(alt.trunk_features(faces[0].image, false).size(), 2u);
}

TEST(Extractor, UnknownBackendRejected) {
  Rng rng(1);
  EXPECT_THROW(Extractor<float>("huge", 8, 16, rng), ValidationError);
}

TEST(Extractor, SaveLoadRoundTrip) {
  auto ex = frozen_random("alt", 8, 16, 13);
  auto faces = make_synthetic_identities(1, 2, 16, 17);
  auto before = ex.extract(faces[0].image, false);

  auto path = fs::temp_directory_path() / "iderase_test_extractor.bin";
  fs::remove(path);
  ex.save(path);
  auto back = Extractor<float>::load(path);
  EXPECT_EQ(back.backend_id(), "alt");
  EXPECT_EQ(back.d_f(), 8);
  EXPECT_EQ(back.resolution(), 16);
  EXPECT_TRUE(back.frozen());
  auto after = back.extract(faces[0].image, false);
  EXPECT_EQ(before.v, after.v);
  fs::remove(path);
}

TEST(Extractor, TrainingSeparatesIdentities) {
  // Small corpus, enough epochs to clear the margin gate comfortably.
  auto faces = make_synthetic_identities(6, 6, 16, 7);
  ExtractorTrainReport rep;
  auto ex = train_extractor<float>(faces, 16, 20, 7, "base", 16, &rep);
  EXPECT_TRUE(ex.frozen());
  EXPECT_GE(rep.intra, rep.inter + 0.3);

  // trained embeddings: same identity closer than different identities
  auto cos = [&](const LabeledFace& a, const LabeledFace& b) {
    auto ea = ex.extract(a.image, false);
    auto eb = ex.extract(b.image, false);
    double s = 0;
    for (std::int64_t i = 0; i < ea.numel(); ++i)
      s += double(ea.v[i]) * eb.v[i];
    return s;
  };
  // faces are grouped by identity, 6 samples each
  double intra = cos(faces[0], faces[1]);
  double inter = cos(faces[0], faces[7]);
  EXPECT_GT(intra, inter);
}

TEST(Extractor, TrainingInputValidation) {
  auto one_id = make_synthetic_identities(1, 4, 16, 3);
  EXPECT_THROW(train_extractor<float>(one_id, 8, 1, 3), ValidationError);
  std::vector<LabeledFace> empty;
  EXPECT_THROW(train_extractor<float>(empty, 8, 1, 3), ValidationError);
}
