#include <gtest/gtest.h>

#include <filesystem>

#include "iderase/dataset.hpp"
#include "iderase/extractor.hpp"
#include "iderase/swap.hpp"

using namespace iderase;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kR = 8;
constexpr std::int64_t kDf = 4;

Extractor<float> make_extractor(std::uint64_t seed = 5) {
  Rng rng = derive_rng(seed, "test-swap-ex");
  Extractor<float> ex("alt", kDf, kR, rng);
  ex.freeze();
  return ex;
}

SwapModel<float> make_model(const Extractor<float>& ex,
                            const std::string& variant, std::uint64_t seed) {
  Rng rng = derive_rng(seed, "test-swap-init");
  return SwapModel<float>(variant, ex, rng);
}

}  // namespace

TEST(SwapModel, VariantDepths) {
  EXPECT_EQ(SwapModel<float>::depth_for("shallow"), 2);
  EXPECT_EQ(SwapModel<float>::depth_for("deep"), 3);
  EXPECT_THROW(SwapModel<float>::depth_for("huge"), ValidationError);
}

TEST(SwapModel, OutputShapeAndRange) {
  auto ex = make_extractor();
  auto faces = make_synthetic_identities(2, 1, kR, 3);
  for (const std::string variant : {"shallow", "deep"}) {
    auto m = make_model(ex, variant, 9);
    auto out = m.swap(faces[0].image, faces[1].image);
    ASSERT_EQ(out.ndim(), 3);
    EXPECT_EQ(out.dim(0), 3);
    EXPECT_EQ(out.dim(1), kR);
    EXPECT_EQ(out.dim(2), kR);
    for (float v : out.v) {
      EXPECT_GT(v, -1.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
}

TEST(SwapModel, DeterministicInit) {
  auto ex = make_extractor();
  auto faces = make_synthetic_identities(2, 1, kR, 3);
  auto a = make_model(ex, "shallow", 9);
  auto b = make_model(ex, "shallow", 9);
  auto c = make_model(ex, "shallow", 10);
  EXPECT_EQ(a.swap(faces[0].image, faces[1].image).v,
            b.swap(faces[0].image, faces[1].image).v);
  EXPECT_NE(a.swap(faces[0].image, faces[1].image).v,
            c.swap(faces[0].image, faces[1].image).v);
}

TEST(SwapModel, SourceEntersOnlyThroughEmbedding) {
  auto ex = make_extractor();
  auto m = make_model(ex, "shallow", 11);
  auto faces = make_synthetic_identities(2, 2, kR, 7);

  // Inference must equal the embedding pathway composed by hand.
  auto emb = ex.extract(faces[0].image, false);
  auto manual =
      m.swap_var(make_leaf<float>(faces[1].image), make_leaf<float>(emb));
  auto direct = m.swap(faces[0].image, faces[1].image);
  EXPECT_EQ(direct.v, manual->val.v);

  // Two different sources with the same embedding give identical outputs.
  auto via_emb_a =
      m.swap_var(make_leaf<float>(faces[1].image), make_leaf<float>(emb));
  EXPECT_EQ(via_emb_a->val.v, manual->val.v);
}

TEST(SwapModel, SensitiveToSourceIdentityAndTarget) {
  auto ex = make_extractor();
  auto m = make_model(ex, "shallow", 13);
  auto faces = make_synthetic_identities(3, 1, kR, 17);
  auto out01 = m.swap(faces[0].image, faces[1].image);
  auto out21 = m.swap(faces[2].image, faces[1].image);
  auto out02 = m.swap(faces[0].image, faces[2].image);
  EXPECT_NE(out01.v, out21.v);  // source identity changes the result
  EXPECT_NE(out01.v, out02.v);  // target content changes the result
}

TEST(SwapModel, RejectsWrongTargetShape) {
  auto ex = make_extractor();
  auto m = make_model(ex, "shallow", 15);
  Tensor<float> bad({3, kR, kR * 2});
  auto faces = make_synthetic_identities(1, 1, kR, 3);
  EXPECT_THROW(
      m.swap_var(make_leaf<float>(bad),
                 make_leaf<float>(ex.extract(faces[0].image, false))),
      ValidationError);
}

TEST(SwapModel, SaveLoadRoundTrip) {
  auto ex = make_extractor();
  auto m = make_model(ex, "deep", 19);
  auto faces = make_synthetic_identities(2, 1, kR, 23);
  auto before = m.swap(faces[0].image, faces[1].image);

  auto path = (fs::temp_directory_path() / "iderase_test_swap.bin").string();
  fs::remove(path);
  m.save(path);
  auto back = SwapModel<float>::load(path, ex);
  EXPECT_EQ(back.variant(), "deep");
  EXPECT_EQ(back.resolution(), kR);
  EXPECT_EQ(before.v, back.swap(faces[0].image, faces[1].image).v);

  // A mismatched extractor is refused.
  Rng rng = derive_rng(6, "test-swap-ex2");
  Extractor<float> other("alt", kDf * 2, kR, rng);
  other.freeze();
  EXPECT_THROW(SwapModel<float>::load(path, other), ValidationError);
  fs::remove(path);
}

TEST(SwapModel, LoadRejectsForeignArchive) {
  auto ex = make_extractor();
  auto path =
      (fs::temp_directory_path() / "iderase_test_swap_foreign.bin").string();
  fs::remove(path);
  ex.save(path);
  EXPECT_THROW(SwapModel<float>::load(path, ex), ValidationError);
  fs::remove(path);
}

TEST(TrainSwap, InputValidation) {
  auto faces = make_synthetic_identities(2, 4, kR, 29);

  Rng rng = derive_rng(7, "test-swap-unfrozen");
  Extractor<float> thawed("alt", kDf, kR, rng);
  EXPECT_THROW(train_swap<float>(faces, thawed, 1, 1), ValidationError);

  auto ex = make_extractor();
  EXPECT_THROW(train_swap<float>(faces, ex, 0, 1), ValidationError);

  auto one_id = make_synthetic_identities(1, 4, kR, 31);
  EXPECT_THROW(train_swap<float>(one_id, ex, 1, 1), ValidationError);

  auto wrong_res = make_synthetic_identities(2, 4, kR * 2, 37);
  EXPECT_THROW(train_swap<float>(wrong_res, ex, 1, 1), ValidationError);

  EXPECT_THROW(train_swap<float>(faces, ex, 1, 1, "huge"), ValidationError);
}
