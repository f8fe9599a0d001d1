#include <gtest/gtest.h>

#include <cmath>

#include "iderase/metrics.hpp"
#include "iderase/rng.hpp"

using namespace iderase;

namespace {

Tensor<float> random_image(std::uint64_t seed, std::int64_t r = 16) {
  Rng rng(seed);
  return Tensor<float>::uniform({3, r, r}, -0.9f, 0.9f, rng);
}

}  // namespace

TEST(Psnr, ClosedFormOffset) {
  // A constant difference of 0.1 on the display scale (0.2 in the [-1,1]
  // storage convention) gives mse 0.01 -> exactly 20 dB.
  auto a = Tensor<float>::full({3, 8, 8}, -0.3f);
  auto b = Tensor<float>::full({3, 8, 8}, -0.1f);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-6);
  EXPECT_NEAR(psnr(b, a), 20.0, 1e-6);

  // twice the offset: 20 - 20*log10(2) dB
  auto c = Tensor<float>::full({3, 8, 8}, 0.1f);
  EXPECT_NEAR(psnr(a, c), 20.0 - 20.0 * std::log10(2.0), 1e-6);
}

TEST(Psnr, IdenticalImagesCapped) {
  auto img = random_image(1);
  EXPECT_DOUBLE_EQ(psnr(img, img), 99.0);
}

TEST(Psnr, MonotoneInNoise) {
  auto img = random_image(2);
  Rng rng(3);
  auto noise = Tensor<float>::normal({3, 16, 16}, 0.0f, 1.0f, rng);
  auto with = [&](float amp) {
    Tensor<float> out = img;
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out.v[i] += amp * noise.v[i];
    return out;
  };
  EXPECT_GT(psnr(img, with(0.01f)), psnr(img, with(0.05f)));
  EXPECT_GT(psnr(img, with(0.05f)), psnr(img, with(0.2f)));
}

TEST(Ssim, SelfSimilarityIsOne) {
  auto img = random_image(4, 24);
  EXPECT_NEAR(ssim(img, img), 1.0, 1e-9);
}

TEST(Ssim, DegradesWithNoiseAndIsSymmetric) {
  auto img = random_image(5, 24);
  Rng rng(6);
  auto noise = Tensor<float>::normal({3, 24, 24}, 0.0f, 1.0f, rng);
  auto with = [&](float amp) {
    Tensor<float> out = img;
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out.v[i] += amp * noise.v[i];
    return out;
  };
  double s_small = ssim(img, with(0.05f));
  double s_big = ssim(img, with(0.3f));
  EXPECT_LT(s_big, s_small);
  EXPECT_LT(s_small, 1.0);
  EXPECT_GT(s_big, -1.0);
  EXPECT_NEAR(ssim(img, with(0.3f)), ssim(with(0.3f), img), 1e-12);
}

TEST(Ssim, RequiresMinimumSize) {
  auto tiny = Tensor<float>::zeros({3, 8, 8});  // smaller than the 11x11 window
  EXPECT_THROW(ssim(tiny, tiny), ValidationError);
  auto a = Tensor<float>::zeros({3, 16, 16});
  auto b = Tensor<float>::zeros({3, 24, 24});
  EXPECT_THROW(ssim(a, b), ValidationError);  // shape mismatch
}

TEST(Frechet, SelfDistanceZero) {
  Rng rng(7);
  std::vector<Tensor<float>> set;
  for (int i = 0; i < 8; ++i)
    set.push_back(Tensor<float>::normal({5}, 0.0f, 1.0f, rng));
  EXPECT_NEAR(frechet_distance(set, set), 0.0, 1e-6);
}

TEST(Frechet, HandComputedShift) {
  // Two 2-d sets with equal covariance, means 3 apart along x:
  // d^2 = |mu_a - mu_b|^2 = 9 (covariance terms cancel).
  std::vector<Tensor<float>> a = {
      Tensor<float>({2}, {0, 0}), Tensor<float>({2}, {2, 0}),
      Tensor<float>({2}, {1, 1}), Tensor<float>({2}, {1, -1})};
  std::vector<Tensor<float>> b;
  for (const auto& t : a) {
    auto s = t;
    s.v[0] += 3.0f;
    b.push_back(s);
  }
  EXPECT_NEAR(frechet_distance(a, b), 9.0, 1e-5);
}

TEST(Frechet, HandComputedOneDimensional) {
  // 1-d closed form: (mu_a - mu_b)^2 + (sigma_a - sigma_b)^2 with the
  // sample (n-1) deviation. A={0,2}: mu 1, sigma sqrt(2). B={5,9}: mu 7,
  // sigma sqrt(8). d^2 = 36 + (sqrt2 - 2 sqrt2)^2 = 38.
  std::vector<Tensor<float>> a = {Tensor<float>({1}, {0}),
                                  Tensor<float>({1}, {2})};
  std::vector<Tensor<float>> b = {Tensor<float>({1}, {5}),
                                  Tensor<float>({1}, {9})};
  EXPECT_NEAR(frechet_distance(a, b), 38.0, 1e-5);
}

TEST(Frechet, ScaleSensitive) {
  // Same mean, dilated covariance: d^2 = sum_i (sigma_i - 2 sigma_i)^2 > 0.
  std::vector<Tensor<float>> a = {
      Tensor<float>({2}, {0, 0}), Tensor<float>({2}, {2, 0}),
      Tensor<float>({2}, {1, 1}), Tensor<float>({2}, {1, -1})};
  std::vector<Tensor<float>> b;
  for (const auto& t : a) {
    auto s = t;
    s.v[0] = 2.0f * (s.v[0] - 1.0f) + 1.0f;  // dilate about the mean
    s.v[1] = 2.0f * s.v[1];
    b.push_back(s);
  }
  // sigma^2 per axis: a = 2/3; b = 8/3. d^2 = 2 * (sqrt(2/3) - sqrt(8/3))^2
  double sa = std::sqrt(2.0 / 3.0), sb = std::sqrt(8.0 / 3.0);
  EXPECT_NEAR(frechet_distance(a, b), 2.0 * (sa - sb) * (sb - sa) * -1.0, 1e-5);
}

TEST(Frechet, InputValidation) {
  std::vector<Tensor<float>> one = {Tensor<float>({2}, {0, 0})};
  std::vector<Tensor<float>> two = {Tensor<float>({2}, {0, 0}),
                                    Tensor<float>({2}, {1, 1})};
  EXPECT_THROW(frechet_distance(one, two), ValidationError);
  std::vector<Tensor<float>> wrong = {Tensor<float>({3}, {0, 0, 1}),
                                      Tensor<float>({3}, {1, 1, 0})};
  EXPECT_THROW(frechet_distance(two, wrong), ValidationError);
}
