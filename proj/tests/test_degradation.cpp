#include <gtest/gtest.h>

#include <cmath>

#include "iderase/conv.hpp"
#include "iderase/degradation.hpp"

using namespace iderase;

namespace {

Tensor<float> random_face(std::uint64_t seed, std::int64_t r = 16) {
  Rng rng(seed);
  auto t = Tensor<float>::uniform({3, r, r}, -0.9f, 0.9f, rng);
  return t;
}

}  // namespace

TEST(Degradation, NamesRoundTrip) {
  for (auto k : {DegradationKind::None, DegradationKind::Jpeg,
                 DegradationKind::GaussianNoise, DegradationKind::GaussianBlur,
                 DegradationKind::Brightness, DegradationKind::Contrast})
    EXPECT_EQ(degradation_from_name(degradation_name(k)), k);
  EXPECT_THROW(degradation_from_name("sepia"), ValidationError);
}

TEST(Degradation, NonePassesThrough) {
  auto img = random_face(1);
  Rng rng(2);
  auto out = apply_degradation(img, DegradationKind::None, 0.0, rng);
  EXPECT_EQ(out.v, img.v);
}

TEST(Degradation, JpegMatchesCodec) {
  auto img = random_face(3, 32);
  Rng rng(4);
  auto out = apply_degradation(img, DegradationKind::Jpeg, 50, rng);
  auto direct = jpeg_roundtrip(img, 50);
  EXPECT_EQ(out.v, direct.v);
  // stronger compression, larger error
  auto worse = apply_degradation(img, DegradationKind::Jpeg, 20, rng);
  auto mse = [&](const Tensor<float>& x) {
    double s = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      double d = x.v[i] - img.v[i];
      s += d * d;
    }
    return s / x.numel();
  };
  EXPECT_GT(mse(worse), mse(out));
}

TEST(Degradation, NoiseSigmaOnEightBitScale) {
  // On a mid-gray image nothing clamps, so the empirical deviation matches
  // 2*sigma/255 in the [-1,1] convention.
  auto flat = Tensor<float>::zeros({3, 64, 64});
  Rng rng(5);
  const double sigma = 15.0;
  auto out = apply_degradation(flat, DegradationKind::GaussianNoise, sigma, rng);
  double s2 = 0;
  for (auto v : out.v) s2 += double(v) * v;
  double sd = std::sqrt(s2 / out.numel());
  EXPECT_NEAR(sd, 2.0 * sigma / 255.0, 0.1 * 2.0 * sigma / 255.0);

  // zero sigma leaves the image untouched
  Rng rng2(6);
  auto same = apply_degradation(flat, DegradationKind::GaussianNoise, 0.0, rng2);
  EXPECT_EQ(same.v, flat.v);
}

TEST(Degradation, NoiseDeterministicPerStream) {
  auto img = random_face(7);
  Rng a = derive_rng(1, "degrade-noise", 2, 3);
  Rng b = derive_rng(1, "degrade-noise", 2, 3);
  auto o1 = apply_degradation(img, DegradationKind::GaussianNoise, 10, a);
  auto o2 = apply_degradation(img, DegradationKind::GaussianNoise, 10, b);
  EXPECT_EQ(o1.v, o2.v);
}

TEST(Degradation, BlurMatchesGaussianConvolution) {
  auto img = random_face(8);
  Rng rng(9);
  const std::int64_t k = 7;
  auto out = apply_degradation(img, DegradationKind::GaussianBlur, double(k), rng);

  const double sigma = 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8;
  auto kernel = std::make_shared<const std::vector<double>>(
      gaussian_kernel_1d(static_cast<int>(k), sigma));
  auto direct = clamp_unit(separable_blur(make_leaf<float>(img), kernel)->val);
  EXPECT_EQ(out.v, direct.v);

  // flat images are fixed points
  auto flat = Tensor<float>::full({3, 16, 16}, 0.25f);
  auto same = apply_degradation(flat, DegradationKind::GaussianBlur, 5, rng);
  for (auto v : same.v) EXPECT_NEAR(v, 0.25f, 1e-6);
}

TEST(Degradation, BrightnessDisplayScaleMultiplicative) {
  // Display d = (x+1)/2 scales by f: x' = f x + (f-1).
  Tensor<float> img({3, 4, 4});
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img.v[i] = -0.5f + 0.05f * (i % 16);
  Rng rng(10);
  const double f = 1.2;
  auto out = apply_degradation(img, DegradationKind::Brightness, f, rng);
  for (std::int64_t i = 0; i < img.numel(); ++i) {
    float expect = std::clamp(static_cast<float>(f * img.v[i] + (f - 1.0)),
                              -1.0f, 1.0f);
    EXPECT_NEAR(out.v[i], expect, 1e-6);
  }
  // display-space check on one pixel: d=0.25 (x=-0.5) -> d'=0.3 (x'=-0.4)
  EXPECT_NEAR(out.v[0], -0.4f, 1e-6);
}

TEST(Degradation, ContrastPivotsOnMidGray) {
  Tensor<float> img = Tensor<float>::zeros({3, 4, 4});
  img.v[0] = 0.0f;
  img.v[1] = 0.5f;
  img.v[2] = -0.25f;
  Rng rng(11);
  auto out = apply_degradation(img, DegradationKind::Contrast, 0.8, rng);
  EXPECT_NEAR(out.v[0], 0.0f, 1e-7);  // mid gray unchanged
  EXPECT_NEAR(out.v[1], 0.4f, 1e-7);
  EXPECT_NEAR(out.v[2], -0.2f, 1e-7);

  // factors > 1 clamp at the range edges
  Tensor<float> bright = Tensor<float>::zeros({3, 4, 4});
  bright.v[0] = 0.9f;
  bright.v[1] = -0.9f;
  auto hi = apply_degradation(bright, DegradationKind::Contrast, 1.3, rng);
  EXPECT_NEAR(hi.v[0], 1.0f, 1e-7);
  EXPECT_NEAR(hi.v[1], -1.0f, 1e-7);
}

TEST(Degradation, StandardSweepGrids) {
  auto sweep = DegradationSpec::standard_sweep();
  ASSERT_EQ(sweep.size(), 6u);
  EXPECT_EQ(sweep[0].kind, DegradationKind::None);
  EXPECT_TRUE(sweep[0].grid.empty());
  EXPECT_EQ(sweep[1].kind, DegradationKind::Jpeg);
  EXPECT_EQ(sweep[1].grid, (std::vector<double>{95, 75, 50, 35, 20}));
  EXPECT_EQ(sweep[2].kind, DegradationKind::GaussianNoise);
  EXPECT_EQ(sweep[2].grid, (std::vector<double>{2, 5, 10, 15, 25}));
  EXPECT_EQ(sweep[3].kind, DegradationKind::GaussianBlur);
  EXPECT_EQ(sweep[3].grid, (std::vector<double>{3, 5, 7, 9, 11}));
  EXPECT_EQ(sweep[4].kind, DegradationKind::Brightness);
  EXPECT_EQ(sweep[4].grid, (std::vector<double>{1.05, 1.10, 1.15, 1.20, 1.30}));
  EXPECT_EQ(sweep[5].kind, DegradationKind::Contrast);
  EXPECT_EQ(sweep[5].grid, sweep[4].grid);
  for (const auto& s : sweep) s.validate();
}

TEST(Degradation, SpecValidation) {
  DegradationSpec bad_jpeg{DegradationKind::Jpeg, {0}};
  EXPECT_THROW(bad_jpeg.validate(), ValidationError);
  DegradationSpec bad_blur{DegradationKind::GaussianBlur, {4}};
  EXPECT_THROW(bad_blur.validate(), ValidationError);
  DegradationSpec bad_blur2{DegradationKind::GaussianBlur, {1}};
  EXPECT_THROW(bad_blur2.validate(), ValidationError);
  DegradationSpec bad_noise{DegradationKind::GaussianNoise, {-1}};
  EXPECT_THROW(bad_noise.validate(), ValidationError);
  DegradationSpec bad_factor{DegradationKind::Contrast, {0}};
  EXPECT_THROW(bad_factor.validate(), ValidationError);
}
