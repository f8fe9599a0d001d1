#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "iderase/image.hpp"
#include "iderase/rng.hpp"

using namespace iderase;
namespace fs = std::filesystem;

namespace {

fs::path tmp_png(const std::string& name) {
  auto p = fs::temp_directory_path() / ("iderase_img_" + name + ".png");
  fs::remove(p);
  return p;
}

// Random image already on the 8-bit lattice, so codec round trips can be
// compared exactly. Pixel convention: [-1, 1].
Tensor<float> quantized_random_image(std::int64_t r, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> hwc(static_cast<std::size_t>(3 * r * r));
  for (auto& b : hwc) b = static_cast<std::uint8_t>(rng.uniform_index(256));
  return from_u8_rgb(hwc, r, r);
}

}  // namespace

TEST(Image, FromU8Mapping) {
  // 1x2 RGB: pure red then mid gray, mapped onto [-1, 1].
  std::vector<std::uint8_t> hwc = {255, 0, 0, 128, 128, 128};
  auto t = from_u8_rgb(hwc, 1, 2);
  ASSERT_EQ(t.shape, (std::vector<std::int64_t>{3, 1, 2}));
  EXPECT_FLOAT_EQ(t.v[0], 1.0f);                     // R(0,0)
  EXPECT_FLOAT_EQ(t.v[1], static_cast<float>(2.0 * 128 / 255.0 - 1.0));  // R(0,1)
  EXPECT_FLOAT_EQ(t.v[2], -1.0f);                    // G(0,0)
  EXPECT_FLOAT_EQ(t.v[4], -1.0f);                    // B(0,0)
}

TEST(Image, ClampUnit) {
  Tensor<float> t({3, 1, 1}, {-1.5f, 0.25f, 1.5f});
  auto c = clamp_unit(t);
  EXPECT_FLOAT_EQ(c.v[0], -1.0f);
  EXPECT_FLOAT_EQ(c.v[1], 0.25f);
  EXPECT_FLOAT_EQ(c.v[2], 1.0f);
}

TEST(Image, BilinearIdentityAndConstant) {
  auto img = quantized_random_image(8, 5);
  auto same = bilinear_resize(img, 8, 8);
  for (std::int64_t i = 0; i < img.numel(); ++i)
    EXPECT_NEAR(same.v[i], img.v[i], 1e-6);

  auto flat = Tensor<float>::full({3, 4, 4}, 0.6f);
  auto up = bilinear_resize(flat, 9, 7);
  EXPECT_EQ(up.shape, (std::vector<std::int64_t>{3, 9, 7}));
  for (float x : up.v) EXPECT_NEAR(x, 0.6f, 1e-6);
}

TEST(Image, PngRoundTripExact) {
  auto img = quantized_random_image(16, 6);
  auto path = tmp_png("roundtrip");
  png_write(path, img, {{"fingerprint", "00ff"}, {"note", "unit"}});
  auto back = png_read(path);
  EXPECT_EQ(back.chw.shape, img.shape);
  EXPECT_EQ(back.chw.v, img.v) << "PNG must preserve lattice pixels exactly";
  EXPECT_EQ(back.text.at("fingerprint"), "00ff");
  EXPECT_EQ(back.text.at("note"), "unit");
  fs::remove(path);
}

TEST(Image, PngDeterministicBytes) {
  auto img = quantized_random_image(12, 7);
  auto p1 = tmp_png("det1");
  auto p2 = tmp_png("det2");
  png_write(p1, img, {{"k", "v"}});
  png_write(p2, img, {{"k", "v"}});
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_FALSE(b1.empty());
  EXPECT_EQ(b1, b2);
  fs::remove(p1);
  fs::remove(p2);
}

TEST(Image, JpegQualityOrdering) {
  auto img = quantized_random_image(32, 8);
  auto err = [&](int q) {
    auto out = jpeg_roundtrip(img, q);
    double s = 0;
    for (std::int64_t i = 0; i < img.numel(); ++i) {
      double d = out.v[i] - img.v[i];
      s += d * d;
    }
    return s / img.numel();
  };
  double e95 = err(95), e50 = err(50), e20 = err(20);
  EXPECT_LT(e95, e50);
  EXPECT_LT(e50, e20);
  EXPECT_GT(e20, 0.0);  // lossy codec must not be a no-op on noise
}

TEST(Image, JpegPreservesFlatRegions) {
  auto flat = Tensor<float>::full({3, 16, 16}, 0.5f);
  auto out = jpeg_roundtrip(flat, 75);
  for (float x : out.v) EXPECT_NEAR(x, 0.5f, 6.0f / 255);  // within 3 u8 steps
}

TEST(Image, WriteRejectsBadShape) {
  EXPECT_THROW(png_write(tmp_png("bad"), Tensor<float>::zeros({1, 4, 4})),
               ValidationError);
  EXPECT_THROW(jpeg_roundtrip(Tensor<float>::zeros({4, 4}), 75),
               ValidationError);
}
