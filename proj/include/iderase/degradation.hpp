#pragma once

#include <string>
#include <vector>

#include "iderase/conv.hpp"
#include "iderase/dataset.hpp"
#include "iderase/image.hpp"
#include "iderase/rng.hpp"

namespace iderase {

enum class DegradationKind { None, Jpeg, GaussianNoise, GaussianBlur, Brightness, Contrast };

inline const char* degradation_name(DegradationKind k) {
  switch (k) {
    case DegradationKind::None: return "none";
    case DegradationKind::Jpeg: return "jpeg";
    case DegradationKind::GaussianNoise: return "noise";
    case DegradationKind::GaussianBlur: return "blur";
    case DegradationKind::Brightness: return "brightness";
    case DegradationKind::Contrast: return "contrast";
  }
  throw ValidationError("unknown degradation kind");
}

inline DegradationKind degradation_from_name(const std::string& s) {
  for (DegradationKind k :
       {DegradationKind::None, DegradationKind::Jpeg, DegradationKind::GaussianNoise,
        DegradationKind::GaussianBlur, DegradationKind::Brightness,
        DegradationKind::Contrast})
    if (s == degradation_name(k)) return k;
  throw ValidationError("unknown degradation kind: " + s);
}

struct DegradationSpec {
  DegradationKind kind = DegradationKind::None;
  std::vector<double> grid;  // parameter values; empty only for None

  void validate() const {
    if (kind == DegradationKind::None) return;
    check(!grid.empty(), "degradation: empty parameter grid");
    for (double v : grid) {
      switch (kind) {
        case DegradationKind::Jpeg:
          check(v >= 1 && v <= 100 && v == std::floor(v),
                "degradation: jpeg quality must be an integer in [1,100]");
          break;
        case DegradationKind::GaussianNoise:
          check(v >= 0, "degradation: noise sigma must be >= 0");
          break;
        case DegradationKind::GaussianBlur:
          check(v >= 3 && v == std::floor(v) && std::int64_t(v) % 2 == 1,
                "degradation: blur kernel size must be an odd integer >= 3");
          break;
        case DegradationKind::Brightness:
        case DegradationKind::Contrast:
          check(v > 0, "degradation: factor must be > 0");
          break;
        case DegradationKind::None: break;
      }
    }
  }

  // The five standard sweep grids (plus the undegraded reference row).
  static std::vector<DegradationSpec> standard_sweep() {
    return {
        {DegradationKind::None, {}},
        {DegradationKind::Jpeg, {95, 75, 50, 35, 20}},
        {DegradationKind::GaussianNoise, {2, 5, 10, 15, 25}},
        {DegradationKind::GaussianBlur, {3, 5, 7, 9, 11}},
        {DegradationKind::Brightness, {1.05, 1.10, 1.15, 1.20, 1.30}},
        {DegradationKind::Contrast, {1.05, 1.10, 1.15, 1.20, 1.30}},
    };
  }
};

// Applies one degradation at one grid value. Noise sigma is on the 8-bit
// [0,255] scale (converted internally); blur sigma follows the common
// kernel-size convention sigma = 0.3*((k-1)*0.5 - 1) + 0.8; brightness and
// contrast are multiplicative factors on the [0,1] scale (contrast pivots at
// mid-gray). JPEG is a true codec round-trip. Output is clamped to [-1,1].
inline Tensor<float> apply_degradation(const Tensor<float>& img,
                                       DegradationKind kind, double value,
                                       Rng& noise_rng) {
  check_face_image(img);
  switch (kind) {
    case DegradationKind::None:
      return img;
    case DegradationKind::Jpeg:
      return jpeg_roundtrip(img, static_cast<int>(value));
    case DegradationKind::GaussianNoise: {
      Tensor<float> out = img;
      const double sigma_unit = 2.0 * value / 255.0;
      for (std::int64_t i = 0; i < out.numel(); ++i)
        out.v[i] = static_cast<float>(out.v[i] + sigma_unit * noise_rng.normal());
      return clamp_unit(std::move(out));
    }
    case DegradationKind::GaussianBlur: {
      const auto k = static_cast<std::int64_t>(value);
      const double sigma = 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8;
      auto kernel = std::make_shared<const std::vector<double>>(
          gaussian_kernel_1d(static_cast<int>(k), sigma));
      auto out = separable_blur(make_leaf<float>(img), kernel);
      return clamp_unit(out->val);
    }
    case DegradationKind::Brightness: {
      Tensor<float> out = img;
      const auto f = static_cast<float>(value);
      for (auto& v : out.v) v = f * v + (f - 1);
      return clamp_unit(std::move(out));
    }
    case DegradationKind::Contrast: {
      Tensor<float> out = img;
      const auto f = static_cast<float>(value);
      for (auto& v : out.v) v = f * v;
      return clamp_unit(std::move(out));
    }
  }
  throw ValidationError("unknown degradation kind");
}

}  // namespace iderase
