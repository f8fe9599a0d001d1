#pragma once

#include <Eigen/Dense>
#include <vector>

#include "iderase/extractor.hpp"
#include "iderase/image.hpp"

namespace iderase {

// Peak signal-to-noise ratio between two images in [-1,1], computed on the
// [0,1] rescale (peak 1), capped at 99 dB for (near-)identical pairs.
inline double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  check(a.shape == b.shape, "psnr: shape mismatch");
  check(a.numel() > 0, "psnr: empty image");
  double acc = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = (static_cast<double>(a.v[i]) - b.v[i]) * 0.5;  // [0,1] scale
    acc += d * d;
  }
  const double mse01 = acc / a.numel();
  constexpr double kCap = 99.0;
  if (mse01 <= 0) return kCap;
  return std::min(kCap, 10.0 * std::log10(1.0 / mse01));
}

namespace detail {

// Valid-region separable Gaussian filter over one channel plane (doubles).
inline std::vector<double> ssim_filter_valid(const std::vector<double>& plane,
                                             std::int64_t h, std::int64_t w,
                                             const std::vector<double>& k) {
  const auto r = static_cast<std::int64_t>(k.size()) / 2;
  const std::int64_t oh = h - 2 * r, ow = w - 2 * r;
  std::vector<double> tmp(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t t = 0; t < k.size(); ++t)
        s += k[t] * plane[y * w + x + static_cast<std::int64_t>(t)];
      tmp[y * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t t = 0; t < k.size(); ++t)
        s += k[t] * tmp[(y + static_cast<std::int64_t>(t)) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace detail

// Mean structural similarity on the [0,1] rescale: 11x11 Gaussian window
// (sigma 1.5), c1=(0.01)^2, c2=(0.03)^2, averaged over the valid region of
// every channel (windows fully inside the image).
inline double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  check(a.shape == b.shape, "ssim: shape mismatch");
  check(a.ndim() == 3, "ssim: expected a CHW image");
  const std::int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  constexpr std::int64_t kWin = 11;
  check(h >= kWin && w >= kWin, "ssim: image smaller than the 11x11 window");
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;

  std::vector<double> k(kWin);
  double ksum = 0;
  for (std::int64_t i = 0; i < kWin; ++i) {
    const double t = (i - (kWin - 1) / 2.0) / 1.5;
    k[i] = std::exp(-0.5 * t * t);
    ksum += k[i];
  }
  for (auto& v : k) v /= ksum;

  double total = 0;
  std::int64_t count = 0;
  std::vector<double> x(static_cast<std::size_t>(h * w)), y(x.size()),
      xx(x.size()), yy(x.size()), xy(x.size());
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float* pa = a.data() + ch * h * w;
    const float* pb = b.data() + ch * h * w;
    for (std::int64_t i = 0; i < h * w; ++i) {
      x[i] = (static_cast<double>(pa[i]) + 1) * 0.5;
      y[i] = (static_cast<double>(pb[i]) + 1) * 0.5;
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    auto mx = detail::ssim_filter_valid(x, h, w, k);
    auto my = detail::ssim_filter_valid(y, h, w, k);
    auto mxx = detail::ssim_filter_valid(xx, h, w, k);
    auto myy = detail::ssim_filter_valid(yy, h, w, k);
    auto mxy = detail::ssim_filter_valid(xy, h, w, k);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double vxy = mxy[i] - mx[i] * my[i];
      const double num = (2 * mx[i] * my[i] + kC1) * (2 * vxy + kC2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / count;
}

// Evaluation-time perceptual distance: mean over extractor tap layers of the
// mean-squared feature difference (the same form as the training loss).
template <class T>
double perceptual_distance(const Extractor<T>& ex, const Tensor<float>& a,
                           const Tensor<float>& b) {
  auto fa = ex.trunk_features(a, false);
  auto fb = ex.trunk_features(b, false);
  check(fa.size() == fb.size(), "perceptual_distance: tap count mismatch");
  double acc = 0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    check(fa[l].shape == fb[l].shape, "perceptual_distance: tap shape mismatch");
    double layer = 0;
    for (std::int64_t i = 0; i < fa[l].numel(); ++i) {
      const double d = static_cast<double>(fa[l].v[i]) - fb[l].v[i];
      layer += d * d;
    }
    acc += layer / fa[l].numel();
  }
  return acc / fa.size();
}

namespace detail {

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      (m + m.transpose()) * 0.5);  // symmetrize against round-off
  check(es.info() == Eigen::Success, "frechet: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Squared Fréchet distance between Gaussian fits of two feature sets
// (rows = samples). Sample covariance uses n-1 normalization; the matrix
// square roots clip negative eigenvalues at 0. This is the same functional
// form as FID but over this library's extractor features, NOT Inception-FID.
inline double frechet_distance(const std::vector<Tensor<float>>& set_a,
                               const std::vector<Tensor<float>>& set_b) {
  check(set_a.size() >= 2 && set_b.size() >= 2,
        "frechet: need at least 2 samples per set");
  const std::int64_t d = set_a[0].numel();
  auto stack = [d](const std::vector<Tensor<float>>& set) {
    Eigen::MatrixXd m(set.size(), d);
    for (std::size_t i = 0; i < set.size(); ++i) {
      check(set[i].numel() == d, "frechet: inconsistent feature width");
      for (std::int64_t j = 0; j < d; ++j) m(i, j) = set[i].v[j];
    }
    return m;
  };
  Eigen::MatrixXd a = stack(set_a), b = stack(set_b);
  Eigen::VectorXd mu_a = a.colwise().mean(), mu_b = b.colwise().mean();
  a.rowwise() -= mu_a.transpose();
  b.rowwise() -= mu_b.transpose();
  Eigen::MatrixXd ca = (a.transpose() * a) / static_cast<double>(a.rows() - 1);
  Eigen::MatrixXd cb = (b.transpose() * b) / static_cast<double>(b.rows() - 1);

  Eigen::MatrixXd sa = detail::psd_sqrt(ca);
  Eigen::MatrixXd cross = detail::psd_sqrt(sa * cb * sa);
  const double d2 = (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() -
                    2.0 * cross.trace();
  return std::max(0.0, d2);  // clamp round-off on identical distributions
}

}  // namespace iderase
