#pragma once

#include <memory>

#include "iderase/conv.hpp"
#include "iderase/rng.hpp"

namespace iderase {

// Stochastic differentiable augmentation applied in the training forward
// pass. Five candidate transforms — crop, rotation, horizontal flip,
// resize-down-and-back, Gaussian blur — each independently applied with the
// configured probability, composed in that fixed order. Geometry runs
// through bilinear warps with symmetric padding, flip is an exact pixel
// permutation, and blur is a separable Gaussian; every path is
// differentiable w.r.t. the input pixels.
struct InterferenceSpec {
  bool crop = true;
  bool rotation = true;
  bool flip = true;
  bool resize = true;
  bool blur = true;
  double prob = 0.5;  // per-transform application probability

  double crop_keep_min = 0.85, crop_keep_max = 1.0;
  double rotation_max_deg = 10.0;
  double resize_min = 0.5, resize_max = 1.0;
  double blur_sigma_min = 0.3, blur_sigma_max = 1.5;

  void validate() const {
    check(prob >= 0.0 && prob <= 1.0, "interference: probability outside [0,1]");
    check(crop_keep_min > 0.0 && crop_keep_min <= crop_keep_max &&
              crop_keep_max <= 1.0,
          "interference: crop keep-ratio range invalid");
    check(rotation_max_deg >= 0.0 && rotation_max_deg < 90.0,
          "interference: rotation range invalid");
    check(resize_min > 0.0 && resize_min <= resize_max && resize_max <= 1.0,
          "interference: resize factor range invalid");
    check(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max,
          "interference: blur sigma range invalid");
  }

  static InterferenceSpec disabled() {
    InterferenceSpec s;
    s.crop = s.rotation = s.flip = s.resize = s.blur = false;
    return s;
  }
};

struct ConcreteTransform {
  std::int64_t resolution = 0;
  bool do_crop = false;
  double keep = 1.0, off_y = 0.0, off_x = 0.0;
  bool do_rotation = false;
  double degrees = 0.0;
  bool do_flip = false;
  bool do_resize = false;
  double factor = 1.0;
  bool do_blur = false;
  double sigma = 0.0;

  bool is_identity() const {
    return !do_crop && !do_rotation && !do_flip && !do_resize && !do_blur;
  }
};

// Draws one concrete composed transform. Sampling order is fixed (crop,
// rotation, flip, resize, blur; parameters drawn only when the transform
// fires), so a given rng state always yields the same transform. Disabling
// every transform yields the identity.
inline ConcreteTransform sample_transform(const InterferenceSpec& spec, Rng& rng,
                                          std::int64_t resolution) {
  spec.validate();
  check(resolution > 0 && resolution % 4 == 0,
        "interference: bad resolution");
  ConcreteTransform t;
  t.resolution = resolution;
  if (spec.crop && rng.bernoulli(spec.prob)) {
    t.do_crop = true;
    t.keep = rng.uniform(spec.crop_keep_min, spec.crop_keep_max);
    double slack = resolution * (1.0 - t.keep);
    t.off_y = rng.uniform(0.0, slack);
    t.off_x = rng.uniform(0.0, slack);
  }
  if (spec.rotation && rng.bernoulli(spec.prob)) {
    t.do_rotation = true;
    t.degrees = rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg);
  }
  if (spec.flip && rng.bernoulli(spec.prob)) t.do_flip = true;
  if (spec.resize && rng.bernoulli(spec.prob)) {
    t.do_resize = true;
    t.factor = rng.uniform(spec.resize_min, spec.resize_max);
  }
  if (spec.blur && rng.bernoulli(spec.prob)) {
    t.do_blur = true;
    t.sigma = rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max);
  }
  return t;
}

namespace detail {

inline std::shared_ptr<const WarpPlan> plan_crop(std::int64_t r, double keep,
                                                 double off_y, double off_x) {
  auto p = std::make_shared<WarpPlan>();
  p->src_h = p->src_w = r;
  p->out_h = p->out_w = r;
  double side = keep * r;
  for (std::int64_t y = 0; y < r; ++y)
    for (std::int64_t x = 0; x < r; ++x)
      p->add(off_y + (y + 0.5) * side / r - 0.5,
             off_x + (x + 0.5) * side / r - 0.5);
  return p;
}

inline std::shared_ptr<const WarpPlan> plan_rotation(std::int64_t r, double degrees) {
  auto p = std::make_shared<WarpPlan>();
  p->src_h = p->src_w = r;
  p->out_h = p->out_w = r;
  double th = degrees * M_PI / 180.0;
  double c = (r - 1) * 0.5;
  double ct = std::cos(th), st = std::sin(th);
  for (std::int64_t y = 0; y < r; ++y)
    for (std::int64_t x = 0; x < r; ++x) {
      double dy = y - c, dx = x - c;
      p->add(c + ct * dy - st * dx, c + st * dy + ct * dx);
    }
  return p;
}

inline std::shared_ptr<const WarpPlan> plan_resize(std::int64_t src,
                                                   std::int64_t dst) {
  auto p = std::make_shared<WarpPlan>();
  p->src_h = p->src_w = src;
  p->out_h = p->out_w = dst;
  double s = static_cast<double>(src) / dst;
  for (std::int64_t y = 0; y < dst; ++y)
    for (std::int64_t x = 0; x < dst; ++x)
      p->add((y + 0.5) * s - 0.5, (x + 0.5) * s - 0.5);
  return p;
}

inline std::shared_ptr<const std::vector<std::int32_t>> flip_map(std::int64_t c,
                                                                 std::int64_t h,
                                                                 std::int64_t w) {
  auto m = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(c * h * w));
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        (*m)[static_cast<std::size_t>(ci * h * w + y * w + x)] =
            static_cast<std::int32_t>(ci * h * w + y * w + (w - 1 - x));
  return m;
}

inline int blur_kernel_size(double sigma) {
  int k = 2 * static_cast<int>(std::ceil(2.0 * sigma)) + 1;
  return std::max(k, 3);
}

}  // namespace detail

// Applies a concrete transform to a CHW image variable; output resolution
// always matches the input. Identity transforms return the input node
// unchanged (bit-identical).
template <class T>
Var<T> apply_transform(const ConcreteTransform& t, const Var<T>& img) {
  check(img->val.ndim() == 3, "interference: need CHW input");
  check(img->val.dim(1) == t.resolution && img->val.dim(2) == t.resolution,
        "interference: image resolution does not match sampled transform");
  if (t.is_identity()) return img;
  Var<T> h = img;
  std::int64_t r = t.resolution;
  if (t.do_crop) h = warp_bilinear(h, detail::plan_crop(r, t.keep, t.off_y, t.off_x));
  if (t.do_rotation) h = warp_bilinear(h, detail::plan_rotation(r, t.degrees));
  if (t.do_flip)
    h = reindex(h, {h->val.dim(0), r, r}, detail::flip_map(h->val.dim(0), r, r));
  if (t.do_resize) {
    std::int64_t m = std::max<std::int64_t>(4, std::llround(t.factor * r));
    if (m != r) {
      h = warp_bilinear(h, detail::plan_resize(r, m));
      h = warp_bilinear(h, detail::plan_resize(m, r));
    }
  }
  if (t.do_blur) {
    auto kern = std::make_shared<const std::vector<double>>(
        gaussian_kernel_1d(detail::blur_kernel_size(t.sigma), t.sigma));
    h = separable_blur(h, kern);
  }
  return h;
}

}  // namespace iderase
