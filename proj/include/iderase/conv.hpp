#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "iderase/ops.hpp"

namespace iderase {

namespace detail {

// Zero-padded im2col for CHW input. col is [Ci*kh*kw, Ho*Wo] row-major.
template <class T>
void im2col(const T* x, std::int64_t ci, std::int64_t h, std::int64_t w,
            std::int64_t kh, std::int64_t kw, std::int64_t stride,
            std::int64_t pad, std::int64_t ho, std::int64_t wo, T* col) {
  std::int64_t out_hw = ho * wo;
  for (std::int64_t c = 0; c < ci; ++c) {
    for (std::int64_t dy = 0; dy < kh; ++dy) {
      for (std::int64_t dx = 0; dx < kw; ++dx) {
        T* row = col + ((c * kh + dy) * kw + dx) * out_hw;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          std::int64_t iy = oy * stride + dy - pad;
          if (iy < 0 || iy >= h) {
            std::fill(row + oy * wo, row + (oy + 1) * wo, T(0));
            continue;
          }
          const T* src = x + (c * h + iy) * w;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            std::int64_t ix = ox * stride + dx - pad;
            row[oy * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, std::int64_t ci, std::int64_t h, std::int64_t w,
                std::int64_t kh, std::int64_t kw, std::int64_t stride,
                std::int64_t pad, std::int64_t ho, std::int64_t wo, T* x) {
  std::int64_t out_hw = ho * wo;
  for (std::int64_t c = 0; c < ci; ++c) {
    for (std::int64_t dy = 0; dy < kh; ++dy) {
      for (std::int64_t dx = 0; dx < kw; ++dx) {
        const T* row = col + ((c * kh + dy) * kw + dx) * out_hw;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          std::int64_t iy = oy * stride + dy - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (c * h + iy) * w;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            std::int64_t ix = ox * stride + dx - pad;
            if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-d convolution, x[Ci,H,W], w[Co,Ci,kh,kw], optional bias[Co].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b,
              std::int64_t stride, std::int64_t pad) {
  check(x->val.ndim() == 3 && w->val.ndim() == 4, "conv2d: bad rank");
  std::int64_t ci = x->val.dim(0), h = x->val.dim(1), wd = x->val.dim(2);
  std::int64_t co = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
  check(w->val.dim(1) == ci, "conv2d: channel mismatch, input has " +
                                 std::to_string(ci) + " weight expects " +
                                 std::to_string(w->val.dim(1)));
  std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
  std::int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  check(ho > 0 && wo > 0, "conv2d: empty output");
  std::int64_t krows = ci * kh * kw, out_hw = ho * wo;

  std::vector<T> col(static_cast<std::size_t>(krows * out_hw));
  detail::im2col(x->val.data(), ci, h, wd, kh, kw, stride, pad, ho, wo, col.data());
  Tensor<T> out({co, ho, wo});
  {
    MapC<T> wm(w->val.data(), co, krows);
    MapC<T> cm(col.data(), krows, out_hw);
    MapM<T> ym(out.data(), co, out_hw);
    ym.noalias() = wm * cm;
  }
  if (b) {
    check(b->val.numel() == co, "conv2d: bias dim mismatch");
    for (std::int64_t c = 0; c < co; ++c) {
      T add = b->val.v[c];
      for (std::int64_t i = 0; i < out_hw; ++i) out.v[c * out_hw + i] += add;
    }
  }
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b}
                                  : std::vector<Var<T>>{x, w};
  auto n = make_node<T>(std::move(out), std::move(parents), nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    // Recompute col in backward rather than retaining it: halves live memory
    // across the deep graphs built per sample.
    n->backprop = [self, x, w, b, ci, h, wd, co, kh, kw, stride, pad, ho, wo,
                   krows, out_hw]() {
      MapC<T> gy(self->grad.data(), co, out_hw);
      if (w->needs_grad) {
        std::vector<T> col(static_cast<std::size_t>(krows * out_hw));
        detail::im2col(x->val.data(), ci, h, wd, kh, kw, stride, pad, ho, wo,
                       col.data());
        MapC<T> cm(col.data(), krows, out_hw);
        MapM<T> gw(w->ensure_grad().data(), co, krows);
        gw.noalias() += gy * cm.transpose();
      }
      if (x->needs_grad) {
        std::vector<T> gcol(static_cast<std::size_t>(krows * out_hw));
        MapC<T> wm(w->val.data(), co, krows);
        MapM<T> gc(gcol.data(), krows, out_hw);
        gc.noalias() = wm.transpose() * gy;
        detail::col2im_add(gcol.data(), ci, h, wd, kh, kw, stride, pad, ho, wo,
                           x->ensure_grad().data());
      }
      if (b && b->needs_grad) {
        auto& gb = b->ensure_grad();
        for (std::int64_t c = 0; c < co; ++c) {
          T s = 0;
          for (std::int64_t i = 0; i < out_hw; ++i) s += self->grad.v[c * out_hw + i];
          gb.v[c] += s;
        }
      }
    };
  }
  return n;
}

// Transposed 2-d convolution, x[Ci,H,W], w[Ci,Co,kh,kw], optional bias[Co].
// Output is [(H-1)*stride - 2*pad + kh] per spatial dim.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b,
                        std::int64_t stride, std::int64_t pad) {
  check(x->val.ndim() == 3 && w->val.ndim() == 4, "conv_transpose2d: bad rank");
  std::int64_t ci = x->val.dim(0), h = x->val.dim(1), wd = x->val.dim(2);
  check(w->val.dim(0) == ci, "conv_transpose2d: channel mismatch");
  std::int64_t co = w->val.dim(1), kh = w->val.dim(2), kw = w->val.dim(3);
  std::int64_t ho = (h - 1) * stride - 2 * pad + kh;
  std::int64_t wo = (wd - 1) * stride - 2 * pad + kw;
  check(ho > 0 && wo > 0, "conv_transpose2d: empty output");
  std::int64_t krows = co * kh * kw, in_hw = h * wd;

  // cols = W^T[co*kh*kw, ci] x X[ci, h*w], then scatter into the output.
  std::vector<T> cols(static_cast<std::size_t>(krows * in_hw));
  {
    MapC<T> wm(w->val.data(), ci, krows);
    MapC<T> xm(x->val.data(), ci, in_hw);
    MapM<T> cm(cols.data(), krows, in_hw);
    cm.noalias() = wm.transpose() * xm;
  }
  Tensor<T> out = Tensor<T>::zeros({co, ho, wo});
  for (std::int64_t c = 0; c < co; ++c)
    for (std::int64_t dy = 0; dy < kh; ++dy)
      for (std::int64_t dx = 0; dx < kw; ++dx) {
        const T* row = cols.data() + ((c * kh + dy) * kw + dx) * in_hw;
        for (std::int64_t y = 0; y < h; ++y) {
          std::int64_t oy = y * stride + dy - pad;
          if (oy < 0 || oy >= ho) continue;
          T* dst = out.data() + (c * ho + oy) * wo;
          for (std::int64_t xx = 0; xx < wd; ++xx) {
            std::int64_t ox = xx * stride + dx - pad;
            if (ox >= 0 && ox < wo) dst[ox] += row[y * wd + xx];
          }
        }
      }
  if (b) {
    check(b->val.numel() == co, "conv_transpose2d: bias dim mismatch");
    for (std::int64_t c = 0; c < co; ++c) {
      T add = b->val.v[c];
      for (std::int64_t i = 0; i < ho * wo; ++i) out.v[c * ho * wo + i] += add;
    }
  }
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b}
                                  : std::vector<Var<T>>{x, w};
  auto n = make_node<T>(std::move(out), std::move(parents), nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, x, w, b, ci, h, wd, co, kh, kw, stride, pad, ho, wo,
                   krows, in_hw]() {
      // Gather d(cols) from the output gradient, then two GEMMs.
      std::vector<T> gcols(static_cast<std::size_t>(krows * in_hw), T(0));
      for (std::int64_t c = 0; c < co; ++c)
        for (std::int64_t dy = 0; dy < kh; ++dy)
          for (std::int64_t dx = 0; dx < kw; ++dx) {
            T* row = gcols.data() + ((c * kh + dy) * kw + dx) * in_hw;
            for (std::int64_t y = 0; y < h; ++y) {
              std::int64_t oy = y * stride + dy - pad;
              if (oy < 0 || oy >= ho) continue;
              const T* src = self->grad.data() + (c * ho + oy) * wo;
              for (std::int64_t xx = 0; xx < wd; ++xx) {
                std::int64_t ox = xx * stride + dx - pad;
                if (ox >= 0 && ox < wo) row[y * wd + xx] = src[ox];
              }
            }
          }
      MapC<T> gc(gcols.data(), krows, in_hw);
      if (x->needs_grad) {
        MapC<T> wm(w->val.data(), ci, krows);
        MapM<T> gx(x->ensure_grad().data(), ci, in_hw);
        gx.noalias() += wm * gc;
      }
      if (w->needs_grad) {
        MapC<T> xm(x->val.data(), ci, in_hw);
        MapM<T> gw(w->ensure_grad().data(), ci, krows);
        gw.noalias() += xm * gc.transpose();
      }
      if (b && b->needs_grad) {
        auto& gb = b->ensure_grad();
        for (std::int64_t c = 0; c < co; ++c) {
          T s = 0;
          for (std::int64_t i = 0; i < ho * wo; ++i)
            s += self->grad.v[c * ho * wo + i];
          gb.v[c] += s;
        }
      }
    };
  }
  return n;
}

namespace detail {

// Symmetric (edge-inclusive mirror) fold of an index into [0, n).
inline std::int64_t fold_symmetric(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  std::int64_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace detail

// Depthwise separable blur with a fixed 1-d kernel and symmetric padding.
// Applied horizontally then vertically; the kernel is data, not a parameter.
template <class T>
Var<T> separable_blur(const Var<T>& x, std::shared_ptr<const std::vector<double>> kernel) {
  check(x->val.ndim() == 3, "separable_blur: need CHW input");
  std::int64_t c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  std::int64_t kn = static_cast<std::int64_t>(kernel->size());
  check(kn % 2 == 1, "separable_blur: kernel size must be odd");
  std::int64_t r = kn / 2;

  auto pass_h = [&](const T* src, T* dst) {
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t y = 0; y < h; ++y) {
        const T* row = src + (ci * h + y) * w;
        T* orow = dst + (ci * h + y) * w;
        for (std::int64_t xx = 0; xx < w; ++xx) {
          double s = 0;
          for (std::int64_t k = 0; k < kn; ++k)
            s += (*kernel)[static_cast<std::size_t>(k)] *
                 row[detail::fold_symmetric(xx + k - r, w)];
          orow[xx] = static_cast<T>(s);
        }
      }
  };
  auto pass_v = [&](const T* src, T* dst) {
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t xx = 0; xx < w; ++xx)
        for (std::int64_t y = 0; y < h; ++y) {
          double s = 0;
          for (std::int64_t k = 0; k < kn; ++k)
            s += (*kernel)[static_cast<std::size_t>(k)] *
                 src[(ci * h + detail::fold_symmetric(y + k - r, h)) * w + xx];
          dst[(ci * h + y) * w + xx] = static_cast<T>(s);
        }
  };

  Tensor<T> tmp(x->val.shape);
  Tensor<T> out(x->val.shape);
  pass_h(x->val.data(), tmp.data());
  pass_v(tmp.data(), out.data());

  auto n = make_node<T>(std::move(out), {x}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, x, kernel, c, h, w, kn, r]() {
      // Transpose of each pass scatters through the same folded taps.
      Tensor<T> gtmp = Tensor<T>::zeros({c, h, w});
      for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t xx = 0; xx < w; ++xx)
          for (std::int64_t y = 0; y < h; ++y) {
            T go = self->grad.v[(ci * h + y) * w + xx];
            for (std::int64_t k = 0; k < kn; ++k)
              gtmp.v[(ci * h + detail::fold_symmetric(y + k - r, h)) * w + xx] +=
                  static_cast<T>((*kernel)[static_cast<std::size_t>(k)] * go);
          }
      auto& gx = x->ensure_grad();
      for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t xx = 0; xx < w; ++xx) {
            T go = gtmp.v[(ci * h + y) * w + xx];
            for (std::int64_t k = 0; k < kn; ++k)
              gx.v[(ci * h + y) * w + detail::fold_symmetric(xx + k - r, w)] +=
                  static_cast<T>((*kernel)[static_cast<std::size_t>(k)] * go);
          }
    };
  }
  return n;
}

// Precomputed bilinear sampling plan: each output pixel draws from four
// source taps (already folded into bounds) with fixed weights.
struct WarpPlan {
  std::int64_t out_h = 0, out_w = 0;
  std::int64_t src_h = 0, src_w = 0;
  std::vector<std::array<std::int32_t, 4>> idx;  // flat indices into H*W
  std::vector<std::array<double, 4>> wgt;

  // Sampling position (sy, sx) in source coordinates for output pixel.
  void add(double sy, double sx) {
    std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
    std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
    double fy = sy - y0, fx = sx - x0;
    auto at = [&](std::int64_t y, std::int64_t x) {
      return static_cast<std::int32_t>(detail::fold_symmetric(y, src_h) * src_w +
                                       detail::fold_symmetric(x, src_w));
    };
    idx.push_back({at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)});
    wgt.push_back({(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx});
  }
};

template <class T>
Var<T> warp_bilinear(const Var<T>& x, std::shared_ptr<const WarpPlan> plan) {
  check(x->val.ndim() == 3, "warp_bilinear: need CHW input");
  std::int64_t c = x->val.dim(0);
  check(x->val.dim(1) == plan->src_h && x->val.dim(2) == plan->src_w,
        "warp_bilinear: input size does not match plan");
  std::int64_t out_hw = plan->out_h * plan->out_w;
  std::int64_t src_hw = plan->src_h * plan->src_w;
  check(static_cast<std::int64_t>(plan->idx.size()) == out_hw,
        "warp_bilinear: plan tap count mismatch");
  Tensor<T> out({c, plan->out_h, plan->out_w});
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const T* src = x->val.data() + ci * src_hw;
    T* dst = out.data() + ci * out_hw;
    for (std::int64_t i = 0; i < out_hw; ++i) {
      const auto& id = plan->idx[static_cast<std::size_t>(i)];
      const auto& wt = plan->wgt[static_cast<std::size_t>(i)];
      dst[i] = static_cast<T>(wt[0] * src[id[0]] + wt[1] * src[id[1]] +
                              wt[2] * src[id[2]] + wt[3] * src[id[3]]);
    }
  }
  auto n = make_node<T>(std::move(out), {x}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, x, plan, c, out_hw, src_hw]() {
      auto& g = x->ensure_grad();
      for (std::int64_t ci = 0; ci < c; ++ci) {
        T* gs = g.data() + ci * src_hw;
        const T* go = self->grad.data() + ci * out_hw;
        for (std::int64_t i = 0; i < out_hw; ++i) {
          const auto& id = plan->idx[static_cast<std::size_t>(i)];
          const auto& wt = plan->wgt[static_cast<std::size_t>(i)];
          gs[id[0]] += static_cast<T>(wt[0] * go[i]);
          gs[id[1]] += static_cast<T>(wt[1] * go[i]);
          gs[id[2]] += static_cast<T>(wt[2] * go[i]);
          gs[id[3]] += static_cast<T>(wt[3] * go[i]);
        }
      }
    };
  }
  return n;
}

// Normalized 1-d Gaussian kernel of odd size.
inline std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  check(size >= 1 && size % 2 == 1, "gaussian_kernel_1d: size must be odd");
  check(sigma > 0, "gaussian_kernel_1d: sigma must be positive");
  std::vector<double> k(static_cast<std::size_t>(size));
  int r = size / 2;
  double s = 0;
  for (int i = 0; i < size; ++i) {
    double d = i - r;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
    s += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= s;
  return k;
}

}  // namespace iderase
