#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "iderase/autodiff.hpp"

namespace iderase {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using MapC = Eigen::Map<const MatRM<T>>;

// ---------------------------------------------------------------------------
// Pointwise ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check(a->val.same_shape(b->val), "add: shape mismatch " + a->val.shape_str() +
                                       " vs " + b->val.shape_str());
  Tensor<T> out = a->val;
  for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] += b->val.v[i];
  auto n = make_node<T>(std::move(out), {a, b}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, b]() {
      if (a->needs_grad) {
        auto& g = a->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g.v[i] += self->grad.v[i];
      }
      if (b->needs_grad) {
        auto& g = b->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g.v[i] += self->grad.v[i];
      }
    };
  }
  return n;
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check(a->val.same_shape(b->val), "sub: shape mismatch");
  Tensor<T> out = a->val;
  for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] -= b->val.v[i];
  auto n = make_node<T>(std::move(out), {a, b}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, b]() {
      if (a->needs_grad) {
        auto& g = a->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g.v[i] += self->grad.v[i];
      }
      if (b->needs_grad) {
        auto& g = b->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g.v[i] -= self->grad.v[i];
      }
    };
  }
  return n;
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check(a->val.same_shape(b->val), "mul: shape mismatch");
  Tensor<T> out = a->val;
  for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] *= b->val.v[i];
  auto n = make_node<T>(std::move(out), {a, b}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, b]() {
      if (a->needs_grad) {
        auto& g = a->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[i] += self->grad.v[i] * b->val.v[i];
      }
      if (b->needs_grad) {
        auto& g = b->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[i] += self->grad.v[i] * a->val.v[i];
      }
    };
  }
  return n;
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, double s) {
  Tensor<T> out = a->val;
  for (auto& x : out.v) x = static_cast<T>(x * s);
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, s]() {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        g.v[i] += static_cast<T>(self->grad.v[i] * s);
    };
  }
  return n;
}

// a + s * b
template <class T>
Var<T> axpy(const Var<T>& a, const Var<T>& b, double s) {
  check(a->val.same_shape(b->val), "axpy: shape mismatch");
  Tensor<T> out = a->val;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out.v[i] += static_cast<T>(s * b->val.v[i]);
  auto n = make_node<T>(std::move(out), {a, b}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, b, s]() {
      if (a->needs_grad) {
        auto& g = a->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g.v[i] += self->grad.v[i];
      }
      if (b->needs_grad) {
        auto& g = b->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[i] += static_cast<T>(s * self->grad.v[i]);
      }
    };
  }
  return n;
}

template <class T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a->val;
  for (auto& x : out.v) x = x > T(0) ? x : T(0);
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a]() {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        if (a->val.v[i] > T(0)) g.v[i] += self->grad.v[i];
    };
  }
  return n;
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, double slope = 0.2) {
  Tensor<T> out = a->val;
  for (auto& x : out.v)
    if (x < T(0)) x = static_cast<T>(x * slope);
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, slope]() {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i)
        g.v[i] += a->val.v[i] > T(0) ? self->grad.v[i]
                                     : static_cast<T>(slope * self->grad.v[i]);
    };
  }
  return n;
}

template <class T>
Var<T> tanh_op(const Var<T>& a) {
  Tensor<T> out = a->val;
  for (auto& x : out.v) x = std::tanh(x);
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a]() {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        T y = self->val.v[i];
        g.v[i] += self->grad.v[i] * (T(1) - y * y);
      }
    };
  }
  return n;
}

template <class T>
Var<T> gelu(const Var<T>& a) {
  Tensor<T> out = a->val;
  for (auto& x : out.v) {
    double xd = static_cast<double>(x);
    x = static_cast<T>(xd * 0.5 * (1.0 + std::erf(xd * M_SQRT1_2)));
  }
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a]() {
      auto& g = a->ensure_grad();
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        double x = static_cast<double>(a->val.v[i]);
        double phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        g.v[i] += static_cast<T>(self->grad.v[i] * (phi + x * pdf));
      }
    };
  }
  return n;
}

// ---------------------------------------------------------------------------
// Reductions and similarity measures
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_all(const Var<T>& a) {
  T s = 0;
  for (T x : a->val.v) s += x;
  auto n = make_node<T>(Tensor<T>::scalar(s), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a]() {
      auto& g = a->ensure_grad();
      T go = self->grad.v[0];
      for (auto& x : g.v) x += go;
    };
  }
  return n;
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  check(a->val.numel() > 0, "mean of empty tensor");
  T s = 0;
  for (T x : a->val.v) s += x;
  double inv = 1.0 / static_cast<double>(a->val.numel());
  auto n = make_node<T>(Tensor<T>::scalar(static_cast<T>(s * inv)), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, inv]() {
      auto& g = a->ensure_grad();
      T go = static_cast<T>(self->grad.v[0] * inv);
      for (auto& x : g.v) x += go;
    };
  }
  return n;
}

// Mean squared error over all elements.
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  check(a->val.same_shape(b->val), "mse: shape mismatch " + a->val.shape_str() +
                                       " vs " + b->val.shape_str());
  check(a->val.numel() > 0, "mse: empty input");
  double s = 0;
  for (std::int64_t i = 0; i < a->val.numel(); ++i) {
    double d = static_cast<double>(a->val.v[i]) - static_cast<double>(b->val.v[i]);
    s += d * d;
  }
  double inv = 1.0 / static_cast<double>(a->val.numel());
  auto n = make_node<T>(Tensor<T>::scalar(static_cast<T>(s * inv)), {a, b}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, b, inv]() {
      T go = self->grad.v[0];
      if (a->needs_grad) {
        auto& g = a->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[i] += static_cast<T>(2.0 * inv * (a->val.v[i] - b->val.v[i]) * go);
      }
      if (b->needs_grad) {
        auto& g = b->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[i] -= static_cast<T>(2.0 * inv * (a->val.v[i] - b->val.v[i]) * go);
      }
    };
  }
  return n;
}

// Cosine similarity between two vectors (any shape, flattened).
template <class T>
Var<T> cosine(const Var<T>& a, const Var<T>& b) {
  check(a->val.numel() == b->val.numel(), "cosine: length mismatch");
  double na2 = 0, nb2 = 0, ab = 0;
  for (std::int64_t i = 0; i < a->val.numel(); ++i) {
    double x = a->val.v[i], y = b->val.v[i];
    na2 += x * x;
    nb2 += y * y;
    ab += x * y;
  }
  check(na2 > 1e-24 && nb2 > 1e-24, "cosine: zero-norm input vector");
  double na = std::sqrt(na2), nb = std::sqrt(nb2);
  double c = ab / (na * nb);
  auto n = make_node<T>(Tensor<T>::scalar(static_cast<T>(c)), {a, b}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, b, na, nb, c]() {
      double go = self->grad.v[0];
      if (a->needs_grad) {
        auto& g = a->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[i] += static_cast<T>(go * (b->val.v[i] / (na * nb) -
                                         c * a->val.v[i] / (na * na)));
      }
      if (b->needs_grad) {
        auto& g = b->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[i] += static_cast<T>(go * (a->val.v[i] / (na * nb) -
                                         c * b->val.v[i] / (nb * nb)));
      }
    };
  }
  return n;
}

template <class T>
Var<T> l2_normalize(const Var<T>& a) {
  double n2 = 0;
  for (T x : a->val.v) n2 += static_cast<double>(x) * static_cast<double>(x);
  check(n2 > 1e-24, "l2_normalize: zero-norm vector");
  double norm = std::sqrt(n2);
  Tensor<T> out = a->val;
  for (auto& x : out.v) x = static_cast<T>(x / norm);
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, norm]() {
      auto& g = a->ensure_grad();
      double ydotg = 0;
      for (std::int64_t i = 0; i < g.numel(); ++i)
        ydotg += static_cast<double>(self->val.v[i]) * self->grad.v[i];
      for (std::int64_t i = 0; i < g.numel(); ++i)
        g.v[i] += static_cast<T>((self->grad.v[i] - self->val.v[i] * ydotg) / norm);
    };
  }
  return n;
}

// Row-wise L2 normalization over the last dimension.
template <class T>
Var<T> l2_normalize_rows(const Var<T>& a) {
  std::int64_t cols = a->val.shape.back();
  std::int64_t rows = a->val.numel() / cols;
  Tensor<T> out = a->val;
  std::vector<double> norms(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    double n2 = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      double x = a->val.v[r * cols + c];
      n2 += x * x;
    }
    check(n2 > 1e-24, "l2_normalize_rows: zero-norm row");
    norms[static_cast<std::size_t>(r)] = std::sqrt(n2);
    for (std::int64_t c = 0; c < cols; ++c)
      out.v[r * cols + c] = static_cast<T>(out.v[r * cols + c] /
                                           norms[static_cast<std::size_t>(r)]);
  }
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    auto nv = std::make_shared<std::vector<double>>(std::move(norms));
    n->backprop = [self, a, rows, cols, nv]() {
      auto& g = a->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* y = self->val.data() + r * cols;
        const T* gy = self->grad.data() + r * cols;
        double dot = 0;
        for (std::int64_t c = 0; c < cols; ++c)
          dot += static_cast<double>(y[c]) * static_cast<double>(gy[c]);
        double inv = 1.0 / (*nv)[static_cast<std::size_t>(r)];
        T* gx = g.data() + r * cols;
        for (std::int64_t c = 0; c < cols; ++c)
          gx[c] += static_cast<T>((static_cast<double>(gy[c]) - y[c] * dot) * inv);
      }
    };
  }
  return n;
}

// Weighted sum of scalar terms.
template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms,
                    const std::vector<double>& weights) {
  check(terms.size() == weights.size(), "weighted_sum: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    check(terms[i]->val.numel() == 1, "weighted_sum: non-scalar term");
    s += weights[i] * static_cast<double>(terms[i]->val.v[0]);
  }
  auto n = make_node<T>(Tensor<T>::scalar(static_cast<T>(s)), terms, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, terms, weights]() {
      for (std::size_t i = 0; i < terms.size(); ++i)
        if (terms[i]->needs_grad)
          terms[i]->ensure_grad().v[0] +=
              static_cast<T>(weights[i] * self->grad.v[0]);
    };
  }
  return n;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

// Bijective relayout: out.v[i] = in.v[map[i]].
template <class T>
Var<T> reindex(const Var<T>& a, std::vector<std::int64_t> out_shape,
               const std::shared_ptr<const std::vector<std::int32_t>>& map) {
  Tensor<T> out(std::move(out_shape));
  check(out.numel() == a->val.numel(), "reindex: element count mismatch");
  check(static_cast<std::int64_t>(map->size()) == out.numel(),
        "reindex: map size mismatch");
  for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] = a->val.v[(*map)[i]];
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, map]() {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < self->grad.numel(); ++i)
        g.v[(*map)[i]] += self->grad.v[i];
    };
  }
  return n;
}

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<std::int64_t> new_shape) {
  Tensor<T> out(std::move(new_shape), a->val.v);
  auto n = make_node<T>(std::move(out), {a}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a]() {
      auto& g = a->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) g.v[i] += self->grad.v[i];
    };
  }
  return n;
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  check(a->val.ndim() == 3 && b->val.ndim() == 3, "concat_channels: need CHW");
  check(a->val.dim(1) == b->val.dim(1) && a->val.dim(2) == b->val.dim(2),
        "concat_channels: spatial mismatch");
  std::int64_t ca = a->val.dim(0), cb = b->val.dim(0);
  std::int64_t hw = a->val.dim(1) * a->val.dim(2);
  Tensor<T> out({ca + cb, a->val.dim(1), a->val.dim(2)});
  std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
  std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + ca * hw);
  auto n = make_node<T>(std::move(out), {a, b}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, b, ca, hw]() {
      if (a->needs_grad) {
        auto& g = a->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g.v[i] += self->grad.v[i];
      }
      if (b->needs_grad) {
        auto& g = b->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
          g.v[i] += self->grad.v[ca * hw + i];
      }
    };
  }
  return n;
}

// x[C,H,W] + v[C] broadcast over spatial dims.
template <class T>
Var<T> broadcast_add_channels(const Var<T>& x, const Var<T>& v) {
  check(x->val.ndim() == 3, "broadcast_add_channels: need CHW input");
  check(v->val.numel() == x->val.dim(0),
        "broadcast_add_channels: channel count mismatch");
  std::int64_t c = x->val.dim(0), hw = x->val.dim(1) * x->val.dim(2);
  Tensor<T> out = x->val;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    T add = v->val.v[ci];
    for (std::int64_t i = 0; i < hw; ++i) out.v[ci * hw + i] += add;
  }
  auto n = make_node<T>(std::move(out), {x, v}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, x, v, c, hw]() {
      if (x->needs_grad) {
        auto& g = x->ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) g.v[i] += self->grad.v[i];
      }
      if (v->needs_grad) {
        auto& g = v->ensure_grad();
        for (std::int64_t ci = 0; ci < c; ++ci) {
          T s = 0;
          for (std::int64_t i = 0; i < hw; ++i) s += self->grad.v[ci * hw + i];
          g.v[ci] += s;
        }
      }
    };
  }
  return n;
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  check(x->val.ndim() == 3, "global_avg_pool: need CHW input");
  std::int64_t c = x->val.dim(0), hw = x->val.dim(1) * x->val.dim(2);
  Tensor<T> out({c});
  double inv = 1.0 / static_cast<double>(hw);
  for (std::int64_t ci = 0; ci < c; ++ci) {
    double s = 0;
    for (std::int64_t i = 0; i < hw; ++i) s += x->val.v[ci * hw + i];
    out.v[ci] = static_cast<T>(s * inv);
  }
  auto n = make_node<T>(std::move(out), {x}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, x, c, hw, inv]() {
      auto& g = x->ensure_grad();
      for (std::int64_t ci = 0; ci < c; ++ci) {
        T go = static_cast<T>(self->grad.v[ci] * inv);
        for (std::int64_t i = 0; i < hw; ++i) g.v[ci * hw + i] += go;
      }
    };
  }
  return n;
}

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

// x[N, in] * W[out, in]^T + b[out] -> [N, out]. Accepts x of any leading
// shape; the last dim must equal `in`.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  std::int64_t in = w->val.dim(1), out_dim = w->val.dim(0);
  check(x->val.numel() % in == 0 && x->val.shape.back() == in,
        "linear: input dim mismatch, expected last dim " + std::to_string(in));
  std::int64_t rows = x->val.numel() / in;
  std::vector<std::int64_t> out_shape(x->val.shape.begin(), x->val.shape.end() - 1);
  out_shape.push_back(out_dim);
  Tensor<T> out(std::move(out_shape));
  MapC<T> xm(x->val.data(), rows, in);
  MapC<T> wm(w->val.data(), out_dim, in);
  MapM<T> ym(out.data(), rows, out_dim);
  ym.noalias() = xm * wm.transpose();
  if (b) {
    check(b->val.numel() == out_dim, "linear: bias dim mismatch");
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < out_dim; ++c) out.v[r * out_dim + c] += b->val.v[c];
  }
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b}
                                  : std::vector<Var<T>>{x, w};
  auto n = make_node<T>(std::move(out), std::move(parents), nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, x, w, b, rows, in, out_dim]() {
      MapC<T> gy(self->grad.data(), rows, out_dim);
      MapC<T> xm(x->val.data(), rows, in);
      MapC<T> wm(w->val.data(), out_dim, in);
      if (x->needs_grad) {
        MapM<T> gx(x->ensure_grad().data(), rows, in);
        gx.noalias() += gy * wm;
      }
      if (w->needs_grad) {
        MapM<T> gw(w->ensure_grad().data(), out_dim, in);
        gw.noalias() += gy.transpose() * xm;
      }
      if (b && b->needs_grad) {
        auto& gb = b->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < out_dim; ++c)
            gb.v[c] += self->grad.v[r * out_dim + c];
      }
    };
  }
  return n;
}

// Batched matmul A[B,m,k] x B[B,k,n] -> [B,m,n]; transpose_b uses B[B,n,k].
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false) {
  check(a->val.ndim() == 3 && b->val.ndim() == 3, "bmm: need 3-d inputs");
  std::int64_t nb = a->val.dim(0), m = a->val.dim(1), k = a->val.dim(2);
  check(b->val.dim(0) == nb, "bmm: batch mismatch");
  std::int64_t n_dim = transpose_b ? b->val.dim(1) : b->val.dim(2);
  check((transpose_b ? b->val.dim(2) : b->val.dim(1)) == k, "bmm: inner dim mismatch");
  Tensor<T> out({nb, m, n_dim});
  for (std::int64_t i = 0; i < nb; ++i) {
    MapC<T> am(a->val.data() + i * m * k, m, k);
    MapM<T> ym(out.data() + i * m * n_dim, m, n_dim);
    if (transpose_b) {
      MapC<T> bm(b->val.data() + i * n_dim * k, n_dim, k);
      ym.noalias() = am * bm.transpose();
    } else {
      MapC<T> bm(b->val.data() + i * k * n_dim, k, n_dim);
      ym.noalias() = am * bm;
    }
  }
  auto n = make_node<T>(std::move(out), {a, b}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, a, b, nb, m, k, n_dim, transpose_b]() {
      for (std::int64_t i = 0; i < nb; ++i) {
        MapC<T> gy(self->grad.data() + i * m * n_dim, m, n_dim);
        MapC<T> am(a->val.data() + i * m * k, m, k);
        if (transpose_b) {
          MapC<T> bm(b->val.data() + i * n_dim * k, n_dim, k);
          if (a->needs_grad) {
            MapM<T> ga(a->ensure_grad().data() + i * m * k, m, k);
            ga.noalias() += gy * bm;
          }
          if (b->needs_grad) {
            MapM<T> gb(b->ensure_grad().data() + i * n_dim * k, n_dim, k);
            gb.noalias() += gy.transpose() * am;
          }
        } else {
          MapC<T> bm(b->val.data() + i * k * n_dim, k, n_dim);
          if (a->needs_grad) {
            MapM<T> ga(a->ensure_grad().data() + i * m * k, m, k);
            ga.noalias() += gy * bm.transpose();
          }
          if (b->needs_grad) {
            MapM<T> gb(b->ensure_grad().data() + i * k * n_dim, k, n_dim);
            gb.noalias() += am.transpose() * gy;
          }
        }
      }
    };
  }
  return n;
}

// Row-wise softmax over the last dimension.
template <class T>
Var<T> softmax_rows(const Var<T>& x) {
  std::int64_t cols = x->val.shape.back();
  std::int64_t rows = x->val.numel() / cols;
  Tensor<T> out = x->val;
  for (std::int64_t r = 0; r < rows; ++r) {
    T* p = out.data() + r * cols;
    T mx = p[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, p[c]);
    double s = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      double e = std::exp(static_cast<double>(p[c] - mx));
      p[c] = static_cast<T>(e);
      s += e;
    }
    double inv = 1.0 / s;
    for (std::int64_t c = 0; c < cols; ++c) p[c] = static_cast<T>(p[c] * inv);
  }
  auto n = make_node<T>(std::move(out), {x}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, x, rows, cols]() {
      auto& g = x->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* y = self->val.data() + r * cols;
        const T* gy = self->grad.data() + r * cols;
        double dot = 0;
        for (std::int64_t c = 0; c < cols; ++c)
          dot += static_cast<double>(y[c]) * static_cast<double>(gy[c]);
        T* gx = g.data() + r * cols;
        for (std::int64_t c = 0; c < cols; ++c)
          gx[c] += static_cast<T>(y[c] * (static_cast<double>(gy[c]) - dot));
      }
    };
  }
  return n;
}

// Row-wise layer normalization with affine parameters over the last dim.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  double eps = 1e-5) {
  std::int64_t cols = x->val.shape.back();
  check(gamma->val.numel() == cols && beta->val.numel() == cols,
        "layer_norm: affine param dim mismatch");
  std::int64_t rows = x->val.numel() / cols;
  Tensor<T> out(x->val.shape);
  Tensor<T> xhat(x->val.shape);
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* p = x->val.data() + r * cols;
    double mu = 0;
    for (std::int64_t c = 0; c < cols; ++c) mu += p[c];
    mu /= cols;
    double var = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      double d = p[c] - mu;
      var += d * d;
    }
    var /= cols;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (std::int64_t c = 0; c < cols; ++c) {
      double h = (p[c] - mu) * is;
      xhat.v[r * cols + c] = static_cast<T>(h);
      out.v[r * cols + c] =
          static_cast<T>(h * gamma->val.v[c] + beta->val.v[c]);
    }
  }
  auto n = make_node<T>(std::move(out), {x, gamma, beta}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    auto xh = std::make_shared<Tensor<T>>(std::move(xhat));
    auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
    n->backprop = [self, x, gamma, beta, rows, cols, xh, istd]() {
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* gy = self->grad.data() + r * cols;
        const T* h = xh->data() + r * cols;
        if (x->needs_grad) {
          auto& g = x->ensure_grad();
          double sum_dh = 0, sum_dh_h = 0;
          for (std::int64_t c = 0; c < cols; ++c) {
            double dh = static_cast<double>(gy[c]) * gamma->val.v[c];
            sum_dh += dh;
            sum_dh_h += dh * h[c];
          }
          double is = (*istd)[static_cast<std::size_t>(r)];
          for (std::int64_t c = 0; c < cols; ++c) {
            double dh = static_cast<double>(gy[c]) * gamma->val.v[c];
            g.v[r * cols + c] += static_cast<T>(
                is * (dh - sum_dh / cols - h[c] * sum_dh_h / cols));
          }
        }
        if (gamma->needs_grad) {
          auto& gg = gamma->ensure_grad();
          for (std::int64_t c = 0; c < cols; ++c) gg.v[c] += gy[c] * h[c];
        }
        if (beta->needs_grad) {
          auto& gb = beta->ensure_grad();
          for (std::int64_t c = 0; c < cols; ++c) gb.v[c] += gy[c];
        }
      }
    };
  }
  return n;
}

// Numerically stable softmax cross-entropy against an integer target.
template <class T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::int64_t target) {
  std::int64_t k = logits->val.numel();
  check(target >= 0 && target < k, "softmax_cross_entropy: target out of range");
  double mx = logits->val.v[0];
  for (std::int64_t i = 1; i < k; ++i)
    mx = std::max(mx, static_cast<double>(logits->val.v[i]));
  double sum = 0;
  for (std::int64_t i = 0; i < k; ++i)
    sum += std::exp(static_cast<double>(logits->val.v[i]) - mx);
  double loss = std::log(sum) + mx - static_cast<double>(logits->val.v[target]);
  auto n = make_node<T>(Tensor<T>::scalar(static_cast<T>(loss)), {logits}, nullptr);
  if (n->needs_grad) {
    Node<T>* self = n.get();
    n->backprop = [self, logits, target, mx, sum, k]() {
      auto& g = logits->ensure_grad();
      T go = self->grad.v[0];
      for (std::int64_t i = 0; i < k; ++i) {
        double p = std::exp(static_cast<double>(logits->val.v[i]) - mx) / sum;
        g.v[i] += static_cast<T>(go * (p - (i == target ? 1.0 : 0.0)));
      }
    };
  }
  return n;
}

}  // namespace iderase
