#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iderase/conv.hpp"
#include "iderase/ops.hpp"
#include "iderase/rng.hpp"

namespace iderase {

// Ordered, name-addressable parameter registry. Networks own one store;
// layers register their tensors under hierarchical names at construction.
template <class T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    for (const auto& [n, v] : items_)
      check(n != name, "duplicate parameter name: " + name);
    auto v = make_leaf<T>(std::move(init), true);
    items_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Var<T>>>& items() const {
    return items_;
  }

  Var<T> find(const std::string& name) const {
    for (const auto& [n, v] : items_)
      if (n == name) return v;
    throw ValidationError("unknown parameter: " + name);
  }

  std::vector<Var<T>> vars() const {
    std::vector<Var<T>> out;
    out.reserve(items_.size());
    for (const auto& [n, v] : items_) out.push_back(v);
    return out;
  }

  std::int64_t total_numel() const {
    std::int64_t s = 0;
    for (const auto& [n, v] : items_) s += v->val.numel();
    return s;
  }

  void zero_grad() {
    for (auto& [n, v] : items_) v->zero_grad();
  }

  // Marks every parameter as constant; subsequent graphs treat the network
  // as pure inference and record no backward closures through it.
  void freeze() {
    for (auto& [n, v] : items_) v->needs_grad = false;
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
};

namespace init {

// U(-1/sqrt(fan_in), +1/sqrt(fan_in)), applied to weights and biases alike.
template <class T>
Tensor<T> fan_in_uniform(std::vector<std::int64_t> shape, std::int64_t fan_in,
                         Rng& rng) {
  check(fan_in > 0, "fan_in_uniform: bad fan_in");
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor<T>::uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace init

template <class T>
struct Linear {
  Var<T> w, b;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& prefix, std::int64_t in,
         std::int64_t out, Rng& rng, bool bias = true) {
    w = ps.add(prefix + ".w", init::fan_in_uniform<T>({out, in}, in, rng));
    if (bias) b = ps.add(prefix + ".b", init::fan_in_uniform<T>({out}, in, rng));
  }

  Var<T> operator()(const Var<T>& x) const { return linear(x, w, b); }
};

template <class T>
struct Conv2d {
  Var<T> w, b;
  std::int64_t stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& prefix, std::int64_t in_ch,
         std::int64_t out_ch, std::int64_t k, std::int64_t stride_,
         std::int64_t pad_, Rng& rng, bool bias = true)
      : stride(stride_), pad(pad_) {
    std::int64_t fan = in_ch * k * k;
    w = ps.add(prefix + ".w", init::fan_in_uniform<T>({out_ch, in_ch, k, k}, fan, rng));
    if (bias) b = ps.add(prefix + ".b", init::fan_in_uniform<T>({out_ch}, fan, rng));
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <class T>
struct ConvTranspose2d {
  Var<T> w, b;
  std::int64_t stride = 1, pad = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore<T>& ps, const std::string& prefix, std::int64_t in_ch,
                  std::int64_t out_ch, std::int64_t k, std::int64_t stride_,
                  std::int64_t pad_, Rng& rng, bool bias = true)
      : stride(stride_), pad(pad_) {
    std::int64_t fan = in_ch * k * k;
    w = ps.add(prefix + ".w", init::fan_in_uniform<T>({in_ch, out_ch, k, k}, fan, rng));
    if (bias) b = ps.add(prefix + ".b", init::fan_in_uniform<T>({out_ch}, fan, rng));
  }

  Var<T> operator()(const Var<T>& x) const {
    return conv_transpose2d(x, w, b, stride, pad);
  }
};

template <class T>
struct LayerNorm {
  Var<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& prefix, std::int64_t dim) {
    gamma = ps.add(prefix + ".g", Tensor<T>::full({dim}, T(1)));
    beta = ps.add(prefix + ".b", Tensor<T>::zeros({dim}));
  }

  Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gamma, beta); }
};

// ---------------------------------------------------------------------------
// Window attention
// ---------------------------------------------------------------------------

// Relayout maps between CHW feature maps and per-window token matrices.
// Windows tile the image in row-major order; tokens within a window are
// row-major pixels; features are contiguous per token.
struct WindowMaps {
  std::shared_ptr<const std::vector<std::int32_t>> to_tokens;  // [nTok*C]
  std::shared_ptr<const std::vector<std::int32_t>> to_chw;     // [C*H*W]
  std::int64_t n_windows = 0, tokens_per_window = 0;
};

inline WindowMaps make_window_maps(std::int64_t c, std::int64_t h, std::int64_t w,
                                   std::int64_t win) {
  check(h % win == 0 && w % win == 0,
        "window partition: spatial dims must be divisible by window size");
  std::int64_t wy_n = h / win, wx_n = w / win;
  std::int64_t n_win = wy_n * wx_n, tpw = win * win;
  auto fwd = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(n_win * tpw * c));
  auto inv = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(c * h * w));
  for (std::int64_t wy = 0; wy < wy_n; ++wy)
    for (std::int64_t wx = 0; wx < wx_n; ++wx)
      for (std::int64_t ly = 0; ly < win; ++ly)
        for (std::int64_t lx = 0; lx < win; ++lx) {
          std::int64_t tok = (wy * wx_n + wx) * tpw + ly * win + lx;
          std::int64_t y = wy * win + ly, x = wx * win + lx;
          for (std::int64_t ci = 0; ci < c; ++ci) {
            std::int64_t chw = ci * h * w + y * w + x;
            (*fwd)[static_cast<std::size_t>(tok * c + ci)] =
                static_cast<std::int32_t>(chw);
            (*inv)[static_cast<std::size_t>(chw)] =
                static_cast<std::int32_t>(tok * c + ci);
          }
        }
  WindowMaps m;
  m.to_tokens = std::move(fwd);
  m.to_chw = std::move(inv);
  m.n_windows = n_win;
  m.tokens_per_window = tpw;
  return m;
}

// Multi-head self-attention within fixed windows.
template <class T>
struct WindowAttention {
  Linear<T> q, k, v, proj;
  std::int64_t dim = 0, heads = 0, head_dim = 0;

  WindowAttention() = default;
  WindowAttention(ParamStore<T>& ps, const std::string& prefix, std::int64_t dim_,
                  std::int64_t heads_, Rng& rng)
      : dim(dim_), heads(heads_) {
    check(dim % heads == 0, "attention dim not divisible by heads");
    head_dim = dim / heads;
    q = Linear<T>(ps, prefix + ".q", dim, dim, rng);
    k = Linear<T>(ps, prefix + ".k", dim, dim, rng);
    v = Linear<T>(ps, prefix + ".v", dim, dim, rng);
    proj = Linear<T>(ps, prefix + ".p", dim, dim, rng);
  }

  // tokens: [nW*T, dim] -> [nW*T, dim]; attention never crosses windows.
  Var<T> operator()(const Var<T>& tokens, std::int64_t n_windows,
                    std::int64_t tpw) const {
    check(tokens->val.ndim() == 2 && tokens->val.dim(1) == dim,
          "attention: bad token matrix");
    check(tokens->val.dim(0) == n_windows * tpw, "attention: token count mismatch");
    const auto& maps = head_maps(n_windows, tpw);
    auto split = [&](const Var<T>& m) {
      return reindex(m, {n_windows * heads, tpw, head_dim}, maps.first);
    };
    auto qh = split(q(tokens));
    auto kh = split(k(tokens));
    auto vh = split(v(tokens));
    auto scores = mul_scalar(bmm(qh, kh, /*transpose_b=*/true),
                             1.0 / std::sqrt(static_cast<double>(head_dim)));
    auto attn = softmax_rows(scores);
    auto ctx = bmm(attn, vh);
    auto merged = reindex(ctx, {n_windows * tpw, dim}, maps.second);
    return proj(merged);
  }

 private:
  using MapPtr = std::shared_ptr<const std::vector<std::int32_t>>;

  // Head split/merge relayouts depend only on the window count; cache them.
  const std::pair<MapPtr, MapPtr>& head_maps(std::int64_t n_windows,
                                             std::int64_t tpw) const {
    auto key = std::make_pair(n_windows, tpw);
    auto it = map_cache_.find(key);
    if (it != map_cache_.end()) return it->second;
    auto fwd = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(n_windows * tpw * dim));
    auto inv = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(n_windows * tpw * dim));
    for (std::int64_t wi = 0; wi < n_windows; ++wi)
      for (std::int64_t hd = 0; hd < heads; ++hd)
        for (std::int64_t t = 0; t < tpw; ++t)
          for (std::int64_t d = 0; d < head_dim; ++d) {
            std::int64_t src = (wi * tpw + t) * dim + hd * head_dim + d;
            std::int64_t dst = ((wi * heads + hd) * tpw + t) * head_dim + d;
            (*fwd)[static_cast<std::size_t>(dst)] = static_cast<std::int32_t>(src);
            (*inv)[static_cast<std::size_t>(src)] = static_cast<std::int32_t>(dst);
          }
    auto [ins, ok] = map_cache_.emplace(key, std::make_pair(std::move(fwd), std::move(inv)));
    return ins->second;
  }

  mutable std::map<std::pair<std::int64_t, std::int64_t>,
                   std::pair<MapPtr, MapPtr>>
      map_cache_;
};

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
template <class T>
struct WindowBlock {
  LayerNorm<T> ln1, ln2;
  WindowAttention<T> attn;
  Linear<T> fc1, fc2;

  WindowBlock() = default;
  WindowBlock(ParamStore<T>& ps, const std::string& prefix, std::int64_t dim,
              std::int64_t heads, std::int64_t mlp_ratio, Rng& rng) {
    ln1 = LayerNorm<T>(ps, prefix + ".ln1", dim);
    attn = WindowAttention<T>(ps, prefix + ".attn", dim, heads, rng);
    ln2 = LayerNorm<T>(ps, prefix + ".ln2", dim);
    fc1 = Linear<T>(ps, prefix + ".fc1", dim, dim * mlp_ratio, rng);
    fc2 = Linear<T>(ps, prefix + ".fc2", dim * mlp_ratio, dim, rng);
  }

  Var<T> operator()(const Var<T>& tokens, std::int64_t n_windows,
                    std::int64_t tpw) const {
    auto x = add(tokens, attn(ln1(tokens), n_windows, tpw));
    return add(x, fc2(gelu(fc1(ln2(x)))));
  }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var<T>> params, double lr, double beta1 = 0.5,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.push_back(Tensor<double>::zeros(p->val.shape));
      v_.push_back(Tensor<double>::zeros(p->val.shape));
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p->grad.numel() == 0) continue;  // parameter untouched this step
      for (std::int64_t j = 0; j < p->val.numel(); ++j) {
        double g = static_cast<double>(p->grad.v[j]);
        double m = beta1_ * m_[i].v[j] + (1.0 - beta1_) * g;
        double v = beta2_ * v_[i].v[j] + (1.0 - beta2_) * g * g;
        m_[i].v[j] = m;
        v_[i].v[j] = v;
        double update = lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
        p->val.v[j] = static_cast<T>(static_cast<double>(p->val.v[j]) - update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  double lr() const { return lr_; }

  // Moment buffers, exposed for checkpointing (same order as the params
  // passed at construction).
  std::vector<Tensor<double>>& moments1() { return m_; }
  std::vector<Tensor<double>>& moments2() { return v_; }

 private:
  std::vector<Var<T>> params_;
  std::vector<Tensor<double>> m_, v_;
  double lr_ = 1e-3, beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
};

}  // namespace iderase
