#pragma once

#include "iderase/nn.hpp"

namespace iderase {

// Feature Perturbation Module: a two-layer perceptron producing a
// tanh-bounded embedding perturbation,
//   delta = tanh(w2 * relu(w1 * src + b1) + b2),
// added to the source embedding with scale alpha,
//   pert = src + alpha * delta.
// Weights start small (fan-in uniform) and biases at zero, so the initial
// perturbation is near zero and protection starts near-identity.
template <class T>
class Fpm {
 public:
  Fpm() = default;

  Fpm(std::int64_t d_f, std::int64_t d_h, Rng& rng) : d_f_(d_f), d_h_(d_h) {
    check(d_f > 0 && d_h > 0, "fpm: dimensions must be positive");
    w1_ = ps_.add("fpm.w1", init::fan_in_uniform<T>({d_h, d_f}, d_f, rng));
    b1_ = ps_.add("fpm.b1", Tensor<T>::zeros({d_h}));
    w2_ = ps_.add("fpm.w2", init::fan_in_uniform<T>({d_f, d_h}, d_h, rng));
    b2_ = ps_.add("fpm.b2", Tensor<T>::zeros({d_f}));
  }

  std::int64_t d_f() const { return d_f_; }
  std::int64_t d_h() const { return d_h_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }

  // Bounded perturbation direction; every element strictly inside (-1, 1).
  Var<T> delta(const Var<T>& src) const {
    check(src->val.numel() == d_f_ && src->val.shape.back() == d_f_,
          "fpm: source embedding dimension mismatch, expected " +
              std::to_string(d_f_));
    return tanh_op(linear(relu(linear(src, w1_, b1_)), w2_, b2_));
  }

  // pert = src + alpha * delta(src); not re-normalized.
  Var<T> perturb(const Var<T>& src, double alpha) const {
    check(alpha >= 0, "fpm: alpha must be non-negative");
    return axpy(src, delta(src), alpha);
  }

 private:
  std::int64_t d_f_ = 0, d_h_ = 0;
  ParamStore<T> ps_;
  Var<T> w1_, b1_, w2_, b2_;
};

}  // namespace iderase
