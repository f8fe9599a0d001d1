#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "iderase/common.hpp"
#include "iderase/rng.hpp"

namespace iderase {

// Dense row-major tensor. Small fixed surface: the autodiff ops in ops.hpp do
// the heavy lifting, this is just shape + storage.
template <class T>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<std::int64_t> s, std::vector<T> data)
      : shape(std::move(s)), v(std::move(data)) {
    check(static_cast<std::int64_t>(v.size()) == numel_of(shape),
          "tensor data size does not match shape");
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) {
      check(d >= 0, "negative tensor dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::int64_t> s, T value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({}, {value}); }

  static Tensor uniform(std::vector<std::int64_t> s, T lo, T hi, Rng& rng) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor normal(std::vector<std::int64_t> s, T mean, T stddev, Rng& rng) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = static_cast<T>(mean + stddev * rng.normal());
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i)
      os << shape[i] << (i + 1 < shape.size() ? ", " : "");
    os << ")";
    return os.str();
  }
};

template <class T>
double l2_norm(const Tensor<T>& t) {
  double s = 0;
  for (T x : t.v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

template <class T>
double max_abs(const Tensor<T>& t) {
  double m = 0;
  for (T x : t.v) m = std::max(m, std::abs(static_cast<double>(x)));
  return m;
}

template <class T>
double mean_value(const Tensor<T>& t) {
  if (t.v.empty()) return 0.0;
  double s = 0;
  for (T x : t.v) s += static_cast<double>(x);
  return s / static_cast<double>(t.v.size());
}

}  // namespace iderase
