#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace iderase {

// Deterministic, portable RNG. All stochastic behaviour in the library is
// derived from a master seed through named streams, so runs can be resumed
// or replayed without carrying hidden generator state around.
//
// splitmix64 core; normal variates via Box-Muller. Never uses <random>
// distributions (their output is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    // Box-Muller; the spare draw is discarded to keep one state word.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[uniform_index(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, used both for stream derivation and config fingerprints.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t x, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= (x >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derive an independent stream from (seed, purpose, counters). Streams for
// different purposes or counters never collide in practice.
inline Rng derive_rng(std::uint64_t seed, const std::string& purpose,
                      std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = fnv1a(purpose);
  h = fnv1a_u64(seed, h);
  h = fnv1a_u64(a, h);
  h = fnv1a_u64(b, h);
  return Rng(h);
}

}  // namespace iderase
