#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace skillnet {

// splitmix64 generator. Self-contained so that draw sequences are identical
// across standard libraries and platforms for a given seed.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Normal(0, std) resampled until within two standard deviations.
  double truncated_normal(double stddev) {
    double x = normal();
    while (std::fabs(x) > 2.0) x = normal();
    return x * stddev;
  }

  // Derived generator with an independent stream.
  Rng fork(uint64_t stream) {
    Rng r(state_ ^ (0x632be59bd9b4e019ull * (stream + 1)));
    r.next_u64();
    return r;
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = next_u64() % i;
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace skillnet
