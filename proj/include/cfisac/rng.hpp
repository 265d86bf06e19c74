#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "cfisac/common.hpp"

namespace cfisac {

/// Deterministic splitting of a master seed into independent substream
/// seeds (one splitmix64 step per label). Lets parallel trials and nested
/// generators stay reproducible regardless of execution order.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t label) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (label + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Seeded random source with explicitly pinned transforms: uniforms come
/// straight from the 53 high bits of mt19937_64, normals from a Box-Muller
/// step. Avoids the library-defined distributions so the same seed gives
/// the same bytes on any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : _eng(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(_eng() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (_have_spare) {
      _have_spare = false;
      return _spare;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    _spare = r * std::sin(2.0 * kPi * u2);
    _have_spare = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  /// Circularly symmetric complex normal CN(0, var).
  cdouble cnormal(double var = 1.0) {
    const double s = std::sqrt(var / 2.0);
    return {s * normal(), s * normal()};
  }

  /// Integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    // Rejection-free modulo is fine here; n is always tiny versus 2^64.
    return _eng() % n;
  }

  /// Random subset of size k out of {0..n-1}, returned sorted.
  std::vector<int> subset(int n, int k) {
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(index(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 _eng;
  double _spare = 0.0;
  bool _have_spare = false;
};

}  // namespace cfisac
