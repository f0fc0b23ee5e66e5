#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

// Portable draws on top of mt19937_64 (whose output sequence is fixed by the
// standard, unlike the std distributions).
namespace mushroom::rnd {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n), rejection-sampled so there is no modulo bias.
inline std::uint64_t index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

inline double normal(std::mt19937_64& rng) {
  // Box-Muller; u1 in (0,1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <class T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[index(rng, i)]);
  }
}

/// splitmix64 finalizer, for deriving independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double bound) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, -bound, bound);
  return v;
}

} // namespace mushroom::rnd
