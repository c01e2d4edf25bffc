#pragma once

// Portable deterministic randomness. Everything derives from SplitMix64 so that streams
// are identical across standard libraries; std::*_distribution is implementation-defined.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace depthint {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Named sub-seed: derive_seed(seed, "dataset") and derive_seed(seed, "init") are decorrelated.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : name) {
    h ^= std::uint8_t(c);
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

/// Uniform in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) { return double(bits >> 11) * 0x1.0p-53; }

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double uniform() { return to_unit(next()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

/// Standard normal sample addressed by (seed, counter); independent of evaluation order.
inline double counter_normal(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t a = splitmix64(seed ^ splitmix64(2 * counter));
  const std::uint64_t b = splitmix64(seed ^ splitmix64(2 * counter + 1));
  const double u1 = 1.0 - to_unit(a);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * to_unit(b));
}

}  // namespace depthint
