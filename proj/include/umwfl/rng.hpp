#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace umwfl {

/// Deterministic random substream keyed by (seed, label, indices).
///
/// Every random draw in the simulator comes from one of these, so results do
/// not depend on evaluation order or thread scheduling. The label is hashed
/// with FNV-1a and folded with the seed and indices by splitmix64 into the
/// 64-bit seed of an mt19937_64, so the mapping is stable across builds.
class Substream {
 public:
  Substream(std::uint64_t seed, std::string_view label,
            std::initializer_list<std::uint64_t> indices = {}) {
    std::uint64_t key = mix(seed ^ mix(fnv1a(label)));
    for (auto i : indices) key = mix(key ^ mix(i + 0x9e3779b97f4a7c15ULL));
    engine_.seed(key);
  }

  /// Real Gaussian with the given variance.
  double gaussian(double variance) {
    return std::sqrt(variance) * normal_(engine_);
  }

  /// Circularly-symmetric complex Gaussian CN(0, variance).
  std::complex<double> complex_gaussian(double variance) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {s * re, s * im};
  }

  /// Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  std::mt19937_64& engine() { return engine_; }

  /// splitmix64 finalizer.
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace umwfl
