#pragma once

#include <array>
#include <cstdint>

namespace aurora {

/// xoshiro256** seeded through splitmix64.
///
/// Every draw is built from integer arithmetic and IEEE-754 basic operations
/// plus std::log / std::sqrt / std::cos in normal(), so the same seed gives the
/// same sequence on any conforming platform. Independent streams are derived
/// from (seed, key) pairs; cohort records use their id as the key.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);
  /// Stream keyed by (seed, key). Distinct keys give statistically independent streams.
  static Rng stream(std::uint64_t seed, std::uint64_t key);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; one normal per pair of uniforms, nothing cached.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace aurora
