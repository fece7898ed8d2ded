#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace dascl {

/// SplitMix64 step. Used to expand seeds and to derive child seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministically mixes a base seed with a list of tags into a new seed.
/// Used to give every component (cell, op, grid point, pair) its own stream.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// xoshiro256** generator with hand-written distributions.
///
/// The standard library's distributions are implementation-defined, so
/// every draw used by this project goes through this class to keep results
/// identical across compilers and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one of each pair is cached).
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p);
  /// Returns +1.0 or -1.0 with equal probability.
  double sign();

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace dascl
