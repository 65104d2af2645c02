#pragma once

#include <cstdint>
#include <random>

namespace vstab {

/// Deterministic random source owned by whoever drives a stochastic
/// computation. Gaussian draws use the polar Box-Muller transform so the
/// stream is fully specified by the seed, independent of the standard
/// library's distribution internals.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  /// Standard normal draw.
  double gaussian();

  /// Uniform draw in [0, 1).
  double uniform();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Derive an independent stream for a sub-task (curve index, direction
  /// index, ...). Forking with the same salt always yields the same stream.
  RandomStream fork(std::uint64_t salt) const;

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vstab
