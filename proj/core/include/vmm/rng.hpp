#pragma once

#include <cstdint>
#include <optional>

namespace vmm {

/// SplitMix64 mixing function. Used both as the stream generator and as the
/// seed-derivation hash, so every random draw in the library is a pure
/// function of (master seed, counters).
std::uint64_t splitmix64_mix(std::uint64_t x);

/// Seed for replication `index` of a run keyed by `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open_low();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
  std::optional<double> spare_;
};

}  // namespace vmm
