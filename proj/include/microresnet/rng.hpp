#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace microresnet {

/// Seeded pseudo-random source.
///
/// Raw draws come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. The derived distributions are implemented here rather than
/// through <random> distributions, which are implementation-defined, so a
/// given seed produces the same decisions on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream keyed by (seed, a, b), e.g. (seed, epoch, sample).
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// True with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via the Box-Muller transform.
  double normal();

  /// Serialized engine state, restorable with restore().
  std::string state() const;
  void restore(std::string_view state);

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ && a.spare_ == b.spare_;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer; used to mix seeds into well-spread keys.
std::uint64_t mix64(std::uint64_t x);

}  // namespace microresnet
