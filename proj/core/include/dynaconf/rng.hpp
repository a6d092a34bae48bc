#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dynaconf {

/// Deterministic random stream. Gaussian draws use Box-Muller without a
/// cached spare so the full generator state is the engine state, which
/// serializes exactly (checkpoint resume must be bit-identical).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal draw.
  double normal();

  /// Uniform integer in [0, n).
  int uniform_int(int n);

  /// Bernoulli draw with success probability p.
  bool bernoulli(double p) { return uniform() < p; }

  /// Derived stream; advances this generator by one draw.
  Rng child(std::uint64_t stream);

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  bool operator==(const Rng& other) const { return eng_ == other.eng_; }

 private:
  std::mt19937_64 eng_;
};

/// splitmix64 mixer, used to spread seeds for derived streams.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace dynaconf
