#include "dynaconf/rng.hpp"

#include <cmath>
#include <sstream>

#include "dynaconf/errors.hpp"

namespace dynaconf {

double Rng::normal() {
  // Box-Muller; the sine partner is discarded to keep the state machine
  // equal to the raw engine state.
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * M_PI * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw ContractViolation("uniform_int: n must be positive");
  // rejection sampling on the top bits, bias-free
  std::uint64_t un = static_cast<std::uint64_t>(n);
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

Rng Rng::child(std::uint64_t stream) {
  return Rng(mix_seed(next() + 0x9e3779b97f4a7c15ULL * (stream + 1)));
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

Rng Rng::deserialize(const std::string& state) {
  Rng r(0);
  std::istringstream is(state);
  is >> r.eng_;
  if (is.fail()) throw DataError("rng state string failed to parse");
  return r;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace dynaconf
