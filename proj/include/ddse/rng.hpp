#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ddse {

/// Deterministic random source. mt19937_64 is fully specified by the
/// standard and the gaussian transform is hand-rolled, so a fixed seed
/// yields the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // uniform on (0, 1]
  double uniform() {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, two draws per variate
  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double sigma) { return sigma * gaussian(); }

  bool bernoulli(double p) { return uniform() <= p; }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ddse
