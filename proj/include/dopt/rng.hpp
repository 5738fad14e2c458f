#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dopt {

// splitmix64; used to derive independent stream seeds from (seed, label).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random stream. std::mt19937_64 is fully specified by the
// standard; the distributions below are implemented here because the
// std::*_distribution classes are implementation-defined and would break
// bit-exact reproducibility across toolchains.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  // Independent stream derived from a base seed and a short label, so that
  // e.g. problem generation and link-failure sampling never share draws.
  static RngStream labeled(std::uint64_t base_seed, std::string_view label,
                           std::uint64_t index = 0) {
    std::uint64_t h = mix64(base_seed);
    for (char c : label) h = mix64(h ^ static_cast<std::uint64_t>(c));
    h = mix64(h ^ index);
    return RngStream(h);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via the Marsaglia polar method (sqrt/log only).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dopt
