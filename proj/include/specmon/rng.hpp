#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace specmon {

/// splitmix64 mixing step. Used to derive independent substreams from a
/// single user-facing seed (e.g. one substream per generated pass, keyed by
/// seed XOR mix(index)), and to decorrelate small integer seeds before they
/// reach the main engine.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d649bb133111ebULL;
  return x ^ (x >> 31);
}

/// Substream seed for item `index` under root `seed`.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index));
}

/// Deterministic double/Gaussian source on top of mt19937_64.
///
/// std::normal_distribution is implementation-defined, so Gaussians are
/// drawn with the Marsaglia polar method to keep streams reproducible
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform() * double(hi - lo + 1));
  }

  /// Standard Gaussian (Marsaglia polar, cached spare).
  double gaussian() {
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
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace specmon
