#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "specmon/errors.hpp"

namespace specmon {

/// Number of frequency bins in one power spectral density snapshot.
inline constexpr int kNumBins = 1024;

/// One PSD snapshot. Raw spectra hold dB values; normalized spectra hold
/// dimensionless values in [-1, 1]. The flag tracks which state the bins
/// are in so the two can never be mixed up silently.
struct Spectrum {
  Eigen::VectorXd bins;
  bool normalized = false;

  Spectrum() : bins(Eigen::VectorXd::Zero(kNumBins)) {}
  explicit Spectrum(Eigen::VectorXd values, bool is_normalized = false)
      : bins(std::move(values)), normalized(is_normalized) {
    if (bins.size() != kNumBins)
      throw DimensionMismatchError("spectrum must have " +
                                   std::to_string(kNumBins) + " bins, got " +
                                   std::to_string(bins.size()));
  }
};

/// Affine dB -> [-1, 1] map: norm = (raw - a) / b.
struct NormalizationParams {
  double a = -60.0;  // dB offset
  double b = 60.0;   // dB scale, > 0

  void validate() const {
    if (!(b > 0.0)) throw ConfigError("normalization scale b must be > 0");
  }
};

/// Element-wise normalization. Values that leave [-1, 1] are rejected, not
/// clamped, so data inconsistent with (a, b) surfaces immediately.
inline Spectrum normalize(const Spectrum& s, const NormalizationParams& p) {
  if (s.normalized) throw AlreadyNormalizedError();
  p.validate();
  Eigen::VectorXd out = (s.bins.array() - p.a) / p.b;
  for (int n = 0; n < out.size(); ++n) {
    if (!(out[n] >= -1.0 && out[n] <= 1.0))
      throw OutOfRangeError(static_cast<std::size_t>(n), out[n]);
  }
  return Spectrum(std::move(out), true);
}

/// Inverse of normalize: raw = norm * b + a.
inline Spectrum denormalize(const Spectrum& s, const NormalizationParams& p) {
  if (!s.normalized) throw NotNormalizedError();
  p.validate();
  return Spectrum(s.bins * p.b + Eigen::VectorXd::Constant(s.bins.size(), p.a),
                  false);
}

}  // namespace specmon
