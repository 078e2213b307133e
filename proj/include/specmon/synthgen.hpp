#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "specmon/pass.hpp"
#include "specmon/rng.hpp"
#include "specmon/spectrum.hpp"

namespace specmon {

/// Per-class template tweaks. The two signal classes differ in bandwidth and
/// top flatness, the two noise classes in floor tilt, so that the four mean
/// spectra stay pairwise separable by several dB over wide bin ranges.
struct ClassShape {
  double band_scale = 1.0;     // widens the occupied band (signal classes)
  double dome_db = 0.0;        // in-band parabolic droop toward band edges
  double floor_tilt_db = 0.0;  // +/- tilt across the floor (noise classes)
};

struct SynthConfig {
  std::uint64_t seed = 1;

  // Pass structure. Length bounds default to the min/max pass lengths of
  // the recorded fourteen-pass campaign; the on/off instants are drawn as
  // fractions of the pass length. The fraction defaults keep both standard
  // interference windows ([400,410) and [1100,1200)) inside noise segments,
  // which also keeps injected spectra below 0 dB with the default levels.
  int pass_length_min = 1197;
  int pass_length_max = 1508;
  double signal_start_fraction_lo = 0.36;
  double signal_start_fraction_hi = 0.44;
  double signal_end_fraction_lo = 0.62;
  double signal_end_fraction_hi = 0.72;

  // Spectral levels (dB).
  double noise_floor_db = -55.0;
  double signal_peak_db = -10.0;
  int occupied_band_lo = 212;
  int occupied_band_hi = 812;  // inclusive
  int edge_rolloff_bins = 40;
  double per_bin_noise_sigma_db = 1.0;

  // Jitter is truncated at +/- jitter_clamp_sigmas so every generated value
  // stays inside the normalizable range by construction.
  double jitter_clamp_sigmas = 6.0;

  std::map<ModClass, ClassShape> class_shapes = {
      {ModClass::PSK8_SIGNAL, {1.0, 3.0, 0.0}},
      {ModClass::PSK8_NOISE, {1.0, 0.0, 0.0}},
      {ModClass::QAM16_SIGNAL, {1.2, 0.0, 0.0}},
      {ModClass::QAM16_NOISE, {1.0, 0.0, 4.0}},
  };

  // Default split: 4 + 4 train passes, 3 + 3 test passes.
  int train_passes_per_modulation = 4;
  int test_passes_per_modulation = 3;

  void validate() const {
    if (pass_length_min < 2 || pass_length_max < pass_length_min)
      throw ConfigError("bad pass length range");
    if (!(signal_start_fraction_lo > 0 &&
          signal_start_fraction_hi >= signal_start_fraction_lo &&
          signal_end_fraction_lo > signal_start_fraction_hi &&
          signal_end_fraction_hi >= signal_end_fraction_lo &&
          signal_end_fraction_hi < 1.0))
      throw ConfigError("signal fractions must satisfy 0 < start <= end < 1");
    if (occupied_band_lo < 0 || occupied_band_hi >= kNumBins ||
        occupied_band_lo >= occupied_band_hi)
      throw ConfigError("bad occupied band");
    if (per_bin_noise_sigma_db < 0) throw ConfigError("negative jitter sigma");
    if (train_passes_per_modulation < 1 || test_passes_per_modulation < 1)
      throw ConfigError("pass counts must be >= 1");
    // All levels must map inside [-120, 0] dB so that default normalization
    // never rejects generated data.
    const double slack = jitter_clamp_sigmas * per_bin_noise_sigma_db;
    double tilt_max = 0.0, dome_max = 0.0;
    for (const auto& [cls, shape] : class_shapes) {
      tilt_max = std::max(tilt_max, std::abs(shape.floor_tilt_db));
      dome_max = std::max(dome_max, std::abs(shape.dome_db));
    }
    const double hi = std::max(signal_peak_db, noise_floor_db + tilt_max) + slack;
    const double lo =
        std::min(noise_floor_db - tilt_max, signal_peak_db - dome_max) - slack;
    if (hi > 0.0 || lo < -120.0)
      throw ConfigError("dB levels leave [-120, 0]; normalization would fail");
  }
};

/// Deterministic per-class mean spectrum (no jitter). Signal classes raise
/// the occupied band to signal_peak_db with a raised-cosine roll-off of
/// edge_rolloff_bins on each side; noise classes are a (possibly tilted)
/// floor at noise_floor_db.
inline Eigen::VectorXd class_template(ModClass cls, const SynthConfig& cfg) {
  const ClassShape& shape = cfg.class_shapes.at(cls);
  Eigen::VectorXd t(kNumBins);
  const double center = 0.5 * (cfg.occupied_band_lo + cfg.occupied_band_hi);
  const double half =
      0.5 * (cfg.occupied_band_hi - cfg.occupied_band_lo) * shape.band_scale;
  const bool is_signal =
      cls == ModClass::PSK8_SIGNAL || cls == ModClass::QAM16_SIGNAL;
  for (int n = 0; n < kNumBins; ++n) {
    const double u = n / double(kNumBins - 1);
    const double floor_db =
        cfg.noise_floor_db + shape.floor_tilt_db * 2.0 * (u - 0.5);
    if (!is_signal) {
      t[n] = floor_db;
      continue;
    }
    const double dist = std::abs(n - center);
    if (dist <= half) {
      const double x = (n - center) / half;  // -1..1 across the band
      t[n] = cfg.signal_peak_db - shape.dome_db * x * x;
    } else if (dist <= half + cfg.edge_rolloff_bins) {
      const double frac = (dist - half) / cfg.edge_rolloff_bins;
      const double edge_db = cfg.signal_peak_db - shape.dome_db;
      t[n] = cfg.noise_floor_db +
             (edge_db - cfg.noise_floor_db) * 0.5 * (1.0 + std::cos(M_PI * frac));
    } else {
      t[n] = cfg.noise_floor_db;
    }
  }
  return t;
}

/// One raw-dB spectrum of the given class: template plus i.i.d. per-bin
/// Gaussian dB jitter (truncated at jitter_clamp_sigmas).
inline Spectrum gen_spectrum(ModClass cls, const SynthConfig& cfg, Rng& rng) {
  Eigen::VectorXd bins = class_template(cls, cfg);
  const double sigma = cfg.per_bin_noise_sigma_db;
  const double clamp = cfg.jitter_clamp_sigmas * sigma;
  for (int n = 0; n < kNumBins; ++n)
    bins[n] += std::clamp(rng.gaussian() * sigma, -clamp, clamp);
  return Spectrum(std::move(bins), false);
}

/// One pass: frame_sync is 0 on [0, t_on), 2 on [t_on, t_off), 0 after,
/// i.e. a single transmission episode with exactly two transitions.
inline Pass gen_pass(const std::string& id, Modulation mod,
                     const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  const int T = static_cast<int>(
      rng.uniform_int(cfg.pass_length_min, cfg.pass_length_max));
  const int t_on = static_cast<int>(std::lround(
      T * rng.uniform(cfg.signal_start_fraction_lo, cfg.signal_start_fraction_hi)));
  const int t_off = static_cast<int>(std::lround(
      T * rng.uniform(cfg.signal_end_fraction_lo, cfg.signal_end_fraction_hi)));

  Pass p;
  p.id = id;
  p.modulation = mod;
  p.spectra.reserve(T);
  p.frame_sync.resize(T);
  p.labels.resize(T);
  for (int t = 0; t < T; ++t) {
    const bool active = t >= t_on && t < t_off;
    p.frame_sync[t] = active ? 2 : 0;
    p.labels[t] = class_for(mod, active);
    p.spectra.push_back(gen_spectrum(p.labels[t], cfg, rng));
  }
  return p;
}

namespace detail {
inline std::string pass_id(Modulation mod, int number) {
  return (mod == Modulation::PSK8 ? "A" : "B") + std::to_string(number);
}
}  // namespace detail

/// Full train/test dataset. Every pass is generated from its own RNG
/// substream, substream(cfg.seed, global_pass_index), so generation is
/// reproducible and passes are independent of each other.
inline Dataset gen_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  std::uint64_t index = 0;
  auto make = [&](Modulation mod, int number) {
    Rng rng(substream(cfg.seed, index++));
    return gen_pass(detail::pass_id(mod, number), mod, cfg, rng);
  };
  for (int i = 0; i < cfg.train_passes_per_modulation; ++i)
    ds.train_passes.push_back(make(Modulation::PSK8, i + 1));
  for (int i = 0; i < cfg.train_passes_per_modulation; ++i)
    ds.train_passes.push_back(make(Modulation::QAM16, i + 1));
  for (int i = 0; i < cfg.test_passes_per_modulation; ++i)
    ds.test_passes.push_back(
        make(Modulation::PSK8, cfg.train_passes_per_modulation + 1 + i));
  for (int i = 0; i < cfg.test_passes_per_modulation; ++i)
    ds.test_passes.push_back(
        make(Modulation::QAM16, cfg.train_passes_per_modulation + 1 + i));
  return ds;
}

/// Fraction of steps per class over a set of passes (reported, not asserted:
/// the split depends on the configured on/off fractions).
inline std::array<double, kNumClasses> class_fractions(
    const std::vector<Pass>& passes) {
  std::array<double, kNumClasses> counts{};
  double total = 0;
  for (const Pass& p : passes)
    for (ModClass c : p.labels) {
      counts[static_cast<int>(c)] += 1.0;
      total += 1.0;
    }
  if (total > 0)
    for (double& c : counts) c /= total;
  return counts;
}

}  // namespace specmon
