#pragma once

#include <array>
#include <string>
#include <vector>

#include "specmon/spectrum.hpp"

namespace specmon {

enum class Modulation { PSK8, QAM16 };

/// The four spectrum classes (R = 4). Order matters: it fixes classifier
/// logit indices and the column order of the least-squares basis matrix.
enum class ModClass : int {
  PSK8_SIGNAL = 0,
  PSK8_NOISE = 1,
  QAM16_SIGNAL = 2,
  QAM16_NOISE = 3,
};

inline constexpr int kNumClasses = 4;

inline const char* to_string(Modulation m) {
  return m == Modulation::PSK8 ? "PSK8" : "QAM16";
}

inline const char* to_string(ModClass c) {
  switch (c) {
    case ModClass::PSK8_SIGNAL: return "PSK8_SIGNAL";
    case ModClass::PSK8_NOISE: return "PSK8_NOISE";
    case ModClass::QAM16_SIGNAL: return "QAM16_SIGNAL";
    case ModClass::QAM16_NOISE: return "QAM16_NOISE";
  }
  return "?";
}

inline ModClass class_for(Modulation m, bool signal_active) {
  if (m == Modulation::PSK8)
    return signal_active ? ModClass::PSK8_SIGNAL : ModClass::PSK8_NOISE;
  return signal_active ? ModClass::QAM16_SIGNAL : ModClass::QAM16_NOISE;
}

/// One satellite pass: an ordered sequence of raw-dB spectra with per-step
/// frame-sync flags ({0, 2}, the modem's literal encoding) and class labels.
struct Pass {
  std::string id;
  Modulation modulation = Modulation::PSK8;
  std::vector<Spectrum> spectra;
  std::vector<int> frame_sync;
  std::vector<ModClass> labels;

  int length() const { return static_cast<int>(spectra.size()); }
};

struct Dataset {
  std::vector<Pass> train_passes;
  std::vector<Pass> test_passes;
};

struct PassViolation {
  enum class Kind { LengthMismatch, TooShort, BadFrameSync, LabelInconsistent,
                    SpectrumNormalized } kind;
  int index = -1;  // time step where applicable, else -1
  std::string detail;
};

/// Checks the Pass invariants. Violations are data, not errors: an empty
/// report means the pass is valid.
inline std::vector<PassViolation> validate_pass(const Pass& p) {
  using Kind = PassViolation::Kind;
  std::vector<PassViolation> out;
  const std::size_t n = p.spectra.size();
  if (p.frame_sync.size() != n || p.labels.size() != n) {
    out.push_back({Kind::LengthMismatch, -1,
                   "spectra/frame_sync/labels lengths " + std::to_string(n) +
                       "/" + std::to_string(p.frame_sync.size()) + "/" +
                       std::to_string(p.labels.size())});
    return out;  // per-step checks are meaningless on ragged data
  }
  if (n < 2)
    out.push_back({Kind::TooShort, -1,
                   "pass has " + std::to_string(n) + " steps, needs >= 2"});
  for (std::size_t t = 0; t < n; ++t) {
    if (p.frame_sync[t] != 0 && p.frame_sync[t] != 2) {
      out.push_back({Kind::BadFrameSync, static_cast<int>(t),
                     "frame_sync = " + std::to_string(p.frame_sync[t])});
      continue;
    }
    const ModClass expected = class_for(p.modulation, p.frame_sync[t] == 2);
    if (p.labels[t] != expected)
      out.push_back({Kind::LabelInconsistent, static_cast<int>(t),
                     std::string("label ") + to_string(p.labels[t]) +
                         " inconsistent with frame_sync " +
                         std::to_string(p.frame_sync[t])});
    if (p.spectra[t].normalized)
      out.push_back({Kind::SpectrumNormalized, static_cast<int>(t),
                     "stored pass spectra must be raw dB"});
  }
  return out;
}

/// Time steps t where frame_sync[t] != frame_sync[t-1].
inline std::vector<int> transition_instants(const Pass& p) {
  std::vector<int> out;
  for (std::size_t t = 1; t < p.frame_sync.size(); ++t)
    if (p.frame_sync[t] != p.frame_sync[t - 1])
      out.push_back(static_cast<int>(t));
  return out;
}

/// mask[t] == true marks a transition-adjacent step, to be excluded from
/// classification scoring. For a transition at t both t-1 and t are flagged.
inline std::vector<bool> transition_mask(const Pass& p) {
  std::vector<bool> mask(p.frame_sync.size(), false);
  for (int t : transition_instants(p)) {
    mask[static_cast<std::size_t>(t)] = true;
    if (t > 0) mask[static_cast<std::size_t>(t) - 1] = true;
  }
  return mask;
}

}  // namespace specmon
