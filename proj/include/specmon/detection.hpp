#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "specmon/pass.hpp"
#include "specmon/rng.hpp"
#include "specmon/spectrum.hpp"

namespace specmon {

/// Parameters of the parabolic additive interferer (dB domain):
///   profile[start_bin + phi] = -gamma * (phi/Phi - beta)^2 + v[phi] + delta
/// for phi in [0, phi_max), zero elsewhere. The parabola coordinate is
/// normalized (phi/Phi) so beta = 0.5 centers the bump regardless of the
/// bandwidth. v is i.i.d. standard Gaussian noise scaled by noise_amplitude,
/// drawn fresh for every affected time step from a per-step substream.
struct InterferenceSpec {
  double gamma = 40.0;
  double beta = 0.5;
  double delta = 20.0;
  int phi_max = 300;
  int start_bin = 362;
  int start_t = 400;
  int duration = 10;
  double noise_amplitude = 1.0;
  std::uint64_t noise_seed = 0;

  void validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta outside [0,1]");
    if (phi_max < 1 || start_bin < 0 || start_bin + phi_max > kNumBins)
      throw ConfigError("interference band leaves [0, " +
                        std::to_string(kNumBins) + ")");
    if (duration < 1) throw ConfigError("interference duration < 1");
    if (start_t < 0) throw ConfigError("negative interference start");
  }
};

/// Additive dB profile for time step t.
inline Eigen::VectorXd interference_profile(const InterferenceSpec& spec,
                                            int t) {
  spec.validate();
  Eigen::VectorXd profile = Eigen::VectorXd::Zero(kNumBins);
  Rng rng(substream(spec.noise_seed, static_cast<std::uint64_t>(t)));
  for (int phi = 0; phi < spec.phi_max; ++phi) {
    const double u = double(phi) / double(spec.phi_max) - spec.beta;
    profile[spec.start_bin + phi] =
        -spec.gamma * u * u + spec.noise_amplitude * rng.gaussian() + spec.delta;
  }
  return profile;
}

/// Returns a copy of the pass with the interference added to the raw-dB
/// spectra at t in [start_t, start_t + duration).
inline Pass inject(const Pass& pass, const InterferenceSpec& spec) {
  spec.validate();
  if (spec.start_t + spec.duration > pass.length())
    throw OutOfBoundsError("injection [" + std::to_string(spec.start_t) + ", " +
                           std::to_string(spec.start_t + spec.duration) +
                           ") in pass of length " +
                           std::to_string(pass.length()));
  Pass out = pass;
  for (int t = spec.start_t; t < spec.start_t + spec.duration; ++t)
    out.spectra[t].bins += interference_profile(spec, t);
  return out;
}

/// Maximum windowed mean squared error between a prediction and the actual
/// spectrum, computed in the dB domain over the S = d/L disjoint windows
/// [J*L, (J+1)*L). Inputs may be normalized or raw; normalized spectra are
/// mapped back to dB with `norm` first.
struct MmseResult {
  double mmse = 0.0;
  int argmax_window = 0;
};

namespace detail {
inline MmseResult mmse_kernel(const double* pred_db, const double* actual_db,
                              int d, int L) {
  MmseResult r;
  r.mmse = -1.0;
  const int S = d / L;
  for (int J = 0; J < S; ++J) {
    double acc = 0.0;
    for (int j = J * L; j < (J + 1) * L; ++j) {
      const double e = pred_db[j] - actual_db[j];
      acc += e * e;
    }
    acc /= double(L);
    if (acc > r.mmse) {
      r.mmse = acc;
      r.argmax_window = J;
    }
  }
  return r;
}
}  // namespace detail

inline MmseResult mmse_score(const Spectrum& prediction, const Spectrum& actual,
                             const NormalizationParams& norm, int L = 64) {
  if (prediction.bins.size() != actual.bins.size())
    throw DimensionMismatchError("prediction/actual length");
  const int d = static_cast<int>(prediction.bins.size());
  if (L < 1 || d % L != 0) throw BadWindowError(L, d);
  auto to_db = [&](const Spectrum& s) -> Eigen::VectorXd {
    if (s.normalized) return s.bins * norm.b + Eigen::VectorXd::Constant(d, norm.a);
    return s.bins;
  };
  const Eigen::VectorXd p = to_db(prediction);
  const Eigen::VectorXd a = to_db(actual);
  return detail::mmse_kernel(p.data(), a.data(), d, L);
}

/// Per-step maximum windowed MSE over a pass. Entry k scores the prediction
/// of the spectrum at pass time k + time_offset against the observed one.
struct MmseTrace {
  std::vector<double> mmse;
  std::vector<int> argmax_window;
  int window_length = 64;
  int num_windows = 16;
  int time_offset = 1;

  int steps() const { return static_cast<int>(mmse.size()); }
};

/// `yhat_norm` row t = normalized prediction for pass time t+1 (the shape
/// predict_pass and baseline_predict_pass emit).
inline MmseTrace mmse_trace(const Eigen::MatrixXd& yhat_norm, const Pass& pass,
                            const NormalizationParams& norm, int L = 64) {
  if (yhat_norm.rows() != pass.length() - 1)
    throw DimensionMismatchError("prediction rows != pass length - 1");
  if (yhat_norm.cols() != kNumBins)
    throw DimensionMismatchError("prediction cols != number of bins");
  if (L < 1 || kNumBins % L != 0) throw BadWindowError(L, kNumBins);
  MmseTrace tr;
  tr.window_length = L;
  tr.num_windows = kNumBins / L;
  tr.mmse.resize(yhat_norm.rows());
  tr.argmax_window.resize(yhat_norm.rows());
  Eigen::VectorXd pred_db(kNumBins);
  for (int t = 0; t < yhat_norm.rows(); ++t) {
    pred_db = yhat_norm.row(t).transpose() * norm.b +
              Eigen::VectorXd::Constant(kNumBins, norm.a);
    const MmseResult r = detail::mmse_kernel(
        pred_db.data(), pass.spectra[static_cast<std::size_t>(t) + 1].bins.data(),
        kNumBins, L);
    tr.mmse[static_cast<std::size_t>(t)] = r.mmse;
    tr.argmax_window[static_cast<std::size_t>(t)] = r.argmax_window;
  }
  return tr;
}

enum class EventKind { INTERFERENCE, TRANSITION_SPIKE };

inline const char* to_string(EventKind k) {
  return k == EventKind::INTERFERENCE ? "INTERFERENCE" : "TRANSITION_SPIKE";
}

/// A detected event in pass-time coordinates, [start_t, end_t).
struct DetectionEvent {
  int start_t = 0;
  int end_t = 0;
  int window_lo = 0;  // range of per-step argmax windows over the event
  int window_hi = 0;
  EventKind kind = EventKind::INTERFERENCE;
  double peak_mmse = 0.0;
};

/// Two-threshold event detector. Background statistics are robust (median
/// and Gaussian-consistent scaled MAD), so the thresholds adapt to the
/// model/dataset at hand:
///   theta_int   = median + k_int * 1.4826 * MAD
///   theta_spike = spike_factor * theta_int
/// Contiguous runs above theta_int become events. A run associated with a
/// frame-sync transition (it intersects [tau - max_spike_width,
/// tau + transition_recovery]) is a TRANSITION_SPIKE when its peak clears
/// theta_spike, and is discarded as a recovery remnant otherwise; runs away
/// from every transition are INTERFERENCE. The first warmup_steps trace
/// entries are ignored: the recurrent state starts from zero at the pass
/// start and the first few predictions are not meaningful for detection.
struct DetectorConfig {
  double k_int = 10.0;
  double spike_factor = 20.0;
  int max_spike_width = 2;
  int transition_recovery = 12;
  int warmup_steps = 8;
};

struct DetectorThresholds {
  double median = 0.0;
  double mad = 0.0;  // scaled by 1.4826
  double theta_int = 0.0;
  double theta_spike = 0.0;
};

namespace detail {
inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid),
                   v.end());
  return v[mid];
}
}  // namespace detail

inline DetectorThresholds detector_thresholds(const MmseTrace& trace,
                                              const DetectorConfig& cfg) {
  DetectorThresholds th;
  th.median = detail::median_of(trace.mmse);
  std::vector<double> dev(trace.mmse.size());
  for (std::size_t i = 0; i < trace.mmse.size(); ++i)
    dev[i] = std::abs(trace.mmse[i] - th.median);
  th.mad = 1.4826 * detail::median_of(std::move(dev));
  th.theta_int = th.median + cfg.k_int * th.mad;
  th.theta_spike = cfg.spike_factor * th.theta_int;
  return th;
}

inline std::vector<DetectionEvent> detect_events(const MmseTrace& trace,
                                                 const Pass& pass,
                                                 const DetectorConfig& cfg) {
  if (trace.steps() != pass.length() - 1)
    throw DimensionMismatchError("trace not aligned with pass");
  const DetectorThresholds th = detector_thresholds(trace, cfg);
  const std::vector<int> transitions = transition_instants(pass);

  auto near_transition = [&](int start_time, int end_time) {
    for (int tau : transitions) {
      const int lo = tau - cfg.max_spike_width;
      const int hi = tau + cfg.transition_recovery;
      if (start_time <= hi && end_time - 1 >= lo) return true;
    }
    return false;
  };

  std::vector<DetectionEvent> events;
  const int n = trace.steps();
  int k = 0;
  while (k < n) {
    const int time = k + trace.time_offset;
    if (time <= cfg.warmup_steps || !(trace.mmse[static_cast<std::size_t>(k)] > th.theta_int)) {
      ++k;
      continue;
    }
    DetectionEvent ev;
    ev.start_t = time;
    ev.peak_mmse = trace.mmse[static_cast<std::size_t>(k)];
    ev.window_lo = ev.window_hi = trace.argmax_window[static_cast<std::size_t>(k)];
    int j = k;
    while (j < n && trace.mmse[static_cast<std::size_t>(j)] > th.theta_int) {
      ev.peak_mmse = std::max(ev.peak_mmse, trace.mmse[static_cast<std::size_t>(j)]);
      ev.window_lo = std::min(ev.window_lo, trace.argmax_window[static_cast<std::size_t>(j)]);
      ev.window_hi = std::max(ev.window_hi, trace.argmax_window[static_cast<std::size_t>(j)]);
      ++j;
    }
    ev.end_t = j + trace.time_offset;
    if (near_transition(ev.start_t, ev.end_t)) {
      if (ev.peak_mmse > th.theta_spike) {
        ev.kind = EventKind::TRANSITION_SPIKE;
        events.push_back(ev);
      }
      // sub-spike elevations next to a transition are recovery remnants
    } else {
      ev.kind = EventKind::INTERFERENCE;
      events.push_back(ev);
    }
    k = j;
  }
  return events;
}

/// Classification error rate over the steps not excluded by the mask.
/// `excluded[i]` == true drops step i (transition-adjacent steps).
inline double p_error(const std::vector<ModClass>& predicted,
                      const std::vector<ModClass>& truth,
                      const std::vector<bool>& excluded) {
  if (predicted.size() != truth.size() || predicted.size() != excluded.size())
    throw DimensionMismatchError("p_error input lengths");
  long kept = 0, wrong = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (excluded[i]) continue;
    ++kept;
    if (predicted[i] != truth[i]) ++wrong;
  }
  if (kept == 0) throw EmptyAfterMaskError();
  return double(wrong) / double(kept);
}

/// Ground truth for an injection, in the same coordinates detect_events
/// reports: pass-time span and the window range covered by the band.
struct GroundTruthEvent {
  int start_t = 0;
  int end_t = 0;
  int window_lo = 0;
  int window_hi = 0;
};

inline GroundTruthEvent ground_truth_event(const InterferenceSpec& spec,
                                           int window_length = 64) {
  GroundTruthEvent gt;
  gt.start_t = spec.start_t;
  gt.end_t = spec.start_t + spec.duration;
  gt.window_lo = spec.start_bin / window_length;
  gt.window_hi = (spec.start_bin + spec.phi_max - 1) / window_length;
  return gt;
}

}  // namespace specmon
