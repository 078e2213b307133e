#pragma once

#include <json.hpp>
#include <string>

#include "specmon/detection.hpp"
#include "specmon/synthgen.hpp"
#include "specmon/training.hpp"

namespace specmon {

// JSON forms of the configuration structs, used by the CLI (--config files),
// the run manifests, and the dataset index. Unknown keys are rejected so a
// typo in a config file fails loudly instead of silently using a default.

namespace detail {
inline void check_known_keys(const nlohmann::json& j,
                             std::initializer_list<const char*> known,
                             const std::string& what) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) { ok = true; break; }
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + what);
  }
}
}  // namespace detail

inline nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json shapes;
  for (const auto& [cls, s] : c.class_shapes)
    shapes[to_string(cls)] = {{"band_scale", s.band_scale},
                              {"dome_db", s.dome_db},
                              {"floor_tilt_db", s.floor_tilt_db}};
  return {{"seed", c.seed},
          {"pass_length_min", c.pass_length_min},
          {"pass_length_max", c.pass_length_max},
          {"signal_start_fraction", {c.signal_start_fraction_lo, c.signal_start_fraction_hi}},
          {"signal_end_fraction", {c.signal_end_fraction_lo, c.signal_end_fraction_hi}},
          {"noise_floor_db", c.noise_floor_db},
          {"signal_peak_db", c.signal_peak_db},
          {"occupied_band", {c.occupied_band_lo, c.occupied_band_hi}},
          {"edge_rolloff_bins", c.edge_rolloff_bins},
          {"per_bin_noise_sigma_db", c.per_bin_noise_sigma_db},
          {"jitter_clamp_sigmas", c.jitter_clamp_sigmas},
          {"class_shapes", shapes},
          {"train_passes_per_modulation", c.train_passes_per_modulation},
          {"test_passes_per_modulation", c.test_passes_per_modulation}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  detail::check_known_keys(
      j,
      {"seed", "pass_length_min", "pass_length_max", "signal_start_fraction",
       "signal_end_fraction", "noise_floor_db", "signal_peak_db",
       "occupied_band", "edge_rolloff_bins", "per_bin_noise_sigma_db",
       "jitter_clamp_sigmas", "class_shapes", "train_passes_per_modulation",
       "test_passes_per_modulation"},
      "synth config");
  SynthConfig c;
  c.seed = j.value("seed", c.seed);
  c.pass_length_min = j.value("pass_length_min", c.pass_length_min);
  c.pass_length_max = j.value("pass_length_max", c.pass_length_max);
  if (j.contains("signal_start_fraction")) {
    c.signal_start_fraction_lo = j["signal_start_fraction"].at(0).get<double>();
    c.signal_start_fraction_hi = j["signal_start_fraction"].at(1).get<double>();
  }
  if (j.contains("signal_end_fraction")) {
    c.signal_end_fraction_lo = j["signal_end_fraction"].at(0).get<double>();
    c.signal_end_fraction_hi = j["signal_end_fraction"].at(1).get<double>();
  }
  c.noise_floor_db = j.value("noise_floor_db", c.noise_floor_db);
  c.signal_peak_db = j.value("signal_peak_db", c.signal_peak_db);
  if (j.contains("occupied_band")) {
    c.occupied_band_lo = j["occupied_band"].at(0).get<int>();
    c.occupied_band_hi = j["occupied_band"].at(1).get<int>();
  }
  c.edge_rolloff_bins = j.value("edge_rolloff_bins", c.edge_rolloff_bins);
  c.per_bin_noise_sigma_db =
      j.value("per_bin_noise_sigma_db", c.per_bin_noise_sigma_db);
  c.jitter_clamp_sigmas = j.value("jitter_clamp_sigmas", c.jitter_clamp_sigmas);
  if (j.contains("class_shapes")) {
    for (const auto& [name, s] : j["class_shapes"].items()) {
      ModClass cls;
      if (name == "PSK8_SIGNAL") cls = ModClass::PSK8_SIGNAL;
      else if (name == "PSK8_NOISE") cls = ModClass::PSK8_NOISE;
      else if (name == "QAM16_SIGNAL") cls = ModClass::QAM16_SIGNAL;
      else if (name == "QAM16_NOISE") cls = ModClass::QAM16_NOISE;
      else throw ConfigError("unknown class '" + name + "' in class_shapes");
      ClassShape& shape = c.class_shapes[cls];
      shape.band_scale = s.value("band_scale", shape.band_scale);
      shape.dome_db = s.value("dome_db", shape.dome_db);
      shape.floor_tilt_db = s.value("floor_tilt_db", shape.floor_tilt_db);
    }
  }
  c.train_passes_per_modulation =
      j.value("train_passes_per_modulation", c.train_passes_per_modulation);
  c.test_passes_per_modulation =
      j.value("test_passes_per_modulation", c.test_passes_per_modulation);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"predictor_epochs", c.predictor_epochs},
          {"classifier_epochs", c.classifier_epochs},
          {"loss", to_string(c.loss)},
          {"truncation_span", c.truncation_span},
          {"seed", c.seed},
          {"init_scale", c.init_scale},
          {"squash", to_string(c.squash)},
          {"batch_size", c.batch_size}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  detail::check_known_keys(
      j,
      {"learning_rate", "predictor_epochs", "classifier_epochs", "loss",
       "truncation_span", "seed", "init_scale", "squash", "batch_size"},
      "train config");
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.predictor_epochs = j.value("predictor_epochs", c.predictor_epochs);
  c.classifier_epochs = j.value("classifier_epochs", c.classifier_epochs);
  if (j.contains("loss")) {
    const std::string loss = j["loss"].get<std::string>();
    if (loss == "abs") c.loss = LossKind::Abs;
    else if (loss == "mse") c.loss = LossKind::Mse;
    else throw ConfigError("loss must be 'abs' or 'mse'");
  }
  c.truncation_span = j.value("truncation_span", c.truncation_span);
  c.seed = j.value("seed", c.seed);
  c.init_scale = j.value("init_scale", c.init_scale);
  if (j.contains("squash")) {
    const std::string squash = j["squash"].get<std::string>();
    if (squash == "sigmoid") c.squash = Squash::Sigmoid;
    else if (squash == "tanh") c.squash = Squash::Tanh;
    else throw ConfigError("squash must be 'sigmoid' or 'tanh'");
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const DetectorConfig& c) {
  return {{"k_int", c.k_int},
          {"spike_factor", c.spike_factor},
          {"max_spike_width", c.max_spike_width},
          {"transition_recovery", c.transition_recovery},
          {"warmup_steps", c.warmup_steps}};
}

inline DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  detail::check_known_keys(j,
                           {"k_int", "spike_factor", "max_spike_width",
                            "transition_recovery", "warmup_steps"},
                           "detector config");
  DetectorConfig c;
  c.k_int = j.value("k_int", c.k_int);
  c.spike_factor = j.value("spike_factor", c.spike_factor);
  c.max_spike_width = j.value("max_spike_width", c.max_spike_width);
  c.transition_recovery = j.value("transition_recovery", c.transition_recovery);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  return c;
}

inline nlohmann::json to_json(const InterferenceSpec& s) {
  return {{"gamma", s.gamma},
          {"beta", s.beta},
          {"delta", s.delta},
          {"phi_max", s.phi_max},
          {"start_bin", s.start_bin},
          {"start_t", s.start_t},
          {"duration", s.duration},
          {"noise_amplitude", s.noise_amplitude},
          {"noise_seed", s.noise_seed}};
}

inline InterferenceSpec interference_spec_from_json(const nlohmann::json& j) {
  detail::check_known_keys(j,
                           {"gamma", "beta", "delta", "phi_max", "start_bin",
                            "start_t", "duration", "noise_amplitude",
                            "noise_seed"},
                           "interference spec");
  InterferenceSpec s;
  s.gamma = j.value("gamma", s.gamma);
  s.beta = j.value("beta", s.beta);
  s.delta = j.value("delta", s.delta);
  s.phi_max = j.value("phi_max", s.phi_max);
  s.start_bin = j.value("start_bin", s.start_bin);
  s.start_t = j.value("start_t", s.start_t);
  s.duration = j.value("duration", s.duration);
  s.noise_amplitude = j.value("noise_amplitude", s.noise_amplitude);
  s.noise_seed = j.value("noise_seed", s.noise_seed);
  s.validate();
  return s;
}

/// An injection run is a list of specs applied in order to one pass.
inline std::vector<InterferenceSpec> interference_list_from_json(
    const nlohmann::json& j) {
  std::vector<InterferenceSpec> out;
  if (j.is_array()) {
    for (const auto& item : j) out.push_back(interference_spec_from_json(item));
  } else {
    out.push_back(interference_spec_from_json(j));
  }
  return out;
}

}  // namespace specmon
