#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "specmon/baseline.hpp"
#include "specmon/detection.hpp"
#include "specmon/io_util.hpp"
#include "specmon/pass.hpp"
#include "specmon/synthgen.hpp"
#include "specmon/training.hpp"

namespace specmon {

inline constexpr int kPassFormatVersion = 1;

// ---------------------------------------------------------------------------
// Pass CSV + sidecar manifest.
//
// <id>.csv           header `t,frame_sync,bin_0000,...,bin_1023`, one row per
//                    time step, raw dB values in lossless decimal form.
// <id>.manifest.json {"id","modulation","num_spectra","format_version"}
//
// Labels are not stored: they are implied by (modulation, frame_sync) and
// reconstructed on load.
// ---------------------------------------------------------------------------

inline std::string pass_csv_header() {
  std::string h = "t,frame_sync";
  char buf[16];
  for (int n = 0; n < kNumBins; ++n) {
    std::snprintf(buf, sizeof(buf), ",bin_%04d", n);
    h += buf;
  }
  return h;
}

inline void write_pass(const std::filesystem::path& dir, const Pass& pass) {
  std::filesystem::create_directories(dir);
  std::string csv;
  csv.reserve(static_cast<std::size_t>(pass.length()) * kNumBins * 20);
  csv += pass_csv_header();
  csv += '\n';
  for (int t = 0; t < pass.length(); ++t) {
    csv += std::to_string(t);
    csv += ',';
    csv += std::to_string(pass.frame_sync[static_cast<std::size_t>(t)]);
    const auto& bins = pass.spectra[static_cast<std::size_t>(t)].bins;
    for (int n = 0; n < kNumBins; ++n) {
      csv += ',';
      csv += format_double(bins[n]);
    }
    csv += '\n';
  }
  write_text_file(dir / (pass.id + ".csv"), csv);

  nlohmann::json manifest;
  manifest["format_version"] = kPassFormatVersion;
  manifest["id"] = pass.id;
  manifest["modulation"] = to_string(pass.modulation);
  manifest["num_spectra"] = pass.length();
  write_text_file(dir / (pass.id + ".manifest.json"), manifest.dump(1) + "\n");
}

inline Pass read_pass(const std::filesystem::path& dir, const std::string& id) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(dir / (id + ".manifest.json")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad pass manifest for " + id + ": " + e.what());
  }
  if (manifest.value("format_version", -1) != kPassFormatVersion)
    throw IoError("unsupported pass format_version for " + id);
  Pass pass;
  pass.id = manifest.at("id").get<std::string>();
  const std::string mod = manifest.at("modulation").get<std::string>();
  if (mod == "PSK8") pass.modulation = Modulation::PSK8;
  else if (mod == "QAM16") pass.modulation = Modulation::QAM16;
  else throw IoError("unknown modulation '" + mod + "' for " + id);
  const int expected = manifest.at("num_spectra").get<int>();

  const std::string csv = read_text_file(dir / (id + ".csv"));
  std::size_t pos = csv.find('\n');
  if (pos == std::string::npos) throw IoError("empty pass csv for " + id);
  if (csv.substr(0, pos) != pass_csv_header())
    throw IoError("unexpected csv header for " + id);
  ++pos;
  pass.spectra.reserve(static_cast<std::size_t>(expected));
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    const std::string_view line(csv.data() + pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    Eigen::VectorXd bins(kNumBins);
    std::size_t field = 0, start = 0;
    int fs = 0;
    long t = 0;
    while (start <= line.size()) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string_view::npos) comma = line.size();
      const std::string_view cell = line.substr(start, comma - start);
      if (field == 0) t = parse_long(cell);
      else if (field == 1) fs = static_cast<int>(parse_long(cell));
      else if (field - 2 < kNumBins) bins[static_cast<Eigen::Index>(field) - 2] = parse_double(cell);
      else throw IoError("too many columns in " + id + ".csv");
      ++field;
      start = comma + 1;
      if (comma == line.size()) break;
    }
    if (field != kNumBins + 2)
      throw IoError("row " + std::to_string(t) + " of " + id + ".csv has " +
                    std::to_string(field) + " fields");
    if (t != pass.length())
      throw IoError("non-contiguous time steps in " + id + ".csv");
    pass.frame_sync.push_back(fs);
    pass.labels.push_back(class_for(pass.modulation, fs == 2));
    pass.spectra.emplace_back(std::move(bins), false);
  }
  if (pass.length() != expected)
    throw IoError("pass " + id + " has " + std::to_string(pass.length()) +
                  " rows, manifest says " + std::to_string(expected));
  return pass;
}

// ---------------------------------------------------------------------------
// Dataset directory: every pass as CSV + manifest, plus dataset.json listing
// train/test membership and the observed class fractions.
// ---------------------------------------------------------------------------

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds,
                          const nlohmann::json& generator_config = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["format_version"] = kPassFormatVersion;
  index["train"] = nlohmann::json::array();
  index["test"] = nlohmann::json::array();
  for (const Pass& p : ds.train_passes) {
    write_pass(dir, p);
    index["train"].push_back(p.id);
  }
  for (const Pass& p : ds.test_passes) {
    write_pass(dir, p);
    index["test"].push_back(p.id);
  }
  auto fractions_json = [](const std::vector<Pass>& passes) {
    nlohmann::json out;
    const auto f = class_fractions(passes);
    for (int r = 0; r < kNumClasses; ++r)
      out[to_string(static_cast<ModClass>(r))] = f[static_cast<std::size_t>(r)];
    return out;
  };
  index["class_fractions"]["train"] = fractions_json(ds.train_passes);
  index["class_fractions"]["test"] = fractions_json(ds.test_passes);
  if (!generator_config.is_null()) index["generator_config"] = generator_config;
  write_text_file(dir / "dataset.json", index.dump(1) + "\n");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_text_file(dir / "dataset.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad dataset.json: " + std::string(e.what()));
  }
  Dataset ds;
  for (const auto& id : index.at("train"))
    ds.train_passes.push_back(read_pass(dir, id.get<std::string>()));
  for (const auto& id : index.at("test"))
    ds.test_passes.push_back(read_pass(dir, id.get<std::string>()));
  return ds;
}

// ---------------------------------------------------------------------------
// Detection artifacts.
// ---------------------------------------------------------------------------

inline void write_trace_csv(const std::filesystem::path& path,
                            const MmseTrace& trace) {
  std::string csv = "t,mmse,argmax_window\n";
  for (int k = 0; k < trace.steps(); ++k) {
    csv += std::to_string(k + trace.time_offset);
    csv += ',';
    csv += format_double(trace.mmse[static_cast<std::size_t>(k)]);
    csv += ',';
    csv += std::to_string(trace.argmax_window[static_cast<std::size_t>(k)]);
    csv += '\n';
  }
  write_text_file(path, csv);
}

inline nlohmann::json event_to_json(const DetectionEvent& ev) {
  return {{"start_t", ev.start_t},     {"end_t", ev.end_t},
          {"window_lo", ev.window_lo}, {"window_hi", ev.window_hi},
          {"kind", to_string(ev.kind)}, {"peak_mmse", ev.peak_mmse}};
}

inline void write_events_json(const std::filesystem::path& path,
                              const std::vector<DetectionEvent>& events,
                              const DetectorThresholds& thresholds) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["thresholds"] = {{"median", thresholds.median},
                     {"mad", thresholds.mad},
                     {"theta_int", thresholds.theta_int},
                     {"theta_spike", thresholds.theta_spike}};
  j["events"] = nlohmann::json::array();
  for (const auto& ev : events) j["events"].push_back(event_to_json(ev));
  write_text_file(path, j.dump(1) + "\n");
}

/// Ground truth is stored per pass: {"passes": {"A5": [event, ...], ...}}.
using GroundTruthMap = std::map<std::string, std::vector<GroundTruthEvent>>;

inline void write_ground_truth_json(const std::filesystem::path& path,
                                    const GroundTruthMap& ground_truth) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["passes"] = nlohmann::json::object();
  for (const auto& [id, events] : ground_truth) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& ev : events)
      list.push_back({{"start_t", ev.start_t},
                      {"end_t", ev.end_t},
                      {"window_lo", ev.window_lo},
                      {"window_hi", ev.window_hi}});
    j["passes"][id] = std::move(list);
  }
  write_text_file(path, j.dump(1) + "\n");
}

inline GroundTruthMap read_ground_truth_json(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad ground truth file: " + std::string(e.what()));
  }
  GroundTruthMap out;
  for (const auto& [id, list] : j.at("passes").items()) {
    std::vector<GroundTruthEvent> events;
    for (const auto& ev : list)
      events.push_back({ev.at("start_t").get<int>(), ev.at("end_t").get<int>(),
                        ev.at("window_lo").get<int>(),
                        ev.at("window_hi").get<int>()});
    out[id] = std::move(events);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training / baseline artifacts.
// ---------------------------------------------------------------------------

inline void write_loss_report_csv(const std::filesystem::path& path,
                                  const LossReport& report) {
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < report.per_epoch.size(); ++e) {
    csv += std::to_string(e);
    csv += ',';
    csv += format_double(report.per_epoch[e]);
    csv += '\n';
  }
  write_text_file(path, csv);
}

inline void write_basis_json(const std::filesystem::path& path,
                             const BasisMatrix& basis,
                             const NormalizationParams& norm) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["norm"] = {{"a", norm.a}, {"b", norm.b}};
  for (int r = 0; r < kNumClasses; ++r) {
    const char* name = to_string(basis.column_classes[static_cast<std::size_t>(r)]);
    j["counts"][name] = basis.counts[static_cast<std::size_t>(r)];
    nlohmann::json col = nlohmann::json::array();
    for (int n = 0; n < kNumBins; ++n) col.push_back(basis.A(n, r));
    j["columns"][name] = std::move(col);
  }
  write_text_file(path, j.dump(1) + "\n");
}

struct BasisFile {
  BasisMatrix basis;
  NormalizationParams norm;
};

inline BasisFile read_basis_json(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad basis file: " + std::string(e.what()));
  }
  BasisFile out;
  out.norm.a = j.at("norm").at("a").get<double>();
  out.norm.b = j.at("norm").at("b").get<double>();
  BasisMatrix& basis = out.basis;
  basis.A.resize(kNumBins, kNumClasses);
  for (int r = 0; r < kNumClasses; ++r) {
    const char* name = to_string(basis.column_classes[static_cast<std::size_t>(r)]);
    basis.counts[static_cast<std::size_t>(r)] = j.at("counts").at(name).get<long>();
    const auto& col = j.at("columns").at(name);
    if (static_cast<int>(col.size()) != kNumBins)
      throw IoError("basis column has wrong length");
    for (int n = 0; n < kNumBins; ++n)
      basis.A(n, r) = col[static_cast<std::size_t>(n)].get<double>();
  }
  basis.check_rank();
  return out;
}

/// Per-pass predicted classes with per-class scores, schema-identical for
/// the recurrent and the least-squares predictor.
inline void write_predictions_csv(const std::filesystem::path& path,
                                  const std::vector<ModClass>& labels,
                                  const Eigen::MatrixXd& scores,
                                  int time_offset = 1) {
  std::string csv = "t,predicted_class";
  for (int r = 0; r < kNumClasses; ++r) {
    csv += ",score_";
    csv += to_string(static_cast<ModClass>(r));
  }
  csv += '\n';
  for (std::size_t k = 0; k < labels.size(); ++k) {
    csv += std::to_string(static_cast<int>(k) + time_offset);
    csv += ',';
    csv += to_string(labels[k]);
    for (int r = 0; r < kNumClasses; ++r) {
      csv += ',';
      csv += format_double(scores(static_cast<Eigen::Index>(k), r));
    }
    csv += '\n';
  }
  write_text_file(path, csv);
}

}  // namespace specmon
