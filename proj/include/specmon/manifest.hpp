#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "specmon/io_util.hpp"

namespace specmon {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestFileName = "manifest.json";

/// Written into every command's output directory. `config` is the fully
/// resolved option set of the command, sufficient to re-execute it (the
/// `rerun` subcommand does exactly that); re-execution reproduces every
/// output byte for byte, except the manifest itself and latency.json,
/// which carry wall-clock measurements.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<std::string> outputs;  // file names relative to the out dir
  double seconds = 0.0;
  std::string version = kToolVersion;
};

inline void write_manifest(const std::filesystem::path& out_dir,
                           const RunManifest& m) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["command"] = m.command;
  j["version"] = m.version;
  j["config"] = m.config;
  j["outputs"] = m.outputs;
  j["seconds"] = m.seconds;
  write_text_file(out_dir / kManifestFileName, j.dump(1) + "\n");
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest: " + std::string(e.what()));
  }
  if (j.value("format_version", -1) != 1)
    throw IoError("unsupported manifest format_version");
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  for (const auto& o : j.value("outputs", nlohmann::json::array()))
    m.outputs.push_back(o.get<std::string>());
  m.seconds = j.value("seconds", 0.0);
  m.version = j.value("version", "");
  return m;
}

}  // namespace specmon
