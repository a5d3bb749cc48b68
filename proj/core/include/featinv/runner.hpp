#pragma once

#include <string>
#include <vector>

#include "featinv/config.hpp"

namespace featinv::cli {

struct ArtifactRecord {
  std::string name;
  std::string checksum;  // hex fnv-1a of file bytes
};

struct RunManifest {
  std::string toolkit_version;
  std::string run_id;
  std::string variant;
  std::string config_hash;  // hex
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::string status = "ok";
  double wall_seconds = 0.0;
  std::vector<ArtifactRecord> artifacts;
  std::string config_json;        // resolved configuration
  std::string engine_manifest;    // engine-specific JSON (may be "{}")

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

// Executes the configured run. All artifacts are written to a temporary
// directory and renamed into <output_dir>/<run_id> only on success;
// failures leave a quarantined directory behind instead.
RunManifest run(const RunConfig& cfg);

// Resolved output directory of a run about to execute (for tooling).
std::string run_directory(const RunConfig& cfg);

// Reconstructs the configuration embedded in a manifest file, so a run can
// be re-executed exactly.
RunConfig config_from_manifest(const std::string& manifest_path);

std::string toolkit_version();

}  // namespace featinv::cli
