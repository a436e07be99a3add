#pragma once

// Run provenance: every training/sampling/report command writes a manifest
// recording the resolved config, seeds, input hashes, and produced
// artifacts, so outputs can be regenerated bit-for-bit and reports can cite
// the run that produced their inputs.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace plfm {

struct RunManifest {
  std::string command;           // subcommand name
  std::string config_json;       // fully resolved configuration, JSON text
  uint64_t master_seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs; // path, fnv64 hex
  std::vector<std::string> artifacts;                      // produced files
  double wall_seconds = 0;
  std::string version;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text); // MalformedManifest

// Manifests are append-only: writing over an existing file is refused
// (ManifestExists); callers pick a fresh name per run.
void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path); // FileNotFound

uint64_t fnv1a64_file(const std::string& path); // FileNotFound
std::string hash_hex(uint64_t h);

// Validates a document against a minimal JSON-schema subset: type,
// properties, required, items, enum, and numeric minimum. Returns false and
// fills error on the first violation.
bool validate_json_schema(const std::string& doc_json, const std::string& schema_json,
                          std::string* error);

}  // namespace plfm
