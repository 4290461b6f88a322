#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace wklm {

inline constexpr const char* kToolVersion = "0.3.0";

// Record of one CLI invocation: enough to rerun it and to check its inputs.
struct RunManifest {
  std::string subcommand;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();  // resolved settings
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<std::string> outputs;
  std::string tool_version = kToolVersion;

  nlohmann::ordered_json to_json() const;
};

std::string sha256_hex(std::string_view bytes);
// A file hashes its bytes; a directory hashes the sorted list of its regular
// files (relative name and content digest), excluding manifest.json.
std::string digest_path(const std::filesystem::path& path);

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
std::optional<nlohmann::json> read_manifest(const std::filesystem::path& path);

// Manifest location for a single-file artifact: "<artifact>.manifest.json".
std::filesystem::path sidecar_manifest(const std::filesystem::path& artifact);

}  // namespace wklm
