#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace genqa {

inline constexpr const char* kToolVersion = "0.1.0";

// Provenance record written next to every output artifact.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;  // resolved values
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
};

// Hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string file_digest(const std::filesystem::path& path);

std::string to_json(const RunManifest& manifest);
RunManifest parse_manifest(const std::string& text);

// "<artifact>.manifest.json" next to the artifact.
std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

}  // namespace genqa
