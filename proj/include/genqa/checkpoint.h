#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "genqa/model.h"

namespace genqa {

inline constexpr int kCheckpointFormatVersion = 1;

// File layout: 8-byte magic "GENQACK1", little-endian uint64 header length,
// a JSON header, then every tensor's data in header order. Tensor data is
// row-major little-endian f64 or f32 (per float_width); the header records
// each tensor's name, dtype, shape, byte offset and byte length.
struct Checkpoint {
  ModelConfig config;
  Parameters params;
  std::size_t step = 0;
  std::map<std::string, double> metrics;
  std::vector<std::string> vocab;  // token strings in id order
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Writes bytes to `path` atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace genqa
