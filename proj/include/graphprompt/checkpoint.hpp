#pragma once

#include "graphprompt/autograd.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gprompt {

// Versioned binary container shared by backbone and prompt checkpoints.
//
// Layout (all integers little-endian):
//   magic       8 bytes  "GPRCKPT\0"
//   version     u32
//   config_len  u64
//   config      config_len bytes of UTF-8 JSON (carries "kind" and array "shapes")
//   value_count u64
//   checksum    u32      CRC-32 over config bytes followed by payload bytes
//   payload     value_count IEEE-754 doubles, arrays in order, each row-major
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json config;  // free-form echo; "kind" and "shapes" are reserved
  std::vector<Matrix> arrays;
};

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const Checkpoint& checkpoint);

// Throws ChecksumError on bad magic or checksum mismatch, UnsupportedVersionError on a
// version other than kCheckpointVersion, SchemaError when `kind` differs.
Checkpoint read_checkpoint(const std::filesystem::path& path, const std::string& kind);

// FNV-1a over the raw bytes of each matrix (shape included).
std::uint64_t content_hash(const std::vector<Matrix>& arrays, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace gprompt
