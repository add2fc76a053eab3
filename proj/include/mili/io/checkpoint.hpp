#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mili/policy/model.hpp"

namespace mili::io {

// Layout, little-endian:
//   "MILICKPT" | u32 version | u64 config hash | str network JSON |
//   u32 tensor count | per tensor: str name, u32 rank, u64 dims[rank], f64 values[]
// The network JSON includes obs_dim, so a checkpoint is self-describing.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  policy::ModelParams params;
  std::uint64_t config_hash = 0;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
// Throws Error(io) on a bad magic, version or truncation, Error(shape) if the
// tensors disagree with the stored network config.
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mili::io
