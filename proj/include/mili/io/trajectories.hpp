#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mili/expert/trajectory.hpp"

namespace mili::io {

// Container layout, little-endian:
//   "MILITRAJ" | u32 version | u64 obs_dim | u64 action_dim | u64 config hash |
//   u64 dataset count | u64 demos per dataset[count] |
//   per trajectory: u64 record length, then
//     u64 objects, per object (i32 type, f64 x, f64 y) | f64 start x, f64 start y |
//     u64 steps | f64 observations[steps * obs_dim] | f64 actions[steps * action_dim]
// The sidecar `<path>.index.json` lists each dataset's task and provenance.
inline constexpr std::uint32_t kTrajectoryVersion = 1;

struct TrajectoryFile {
  std::size_t obs_dim = 0;
  std::uint64_t config_hash = 0;
  std::vector<TaskDataset> datasets;
};

std::string encode_trajectories(const TrajectoryFile& file);
std::string encode_index(const TrajectoryFile& file);
// Throws Error(io) on a bad magic, version, dimension mismatch with
// expected_obs_dim, index disagreement or truncation (naming the byte offset).
TrajectoryFile decode_trajectories(std::string_view bytes, std::string_view index_json,
                                   std::optional<std::size_t> expected_obs_dim = {},
                                   const std::string& source = "trajectories");

std::filesystem::path index_path(const std::filesystem::path& path);
void save_trajectories(const std::filesystem::path& path, const TrajectoryFile& file);
TrajectoryFile load_trajectories(const std::filesystem::path& path, std::optional<std::size_t> expected_obs_dim = {});

}  // namespace mili::io
