#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace mili::io {

// Provenance record written next to every stage's artifacts. Inputs and
// outputs map file names (relative to the run directory) to content hashes.
struct Manifest {
  std::string stage;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  double wall_time_s = 0.0;
};

std::filesystem::path manifest_path(const std::filesystem::path& run_dir, const std::string& stage);
void write_manifest(const std::filesystem::path& run_dir, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& run_dir, const std::string& stage);

// Confirms that `artifact` was written by `stage` under the same config and
// seed and has not changed since; returns its hash for the consumer's
// manifest. Throws Error(stale) otherwise, Error(io) if files are missing.
std::string check_input(const std::filesystem::path& run_dir, const std::string& stage, const std::string& artifact,
                        std::uint64_t config_hash, std::uint64_t seed);

}  // namespace mili::io
