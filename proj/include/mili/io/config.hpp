#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mili/evalbench/bench.hpp"

namespace mili::io {

struct ExperimentConfig {
  eval::BenchConfig bench;
  std::string output_dir = "runs";
};

// Every field is required; a missing, mistyped, out-of-range or unknown field
// throws Error(config) naming its dotted path.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

// Hash of the canonical (key-sorted) JSON of everything but output_dir.
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace mili::io
