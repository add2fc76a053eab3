#include "mili/io/manifest.hpp"

#include <json.hpp>

#include "mili/common/error.hpp"
#include "mili/io/binary.hpp"

namespace mili::io {

std::filesystem::path manifest_path(const std::filesystem::path& run_dir, const std::string& stage) {
  return run_dir / (stage + ".manifest.json");
}

void write_manifest(const std::filesystem::path& run_dir, const Manifest& m) {
  nlohmann::ordered_json j;
  j["stage"] = m.stage;
  j["config_hash"] = hex64(m.config_hash);
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["wall_time_s"] = m.wall_time_s;
  write_file(manifest_path(run_dir, m.stage), j.dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& run_dir, const std::string& stage) {
  const auto path = manifest_path(run_dir, stage);
  if (!std::filesystem::exists(path))
    throw Error(ErrorKind::io, "missing manifest " + path.string() + "; run the " + stage + " stage first");
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    Manifest m;
    m.stage = j.at("stage").get<std::string>();
    m.config_hash = parse_hex64(j.at("config_hash").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.wall_time_s = j.at("wall_time_s").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::io, path.string() + ": " + e.what());
  }
}

std::string check_input(const std::filesystem::path& run_dir, const std::string& stage, const std::string& artifact,
                        std::uint64_t config_hash, std::uint64_t seed) {
  const Manifest m = read_manifest(run_dir, stage);
  if (m.config_hash != config_hash)
    throw Error(ErrorKind::stale, artifact + " was produced under config " + hex64(m.config_hash) +
                                      ", current config is " + hex64(config_hash));
  if (m.seed != seed)
    throw Error(ErrorKind::stale,
                artifact + " was produced for seed " + std::to_string(m.seed) + ", not " + std::to_string(seed));
  const auto it = m.outputs.find(artifact);
  if (it == m.outputs.end())
    throw Error(ErrorKind::stale, "the " + stage + " manifest does not list " + artifact);
  const auto path = run_dir / artifact;
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::io, "missing artifact " + path.string());
  const std::string hash = file_hash(path);
  if (hash != it->second)
    throw Error(ErrorKind::stale, artifact + " changed since the " + stage + " stage wrote it (hash " + hash +
                                      ", manifest says " + it->second + ")");
  return hash;
}

}  // namespace mili::io
