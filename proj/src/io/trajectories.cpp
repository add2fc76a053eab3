#include "mili/io/trajectories.hpp"

#include <json.hpp>

#include "mili/common/error.hpp"
#include "mili/io/binary.hpp"

namespace mili::io {

namespace {

constexpr std::string_view kMagic = "MILITRAJ";

std::string encode_record(const Trajectory& t, std::size_t obs_dim) {
  if (t.obs_dim != obs_dim)
    throw Error(ErrorKind::data, "trajectory obs_dim " + std::to_string(t.obs_dim) + " differs from file obs_dim " +
                                     std::to_string(obs_dim));
  ByteWriter w;
  w.u64(t.scene.objects.size());
  for (const auto& o : t.scene.objects) {
    w.i32(o.type);
    w.f64(o.position.x);
    w.f64(o.position.y);
  }
  w.f64(t.scene.effector_start.x);
  w.f64(t.scene.effector_start.y);
  w.u64(t.steps());
  for (double v : t.observations) w.f64(v);
  for (double v : t.actions) w.f64(v);
  return w.data();
}

Trajectory decode_record(ByteReader& r, std::size_t obs_dim) {
  const std::size_t length = r.u64();
  const std::size_t start = r.offset();
  Trajectory t;
  t.obs_dim = obs_dim;
  const std::size_t objects = r.u64();
  if (objects * 20 > r.remaining()) r.bytes(objects * 20);
  for (std::size_t k = 0; k < objects; ++k) {
    world::SceneObject o;
    o.type = r.i32();
    o.position.x = r.f64();
    o.position.y = r.f64();
    t.scene.objects.push_back(o);
  }
  t.scene.effector_start.x = r.f64();
  t.scene.effector_start.y = r.f64();
  const std::size_t steps = r.u64();
  const std::size_t values = steps * (obs_dim + world::kActionDim);
  if (values * 8 > r.remaining()) r.bytes(values * 8);
  t.observations.resize(steps * obs_dim);
  for (double& v : t.observations) v = r.f64();
  t.actions.resize(steps * world::kActionDim);
  for (double& v : t.actions) v = r.f64();
  if (r.offset() - start != length)
    throw Error(ErrorKind::io, r.source() + ": record at byte " + std::to_string(start - 8) + " declares " +
                                   std::to_string(length) + " bytes but holds " + std::to_string(r.offset() - start));
  return t;
}

}  // namespace

std::string encode_trajectories(const TrajectoryFile& file) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kTrajectoryVersion);
  w.u64(file.obs_dim);
  w.u64(world::kActionDim);
  w.u64(file.config_hash);
  w.u64(file.datasets.size());
  for (const auto& ds : file.datasets) w.u64(ds.demos.size());
  for (const auto& ds : file.datasets)
    for (const auto& t : ds.demos) {
      const std::string record = encode_record(t, file.obs_dim);
      w.u64(record.size());
      w.bytes(record);
    }
  return w.data();
}

std::string encode_index(const TrajectoryFile& file) {
  nlohmann::ordered_json j;
  j["format_version"] = kTrajectoryVersion;
  j["config_hash"] = hex64(file.config_hash);
  auto& list = j["datasets"] = nlohmann::ordered_json::array();
  for (const auto& ds : file.datasets)
    list.push_back({{"family", world::to_string(ds.task.family)},
                    {"subject", ds.task.subject},
                    {"target", ds.task.target},
                    {"split", world::to_string(ds.task.split)},
                    {"provenance", to_string(ds.provenance)},
                    {"demos", ds.demos.size()}});
  return j.dump(2) + "\n";
}

TrajectoryFile decode_trajectories(std::string_view bytes, std::string_view index_json,
                                   std::optional<std::size_t> expected_obs_dim, const std::string& source) {
  ByteReader r(bytes, source);
  if (r.bytes(kMagic.size()) != kMagic) throw Error(ErrorKind::io, source + ": not a trajectory container");
  if (const std::uint32_t v = r.u32(); v != kTrajectoryVersion)
    throw Error(ErrorKind::io, source + ": format version " + std::to_string(v) + ", expected " +
                                   std::to_string(kTrajectoryVersion));
  TrajectoryFile out;
  out.obs_dim = r.u64();
  if (expected_obs_dim && out.obs_dim != *expected_obs_dim)
    throw Error(ErrorKind::io, source + ": observation dim " + std::to_string(out.obs_dim) + ", expected " +
                                   std::to_string(*expected_obs_dim));
  if (const std::size_t a = r.u64(); a != world::kActionDim)
    throw Error(ErrorKind::io, source + ": action dim " + std::to_string(a) + ", expected " +
                                   std::to_string(world::kActionDim));
  out.config_hash = r.u64();

  nlohmann::json index;
  try {
    index = nlohmann::json::parse(index_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::io, source + " index: " + e.what());
  }
  const std::size_t count = r.u64();
  try {
    if (index.at("format_version").get<std::uint32_t>() != kTrajectoryVersion)
      throw Error(ErrorKind::io, source + " index: format version mismatch");
    if (parse_hex64(index.at("config_hash").get<std::string>()) != out.config_hash)
      throw Error(ErrorKind::io, source + " index: config hash differs from the container's");
    const auto& list = index.at("datasets");
    if (list.size() != count)
      throw Error(ErrorKind::io, source + " index lists " + std::to_string(list.size()) + " datasets, container has " +
                                     std::to_string(count));
    for (const auto& e : list) {
      TaskDataset ds;
      ds.task.family = world::family_from_string(e.at("family").get<std::string>());
      ds.task.subject = e.at("subject").get<world::TypeId>();
      ds.task.target = e.at("target").get<world::TypeId>();
      ds.task.split = world::split_from_string(e.at("split").get<std::string>());
      ds.provenance = provenance_from_string(e.at("provenance").get<std::string>());
      out.datasets.push_back(std::move(ds));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::io, source + " index: " + e.what());
  }
  std::vector<std::size_t> sizes(count);
  for (std::size_t i = 0; i < count; ++i) {
    sizes[i] = r.u64();
    if (sizes[i] != index["datasets"][i]["demos"].get<std::size_t>())
      throw Error(ErrorKind::io, source + ": dataset " + std::to_string(i) + " demo count differs from the index");
  }
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < sizes[i]; ++k) out.datasets[i].demos.push_back(decode_record(r, out.obs_dim));
  r.expect_end();
  return out;
}

std::filesystem::path index_path(const std::filesystem::path& path) { return path.string() + ".index.json"; }

void save_trajectories(const std::filesystem::path& path, const TrajectoryFile& file) {
  write_file(path, encode_trajectories(file));
  write_file(index_path(path), encode_index(file));
}

TrajectoryFile load_trajectories(const std::filesystem::path& path, std::optional<std::size_t> expected_obs_dim) {
  return decode_trajectories(read_file(path), read_file(index_path(path)), expected_obs_dim, path.string());
}

}  // namespace mili::io
