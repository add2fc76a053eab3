#include "mili/io/config.hpp"

#include <set>
#include <type_traits>

#include "mili/common/error.hpp"
#include "mili/io/binary.hpp"

namespace mili::io {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Tracks the dotted path and which keys were consumed so leftovers can be
// reported as unknown.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "must be an object");
  }

  const json& at(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) fail(name(key), "missing field");
    return *it;
  }

  Fields child(const std::string& key) { return Fields(at(key), name(key)); }

  template <class T>
  void get(const std::string& key, T& out) {
    const json& v = at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(name(key), "must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) fail(name(key), "must be a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(name(key), "must be a number");
      out = v.get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(name(key), "must be a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      if (v.is_null()) {
        out.reset();
      } else {
        if (!v.is_number()) fail(name(key), "must be a number or null");
        out = v.get<double>();
      }
    } else if constexpr (std::is_same_v<T, std::optional<std::size_t>>) {
      if (v.is_null()) {
        out.reset();
      } else {
        if (!v.is_number_unsigned()) fail(name(key), "must be a non-negative integer or null");
        out = v.get<std::size_t>();
      }
    } else {
      if (!v.is_array()) fail(name(key), "must be an array of non-negative integers");
      out.clear();
      for (const json& e : v) {
        if (!e.is_number_unsigned()) fail(name(key), "must be an array of non-negative integers");
        out.push_back(e.get<typename T::value_type>());
      }
    }
  }

  template <class Parse>
  auto get_enum(const std::string& key, Parse parse) {
    std::string text;
    get(key, text);
    try {
      return parse(text);
    } catch (const Error& e) {
      fail(name(key), e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.contains(key)) fail(name(key), "unknown field");
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& field, const std::string& why) {
    throw Error(ErrorKind::config, field + ": " + why);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

ordered_json train_to_json(const policy::TrainConfig& c) {
  ordered_json j;
  j["objective"] = std::string(policy::to_string(c.objective));
  j["steps"] = c.steps;
  j["batch"] = c.batch;
  j["margin"] = c.margin;
  j["contrastive_weight"] = c.contrastive_weight;
  j["reduction"] = c.reduction == policy::Reduction::mean ? "mean" : "sum";
  j["paired_fraction"] = c.paired_fraction ? ordered_json(*c.paired_fraction) : ordered_json(nullptr);
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["epsilon"] = c.adam.epsilon;
  j["curve_interval"] = c.curve_interval;
  return j;
}

policy::TrainConfig train_from_json(Fields f) {
  policy::TrainConfig c;
  c.objective = f.get_enum("objective", policy::objective_from_string);
  f.get("steps", c.steps);
  f.get("batch", c.batch);
  f.get("margin", c.margin);
  f.get("contrastive_weight", c.contrastive_weight);
  c.reduction = f.get_enum("reduction", [](std::string_view s) {
    if (s == "mean") return policy::Reduction::mean;
    if (s == "sum") return policy::Reduction::sum;
    throw Error(ErrorKind::config, "unknown reduction '" + std::string(s) + "' (mean or sum)");
  });
  f.get("paired_fraction", c.paired_fraction);
  f.get("lr", c.adam.lr);
  f.get("beta1", c.adam.beta1);
  f.get("beta2", c.adam.beta2);
  f.get("epsilon", c.adam.epsilon);
  f.get("curve_interval", c.curve_interval);
  f.finish();
  return c;
}

// Reruns a module validator, prefixing its message with the section name.
template <class Fn>
void check(const std::string& section, Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, section + "." + e.what());
  }
}

}  // namespace

ordered_json config_to_json(const ExperimentConfig& config) {
  const eval::BenchConfig& b = config.bench;
  const world::WorldConfig& w = b.world;
  ordered_json world;
  world["vocabulary_size"] = w.vocabulary_size;
  world["train_type_count"] = w.train_type_count;
  world["world_seed"] = w.world_seed;
  world["object_slots"] = w.object_slots;
  world["train_tasks"] = w.train_tasks;
  world["val_tasks"] = w.val_tasks;
  world["test_tasks"] = w.test_tasks;
  world["horizon"] = w.horizon;
  world["max_action"] = w.max_action;
  world["low_height"] = w.low_height;
  world["effector_radius"] = w.effector_radius;
  world["grasp_margin"] = w.grasp_margin;
  world["press_margin"] = w.press_margin;
  world["press_height"] = w.press_height;
  world["place_tolerance"] = w.place_tolerance;
  world["grasp_displacement"] = w.grasp_displacement;
  world["separation"] = w.separation;
  world["task_pair_separation"] = w.task_pair_separation;
  world["workspace_margin"] = w.workspace_margin;
  world["radius_min"] = w.radius_min;
  world["radius_max"] = w.radius_max;
  world["min_objects"] = w.min_objects;
  world["max_distractors"] = w.max_distractors;
  world["placement_attempts"] = w.placement_attempts;

  const policy::NetworkConfig& n = b.network;
  ordered_json network;
  network["encoder_hidden"] = n.encoder_hidden;
  network["feature_dim"] = n.feature_dim;
  network["conv_channels"] = n.conv_channels;
  network["conv_kernel"] = n.conv_kernel;
  network["conv_stride"] = n.conv_stride;
  network["embedding_dim"] = n.embedding_dim;
  network["selection_hidden"] = n.selection_hidden;
  network["selection_heads"] = n.selection_heads;
  network["policy_hidden"] = n.policy_hidden;
  network["log_std_min"] = n.log_std_min;
  network["log_std_max"] = n.log_std_max;
  network["init_log_std"] = n.init_log_std;

  ordered_json mili;
  mili["alpha"] = b.mili.alpha;
  mili["trials"] = b.mili.trials;
  mili["iterations"] = b.mili.iterations;
  mili["pair_cap"] = b.mili.pair_cap;
  mili["trial_settle"] = b.mili.trial_settle ? ordered_json(*b.mili.trial_settle) : ordered_json(nullptr);
  mili["retrain"] = ordered_json{{"train", train_to_json(b.mili.retrain.train)},
                                 {"from_scratch", b.mili.retrain.from_scratch},
                                 {"with_contrastive", b.mili.retrain.with_contrastive}};

  ordered_json eval;
  eval["episodes_per_task"] = b.episodes_per_task;
  eval["seeds"] = b.seeds;
  eval["budgets"] = b.budgets;
  eval["oracle_pairs_only"] = b.oracle_pairs_only;

  ordered_json j;
  j["world"] = std::move(world);
  j["demos_per_task"] = b.demos_per_task;
  j["network"] = std::move(network);
  j["pretrain"] = train_to_json(b.pretrain);
  j["bc"] = train_to_json(b.bc);
  j["mili"] = std::move(mili);
  j["eval"] = std::move(eval);
  j["output_dir"] = config.output_dir;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig config;
  eval::BenchConfig& b = config.bench;
  Fields root(j, "");

  {
    Fields f = root.child("world");
    world::WorldConfig& w = b.world;
    f.get("vocabulary_size", w.vocabulary_size);
    f.get("train_type_count", w.train_type_count);
    f.get("world_seed", w.world_seed);
    f.get("object_slots", w.object_slots);
    f.get("train_tasks", w.train_tasks);
    f.get("val_tasks", w.val_tasks);
    f.get("test_tasks", w.test_tasks);
    f.get("horizon", w.horizon);
    f.get("max_action", w.max_action);
    f.get("low_height", w.low_height);
    f.get("effector_radius", w.effector_radius);
    f.get("grasp_margin", w.grasp_margin);
    f.get("press_margin", w.press_margin);
    f.get("press_height", w.press_height);
    f.get("place_tolerance", w.place_tolerance);
    f.get("grasp_displacement", w.grasp_displacement);
    f.get("separation", w.separation);
    f.get("task_pair_separation", w.task_pair_separation);
    f.get("workspace_margin", w.workspace_margin);
    f.get("radius_min", w.radius_min);
    f.get("radius_max", w.radius_max);
    f.get("min_objects", w.min_objects);
    f.get("max_distractors", w.max_distractors);
    f.get("placement_attempts", w.placement_attempts);
    f.finish();
    check("world", [&] { world::validate(w); });
  }
  root.get("demos_per_task", b.demos_per_task);
  {
    Fields f = root.child("network");
    policy::NetworkConfig& n = b.network;
    f.get("encoder_hidden", n.encoder_hidden);
    f.get("feature_dim", n.feature_dim);
    f.get("conv_channels", n.conv_channels);
    f.get("conv_kernel", n.conv_kernel);
    f.get("conv_stride", n.conv_stride);
    f.get("embedding_dim", n.embedding_dim);
    f.get("selection_hidden", n.selection_hidden);
    f.get("selection_heads", n.selection_heads);
    f.get("policy_hidden", n.policy_hidden);
    f.get("log_std_min", n.log_std_min);
    f.get("log_std_max", n.log_std_max);
    f.get("init_log_std", n.init_log_std);
    f.finish();
    policy::NetworkConfig probe = n;
    probe.obs_dim = world::World(b.world).observation_dim();
    check("network", [&] { policy::validate(probe); });
  }
  b.pretrain = train_from_json(root.child("pretrain"));
  check("pretrain", [&] { policy::validate(b.pretrain); });
  b.bc = train_from_json(root.child("bc"));
  check("bc", [&] { policy::validate(b.bc); });
  {
    Fields f = root.child("mili");
    f.get("alpha", b.mili.alpha);
    f.get("trials", b.mili.trials);
    f.get("iterations", b.mili.iterations);
    f.get("pair_cap", b.mili.pair_cap);
    f.get("trial_settle", b.mili.trial_settle);
    Fields r = f.child("retrain");
    b.mili.retrain.train = train_from_json(r.child("train"));
    r.get("from_scratch", b.mili.retrain.from_scratch);
    r.get("with_contrastive", b.mili.retrain.with_contrastive);
    r.finish();
    f.finish();
  }
  {
    Fields f = root.child("eval");
    f.get("episodes_per_task", b.episodes_per_task);
    f.get("seeds", b.seeds);
    f.get("budgets", b.budgets);
    f.get("oracle_pairs_only", b.oracle_pairs_only);
    f.finish();
  }
  root.get("output_dir", config.output_dir);
  root.finish();
  try {
    eval::validate(b);
  } catch (const Error& e) {
    throw Error(ErrorKind::config, e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  write_file(path, config_to_json(config).dump(2) + "\n");
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  json canonical = json::parse(config_to_json(config).dump());
  canonical.erase("output_dir");
  return fnv1a64(canonical.dump());
}

}  // namespace mili::io
