#include "mili/world/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mili/common/error.hpp"
#include "mili/common/random.hpp"

namespace mili::world {

namespace {

constexpr double kContactSlack = 1e-9;

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::config, "world." + field + ": " + why);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Vec2 clamp_box(Vec2 p) { return {clamp01(p.x), clamp01(p.y)}; }

// Round-robin over families, drawing without replacement from each family's
// shuffled candidate list, so every family is represented before any repeats.
std::vector<Task> allocate(std::array<std::vector<Task>, 4>& candidates, std::size_t count,
                           const char* split_name) {
  std::vector<Task> out;
  out.reserve(count);
  std::array<std::size_t, 4> cursor{};
  std::size_t family = 0;
  std::size_t exhausted_in_a_row = 0;
  while (out.size() < count) {
    if (cursor[family] < candidates[family].size()) {
      out.push_back(candidates[family][cursor[family]++]);
      exhausted_in_a_row = 0;
    } else if (++exhausted_in_a_row == 4) {
      throw Error(ErrorKind::config, std::string("task split '") + split_name + "' requests " +
                                         std::to_string(count) + " tasks but only " +
                                         std::to_string(out.size()) + " are available");
    }
    family = (family + 1) % 4;
  }
  for (std::size_t f = 0; f < 4; ++f) {
    candidates[f].erase(candidates[f].begin(),
                        candidates[f].begin() + static_cast<std::ptrdiff_t>(cursor[f]));
  }
  return out;
}

}  // namespace

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
double distance(Vec2 a, Vec2 b) { return norm(a - b); }

std::string_view to_string(Family family) {
  switch (family) {
    case Family::press: return "press";
    case Family::grasp: return "grasp";
    case Family::push: return "push";
    case Family::pick_place: return "pick-place";
  }
  return "unknown";
}

Family family_from_string(std::string_view name) {
  for (Family f : kFamilies)
    if (to_string(f) == name) return f;
  throw Error(ErrorKind::data, "unknown task family '" + std::string(name) + "'");
}

bool has_target(Family family) { return family == Family::push || family == Family::pick_place; }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view name) {
  for (Split s : {Split::train, Split::val, Split::test})
    if (to_string(s) == name) return s;
  throw Error(ErrorKind::data, "unknown split '" + std::string(name) + "'");
}

std::string describe(const Task& task) {
  std::string out = std::string(to_string(task.family)) + "(" + std::to_string(task.subject);
  if (has_target(task.family)) out += "->" + std::to_string(task.target);
  return out + ")";
}

void validate(const WorldConfig& c) {
  if (c.vocabulary_size < 2) config_error("vocabulary_size", "must be at least 2");
  if (c.train_type_count == 0 || c.train_type_count >= c.vocabulary_size)
    config_error("train_type_count", "must be in [1, vocabulary_size)");
  if (c.object_slots < 2) config_error("object_slots", "must be at least 2");
  if (c.min_objects < 2 || c.min_objects > c.object_slots)
    config_error("min_objects", "must be in [2, object_slots]");
  if (c.horizon == 0) config_error("horizon", "must be positive");
  if (!(c.max_action > 0.0)) config_error("max_action", "must be positive");
  if (!(c.radius_min > 0.0) || c.radius_max < c.radius_min)
    config_error("radius_min", "radii must satisfy 0 < radius_min <= radius_max");
  if (!(c.workspace_margin >= c.radius_max) || c.workspace_margin >= 0.5)
    config_error("workspace_margin", "must be in [radius_max, 0.5)");
  if (!(c.low_height > c.press_height) || c.low_height >= 1.0)
    config_error("low_height", "must exceed press_height and be below 1");
  for (auto [name, v] : {std::pair{"effector_radius", c.effector_radius},
                         std::pair{"grasp_margin", c.grasp_margin},
                         std::pair{"press_margin", c.press_margin},
                         std::pair{"place_tolerance", c.place_tolerance},
                         std::pair{"grasp_displacement", c.grasp_displacement}}) {
    if (!(v > 0.0)) config_error(name, "must be positive");
  }
  if (c.separation < 0.0) config_error("separation", "must be non-negative");
  if (c.task_pair_separation < c.place_tolerance)
    config_error("task_pair_separation", "must be at least place_tolerance");
}

World::World(WorldConfig config) : config_(config) {
  validate(config_);
  vocabulary_.reserve(config_.vocabulary_size);
  for (std::size_t i = 0; i < config_.vocabulary_size; ++i) {
    Rng rng = make_rng(config_.world_seed, {stream::kVocabulary, i});
    ObjectType t;
    t.id = static_cast<TypeId>(i);
    for (double& f : t.feature) f = gaussian(rng);
    t.pressable = i % 3 == 2;
    t.graspable = !t.pressable;
    t.radius = uniform(rng, config_.radius_min, config_.radius_max);
    vocabulary_.push_back(t);
  }
}

const ObjectType& World::type(TypeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocabulary_.size())
    throw Error(ErrorKind::world, "unknown object type " + std::to_string(id));
  return vocabulary_[static_cast<std::size_t>(id)];
}

bool World::is_train_type(TypeId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < config_.train_type_count;
}

std::vector<TypeId> World::types_for(Split split) const {
  std::vector<TypeId> out;
  for (const ObjectType& t : vocabulary_)
    if (is_train_type(t.id) == (split == Split::train)) out.push_back(t.id);
  return out;
}

std::size_t World::observation_dim() const noexcept { return kEffectorDim + object_channels(); }

TaskSets World::generate_task_sets(std::uint64_t seed) const {
  auto candidates_for = [&](Split split, Rng& rng) {
    const std::vector<TypeId> pool = types_for(split);
    std::array<std::vector<Task>, 4> out;
    for (TypeId s : pool) {
      const ObjectType& st = type(s);
      if (st.pressable) out[0].push_back({Family::press, s, kNoTarget, split});
      if (!st.graspable) continue;
      out[1].push_back({Family::grasp, s, kNoTarget, split});
      for (TypeId t : pool) {
        if (t == s) continue;
        out[2].push_back({Family::push, s, t, split});
        out[3].push_back({Family::pick_place, s, t, split});
      }
    }
    for (auto& list : out) std::shuffle(list.begin(), list.end(), rng);
    return out;
  };

  Rng rng = make_rng(seed, {stream::kTasks});
  TaskSets sets;
  auto held_out = candidates_for(Split::test, rng);
  sets.test = allocate(held_out, config_.test_tasks, "test");
  for (auto& list : held_out)
    for (Task& t : list) t.split = Split::val;
  sets.val = allocate(held_out, config_.val_tasks, "val");
  auto train = candidates_for(Split::train, rng);
  sets.train = allocate(train, config_.train_tasks, "train");
  return sets;
}

Scene World::sample_scene(const Task& task, std::uint64_t seed) const {
  Rng rng(mix64(seed));
  std::vector<TypeId> types{task.subject};
  if (has_target(task.family)) types.push_back(task.target);
  for (TypeId t : types) (void)type(t);

  std::vector<TypeId> pool = types_for(task.split == Split::train ? Split::train : Split::test);
  std::erase_if(pool, [&](TypeId t) { return std::find(types.begin(), types.end(), t) != types.end(); });
  const std::size_t base = types.size();
  const std::size_t min_extra = config_.min_objects > base ? config_.min_objects - base : 0;
  const std::size_t max_extra =
      std::min({config_.max_distractors, config_.object_slots - base, pool.size()});
  if (min_extra > max_extra)
    throw Error(ErrorKind::world, "cannot place enough distractors for " + describe(task));
  const std::size_t extra = min_extra + uniform_index(rng, max_extra - min_extra + 1);
  std::shuffle(pool.begin(), pool.end(), rng);
  types.insert(types.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(extra));

  const double lo = config_.workspace_margin;
  const double hi = 1.0 - config_.workspace_margin;
  std::vector<Vec2> positions;
  std::size_t attempts = 0;
  while (positions.size() < types.size()) {
    if (++attempts > config_.placement_attempts)
      throw Error(ErrorKind::world, "scene placement failed for " + describe(task) + " after " +
                                        std::to_string(config_.placement_attempts) + " attempts");
    const std::size_t i = positions.size();
    const Vec2 p{uniform(rng, lo, hi), uniform(rng, lo, hi)};
    bool ok = true;
    for (std::size_t j = 0; j < i && ok; ++j) {
      double clearance = type(types[i]).radius + type(types[j]).radius + config_.separation;
      if (i == 1 && base == 2) clearance += config_.task_pair_separation;
      ok = distance(p, positions[j]) >= clearance;
    }
    if (ok) positions.push_back(p);
  }

  Scene scene;
  for (std::size_t i = 0; i < types.size(); ++i) scene.objects.push_back({types[i], positions[i]});
  std::shuffle(scene.objects.begin(), scene.objects.end(), rng);
  scene.effector_start = {uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)};
  return scene;
}

WorldState World::initial_state(const Scene& scene) const {
  if (scene.objects.size() > config_.object_slots)
    throw Error(ErrorKind::world, "scene has " + std::to_string(scene.objects.size()) +
                                      " objects but only " + std::to_string(config_.object_slots) +
                                      " observation slots");
  WorldState s;
  s.effector.position = scene.effector_start;
  for (const SceneObject& o : scene.objects) s.objects.push_back({o.position, false, false});
  return s;
}

WorldState World::step(const WorldState& state, const Scene& scene, const Action& action) const {
  Action a = action;
  for (double& v : a) v = std::isfinite(v) ? std::clamp(v, -config_.max_action, config_.max_action) : 0.0;

  WorldState next = state;
  next.t = state.t + 1;
  const Effector& prev = state.effector;
  Effector& eff = next.effector;
  eff.position = clamp_box(prev.position + Vec2{a[0], a[1]});
  eff.z = clamp01(prev.z + a[2]);
  eff.aperture = clamp01(prev.aperture + a[3]);

  auto held_index = [&]() -> std::ptrdiff_t {
    for (std::size_t i = 0; i < next.objects.size(); ++i)
      if (next.objects[i].held) return static_cast<std::ptrdiff_t>(i);
    return -1;
  };

  const bool closing = prev.aperture > 0.5 && eff.aperture <= 0.5;
  const bool opening = prev.aperture <= 0.5 && eff.aperture > 0.5;
  if (closing && eff.z < config_.low_height && held_index() < 0) {
    double best = std::numeric_limits<double>::infinity();
    std::ptrdiff_t pick = -1;
    for (std::size_t i = 0; i < next.objects.size(); ++i) {
      const ObjectType& t = type(scene.objects[i].type);
      if (!t.graspable) continue;
      const double d = distance(next.objects[i].position, eff.position);
      if (d <= t.radius + config_.grasp_margin && d < best) {
        best = d;
        pick = static_cast<std::ptrdiff_t>(i);
      }
    }
    if (pick >= 0) next.objects[static_cast<std::size_t>(pick)].held = true;
  }
  if (opening) {
    for (ObjectState& o : next.objects) o.held = false;
  }
  if (const auto h = held_index(); h >= 0) next.objects[static_cast<std::size_t>(h)].position = eff.position;

  // Pushing: a movable object that the open, lowered effector runs into from
  // outside is shifted along the motion direction until contact is restored.
  // Objects the effector came down on top of are enclosed and left alone.
  if (eff.z < config_.low_height && eff.aperture > 0.5) {
    const Vec2 motion = eff.position - prev.position;
    const double motion_len = norm(motion);
    for (std::size_t i = 0; i < next.objects.size(); ++i) {
      ObjectState& o = next.objects[i];
      const ObjectType& t = type(scene.objects[i].type);
      if (o.held || !t.graspable) continue;
      const double contact = t.radius + config_.effector_radius;
      const bool overlapping = distance(o.position, eff.position) < contact - kContactSlack;
      const bool was_overlapping = distance(o.position, prev.position) < contact - kContactSlack;
      if (!overlapping || was_overlapping) continue;
      const Vec2 w = o.position - eff.position;
      Vec2 dir;
      if (motion_len > 0.0) {
        dir = (1.0 / motion_len) * motion;
      } else {
        const double wl = norm(w);
        dir = wl > 0.0 ? (1.0 / wl) * w : Vec2{1.0, 0.0};
      }
      // Smallest lambda >= 0 with |w + lambda * dir| = contact.
      const double b = dot(w, dir);
      const double c = dot(w, w) - contact * contact;
      const double lambda = -b + std::sqrt(std::max(0.0, b * b - c));
      o.position = clamp_box(o.position + lambda * dir);
    }
  }

  for (std::size_t i = 0; i < next.objects.size(); ++i) {
    ObjectState& o = next.objects[i];
    const ObjectType& t = type(scene.objects[i].type);
    if (t.pressable && eff.z < config_.press_height &&
        distance(o.position, eff.position) <= t.radius + config_.press_margin)
      o.activated = true;
  }
  return next;
}

Observation World::observe(const WorldState& state, const Scene& scene) const {
  Observation obs(observation_dim(), 0.0);
  obs[0] = state.effector.position.x;
  obs[1] = state.effector.position.y;
  obs[2] = state.effector.z;
  obs[3] = state.effector.aperture;
  for (std::size_t i = 0; i < scene.objects.size() && i < config_.object_slots; ++i) {
    double* slot = obs.data() + kEffectorDim + i * kSlotDim;
    const ObjectType& t = type(scene.objects[i].type);
    const ObjectState& o = state.objects[i];
    slot[0] = 1.0;
    std::copy(t.feature.begin(), t.feature.end(), slot + 1);
    slot[1 + kFeatureDim] = o.position.x;
    slot[2 + kFeatureDim] = o.position.y;
    slot[3 + kFeatureDim] = o.held ? 1.0 : 0.0;
    slot[4 + kFeatureDim] = o.activated ? 1.0 : 0.0;
  }
  return obs;
}

std::size_t World::object_index(const Scene& scene, TypeId id) const {
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    if (scene.objects[i].type == id) return i;
  throw Error(ErrorKind::world, "object type " + std::to_string(id) + " is not in the scene");
}

bool World::check_success(std::span<const WorldState> states, const Scene& scene,
                          const Task& task) const {
  if (states.empty()) throw Error(ErrorKind::world, "check_success: empty trajectory");
  const std::size_t s = object_index(scene, task.subject);
  const ObjectType& st = type(task.subject);
  const WorldState& first = states.front();
  const WorldState& last = states.back();

  switch (task.family) {
    case Family::press:
      return std::any_of(states.begin(), states.end(), [&](const WorldState& w) {
        return w.effector.z < config_.press_height &&
               distance(w.effector.position, w.objects[s].position) <= st.radius + config_.press_margin;
      });
    case Family::grasp:
      return last.objects[s].held &&
             distance(last.objects[s].position, first.objects[s].position) >= config_.grasp_displacement;
    case Family::push:
    case Family::pick_place: {
      const std::size_t g = object_index(scene, task.target);
      const double tolerance = st.radius + type(task.target).radius + config_.place_tolerance;
      const bool ends_near = distance(last.objects[s].position, last.objects[g].position) <= tolerance;
      const bool started_far = distance(first.objects[s].position, first.objects[g].position) > tolerance;
      const bool ever_held = std::any_of(states.begin(), states.end(),
                                         [&](const WorldState& w) { return w.objects[s].held; });
      if (task.family == Family::push) return ends_near && started_far && !ever_held;
      return ends_near && started_far && ever_held && !last.objects[s].held;
    }
  }
  return false;
}

std::vector<Task> World::enumerate_tasks(const Scene& scene) const {
  std::vector<Task> out;
  for (const SceneObject& a : scene.objects) {
    const ObjectType& t = type(a.type);
    const Split split = is_train_type(a.type) ? Split::train : Split::test;
    if (t.pressable) out.push_back({Family::press, a.type, kNoTarget, split});
    if (!t.graspable) continue;
    out.push_back({Family::grasp, a.type, kNoTarget, split});
    for (const SceneObject& b : scene.objects) {
      if (b.type == a.type) continue;
      const Split pair_split = split == Split::train && is_train_type(b.type) ? Split::train : Split::test;
      out.push_back({Family::push, a.type, b.type, pair_split});
      out.push_back({Family::pick_place, a.type, b.type, pair_split});
    }
  }
  return out;
}

FilterResult World::filter(std::span<const WorldState> states, const Scene& scene) const {
  FilterResult result;
  for (const Task& task : enumerate_tasks(scene))
    if (check_success(states, scene, task)) result.achieved.push_back(task);
  result.useful = !result.achieved.empty();
  return result;
}

}  // namespace mili::world
