#include "mili/expert/expert.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mili/common/error.hpp"

namespace mili::expert {

namespace {

using world::Vec2;

struct Waypoint {
  Vec2 xy;
  double z = 0.0;
  double aperture_rate = 0.0;
};

Vec2 unit(Vec2 v) {
  const double n = world::norm(v);
  return n > 0.0 ? (1.0 / n) * v : Vec2{1.0, 0.0};
}

class Script {
 public:
  Script(const world::World& world, const world::WorldState& state, const world::Scene& scene,
         const world::Task& task, const ExpertConfig& config)
      : world_(world), state_(state), task_(task), config_(config) {
    subject_ = world.object_index(scene, task.subject);
    subject_radius_ = world.type(task.subject).radius;
    if (world::has_target(task.family)) {
      target_ = world.object_index(scene, task.target);
      target_radius_ = world.type(task.target).radius;
    }
  }

  Waypoint plan() const {
    switch (task_.family) {
      case world::Family::press: return press();
      case world::Family::grasp: return grasp();
      case world::Family::push: return push();
      case world::Family::pick_place: return pick_place();
    }
    return hold();
  }

 private:
  Vec2 effector() const { return state_.effector.position; }
  Vec2 subject() const { return state_.objects[subject_].position; }
  Vec2 target() const { return state_.objects[target_].position; }
  bool low() const { return state_.effector.z < world_.config().low_height; }
  double open_rate() const { return 1.0 - state_.effector.aperture; }
  double close_rate() const { return -state_.effector.aperture; }

  Waypoint hold() const { return {effector(), config_.cruise_height, open_rate()}; }

  // Once lowered, stay on station within the looser work tolerance so that
  // actuation noise does not trigger a climb.
  bool over(Vec2 goal) const {
    const double tol = low() ? config_.work_tolerance : config_.xy_tolerance;
    return world::distance(effector(), goal) <= tol;
  }

  // Travel horizontally at cruise height; rise first when low so the open
  // effector does not sweep objects along.
  Waypoint travel(Vec2 goal, double aperture_rate) const {
    if (low() && !over(goal))
      return {effector(), config_.cruise_height, aperture_rate};
    return {goal, config_.cruise_height, aperture_rate};
  }

  Waypoint press() const {
    if (state_.objects[subject_].activated) return hold();
    if (!over(subject())) return travel(subject(), open_rate());
    return {subject(), config_.work_height, open_rate()};
  }

  Waypoint acquire() const {
    const bool holding_other = std::any_of(state_.objects.begin(), state_.objects.end(),
                                           [](const world::ObjectState& o) { return o.held; });
    if (state_.effector.aperture <= 0.5 || holding_other) return {effector(), config_.cruise_height, 0.1};
    if (!over(subject())) return travel(subject(), open_rate());
    if (state_.effector.z > config_.work_height + 0.03) return {subject(), config_.work_height, open_rate()};
    return {subject(), config_.work_height, close_rate()};
  }

  Waypoint grasp() const {
    if (!state_.objects[subject_].held) return acquire();
    return {config_.carry_goal, config_.cruise_height, close_rate()};
  }

  Waypoint pick_place() const {
    const world::ObjectState& s = state_.objects[subject_];
    const double reach = subject_radius_ + target_radius_;
    if (!s.held) {
      if (world::distance(s.position, target()) <= reach + 0.6 * world_.config().place_tolerance)
        return hold();
      return acquire();
    }
    const double margin = world_.config().workspace_margin * 0.5;
    Vec2 drop = target() + (reach + 0.02) * unit(effector() - target());
    drop = {std::clamp(drop.x, margin, 1.0 - margin), std::clamp(drop.y, margin, 1.0 - margin)};
    if (!over(drop))
      return {drop, config_.cruise_height, close_rate()};
    if (state_.effector.z > 0.12) return {drop, 0.1, close_rate()};
    return {drop, 0.1, 0.1};
  }

  Waypoint push() const {
    const double goal_gap = subject_radius_ + target_radius_ + 0.02;
    const double gap = world::distance(subject(), target());
    if (gap <= goal_gap + 0.015) return hold();
    const Vec2 u = unit(target() - subject());
    const double contact = subject_radius_ + world_.config().effector_radius;
    const Vec2 rel = effector() - subject();
    const double along = world::dot(rel, u);
    const double lateral = world::norm(rel - along * u);
    const bool aligned = along <= -(contact - 0.01) && along >= -(contact + 0.06) && lateral <= 0.02;
    if (low()) {
      if (!aligned) return {effector(), config_.cruise_height, open_rate()};
      const double depth = std::min(0.05, gap - goal_gap);
      return {subject() - (contact - depth) * u, config_.work_height, open_rate()};
    }
    const Vec2 start = subject() - (contact + 0.03) * u;
    if (world::distance(effector(), start) > config_.xy_tolerance) return {start, config_.cruise_height, open_rate()};
    return {start, config_.work_height, open_rate()};
  }

  const world::World& world_;
  const world::WorldState& state_;
  const world::Task& task_;
  const ExpertConfig& config_;
  std::size_t subject_ = 0;
  std::size_t target_ = 0;
  double subject_radius_ = 0.0;
  double target_radius_ = 0.0;
};

}  // namespace

world::Action expert_action(const world::World& world, const world::WorldState& state,
                            const world::Scene& scene, const world::Task& task, Rng& rng,
                            const ExpertConfig& config) {
  const Waypoint wp = Script(world, state, scene, task, config).plan();
  const double limit = world.config().max_action;
  auto clip = [limit](double v) { return std::clamp(v, -limit, limit); };
  auto noise = [&] {
    if (config.noise_std <= 0.0) return 0.0;
    const double bound = 3.0 * config.noise_std;
    return std::clamp(gaussian(rng, 0.0, config.noise_std), -bound, bound);
  };
  const world::Effector& e = state.effector;
  const double nx = noise();
  const double ny = noise();
  return {clip(clip(wp.xy.x - e.position.x) + nx), clip(clip(wp.xy.y - e.position.y) + ny),
          clip(wp.z - e.z), clip(wp.aperture_rate)};
}

Controller make_expert(const world::World& world, const world::Scene& scene, const world::Task& task,
                       const ExpertConfig& config) {
  return [&world, scene, task, config](const world::WorldState& state, const world::Observation&,
                                       Rng& rng) {
    return expert_action(world, state, scene, task, rng, config);
  };
}

Rollout demonstrate(const world::World& world, const world::Task& task, std::uint64_t scene_seed,
                    Rng& rng, const ExpertConfig& config) {
  const world::Scene scene = world.sample_scene(task, scene_seed);
  StopRule stop;
  if (config.stop_after_success) {
    stop = [&world, &scene, &task, &config, achieved_at = std::size_t{0}](
               std::span<const world::WorldState> states) mutable {
      if (achieved_at == 0 && world.check_success(states, scene, task)) achieved_at = states.size();
      return achieved_at != 0 && states.size() >= achieved_at + config.settle_steps &&
             world.check_success(states, scene, task);
    };
  }
  return rollout(world, scene, make_expert(world, scene, task, config), rng, world.config().horizon, stop);
}

std::vector<TaskDataset> collect_demos(const world::World& world, std::span<const world::Task> tasks,
                                       std::size_t demos_per_task, std::uint64_t seed,
                                       const ExpertConfig& config) {
  if (demos_per_task < 2)
    throw Error(ErrorKind::config, "demos_per_task must be at least 2, got " + std::to_string(demos_per_task));
  std::vector<TaskDataset> out;
  out.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    TaskDataset ds{.task = tasks[i], .provenance = Provenance::human_proxy};
    for (std::size_t k = 0; k < demos_per_task; ++k) {
      bool accepted = false;
      for (std::size_t attempt = 0; attempt <= config.max_retries && !accepted; ++attempt) {
        Rng rng = make_rng(seed, {stream::kDemos, i, k, attempt});
        Rollout r = demonstrate(world, tasks[i], derive_seed(seed, {stream::kDemos, i, k, attempt, 1}),
                                rng, config);
        const bool duplicate = std::any_of(ds.demos.begin(), ds.demos.end(), [&](const Trajectory& d) {
          return d.scene == r.trajectory.scene;
        });
        if (!duplicate && world.check_success(r.states, r.trajectory.scene, tasks[i])) {
          ds.demos.push_back(std::move(r.trajectory));
          accepted = true;
        }
      }
      if (!accepted)
        throw Error(ErrorKind::data, "expert failed " + std::to_string(config.max_retries + 1) +
                                         " times on task " + world::describe(tasks[i]));
    }
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace mili::expert
