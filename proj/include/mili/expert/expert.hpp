#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mili/expert/trajectory.hpp"

namespace mili::expert {

struct ExpertConfig {
  double noise_std = 0.005;
  double cruise_height = 0.4;
  double work_height = 0.05;
  double xy_tolerance = 0.01;
  double work_tolerance = 0.03;
  // Where grasped objects are carried to; outside the object sampling region
  // so the carry always displaces the object.
  world::Vec2 carry_goal{0.5, 1.0};
  std::size_t max_retries = 20;
  // Demonstrations end this many steps after the task is first achieved
  // (the horizon still caps them). Idle steps carry no task information.
  bool stop_after_success = true;
  std::size_t settle_steps = 5;
};

// Closed-loop scripted controller for one task. Every decision is a function
// of the current state, so the policy can in principle imitate it exactly.
world::Action expert_action(const world::World& world, const world::WorldState& state,
                            const world::Scene& scene, const world::Task& task, Rng& rng,
                            const ExpertConfig& config = {});

Controller make_expert(const world::World& world, const world::Scene& scene, const world::Task& task,
                       const ExpertConfig& config = {});

// Rolls the expert out on a fresh scene for `task`.
Rollout demonstrate(const world::World& world, const world::Task& task, std::uint64_t scene_seed,
                    Rng& rng, const ExpertConfig& config = {});

// demos_per_task successful expert demonstrations per task, each on its own
// freshly sampled scene. Failed rollouts are redrawn; exceeding max_retries
// throws Error(data) naming the task.
std::vector<TaskDataset> collect_demos(const world::World& world, std::span<const world::Task> tasks,
                                       std::size_t demos_per_task, std::uint64_t seed,
                                       const ExpertConfig& config = {});

}  // namespace mili::expert
