#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mili/expert/expert.hpp"
#include "mili/policy/model.hpp"

namespace mili::eval {

enum class Method { bc, meta_imitation, mili, mili_oracle_pairing, expert, random };
std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

// Turns one conditioning demo into a controller for a new scene.
using ConditionedPolicy =
    std::function<Controller(const Trajectory& demo, const world::Scene& scene, const world::Task& task)>;

ConditionedPolicy meta_policy(const policy::ModelParams& params);
// Ignores the demo: zero embedding.
ConditionedPolicy bc_policy(const policy::ModelParams& params);
// Reference policies for the floor and ceiling checks.
ConditionedPolicy expert_policy(const world::World& world, const expert::ExpertConfig& config = {});
ConditionedPolicy random_policy(const world::World& world);

struct TaskOutcome {
  world::Task task;
  std::size_t episodes = 0;
  std::size_t successes = 0;
};

struct EvalResult {
  Method method = Method::meta_imitation;
  std::uint64_t seed = 0;
  std::array<double, 4> family_success{};  // indexed by Family
  std::array<std::size_t, 4> family_episodes{};
  double overall = 0.0;
  std::vector<TaskOutcome> tasks;
};

// Per episode: an expert demo on one scene, then a greedy rollout of the
// conditioned policy on a different scene of the same task.
EvalResult evaluate_one_shot(const world::World& world, const ConditionedPolicy& policy,
                             std::span<const world::Task> tasks, std::size_t episodes_per_task,
                             std::uint64_t seed, Method method = Method::meta_imitation);

}  // namespace mili::eval
