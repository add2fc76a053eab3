#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "mili/common/random.hpp"
#include "mili/world/world.hpp"

namespace mili {

// Demonstration or trial: T observation/action pairs recorded in one scene.
// Observations are stored row-major as a [steps, obs_dim] block.
struct Trajectory {
  world::Scene scene;
  std::size_t obs_dim = 0;
  std::vector<double> observations;
  std::vector<double> actions;  // [steps, kActionDim]

  std::size_t steps() const noexcept {
    return obs_dim == 0 ? 0 : observations.size() / obs_dim;
  }
  const double* observation(std::size_t t) const { return observations.data() + t * obs_dim; }
  const double* action(std::size_t t) const { return actions.data() + t * world::kActionDim; }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

enum class Provenance : std::uint8_t { human_proxy = 0, paired_trial = 1 };
std::string_view to_string(Provenance provenance);
Provenance provenance_from_string(std::string_view name);

// Interchangeable demonstrations of one task (D_i).
struct TaskDataset {
  world::Task task;
  std::vector<Trajectory> demos;
  Provenance provenance = Provenance::human_proxy;

  friend bool operator==(const TaskDataset& a, const TaskDataset& b) {
    return a.task.identity() == b.task.identity() && a.task.split == b.task.split &&
           a.demos == b.demos && a.provenance == b.provenance;
  }
};

// A rollout keeps the full state sequence (steps + 1 states, the last one
// after the final action) alongside the recorded trajectory.
struct Rollout {
  Trajectory trajectory;
  std::vector<world::WorldState> states;
};

using Controller =
    std::function<world::Action(const world::WorldState&, const world::Observation&, Rng&)>;

// Called after every step with the states so far; returning true ends the rollout.
using StopRule = std::function<bool(std::span<const world::WorldState>)>;

Rollout rollout(const world::World& world, const world::Scene& scene, const Controller& controller,
                Rng& rng, std::size_t horizon, const StopRule& stop = {});

// Throws Error(data) if the trajectory is empty, has ragged arrays, the wrong
// observation dimension, or non-finite actions.
void validate(const Trajectory& trajectory, std::size_t obs_dim);

}  // namespace mili
