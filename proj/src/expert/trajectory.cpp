#include "mili/expert/trajectory.hpp"

#include <cmath>
#include <string>

#include "mili/common/error.hpp"

namespace mili {

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::human_proxy: return "human-proxy";
    case Provenance::paired_trial: return "paired-trial";
  }
  return "unknown";
}

Provenance provenance_from_string(std::string_view name) {
  if (name == "human-proxy") return Provenance::human_proxy;
  if (name == "paired-trial") return Provenance::paired_trial;
  throw Error(ErrorKind::data, "unknown provenance '" + std::string(name) + "'");
}

Rollout rollout(const world::World& world, const world::Scene& scene, const Controller& controller,
                Rng& rng, std::size_t horizon, const StopRule& stop) {
  Rollout out;
  Trajectory& traj = out.trajectory;
  traj.scene = scene;
  traj.obs_dim = world.observation_dim();
  traj.observations.reserve(horizon * traj.obs_dim);
  traj.actions.reserve(horizon * world::kActionDim);
  out.states.reserve(horizon + 1);
  out.states.push_back(world.initial_state(scene));
  for (std::size_t t = 0; t < horizon; ++t) {
    const world::WorldState& state = out.states.back();
    const world::Observation obs = world.observe(state, scene);
    world::Action action = controller(state, obs, rng);
    for (double& a : action)
      a = std::isfinite(a) ? std::clamp(a, -world.config().max_action, world.config().max_action) : 0.0;
    traj.observations.insert(traj.observations.end(), obs.begin(), obs.end());
    traj.actions.insert(traj.actions.end(), action.begin(), action.end());
    out.states.push_back(world.step(state, scene, action));
    if (stop && stop(out.states)) break;
  }
  return out;
}

void validate(const Trajectory& trajectory, std::size_t obs_dim) {
  if (trajectory.obs_dim != obs_dim)
    throw Error(ErrorKind::data, "trajectory observation dim " + std::to_string(trajectory.obs_dim) +
                                     " does not match expected " + std::to_string(obs_dim));
  const std::size_t steps = trajectory.steps();
  if (steps == 0) throw Error(ErrorKind::data, "trajectory is empty");
  if (trajectory.observations.size() != steps * obs_dim ||
      trajectory.actions.size() != steps * world::kActionDim)
    throw Error(ErrorKind::data, "trajectory arrays have inconsistent lengths");
  for (double a : trajectory.actions)
    if (!std::isfinite(a)) throw Error(ErrorKind::data, "trajectory contains a non-finite action");
}

}  // namespace mili
