#pragma once

#include <vector>

#include "mili/core/mili.hpp"
#include "mili/expert/expert.hpp"
#include "mili/policy/model.hpp"

namespace mili::oracle {

// Small world and network so gradient checks and loss enumerations stay cheap.
inline world::WorldConfig small_world_config() {
  world::WorldConfig c;
  c.object_slots = 3;
  c.max_distractors = 1;
  return c;
}

inline policy::NetworkConfig small_network(std::size_t obs_dim) {
  policy::NetworkConfig n;
  n.obs_dim = obs_dim;
  n.encoder_hidden = 4;
  n.feature_dim = 3;
  n.conv_channels = 3;
  n.conv_kernel = 3;
  n.embedding_dim = 3;
  n.selection_hidden = 4;
  n.selection_heads = 2;
  n.policy_hidden = 5;
  return n;
}

// Short expert demos (truncated to `steps`) for the first `tasks` training tasks.
inline std::vector<TaskDataset> small_datasets(const world::World& w, std::size_t tasks, std::size_t demos,
                                               std::uint64_t seed, std::size_t steps = 4) {
  auto sets = w.generate_task_sets(seed);
  std::vector<world::Task> chosen(sets.train.begin(), sets.train.begin() + static_cast<std::ptrdiff_t>(tasks));
  auto out = expert::collect_demos(w, chosen, demos, seed, {.stop_after_success = false});
  for (auto& ds : out)
    for (auto& t : ds.demos) {
      const std::size_t keep = std::min(steps, t.steps());
      t.observations.resize(keep * t.obs_dim);
      t.actions.resize(keep * world::kActionDim);
    }
  return out;
}

// Initial weights plus uniform noise on every tensor but log_std, so biases are
// nonzero and the tiny network has no all-dead layer.
inline policy::ModelParams jittered(const world::World& w, std::uint64_t seed) {
  policy::ModelParams p = policy::init_params(small_network(w.observation_dim()), seed);
  Rng rng = make_rng(seed, {77});
  for (std::size_t i = 0; i + 1 < policy::kParamCount; ++i)
    for (double& v : p.tensors[i].values()) v += uniform(rng, -0.3, 0.3);
  return p;
}

// Expert trials over the first `tasks` training tasks, `per_task` each, in
// round-robin task order. All of them pass the filter.
inline std::vector<core::Trial> expert_trials(const world::World& w, std::size_t tasks, std::size_t per_task,
                                              std::uint64_t seed) {
  const auto sets = w.generate_task_sets(seed);
  std::vector<core::Trial> out;
  for (std::size_t k = 0; k < per_task; ++k)
    for (std::size_t i = 0; i < tasks; ++i) {
      Rng rng = make_rng(seed, {i, k});
      out.push_back({expert::demonstrate(w, sets.train[i], derive_seed(seed, {i, k, 1}), rng), {i, k}});
    }
  return out;
}

inline core::TrialStore store_of(const world::World& w, const std::vector<core::Trial>& trials) {
  core::TrialStore store;
  core::filter_and_store(w, trials, store);
  return store;
}

}  // namespace mili::oracle
