#include "mili/evalbench/evaluate.hpp"

#include <string>

#include "mili/common/error.hpp"

namespace mili::eval {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::bc: return "bc";
    case Method::meta_imitation: return "meta-imitation";
    case Method::mili: return "mili";
    case Method::mili_oracle_pairing: return "mili-oracle-pairing";
    case Method::expert: return "expert";
    case Method::random: return "random";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (Method m : {Method::bc, Method::meta_imitation, Method::mili, Method::mili_oracle_pairing,
                   Method::expert, Method::random})
    if (to_string(m) == name) return m;
  throw Error(ErrorKind::config, "unknown method '" + std::string(name) + "'");
}

namespace {

Controller greedy(policy::PolicyRunner runner) {
  return [runner = std::move(runner)](const world::WorldState&, const world::Observation& obs, Rng&) {
    return policy::greedy_action(runner(obs));
  };
}

}  // namespace

ConditionedPolicy meta_policy(const policy::ModelParams& params) {
  return [&params](const Trajectory& demo, const world::Scene&, const world::Task&) {
    return greedy(policy::PolicyRunner(params, policy::embed(params, demo)));
  };
}

ConditionedPolicy bc_policy(const policy::ModelParams& params) {
  return [&params](const Trajectory&, const world::Scene&, const world::Task&) {
    return greedy(policy::PolicyRunner(params, policy::zero_embedding(params.config)));
  };
}

ConditionedPolicy expert_policy(const world::World& world, const expert::ExpertConfig& config) {
  return [&world, config](const Trajectory&, const world::Scene& scene, const world::Task& task) {
    return expert::make_expert(world, scene, task, config);
  };
}

ConditionedPolicy random_policy(const world::World& world) {
  const double limit = world.config().max_action;
  return [limit](const Trajectory&, const world::Scene&, const world::Task&) -> Controller {
    return [limit](const world::WorldState&, const world::Observation&, Rng& rng) {
      world::Action a;
      for (double& v : a) v = uniform(rng, -limit, limit);
      return a;
    };
  };
}

EvalResult evaluate_one_shot(const world::World& world, const ConditionedPolicy& policy,
                             std::span<const world::Task> tasks, std::size_t episodes_per_task,
                             std::uint64_t seed, Method method) {
  if (episodes_per_task == 0) throw Error(ErrorKind::config, "eval.episodes_per_task: must be positive");
  if (tasks.empty()) throw Error(ErrorKind::config, "evaluation needs at least one task");
  EvalResult result{.method = method, .seed = seed};
  std::array<std::size_t, 4> family_successes{};
  std::size_t total_successes = 0;
  std::size_t total_episodes = 0;
  const expert::ExpertConfig expert_config;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const world::Task& task = tasks[i];
    TaskOutcome outcome{.task = task};
    for (std::size_t e = 0; e < episodes_per_task; ++e) {
      // Conditioning demo on its own scene; redrawn if the expert slips.
      Trajectory demo;
      bool have_demo = false;
      for (std::size_t attempt = 0; attempt <= expert_config.max_retries && !have_demo; ++attempt) {
        Rng demo_rng = make_rng(seed, {stream::kEval, i, e, 0, attempt, 0});
        Rollout r = expert::demonstrate(world, task, derive_seed(seed, {stream::kEval, i, e, 0, attempt, 1}),
                                        demo_rng, expert_config);
        if (world.check_success(r.states, r.trajectory.scene, task)) {
          demo = std::move(r.trajectory);
          have_demo = true;
        }
      }
      if (!have_demo) throw Error(ErrorKind::data, "no successful demo for " + world::describe(task));

      world::Scene scene;
      for (std::uint64_t salt = 0;; ++salt) {
        scene = world.sample_scene(task, derive_seed(seed, {stream::kEval, i, e, 1, salt}));
        if (!(scene == demo.scene)) break;
      }
      Rng rng = make_rng(seed, {stream::kEval, i, e, 2});
      const Rollout r = rollout(world, scene, policy(demo, scene, task), rng, world.config().horizon);
      const bool ok = world.check_success(r.states, scene, task);
      ++outcome.episodes;
      outcome.successes += ok;
      const auto f = static_cast<std::size_t>(task.family);
      ++result.family_episodes[f];
      family_successes[f] += ok;
      total_successes += ok;
      ++total_episodes;
    }
    result.tasks.push_back(outcome);
  }
  for (std::size_t f = 0; f < 4; ++f)
    result.family_success[f] = result.family_episodes[f] == 0
                                   ? 0.0
                                   : static_cast<double>(family_successes[f]) /
                                         static_cast<double>(result.family_episodes[f]);
  result.overall = static_cast<double>(total_successes) / static_cast<double>(total_episodes);
  return result;
}

}  // namespace mili::eval
