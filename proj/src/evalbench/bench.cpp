#include "mili/evalbench/bench.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "mili/common/error.hpp"

namespace mili::eval {

void validate(const BenchConfig& config) {
  world::validate(config.world);
  core::validate(config.mili);
  policy::validate(config.pretrain);
  policy::validate(config.bc);
  if (config.demos_per_task < 2) throw Error(ErrorKind::config, "demos_per_task must be at least 2");
  if (config.episodes_per_task == 0) throw Error(ErrorKind::config, "episodes_per_task must be positive");
  if (config.seeds.empty()) throw Error(ErrorKind::config, "seeds must not be empty");
  for (std::size_t b : config.budgets)
    if (b == 0) throw Error(ErrorKind::config, "sweep budgets must be positive");
}

policy::TrainResult run_baseline_bc(const policy::NetworkConfig& network, std::span<const TaskDataset> demos,
                                    const policy::TrainConfig& config, std::uint64_t seed) {
  policy::TrainConfig bc = config;
  bc.objective = policy::Objective::bc;
  return policy::train(policy::init_params(network, derive_seed(seed, {stream::kInit})), demos, bc,
                       derive_seed(seed, {stream::kBaseline}));
}

policy::TrainResult run_baseline_meta(const policy::NetworkConfig& network, std::span<const TaskDataset> demos,
                                      const policy::TrainConfig& config, std::uint64_t seed) {
  return core::pretrain(network, demos, config, seed);
}

std::vector<TaskDataset> oracle_pairing(const core::TrialStore& store, bool pairs_only) {
  // Keyed by the task's description so groups come out in a stable order.
  std::map<std::string, std::pair<world::Task, std::vector<std::size_t>>> groups;
  for (std::size_t id = 0; id < store.size(); ++id)
    for (const world::Task& task : store.achieved(core::OracleAccess{}, id)) {
      auto& group = groups[world::describe(task)];
      group.first = task;
      group.second.push_back(id);
    }
  std::vector<TaskDataset> out;
  auto emit = [&](const world::Task& task, std::span<const std::size_t> members) {
    TaskDataset ds{.task = task, .provenance = Provenance::paired_trial};
    for (std::size_t id : members) ds.demos.push_back(store.trajectory(id));
    out.push_back(std::move(ds));
  };
  for (const auto& [key, group] : groups) {
    const auto& [task, members] = group;
    if (members.size() < 2) continue;
    if (!pairs_only) {
      emit(task, members);
      continue;
    }
    for (std::size_t k = 0; k + 1 < members.size(); k += 2)
      emit(task, std::span(members).subspan(k, 2));
  }
  return out;
}

core::Pairing oracle_pairing_step(bool pairs_only) {
  return [pairs_only](const policy::ModelParams&, const core::TrialStore& store, core::IterationReport& report) {
    auto out = oracle_pairing(store, pairs_only);
    report.pairs = out.size();
    report.pairing_precision = out.empty() ? 0.0 : 1.0;
    return out;
  };
}

policy::NetworkConfig network_for(const BenchConfig& config) {
  policy::NetworkConfig network = config.network;
  network.obs_dim = world::World(config.world).observation_dim();
  return network;
}

std::vector<TaskDataset> bench_demos(const BenchConfig& config, std::span<const world::Task> train_tasks,
                                     std::uint64_t seed) {
  return expert::collect_demos(world::World(config.world), train_tasks, config.demos_per_task, seed);
}

EvalResult evaluate_method(const BenchConfig& config, const ConditionedPolicy& policy,
                           std::span<const world::Task> test_tasks, std::uint64_t seed, Method method) {
  EvalResult r = evaluate_one_shot(world::World(config.world), policy, test_tasks, config.episodes_per_task,
                                   derive_seed(seed, {stream::kEval}), method);
  r.seed = seed;
  return r;
}

std::vector<core::Trial> bench_trials(const BenchConfig& config, const policy::ModelParams& pretrained,
                                      std::span<const TaskDataset> demos, std::size_t count, std::uint64_t seed) {
  return core::collect_trials(world::World(config.world), pretrained, demos, count,
                              derive_seed(seed, {stream::kCollect, 0}), config.mili.trial_settle);
}

core::MiliResult bench_improve(const BenchConfig& config, const policy::ModelParams& pretrained,
                               std::span<const TaskDataset> demos, std::vector<core::Trial> first_round,
                               std::uint64_t seed, bool oracle) {
  core::ImproveOptions options{.first_round = std::move(first_round)};
  if (oracle) options.pairing = oracle_pairing_step(config.oracle_pairs_only);
  return core::improve(world::World(config.world), pretrained, demos, config.mili, seed, std::move(options));
}

namespace {

std::vector<core::Trial> prefix(std::span<const core::Trial> trials, std::size_t count) {
  return {trials.begin(), trials.begin() + static_cast<std::ptrdiff_t>(std::min(count, trials.size()))};
}

std::vector<SweepPoint> sweep_from(const BenchConfig& config, const policy::ModelParams& pretrained,
                                   std::span<const TaskDataset> demos, std::span<const world::Task> test_tasks,
                                   std::uint64_t seed, std::span<const core::Trial> trials, const SweepPoint* base,
                                   const SweepPoint* main) {
  std::vector<SweepPoint> out;
  out.push_back(base ? *base
                     : SweepPoint{.budget = 0, .result = evaluate_method(config, meta_policy(pretrained), test_tasks,
                                                                         seed, Method::meta_imitation)});
  for (std::size_t budget : config.budgets) {
    if (main && budget == main->budget) {
      out.push_back(*main);
      continue;
    }
    BenchConfig at = config;
    at.mili.trials = budget;
    auto run = bench_improve(at, pretrained, demos, prefix(trials, budget), seed, false);
    out.push_back({budget, evaluate_method(config, meta_policy(run.params), test_tasks, seed, Method::mili),
                   run.iterations.front()});
  }
  return out;
}

}  // namespace

std::vector<SweepPoint> trial_sweep(const BenchConfig& config, const policy::ModelParams& pretrained,
                                    std::span<const TaskDataset> demos, std::span<const world::Task> test_tasks,
                                    std::uint64_t seed) {
  std::size_t most = 0;
  for (std::size_t b : config.budgets) most = std::max(most, b);
  const auto trials = bench_trials(config, pretrained, demos, most, seed);
  return sweep_from(config, pretrained, demos, test_tasks, seed, trials, nullptr, nullptr);
}

SeedRun run_seed(const BenchConfig& config, std::uint64_t seed, RunSelection selection) {
  validate(config);
  const world::World world(config.world);
  SeedRun run{.seed = seed, .tasks = world.generate_task_sets(seed)};
  const auto demos = bench_demos(config, run.tasks.train, seed);
  const policy::NetworkConfig network = network_for(config);
  const auto& test = run.tasks.test;

  if (selection.bc) {
    auto bc = run_baseline_bc(network, demos, config.bc, seed);
    run.bc = evaluate_method(config, bc_policy(bc.params), test, seed, Method::bc);
    run.bc_curve = std::move(bc.curve);
  }

  auto meta = run_baseline_meta(network, demos, config.pretrain, seed);
  run.pretrain_curve = std::move(meta.curve);
  run.meta = evaluate_method(config, meta_policy(meta.params), test, seed, Method::meta_imitation);

  std::size_t collect = config.mili.trials;
  if (selection.sweep)
    for (std::size_t b : config.budgets) collect = std::max(collect, b);
  const auto trials = bench_trials(config, meta.params, demos, collect, seed);

  auto mili = bench_improve(config, meta.params, demos, prefix(trials, config.mili.trials), seed, false);
  run.mili = evaluate_method(config, meta_policy(mili.params), test, seed, Method::mili);
  run.mili_report = mili.iterations.front();

  if (selection.oracle) {
    auto oracle = bench_improve(config, meta.params, demos, prefix(trials, config.mili.trials), seed, true);
    run.oracle = evaluate_method(config, meta_policy(oracle.params), test, seed, Method::mili_oracle_pairing);
    run.oracle_datasets = oracle.iterations.front().pairs;
  }

  if (selection.sweep) {
    const SweepPoint base{.budget = 0, .result = run.meta};
    const SweepPoint main{config.mili.trials, run.mili, run.mili_report};
    run.sweep = sweep_from(config, meta.params, demos, test, seed, trials, &base, &main);
  }
  return run;
}

Summary summarize(std::span<const double> values) {
  Summary s{.count = values.size()};
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std_err = std::sqrt(ss / static_cast<double>(values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
  return s;
}

}  // namespace mili::eval
