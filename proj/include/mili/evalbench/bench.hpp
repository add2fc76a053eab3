#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mili/core/mili.hpp"
#include "mili/evalbench/evaluate.hpp"

namespace mili::eval {

// Everything one experiment needs; the network's obs_dim follows the world.
struct BenchConfig {
  world::WorldConfig world;
  std::size_t demos_per_task = 4;
  policy::NetworkConfig network;
  policy::TrainConfig pretrain{.steps = 12000, .adam = {.lr = 2e-3}};
  policy::TrainConfig bc{.objective = policy::Objective::bc, .steps = 12000, .adam = {.lr = 2e-3}};
  core::MiliConfig mili;
  std::size_t episodes_per_task = 20;
  // Oracle datasets hold every trial of a task; true restricts them to pairs.
  bool oracle_pairs_only = false;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::size_t> budgets{500, 1000, 2000, 4000};
};

void validate(const BenchConfig& config);

// Behavior cloning on all demos pooled, zero embedding.
policy::TrainResult run_baseline_bc(const policy::NetworkConfig& network, std::span<const TaskDataset> demos,
                                    const policy::TrainConfig& config, std::uint64_t seed);
// The pretraining stage of MILI with no autonomous data.
policy::TrainResult run_baseline_meta(const policy::NetworkConfig& network, std::span<const TaskDataset> demos,
                                      const policy::TrainConfig& config, std::uint64_t seed);

// Groups stored trials by ground-truth achieved task. Every group with at
// least two members becomes a dataset; a trial achieving several tasks joins
// each group. With pairs_only, groups are cut into disjoint consecutive pairs.
std::vector<TaskDataset> oracle_pairing(const core::TrialStore& store, bool pairs_only = false);

// Oracle pairing as a pluggable pairing step; reports one "pair" per dataset.
core::Pairing oracle_pairing_step(bool pairs_only);

// Stages shared by the bench and the command-line driver, so both produce
// identical numbers for a (config, seed).
policy::NetworkConfig network_for(const BenchConfig& config);
std::vector<TaskDataset> bench_demos(const BenchConfig& config, std::span<const world::Task> train_tasks,
                                     std::uint64_t seed);
// Every method is scored on the same episodes for a given seed.
EvalResult evaluate_method(const BenchConfig& config, const ConditionedPolicy& policy,
                           std::span<const world::Task> test_tasks, std::uint64_t seed, Method method);
// The first-round trials of every run for this seed; trial n does not depend
// on the count, so prefixes of a larger collection are smaller collections.
std::vector<core::Trial> bench_trials(const BenchConfig& config, const policy::ModelParams& pretrained,
                                      std::span<const TaskDataset> demos, std::size_t count, std::uint64_t seed);
// MILI from pretrained parameters with the given first-round trials.
core::MiliResult bench_improve(const BenchConfig& config, const policy::ModelParams& pretrained,
                               std::span<const TaskDataset> demos, std::vector<core::Trial> first_round,
                               std::uint64_t seed, bool oracle);

struct SweepPoint {
  std::size_t budget = 0;
  EvalResult result;
  core::IterationReport report;
};

// Budget 0 (the pretrained policy) followed by every configured budget.
std::vector<SweepPoint> trial_sweep(const BenchConfig& config, const policy::ModelParams& pretrained,
                                    std::span<const TaskDataset> demos, std::span<const world::Task> test_tasks,
                                    std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  world::TaskSets tasks;
  EvalResult bc;
  EvalResult meta;
  EvalResult mili;
  EvalResult oracle;
  core::IterationReport mili_report;
  std::size_t oracle_datasets = 0;
  std::vector<policy::CurvePoint> pretrain_curve;
  std::vector<policy::CurvePoint> bc_curve;
  std::vector<SweepPoint> sweep;
};

struct RunSelection {
  bool bc = true;
  bool oracle = true;
  bool sweep = true;
};

// One seed of the full protocol: BC, meta-imitation, MILI at the configured
// trial budget, MILI with oracle pairing on the same trials, and the sweep.
// All methods are evaluated on identical episodes.
SeedRun run_seed(const BenchConfig& config, std::uint64_t seed, RunSelection selection = {});

struct Summary {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t count = 0;
};
// Mean and standard error of the mean (0 for fewer than two values).
Summary summarize(std::span<const double> values);

}  // namespace mili::eval
