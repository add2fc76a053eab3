#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mili/policy/train.hpp"
#include "mili/world/world.hpp"

namespace mili::core {

// Which demo a trial was conditioned on.
struct Conditioning {
  std::size_t dataset = 0;
  std::size_t demo = 0;
  friend bool operator==(const Conditioning&, const Conditioning&) = default;
};

struct Trial {
  Rollout rollout;
  Conditioning conditioning;
};

// Tag required to read the ground-truth achieved tasks of stored trials. Only
// the oracle pairing and the evaluation metrics construct it.
struct OracleAccess {
  explicit OracleAccess() = default;
};

// Append-only store of trials that passed the filter.
class TrialStore {
 public:
  // Throws Error(data) if the verdict is not useful.
  std::size_t append(Trajectory trajectory, Conditioning conditioning, world::FilterResult verdict);

  std::size_t size() const noexcept { return trajectories_.size(); }
  const Trajectory& trajectory(std::size_t id) const { return trajectories_.at(id); }
  const Conditioning& conditioning(std::size_t id) const { return conditioning_.at(id); }
  const std::vector<world::Task>& achieved(OracleAccess, std::size_t id) const { return achieved_.at(id); }

  // Embeddings of every record under `params`, recomputed whenever the
  // parameters change.
  const std::vector<policy::Embedding>& embeddings(const policy::ModelParams& params) const;

  // Same records with the ground-truth labels removed.
  TrialStore without_labels() const;
  // The first `count` records.
  TrialStore prefix(std::size_t count) const;

 private:
  std::vector<Trajectory> trajectories_;
  std::vector<Conditioning> conditioning_;
  std::vector<std::vector<world::Task>> achieved_;
  mutable std::vector<policy::Embedding> embeddings_;
  mutable std::uint64_t embedding_version_ = 0;
  mutable bool embeddings_valid_ = false;
};

// Content hash of a parameter set.
std::uint64_t params_version(const policy::ModelParams& params);

struct RetrainConfig {
  policy::TrainConfig train{.objective = policy::Objective::oil, .steps = 2000};
  bool from_scratch = false;
  bool with_contrastive = false;
};

struct MiliConfig {
  double alpha = 0.9;
  std::size_t trials = 2000;
  std::size_t iterations = 1;
  // Most pairs any one trial may join; 0 means unlimited.
  std::size_t pair_cap = 1;
  // Steps a trial continues after first passing the filter; unset runs the
  // full horizon.
  std::optional<std::size_t> trial_settle;
  RetrainConfig retrain;
};

void validate(const MiliConfig& config);

// Pretraining on the demonstrations (one-shot imitation plus contrastive).
policy::TrainResult pretrain(const policy::NetworkConfig& network, std::span<const TaskDataset> demos,
                             const policy::TrainConfig& config, std::uint64_t seed);

// B rollouts of the meta-policy with sampled actions. Each picks a demo
// dataset and one of its demos uniformly and runs on a fresh scene of that
// dataset's task. With `settle`, a trial ends that many steps after it first
// passes the usefulness filter, the way demonstrations end after success.
std::vector<Trial> collect_trials(const world::World& world, const policy::ModelParams& params,
                                  std::span<const TaskDataset> demos, std::size_t count, std::uint64_t seed,
                                  std::optional<std::size_t> settle = std::nullopt);

// Appends the useful trials; returns how many passed.
std::size_t filter_and_store(const world::World& world, std::vector<Trial> trials, TrialStore& store);

struct TrialPair {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double similarity = 0.0;
  friend bool operator==(const TrialPair&, const TrialPair&) = default;
};

// Every unordered pair with cosine similarity above alpha. With a cap, pairs
// are taken in order of decreasing similarity while both trials have room.
std::vector<TrialPair> pair_trials(const policy::ModelParams& params, const TrialStore& store, double alpha,
                                   std::size_t cap = 0);
// Two-demo datasets, provenance paired_trial.
std::vector<TaskDataset> paired_datasets(const TrialStore& store, std::span<const TrialPair> pairs);

// Fraction of pairs whose achieved-task sets intersect (0 for no pairs).
double pairing_precision(const TrialStore& store, std::span<const TrialPair> pairs);
// The same fraction over all unordered pairs of the store.
double random_pairing_precision(const TrialStore& store);

policy::TrainResult retrain(const policy::ModelParams& params, std::span<const TaskDataset> datasets,
                            const RetrainConfig& config, std::uint64_t seed);

// Retrains on the demos followed by the extra datasets.
policy::TrainResult retrain_with(const policy::ModelParams& params, std::span<const TaskDataset> demos,
                                 std::vector<TaskDataset> extra, const RetrainConfig& config, std::uint64_t seed);

struct IterationReport {
  std::size_t trials = 0;
  std::size_t passed = 0;
  double pass_rate = 0.0;
  std::size_t store_size = 0;
  std::size_t pairs = 0;
  double pairing_precision = 0.0;
  double random_precision = 0.0;
  bool retrained = false;
  policy::SamplerStats sampler;
  std::vector<policy::CurvePoint> curve;
};

struct MiliResult {
  policy::ModelParams params;
  TrialStore store;
  std::vector<IterationReport> iterations;
};

// Turns the store into extra training datasets and fills the pairing fields
// (pairs, pairing_precision) of the round's report.
using Pairing =
    std::function<std::vector<TaskDataset>(const policy::ModelParams&, const TrialStore&, IterationReport&)>;

// pair_trials followed by paired_datasets.
Pairing learned_pairing(double alpha, std::size_t cap);

// Filter, store, pair and retrain one round of already collected trials. An
// empty pairing function means learned_pairing with the config's settings.
IterationReport improve_round(policy::ModelParams& params, std::span<const TaskDataset> demos, TrialStore& store,
                              const world::World& world, std::vector<Trial> trials, const MiliConfig& config,
                              std::uint64_t seed, std::size_t iteration, const Pairing& pairing = {});

struct ImproveOptions {
  Pairing pairing;
  // Trials to use for the first round instead of collecting config.trials.
  std::optional<std::vector<Trial>> first_round;
};

// Collect, filter, pair and retrain for config.iterations rounds starting
// from pretrained parameters. A round that forms no pairs leaves the
// parameters unchanged.
MiliResult improve(const world::World& world, const policy::ModelParams& pretrained,
                   std::span<const TaskDataset> demos, const MiliConfig& config, std::uint64_t seed,
                   ImproveOptions options = {});

}  // namespace mili::core
