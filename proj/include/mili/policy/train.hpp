#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mili/autodiff/adam.hpp"
#include "mili/policy/losses.hpp"

namespace mili::policy {

// bc: zero-embedding behavior cloning on pooled demos.
// oil: one-shot imitation only. total: one-shot imitation plus contrastive.
enum class Objective { bc, oil, total };
std::string_view to_string(Objective objective);
Objective objective_from_string(std::string_view name);

struct TrainConfig {
  Objective objective = Objective::total;
  std::size_t steps = 2000;
  // Demo pairs per step (trajectories per step for bc). The contrastive
  // pairs are formed from the same draws: up to `batch` positives and
  // `batch` negatives.
  std::size_t batch = 8;
  double margin = 1.0;
  double contrastive_weight = 1.0;
  Reduction reduction = Reduction::mean;
  // Share of one-shot draws taken from paired-trial datasets when both kinds
  // are present; unset samples uniformly over all datasets.
  std::optional<double> paired_fraction;
  ad::AdamConfig adam;
  // Training-curve points are minibatch losses averaged over this many steps.
  std::size_t curve_interval = 50;
};

// Throws Error(config) naming the offending field.
void validate(const TrainConfig& config);

struct CurvePoint {
  std::size_t step = 0;  // last step of the averaging window, 1-based
  double total = 0.0;
  double imitation = 0.0;
  double contrastive = 0.0;
};

struct SamplerStats {
  std::size_t draws = 0;
  std::size_t paired_trial_draws = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<CurvePoint> curve;
  SamplerStats sampler;
};

// Adam on minibatch estimates of the objective, starting from `initial`.
// A non-finite loss or gradient throws Error(numeric) naming the step.
TrainResult train(ModelParams initial, std::span<const TaskDataset> datasets, const TrainConfig& config,
                  std::uint64_t seed);

}  // namespace mili::policy
