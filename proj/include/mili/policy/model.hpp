#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mili/autodiff/graph.hpp"
#include "mili/common/random.hpp"
#include "mili/expert/trajectory.hpp"
#include "mili/world/types.hpp"

namespace mili::policy {

struct NetworkConfig {
  std::size_t obs_dim = 0;
  std::size_t encoder_hidden = 32;
  std::size_t feature_dim = 32;
  std::size_t conv_channels = 32;
  std::size_t conv_kernel = 5;
  std::size_t conv_stride = 2;
  std::size_t embedding_dim = 16;
  std::size_t selection_hidden = 32;
  std::size_t selection_heads = 2;
  std::size_t policy_hidden = 64;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double init_log_std = -1.0;

  std::size_t object_channels() const { return obs_dim - world::kEffectorDim; }
  std::size_t slots() const { return object_channels() / world::kSlotDim; }
  // Width of one slot summary: encoder features plus position relative to the effector.
  std::size_t slot_summary_dim() const { return feature_dim + 2; }
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// Throws Error(config) naming the offending field.
void validate(const NetworkConfig& config);

// Index of each learnable tensor inside ModelParams::tensors.
enum class Param : std::size_t {
  encoder_w1,
  encoder_b1,
  encoder_w2,
  encoder_b2,
  conv1_w,
  conv1_b,
  conv2_w,
  conv2_b,
  embed_w,
  embed_b,
  select_w1,
  select_w1_embed,
  select_b1,
  select_w2,
  select_b2,
  policy_w1_obs,
  policy_w1_embed,
  policy_b1,
  policy_w2,
  policy_b2,
  policy_w3,
  policy_b3,
  policy_log_std,
  count,
};
inline constexpr std::size_t kParamCount = static_cast<std::size_t>(Param::count);

std::string_view param_name(Param p);

// All weights of the embedding network and the policy network.
//
// Both heads work on object slots. A shared encoder maps every slot (its
// channels plus the distance to its nearest neighbour) to a feature vector.
// The embedding head runs the temporal convolutions over each present slot's
// feature sequence and sums the time-pooled results over slots. The policy
// head scores every slot against the embedding, pools the slot features with
// a per-head softmax over slots, and feeds the pooled features, the effector
// state and the embedding to an MLP.
struct ModelParams {
  NetworkConfig config;
  std::vector<ad::Tensor> tensors;

  const ad::Tensor& operator[](Param p) const { return tensors[static_cast<std::size_t>(p)]; }
  ad::Tensor& operator[](Param p) { return tensors[static_cast<std::size_t>(p)]; }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

std::vector<ad::Shape> param_shapes(const NetworkConfig& config);

// Glorot-uniform weights, zero biases, log-std filled with init_log_std.
ModelParams init_params(const NetworkConfig& config, std::uint64_t seed);

// Throws Error(shape) if tensor count or shapes disagree with the config, or
// Error(numeric) on non-finite weights.
void validate(const ModelParams& params);

struct Embedding {
  std::vector<double> values;
  double norm = 0.0;
};

struct ActionDistribution {
  world::Action mean{};
  world::Action log_std{};
};

// Parameters bound as leaves of one graph.
struct BoundModel {
  const NetworkConfig* config = nullptr;
  std::array<ad::NodeId, kParamCount> nodes{};
  ad::NodeId operator[](Param p) const { return nodes[static_cast<std::size_t>(p)]; }
};

BoundModel bind(ad::Graph& graph, const ModelParams& params);

// Encoder input per slot: the slot channels plus nearest-neighbour distance.
inline constexpr std::size_t kSlotInputDim = world::kSlotDim + 1;

// Slot inputs of consecutive observations, time-major (row t * slots + k).
struct SlotBatch {
  std::size_t steps = 0;
  std::size_t slots = 0;
  ad::Tensor inputs;          // [steps * slots, kSlotInputDim]
  ad::Tensor relative;        // [steps * slots, 2], slot position minus effector position
  std::vector<double> mask;   // 1 for present slots
  ad::Tensor effector;        // [steps, kEffectorDim]
};

SlotBatch policy_slots(const double* observations, std::size_t steps, std::size_t obs_dim);
SlotBatch policy_slots(const Trajectory& trajectory);

// Slot-major encoder input for the embedding: one [max(T, min_rows), kSlotInputDim]
// block per slot present in the first observation, the last step repeated as
// padding. Reads object channels only.
std::vector<ad::Tensor> embedding_slots(const Trajectory& trajectory, std::size_t min_rows);

// Graph builders.
ad::NodeId encode(ad::Graph& graph, const BoundModel& model, ad::NodeId slot_inputs);
ad::NodeId embed(ad::Graph& graph, const BoundModel& model, const Trajectory& trajectory);
// Action means [steps, kActionDim] for every step of the batch; embedding is [1, E].
ad::NodeId policy_mean(ad::Graph& graph, const BoundModel& model, const SlotBatch& batch,
                       ad::NodeId embedding);

// Value-level API.
Embedding embed(const ModelParams& params, const Trajectory& trajectory);
ActionDistribution policy_forward(const ModelParams& params, std::span<const double> observation,
                                  const Embedding& embedding);
Embedding zero_embedding(const NetworkConfig& config);

double cosine_similarity(const Embedding& a, const Embedding& b);

// -log N(action; mean, exp(log_std)^2), diagonal.
double nll(const ActionDistribution& dist, const world::Action& action);
world::Action greedy_action(const ActionDistribution& dist);
world::Action sample_action(const ActionDistribution& dist, Rng& rng);

// Graph-free forward pass for rollouts, with the embedding's contribution to
// the first policy layer folded in once. Matches policy_forward to rounding.
class PolicyRunner {
 public:
  PolicyRunner(const ModelParams& params, const Embedding& embedding);
  ActionDistribution operator()(std::span<const double> observation) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

}  // namespace mili::policy
