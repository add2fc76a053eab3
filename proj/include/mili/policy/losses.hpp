#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mili/policy/model.hpp"

namespace mili::policy {

// sum: literal sums over all terms. mean: the imitation terms are averaged
// over scored (o, a) pairs and the contrastive terms over pairs, so the
// scale does not depend on batch size or trajectory length.
enum class Reduction { sum, mean };

// Condition on demo `conditioning`, score the actions of demo `scored`.
struct OilDraw {
  std::size_t dataset = 0;
  std::size_t scored = 0;
  std::size_t conditioning = 0;
  friend bool operator==(const OilDraw&, const OilDraw&) = default;
  friend auto operator<=>(const OilDraw&, const OilDraw&) = default;
};

struct ContrastivePair {
  std::size_t dataset_a = 0;
  std::size_t demo_a = 0;
  std::size_t dataset_b = 0;
  std::size_t demo_b = 0;
  bool same_task = false;
  friend bool operator==(const ContrastivePair&, const ContrastivePair&) = default;
};

// All ordered pairs m != n of every dataset. Throws Error(data) if a dataset
// has fewer than two demos.
std::vector<OilDraw> enumerate_oil_draws(std::span<const TaskDataset> datasets);
// Uniform over datasets, then uniform over ordered pairs m != n. With
// paired_fraction set and both kinds present, each draw first picks paired
// trials with that probability (demos otherwise), then a dataset of that kind.
std::vector<OilDraw> sample_oil_draws(std::span<const TaskDataset> datasets, std::size_t count, Rng& rng,
                                      std::optional<double> paired_fraction = {});

// Datasets eligible for the contrastive term: human demonstrations only.
// Paired trials carry pseudo-labels and never act as negatives.
std::vector<std::size_t> contrastive_datasets(std::span<const TaskDataset> datasets);

// Every unordered pair of distinct demos among the eligible datasets, both
// within a dataset (same task) and across datasets.
std::vector<ContrastivePair> enumerate_contrastive_pairs(std::span<const TaskDataset> datasets);
// Contrastive pairs that reuse the demos of a one-shot minibatch: each draw
// gives a positive (its two demos), and the conditioning demos of neighbouring
// draws give a negative whenever their tasks differ. Draws from ineligible
// datasets contribute nothing.
std::vector<ContrastivePair> contrastive_pairs_from_draws(std::span<const TaskDataset> datasets,
                                                          std::span<const OilDraw> draws);
std::vector<ContrastivePair> sample_contrastive_pairs(std::span<const TaskDataset> datasets,
                                                      std::size_t positives, std::size_t negatives,
                                                      Rng& rng);

// Per-loss graph state: embeddings are built once per (dataset, demo) and
// shared by every term that needs them.
class LossBuilder {
 public:
  LossBuilder(ad::Graph& graph, const BoundModel& model, std::span<const TaskDataset> datasets);

  ad::NodeId embedding(std::size_t dataset, std::size_t demo);
  // Sum over steps of -log pi(a_t | o_t, e) for one trajectory.
  ad::NodeId trajectory_nll(const Trajectory& trajectory, ad::NodeId embedding);

  // Behavior cloning on the listed trajectories with a zero embedding.
  ad::NodeId bc(std::span<const Trajectory* const> trajectories, Reduction reduction);
  ad::NodeId oil(std::span<const OilDraw> draws, Reduction reduction);
  ad::NodeId contrastive(std::span<const ContrastivePair> pairs, double margin, Reduction reduction);

  ad::Graph& graph() { return graph_; }

 private:
  ad::Graph& graph_;
  const BoundModel& model_;
  std::span<const TaskDataset> datasets_;
  std::map<std::pair<std::size_t, std::size_t>, ad::NodeId> embeddings_;
  ad::NodeId zero_embedding_{};
  bool has_zero_embedding_ = false;
};

// Value-level conveniences.
double loss_bc(const ModelParams& params, std::span<const Trajectory> trajectories,
               Reduction reduction = Reduction::sum);
double loss_oil(const ModelParams& params, std::span<const TaskDataset> datasets,
                std::span<const OilDraw> draws, Reduction reduction = Reduction::sum);
double loss_contrastive(const ModelParams& params, std::span<const TaskDataset> datasets,
                        std::span<const ContrastivePair> pairs, double margin,
                        Reduction reduction = Reduction::sum);
// One-shot imitation on the draws plus the contrastive term on the pairs the
// same draws form (see contrastive_pairs_from_draws).
double loss_total(const ModelParams& params, std::span<const TaskDataset> datasets, std::span<const OilDraw> draws,
                  double margin, Reduction reduction = Reduction::sum);

// One contrastive term on embedding nodes: H = |a - b|^2 for a same-task
// pair, max(0, margin - H) otherwise.
ad::NodeId contrastive_pair_term(ad::Graph& graph, ad::NodeId a, ad::NodeId b, bool same_task, double margin);

// Contrastive contribution of one pair given its squared embedding distance.
double contrastive_term(double squared_distance, bool same_task, double margin);

}  // namespace mili::policy
