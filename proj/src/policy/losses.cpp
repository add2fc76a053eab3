#include "mili/policy/losses.hpp"

#include <random>
#include <string>

#include "mili/common/error.hpp"

namespace mili::policy {

namespace {

void require_pairs(const TaskDataset& ds, std::size_t index) {
  if (ds.demos.size() < 2)
    throw Error(ErrorKind::data, "dataset " + std::to_string(index) + " (" + world::describe(ds.task) +
                                     ") has " + std::to_string(ds.demos.size()) +
                                     " demo(s); one-shot pairs need at least 2");
}

}  // namespace

std::vector<OilDraw> enumerate_oil_draws(std::span<const TaskDataset> datasets) {
  std::vector<OilDraw> out;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    require_pairs(datasets[i], i);
    const std::size_t n = datasets[i].demos.size();
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t c = 0; c < n; ++c)
        if (m != c) out.push_back({i, m, c});
  }
  return out;
}

std::vector<OilDraw> sample_oil_draws(std::span<const TaskDataset> datasets, std::size_t count, Rng& rng,
                                      std::optional<double> paired_fraction) {
  if (datasets.empty()) throw Error(ErrorKind::data, "no task datasets to sample from");
  std::vector<std::size_t> paired, demos;
  if (paired_fraction) {
    if (!(*paired_fraction >= 0.0 && *paired_fraction <= 1.0))
      throw Error(ErrorKind::config, "paired_fraction must lie in [0, 1]");
    for (std::size_t i = 0; i < datasets.size(); ++i)
      (datasets[i].provenance == Provenance::paired_trial ? paired : demos).push_back(i);
  }
  const bool mixed = !paired.empty() && !demos.empty();
  std::vector<OilDraw> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t i = 0;
    if (mixed) {
      const auto& pool = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < *paired_fraction ? paired : demos;
      i = pool[uniform_index(rng, pool.size())];
    } else {
      i = uniform_index(rng, datasets.size());
    }
    require_pairs(datasets[i], i);
    const std::size_t n = datasets[i].demos.size();
    const std::size_t m = uniform_index(rng, n);
    std::size_t c = uniform_index(rng, n - 1);
    if (c >= m) ++c;
    out.push_back({i, m, c});
  }
  return out;
}

std::vector<std::size_t> contrastive_datasets(std::span<const TaskDataset> datasets) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < datasets.size(); ++i)
    if (datasets[i].provenance == Provenance::human_proxy) out.push_back(i);
  return out;
}

std::vector<ContrastivePair> enumerate_contrastive_pairs(std::span<const TaskDataset> datasets) {
  const auto eligible = contrastive_datasets(datasets);
  std::vector<ContrastivePair> out;
  for (std::size_t x = 0; x < eligible.size(); ++x) {
    const std::size_t a = eligible[x];
    for (std::size_t y = x; y < eligible.size(); ++y) {
      const std::size_t b = eligible[y];
      const bool same = datasets[a].task.same_task(datasets[b].task);
      for (std::size_t i = 0; i < datasets[a].demos.size(); ++i)
        for (std::size_t j = (a == b ? i + 1 : 0); j < datasets[b].demos.size(); ++j)
          out.push_back({a, i, b, j, same});
    }
  }
  return out;
}

std::vector<ContrastivePair> sample_contrastive_pairs(std::span<const TaskDataset> datasets,
                                                      std::size_t positives, std::size_t negatives,
                                                      Rng& rng) {
  const auto eligible = contrastive_datasets(datasets);
  std::vector<std::size_t> multi;
  for (std::size_t i : eligible)
    if (datasets[i].demos.size() >= 2) multi.push_back(i);
  std::vector<ContrastivePair> out;
  if (!multi.empty()) {
    for (std::size_t k = 0; k < positives; ++k) {
      const std::size_t d = multi[uniform_index(rng, multi.size())];
      const std::size_t n = datasets[d].demos.size();
      const std::size_t i = uniform_index(rng, n);
      std::size_t j = uniform_index(rng, n - 1);
      if (j >= i) ++j;
      out.push_back({d, i, d, j, true});
    }
  }
  if (eligible.size() >= 2) {
    for (std::size_t k = 0; k < negatives; ++k) {
      const std::size_t x = uniform_index(rng, eligible.size());
      std::size_t y = uniform_index(rng, eligible.size() - 1);
      if (y >= x) ++y;
      const std::size_t a = eligible[x];
      const std::size_t b = eligible[y];
      out.push_back({a, uniform_index(rng, datasets[a].demos.size()), b,
                     uniform_index(rng, datasets[b].demos.size()), datasets[a].task.same_task(datasets[b].task)});
    }
  }
  return out;
}

std::vector<ContrastivePair> contrastive_pairs_from_draws(std::span<const TaskDataset> datasets,
                                                          std::span<const OilDraw> draws) {
  auto eligible = [&](std::size_t i) { return datasets[i].provenance == Provenance::human_proxy; };
  std::vector<ContrastivePair> out;
  for (const OilDraw& d : draws)
    if (eligible(d.dataset)) out.push_back({d.dataset, d.scored, d.dataset, d.conditioning, true});
  if (draws.size() < 2) return out;
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const OilDraw& a = draws[k];
    const OilDraw& b = draws[(k + 1) % draws.size()];
    if (draws.size() == 2 && k == 1) break;
    if (!eligible(a.dataset) || !eligible(b.dataset)) continue;
    if (datasets[a.dataset].task.same_task(datasets[b.dataset].task)) continue;
    out.push_back({a.dataset, a.conditioning, b.dataset, b.conditioning, false});
  }
  return out;
}

LossBuilder::LossBuilder(ad::Graph& graph, const BoundModel& model, std::span<const TaskDataset> datasets)
    : graph_(graph), model_(model), datasets_(datasets) {}

ad::NodeId LossBuilder::embedding(std::size_t dataset, std::size_t demo) {
  const auto key = std::pair{dataset, demo};
  if (auto it = embeddings_.find(key); it != embeddings_.end()) return it->second;
  const ad::NodeId e = embed(graph_, model_, datasets_[dataset].demos[demo]);
  embeddings_.emplace(key, e);
  return e;
}

ad::NodeId LossBuilder::trajectory_nll(const Trajectory& trajectory, ad::NodeId embedding) {
  const NetworkConfig& c = *model_.config;
  if (trajectory.obs_dim != c.obs_dim)
    throw Error(ErrorKind::shape, "trajectory observation dim " + std::to_string(trajectory.obs_dim) +
                                      " does not match network obs_dim " + std::to_string(c.obs_dim));
  const std::size_t steps = trajectory.steps();
  const ad::NodeId mean = policy_mean(graph_, model_, policy_slots(trajectory), embedding);
  const ad::NodeId target = graph_.constant(ad::Tensor({steps, world::kActionDim}, trajectory.actions));
  return graph_.gaussian_nll(mean, model_[Param::policy_log_std], target, c.log_std_min, c.log_std_max);
}

ad::NodeId LossBuilder::bc(std::span<const Trajectory* const> trajectories, Reduction reduction) {
  if (trajectories.empty()) throw Error(ErrorKind::data, "behavior cloning loss over no trajectories");
  if (!has_zero_embedding_) {
    zero_embedding_ = graph_.constant(ad::Tensor({1, model_.config->embedding_dim}, 0.0));
    has_zero_embedding_ = true;
  }
  ad::NodeId total{};
  std::size_t steps = 0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const ad::NodeId term = trajectory_nll(*trajectories[k], zero_embedding_);
    total = k == 0 ? term : graph_.add(total, term);
    steps += trajectories[k]->steps();
  }
  return reduction == Reduction::mean ? graph_.scale(total, 1.0 / static_cast<double>(steps)) : total;
}

ad::NodeId LossBuilder::oil(std::span<const OilDraw> draws, Reduction reduction) {
  if (draws.empty()) throw Error(ErrorKind::data, "one-shot imitation loss over no demo pairs");
  ad::NodeId total{};
  std::size_t steps = 0;
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const OilDraw& d = draws[k];
    if (d.dataset >= datasets_.size()) throw Error(ErrorKind::data, "demo pair references a missing dataset");
    const TaskDataset& ds = datasets_[d.dataset];
    require_pairs(ds, d.dataset);
    if (d.scored == d.conditioning || d.scored >= ds.demos.size() || d.conditioning >= ds.demos.size())
      throw Error(ErrorKind::data, "invalid demo pair (" + std::to_string(d.scored) + ", " +
                                       std::to_string(d.conditioning) + ") in dataset " +
                                       std::to_string(d.dataset));
    const ad::NodeId term = trajectory_nll(ds.demos[d.scored], embedding(d.dataset, d.conditioning));
    total = k == 0 ? term : graph_.add(total, term);
    steps += ds.demos[d.scored].steps();
  }
  return reduction == Reduction::mean ? graph_.scale(total, 1.0 / static_cast<double>(steps)) : total;
}

ad::NodeId LossBuilder::contrastive(std::span<const ContrastivePair> pairs, double margin, Reduction reduction) {
  if (!(margin > 0.0)) throw Error(ErrorKind::config, "contrastive margin must be positive");
  if (pairs.empty()) return graph_.constant(ad::Tensor::scalar(0.0));
  ad::NodeId total{};
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const ContrastivePair& p = pairs[k];
    const ad::NodeId term = contrastive_pair_term(graph_, embedding(p.dataset_a, p.demo_a),
                                                  embedding(p.dataset_b, p.demo_b), p.same_task, margin);
    total = k == 0 ? term : graph_.add(total, term);
  }
  return reduction == Reduction::mean ? graph_.scale(total, 1.0 / static_cast<double>(pairs.size())) : total;
}

ad::NodeId contrastive_pair_term(ad::Graph& graph, ad::NodeId a, ad::NodeId b, bool same_task, double margin) {
  const ad::NodeId h = graph.squared_l2(graph.subtract(a, b));
  return same_task ? h : graph.relu(graph.add_scalar(graph.scale(h, -1.0), margin));
}

double contrastive_term(double squared_distance, bool same_task, double margin) {
  return same_task ? squared_distance : std::max(0.0, margin - squared_distance);
}

double loss_bc(const ModelParams& params, std::span<const Trajectory> trajectories, Reduction reduction) {
  ad::Graph g;
  const BoundModel m = bind(g, params);
  LossBuilder b(g, m, {});
  std::vector<const Trajectory*> ptrs;
  for (const Trajectory& t : trajectories) ptrs.push_back(&t);
  return g.value(b.bc(ptrs, reduction)).item();
}

double loss_oil(const ModelParams& params, std::span<const TaskDataset> datasets, std::span<const OilDraw> draws,
                Reduction reduction) {
  ad::Graph g;
  const BoundModel m = bind(g, params);
  LossBuilder b(g, m, datasets);
  return g.value(b.oil(draws, reduction)).item();
}

double loss_contrastive(const ModelParams& params, std::span<const TaskDataset> datasets,
                        std::span<const ContrastivePair> pairs, double margin, Reduction reduction) {
  ad::Graph g;
  const BoundModel m = bind(g, params);
  LossBuilder b(g, m, datasets);
  return g.value(b.contrastive(pairs, margin, reduction)).item();
}

double loss_total(const ModelParams& params, std::span<const TaskDataset> datasets, std::span<const OilDraw> draws,
                  double margin, Reduction reduction) {
  ad::Graph g;
  const BoundModel m = bind(g, params);
  LossBuilder b(g, m, datasets);
  const auto pairs = contrastive_pairs_from_draws(datasets, draws);
  return g.value(g.add(b.oil(draws, reduction), b.contrastive(pairs, margin, reduction))).item();
}

}  // namespace mili::policy
