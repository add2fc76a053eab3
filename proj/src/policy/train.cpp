#include "mili/policy/train.hpp"

#include <string>

#include "mili/common/error.hpp"

namespace mili::policy {

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::bc: return "bc";
    case Objective::oil: return "oil";
    case Objective::total: return "total";
  }
  return "unknown";
}

Objective objective_from_string(std::string_view name) {
  for (Objective o : {Objective::bc, Objective::oil, Objective::total})
    if (to_string(o) == name) return o;
  throw Error(ErrorKind::config, "unknown training objective '" + std::string(name) + "'");
}

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* field, const char* why) {
    if (!ok) throw Error(ErrorKind::config, std::string("train.") + field + ": " + why);
  };
  require(c.batch > 0, "batch", "must be positive");
  require(c.margin > 0.0, "margin", "must be positive");
  require(c.contrastive_weight >= 0.0, "contrastive_weight", "must be non-negative");
  require(c.adam.lr > 0.0, "lr", "must be positive");
  require(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0, "beta1", "must lie in [0, 1)");
  require(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0, "beta2", "must lie in [0, 1)");
  require(c.adam.epsilon > 0.0, "epsilon", "must be positive");
  require(c.curve_interval > 0, "curve_interval", "must be positive");
  require(!c.paired_fraction || (*c.paired_fraction >= 0.0 && *c.paired_fraction <= 1.0), "paired_fraction",
          "must lie in [0, 1]");
}

TrainResult train(ModelParams initial, std::span<const TaskDataset> datasets, const TrainConfig& config,
                  std::uint64_t seed) {
  validate(config);
  validate(initial);
  if (datasets.empty()) throw Error(ErrorKind::data, "training needs at least one task dataset");

  TrainResult result{.params = std::move(initial)};
  ad::AdamState adam = ad::make_adam_state(result.params.tensors, config.adam);
  Rng rng = make_rng(seed, {stream::kTrain});

  std::vector<const Trajectory*> pooled;
  if (config.objective == Objective::bc)
    for (const TaskDataset& ds : datasets)
      for (const Trajectory& t : ds.demos) pooled.push_back(&t);
  if (config.objective == Objective::bc && pooled.empty())
    throw Error(ErrorKind::data, "behavior cloning needs at least one demo");

  CurvePoint window;
  std::size_t in_window = 0;
  for (std::size_t step = 0; step < config.steps; ++step) try {
    ad::Graph g;
    const BoundModel m = bind(g, result.params);
    LossBuilder builder(g, m, datasets);
    ad::NodeId imitation{};
    std::vector<OilDraw> draws;
    if (config.objective == Objective::bc) {
      std::vector<const Trajectory*> batch(config.batch);
      for (auto& t : batch) t = pooled[uniform_index(rng, pooled.size())];
      imitation = builder.bc(batch, config.reduction);
    } else {
      draws = sample_oil_draws(datasets, config.batch, rng, config.paired_fraction);
      for (const OilDraw& d : draws) {
        ++result.sampler.draws;
        if (datasets[d.dataset].provenance == Provenance::paired_trial) ++result.sampler.paired_trial_draws;
      }
      imitation = builder.oil(draws, config.reduction);
    }
    ad::NodeId loss = imitation;
    double contrastive_value = 0.0;
    if (config.objective == Objective::total && config.contrastive_weight > 0.0) {
      const auto pairs = contrastive_pairs_from_draws(datasets, draws);
      if (!pairs.empty()) {
        const ad::NodeId c = builder.contrastive(pairs, config.margin, config.reduction);
        contrastive_value = g.value(c).item();
        loss = g.add(imitation, g.scale(c, config.contrastive_weight));
      }
    }

    const std::vector<ad::Tensor> grads = g.backward(loss);
    ad::adam_step(result.params.tensors, grads, adam);

    window.total += g.value(loss).item();
    window.imitation += g.value(imitation).item();
    window.contrastive += contrastive_value;
    if (++in_window == config.curve_interval || step + 1 == config.steps) {
      const double n = static_cast<double>(in_window);
      result.curve.push_back({step + 1, window.total / n, window.imitation / n, window.contrastive / n});
      window = {};
      in_window = 0;
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numeric) throw;
    throw Error(ErrorKind::numeric, "training diverged at step " + std::to_string(step) + ": " + e.what());
  }
  return result;
}

}  // namespace mili::policy
