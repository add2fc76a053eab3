#include "mili/core/mili.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "mili/common/error.hpp"

namespace mili::core {

namespace {

bool intersects(const std::vector<world::Task>& a, const std::vector<world::Task>& b) {
  for (const world::Task& x : a)
    for (const world::Task& y : b)
      if (x.same_task(y)) return true;
  return false;
}

}  // namespace

std::size_t TrialStore::append(Trajectory trajectory, Conditioning conditioning, world::FilterResult verdict) {
  if (!verdict.useful) throw Error(ErrorKind::data, "only trials that pass the filter can be stored");
  trajectories_.push_back(std::move(trajectory));
  conditioning_.push_back(conditioning);
  achieved_.push_back(std::move(verdict.achieved));
  embeddings_valid_ = false;
  return trajectories_.size() - 1;
}

const std::vector<policy::Embedding>& TrialStore::embeddings(const policy::ModelParams& params) const {
  const std::uint64_t version = params_version(params);
  if (!embeddings_valid_ || version != embedding_version_ || embeddings_.size() != trajectories_.size()) {
    embeddings_.clear();
    embeddings_.reserve(trajectories_.size());
    for (const Trajectory& t : trajectories_) embeddings_.push_back(policy::embed(params, t));
    embedding_version_ = version;
    embeddings_valid_ = true;
  }
  return embeddings_;
}

TrialStore TrialStore::without_labels() const {
  TrialStore out = *this;
  for (auto& a : out.achieved_) a.clear();
  return out;
}

TrialStore TrialStore::prefix(std::size_t count) const {
  TrialStore out;
  count = std::min(count, size());
  out.trajectories_.assign(trajectories_.begin(), trajectories_.begin() + static_cast<std::ptrdiff_t>(count));
  out.conditioning_.assign(conditioning_.begin(), conditioning_.begin() + static_cast<std::ptrdiff_t>(count));
  out.achieved_.assign(achieved_.begin(), achieved_.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

std::uint64_t params_version(const policy::ModelParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const ad::Tensor& t : params.tensors) {
    for (double v : t.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = mix64(h ^ bits);
    }
    h = mix64(h ^ t.size());
  }
  return h;
}

void validate(const MiliConfig& c) {
  if (!(c.alpha > -1.0 && c.alpha <= 1.0)) throw Error(ErrorKind::config, "mili.alpha: must lie in (-1, 1]");
  if (c.iterations == 0) throw Error(ErrorKind::config, "mili.iterations: must be positive");
  policy::validate(c.retrain.train);
}

policy::TrainResult pretrain(const policy::NetworkConfig& network, std::span<const TaskDataset> demos,
                             const policy::TrainConfig& config, std::uint64_t seed) {
  for (std::size_t i = 0; i < demos.size(); ++i)
    if (demos[i].demos.size() < 2)
      throw Error(ErrorKind::data, "pretraining needs at least 2 demos per task; " +
                                       world::describe(demos[i].task) + " has " +
                                       std::to_string(demos[i].demos.size()));
  return policy::train(policy::init_params(network, derive_seed(seed, {stream::kInit})), demos, config, seed);
}

std::vector<Trial> collect_trials(const world::World& world, const policy::ModelParams& params,
                                  std::span<const TaskDataset> demos, std::size_t count, std::uint64_t seed,
                                  std::optional<std::size_t> settle) {
  if (demos.empty()) throw Error(ErrorKind::data, "trial collection needs demonstrations to condition on");
  std::vector<Trial> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng = make_rng(seed, {stream::kCollect, n});
    const std::size_t i = uniform_index(rng, demos.size());
    if (demos[i].demos.empty()) throw Error(ErrorKind::data, "demo dataset " + std::to_string(i) + " is empty");
    const std::size_t j = uniform_index(rng, demos[i].demos.size());
    const world::Scene scene = world.sample_scene(demos[i].task, derive_seed(seed, {stream::kCollect, n, 1}));
    const policy::PolicyRunner runner(params, policy::embed(params, demos[i].demos[j]));
    Controller controller = [&runner](const world::WorldState&, const world::Observation& obs, Rng& r) {
      return policy::sample_action(runner(obs), r);
    };
    StopRule stop;
    std::optional<std::size_t> useful_at;
    if (settle)
      stop = [&](std::span<const world::WorldState> states) {
        if (!useful_at && world.filter(states, scene).useful) useful_at = states.size();
        return useful_at && states.size() >= *useful_at + *settle;
      };
    out.push_back({rollout(world, scene, controller, rng, world.config().horizon, stop), {i, j}});
  }
  return out;
}

std::size_t filter_and_store(const world::World& world, std::vector<Trial> trials, TrialStore& store) {
  std::size_t passed = 0;
  for (Trial& t : trials) {
    world::FilterResult verdict = world.filter(t.rollout.states, t.rollout.trajectory.scene);
    if (!verdict.useful) continue;
    store.append(std::move(t.rollout.trajectory), t.conditioning, std::move(verdict));
    ++passed;
  }
  return passed;
}

std::vector<TrialPair> pair_trials(const policy::ModelParams& params, const TrialStore& store, double alpha,
                                   std::size_t cap) {
  const auto& emb = store.embeddings(params);
  std::vector<TrialPair> pairs;
  for (std::size_t a = 0; a < emb.size(); ++a)
    for (std::size_t b = a + 1; b < emb.size(); ++b) {
      const double s = policy::cosine_similarity(emb[a], emb[b]);
      if (s > alpha) pairs.push_back({a, b, s});
    }
  if (cap == 0) return pairs;
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const TrialPair& x, const TrialPair& y) { return x.similarity > y.similarity; });
  std::vector<std::size_t> used(emb.size(), 0);
  std::vector<TrialPair> kept;
  for (const TrialPair& p : pairs) {
    if (used[p.a] >= cap || used[p.b] >= cap) continue;
    ++used[p.a];
    ++used[p.b];
    kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end(),
            [](const TrialPair& x, const TrialPair& y) { return std::pair{x.a, x.b} < std::pair{y.a, y.b}; });
  return kept;
}

std::vector<TaskDataset> paired_datasets(const TrialStore& store, std::span<const TrialPair> pairs) {
  std::vector<TaskDataset> out;
  out.reserve(pairs.size());
  for (const TrialPair& p : pairs) {
    TaskDataset ds{.task = {.subject = world::kNoTarget}, .provenance = Provenance::paired_trial};
    ds.demos = {store.trajectory(p.a), store.trajectory(p.b)};
    out.push_back(std::move(ds));
  }
  return out;
}

double pairing_precision(const TrialStore& store, std::span<const TrialPair> pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t hits = 0;
  for (const TrialPair& p : pairs)
    hits += intersects(store.achieved(OracleAccess{}, p.a), store.achieved(OracleAccess{}, p.b));
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double random_pairing_precision(const TrialStore& store) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t a = 0; a < store.size(); ++a)
    for (std::size_t b = a + 1; b < store.size(); ++b) {
      hits += intersects(store.achieved(OracleAccess{}, a), store.achieved(OracleAccess{}, b));
      ++total;
    }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

policy::TrainResult retrain(const policy::ModelParams& params, std::span<const TaskDataset> datasets,
                            const RetrainConfig& config, std::uint64_t seed) {
  policy::TrainConfig train = config.train;
  train.objective = config.with_contrastive ? policy::Objective::total : policy::Objective::oil;
  policy::ModelParams start =
      config.from_scratch ? policy::init_params(params.config, derive_seed(seed, {stream::kInit})) : params;
  return policy::train(std::move(start), datasets, train, seed);
}

policy::TrainResult retrain_with(const policy::ModelParams& params, std::span<const TaskDataset> demos,
                                 std::vector<TaskDataset> extra, const RetrainConfig& config, std::uint64_t seed) {
  std::vector<TaskDataset> augmented(demos.begin(), demos.end());
  augmented.insert(augmented.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
  return retrain(params, augmented, config, seed);
}

Pairing learned_pairing(double alpha, std::size_t cap) {
  return [alpha, cap](const policy::ModelParams& params, const TrialStore& store, IterationReport& report) {
    const auto pairs = pair_trials(params, store, alpha, cap);
    report.pairs = pairs.size();
    report.pairing_precision = pairing_precision(store, pairs);
    return paired_datasets(store, pairs);
  };
}

IterationReport improve_round(policy::ModelParams& params, std::span<const TaskDataset> demos, TrialStore& store,
                              const world::World& world, std::vector<Trial> trials, const MiliConfig& config,
                              std::uint64_t seed, std::size_t iteration, const Pairing& pairing) {
  IterationReport report{.trials = trials.size()};
  report.passed = filter_and_store(world, std::move(trials), store);
  report.pass_rate = report.trials == 0 ? 0.0 : static_cast<double>(report.passed) / static_cast<double>(report.trials);
  report.store_size = store.size();
  report.random_precision = random_pairing_precision(store);
  auto extra = pairing ? pairing(params, store, report)
                       : learned_pairing(config.alpha, config.pair_cap)(params, store, report);
  if (!extra.empty()) {
    auto trained = retrain_with(params, demos, std::move(extra), config.retrain,
                                derive_seed(seed, {stream::kRetrain, iteration}));
    params = std::move(trained.params);
    report.retrained = true;
    report.sampler = trained.sampler;
    report.curve = std::move(trained.curve);
  }
  return report;
}

MiliResult improve(const world::World& world, const policy::ModelParams& pretrained,
                   std::span<const TaskDataset> demos, const MiliConfig& config, std::uint64_t seed,
                   ImproveOptions options) {
  validate(config);
  MiliResult result{.params = pretrained};
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::vector<Trial> trials;
    if (it == 0 && options.first_round)
      trials = std::move(*options.first_round);
    else
      trials = collect_trials(world, result.params, demos, config.trials, derive_seed(seed, {stream::kCollect, it}),
                              config.trial_settle);
    result.iterations.push_back(improve_round(result.params, demos, result.store, world, std::move(trials), config,
                                              seed, it, options.pairing));
  }
  return result;
}

}  // namespace mili::core
