#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mili/common/error.hpp"
#include "mili/core/mili.hpp"
#include "mili/expert/expert.hpp"
#include "support/fixtures.hpp"

using namespace mili;
using namespace mili::core;

namespace {

const world::World& small_world() {
  static const world::World w{oracle::small_world_config()};
  return w;
}

std::vector<Trial> expert_trials(std::size_t tasks, std::size_t per_task, std::uint64_t seed) {
  return oracle::expert_trials(small_world(), tasks, per_task, seed);
}

TrialStore store_of(const std::vector<Trial>& trials) { return oracle::store_of(small_world(), trials); }

policy::ModelParams small_params(std::uint64_t seed) {
  return oracle::jittered(small_world(), seed);
}

// Literal definition: every unordered pair whose cosine exceeds alpha.
std::set<std::pair<std::size_t, std::size_t>> brute_force_pairs(const policy::ModelParams& p,
                                                                const std::vector<Trajectory>& trajectories,
                                                                double alpha) {
  std::vector<std::vector<double>> e;
  for (const auto& t : trajectories) e.push_back(policy::embed(p, t).values);
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < e.size(); ++a)
    for (std::size_t b = a + 1; b < e.size(); ++b) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < e[a].size(); ++k) {
        dot += e[a][k] * e[b][k];
        na += e[a][k] * e[a][k];
        nb += e[b][k] * e[b][k];
      }
      if (dot / std::sqrt(na * nb) > alpha) out.insert({a, b});
    }
  return out;
}

std::set<std::pair<std::size_t, std::size_t>> as_set(const std::vector<TrialPair>& pairs) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (const auto& p : pairs) out.insert({p.a, p.b});
  return out;
}

std::vector<Trajectory> trajectories_of(const TrialStore& store) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(store.trajectory(i));
  return out;
}

}  // namespace

TEST(Pairing, MatchesBruteForceOnTwentyTrials) {
  const TrialStore store = store_of(expert_trials(5, 4, 1));
  ASSERT_EQ(store.size(), 20u);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = small_params(seed);
    for (double alpha : {0.0, 0.5, 0.9, 0.99}) {
      const auto pairs = pair_trials(p, store, alpha);
      EXPECT_EQ(as_set(pairs), brute_force_pairs(p, trajectories_of(store), alpha)) << seed << " " << alpha;
      EXPECT_EQ(as_set(pairs).size(), pairs.size());
      for (const auto& pr : pairs) {
        EXPECT_LT(pr.a, pr.b);
        EXPECT_GT(pr.similarity, alpha);
      }
    }
  }
}

TEST(Pairing, NeverReadsLabels) {
  const TrialStore store = store_of(expert_trials(5, 4, 20));
  const auto p = small_params(20);
  EXPECT_EQ(pair_trials(p, store.without_labels(), 0.9), pair_trials(p, store, 0.9));
}

TEST(Pairing, InvariantToEmbeddingRescaling) {
  const TrialStore store = store_of(expert_trials(5, 4, 2));
  const auto p = small_params(2);
  const auto base = pair_trials(p, store, 0.9);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    auto scaled = p;
    for (double& v : scaled[policy::Param::embed_w].values()) v *= c;
    for (double& v : scaled[policy::Param::embed_b].values()) v *= c;
    EXPECT_EQ(as_set(pair_trials(scaled, store, 0.9)), as_set(base)) << c;
  }
}

TEST(Pairing, InvariantToStoreOrder) {
  auto trials = expert_trials(5, 4, 3);
  const auto p = small_params(3);
  const TrialStore forward = store_of(trials);
  std::vector<std::size_t> order(trials.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;
  Rng rng(3);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Trial> permuted;
  for (std::size_t i : order) permuted.push_back(trials[i]);
  const TrialStore shuffled = store_of(permuted);
  std::set<std::pair<std::size_t, std::size_t>> mapped;
  for (const auto& pr : pair_trials(p, shuffled, 0.9))
    mapped.insert(std::minmax(order[pr.a], order[pr.b]));
  EXPECT_EQ(mapped, as_set(pair_trials(p, forward, 0.9)));
}

TEST(Pairing, CapLimitsParticipationAndPrefersSimilar) {
  const TrialStore store = store_of(expert_trials(5, 4, 4));
  const auto p = small_params(4);
  const auto all = pair_trials(p, store, 0.0);
  const auto capped = pair_trials(p, store, 0.0, 1);
  std::vector<std::size_t> used(store.size(), 0);
  for (const auto& pr : capped) {
    EXPECT_LE(++used[pr.a], 1u);
    EXPECT_LE(++used[pr.b], 1u);
  }
  ASSERT_FALSE(capped.empty());
  double best = 0.0;
  for (const auto& pr : all) best = std::max(best, pr.similarity);
  EXPECT_TRUE(std::any_of(capped.begin(), capped.end(), [&](const TrialPair& x) { return x.similarity == best; }));
  EXPECT_EQ(pair_trials(p, store, 0.0, 1000), all);
}

TEST(Pairing, AlphaOneYieldsNothing) {
  const TrialStore store = store_of(expert_trials(3, 2, 5));
  EXPECT_TRUE(pair_trials(small_params(5), store, 1.0).empty());
}

TEST(Pairing, PrecisionCountsIntersectingAchievedSets) {
  const TrialStore store = store_of(expert_trials(4, 2, 6));
  // Trials i and i + 4 demonstrate the same task.
  const std::vector<TrialPair> same{{0, 4, 1}, {1, 5, 1}};
  const std::vector<TrialPair> mixed{{0, 4, 1}, {0, 1, 1}};
  EXPECT_EQ(pairing_precision(store, same), 1.0);
  EXPECT_EQ(pairing_precision(store, mixed), 0.5);
  EXPECT_EQ(pairing_precision(store, {}), 0.0);
  const double random = random_pairing_precision(store);
  EXPECT_GE(random, 4.0 / 28.0);
  EXPECT_LE(random, 1.0);
}

TEST(TrialStore, AppendOnlyAndRejectsUselessTrials) {
  TrialStore store;
  const auto trials = expert_trials(2, 1, 7);
  EXPECT_THROW(store.append(trials[0].rollout.trajectory, trials[0].conditioning, {}), Error);
  EXPECT_EQ(filter_and_store(small_world(), trials, store), 2u);
  const Trajectory first = store.trajectory(0);
  filter_and_store(small_world(), expert_trials(2, 1, 8), store);
  EXPECT_EQ(store.size(), 4u);
  EXPECT_EQ(store.trajectory(0), first);
  EXPECT_EQ(store.conditioning(1), (Conditioning{1, 0}));
  EXPECT_EQ(store.prefix(3).size(), 3u);
  EXPECT_EQ(store.prefix(3).trajectory(2), store.trajectory(2));
}

TEST(TrialStore, WithoutLabelsDropsAchievedTasks) {
  const TrialStore store = store_of(expert_trials(2, 2, 9));
  for (std::size_t i = 0; i < store.size(); ++i) EXPECT_FALSE(store.achieved(OracleAccess{}, i).empty());
  const TrialStore blind = store.without_labels();
  for (std::size_t i = 0; i < blind.size(); ++i) {
    EXPECT_TRUE(blind.achieved(OracleAccess{}, i).empty());
    EXPECT_EQ(blind.trajectory(i), store.trajectory(i));
  }
}

TEST(TrialStore, EmbeddingCacheFollowsParameters) {
  const TrialStore store = store_of(expert_trials(2, 2, 10));
  const auto p = small_params(10);
  const auto first = store.embeddings(p)[0].values;
  EXPECT_EQ(first, policy::embed(p, store.trajectory(0)).values);
  auto q = p;
  q[policy::Param::embed_b][0] += 1.0;
  EXPECT_EQ(store.embeddings(q)[0].values, policy::embed(q, store.trajectory(0)).values);
  EXPECT_NE(store.embeddings(q)[0].values, first);
}

TEST(PairedDatasets, CarryProvenanceAndBothTrials) {
  const TrialStore store = store_of(expert_trials(3, 2, 11));
  const std::vector<TrialPair> pairs{{0, 3, 0.95}, {1, 2, 0.91}};
  const auto sets = paired_datasets(store, pairs);
  ASSERT_EQ(sets.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(sets[i].provenance, Provenance::paired_trial);
    ASSERT_EQ(sets[i].demos.size(), 2u);
    EXPECT_EQ(sets[i].demos[0], store.trajectory(pairs[i].a));
    EXPECT_EQ(sets[i].demos[1], store.trajectory(pairs[i].b));
  }
}

TEST(Improve, NoTrialsLeavesParametersUnchanged) {
  const auto demos = oracle::small_datasets(small_world(), 3, 2, 12);
  const auto p = small_params(12);
  MiliConfig config{.trials = 0};
  const MiliResult r = improve(small_world(), p, demos, config, 12);
  EXPECT_EQ(r.params, p);
  ASSERT_EQ(r.iterations.size(), 1u);
  EXPECT_FALSE(r.iterations[0].retrained);
  EXPECT_EQ(r.iterations[0].pairs, 0u);
}

TEST(Improve, RoundRetrainsOnPairsAndReportsPrecision) {
  const auto demos = oracle::small_datasets(small_world(), 3, 2, 13);
  auto p = small_params(13);
  const auto start = p;
  MiliConfig config{.alpha = -0.5};
  config.retrain.train.steps = 20;
  config.retrain.train.batch = 4;
  TrialStore store;
  const auto report = improve_round(p, demos, store, small_world(), expert_trials(3, 2, 13), config, 13, 0);
  EXPECT_EQ(report.trials, 6u);
  EXPECT_EQ(report.passed, 6u);
  EXPECT_EQ(report.store_size, 6u);
  EXPECT_EQ(report.pairs, pair_trials(start, store, -0.5, config.pair_cap).size());
  EXPECT_GT(report.pairs, 0u);
  EXPECT_TRUE(report.retrained);
  EXPECT_GT(report.sampler.paired_trial_draws, 0u);
  EXPECT_NE(p, start);
  EXPECT_EQ(report.pairing_precision, pairing_precision(store, pair_trials(start, store, -0.5, config.pair_cap)));
}

TEST(Improve, CustomPairingIsUsed) {
  const auto demos = oracle::small_datasets(small_world(), 3, 2, 14);
  auto p = small_params(14);
  MiliConfig config;
  config.retrain.train.steps = 5;
  TrialStore store;
  bool called = false;
  const Pairing none = [&](const policy::ModelParams&, const TrialStore& s, IterationReport&) {
    called = true;
    EXPECT_EQ(s.size(), 4u);
    return std::vector<TaskDataset>{};
  };
  const auto start = p;
  improve_round(p, demos, store, small_world(), expert_trials(2, 2, 14), config, 14, 0, none);
  EXPECT_TRUE(called);
  EXPECT_EQ(p, start);
}

TEST(Improve, ConfigValidation) {
  MiliConfig c{.alpha = 1.5};
  EXPECT_THROW(validate(c), Error);
  c = MiliConfig{.iterations = 0};
  EXPECT_THROW(validate(c), Error);
  EXPECT_NO_THROW(validate(MiliConfig{}));
}

TEST(CollectTrials, DeterministicAndConditionedOnDemos) {
  const auto demos = oracle::small_datasets(small_world(), 3, 2, 15);
  const auto p = small_params(15);
  const auto a = collect_trials(small_world(), p, demos, 6, 15);
  const auto b = collect_trials(small_world(), p, demos, 6, 15);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rollout.trajectory, b[i].rollout.trajectory);
    EXPECT_LT(a[i].conditioning.dataset, demos.size());
    EXPECT_LT(a[i].conditioning.demo, 2u);
    EXPECT_EQ(a[i].rollout.trajectory.steps(), small_world().config().horizon);
  }
  EXPECT_NE(collect_trials(small_world(), p, demos, 1, 16)[0].rollout.trajectory, a[0].rollout.trajectory);
  EXPECT_THROW(collect_trials(small_world(), p, {}, 1, 15), Error);
}

// A settled trial is the full-horizon trial cut `settle` steps after the
// first state prefix that passes the filter.
TEST(CollectTrials, SettleCutsAfterFirstUsefulPrefix) {
  const auto& w = small_world();
  const auto demos = oracle::small_datasets(w, 3, 2, 18);
  const auto p = small_params(18);
  constexpr std::size_t kSettle = 3;
  const auto full = collect_trials(w, p, demos, 150, 18);
  const auto cut = collect_trials(w, p, demos, 150, 18, kSettle);
  std::size_t shortened = 0;
  for (std::size_t n = 0; n < full.size(); ++n) {
    const auto& states = full[n].rollout.states;
    std::size_t expected = states.size();
    for (std::size_t k = 1; k <= states.size(); ++k)
      if (w.filter(std::span(states).first(k), full[n].rollout.trajectory.scene).useful) {
        expected = std::min(states.size(), k + kSettle);
        break;
      }
    const auto& got = cut[n].rollout;
    ASSERT_EQ(got.states.size(), expected) << "trial " << n;
    EXPECT_TRUE(std::equal(got.states.begin(), got.states.end(), states.begin()));
    const auto& a = got.trajectory;
    const auto& b = full[n].rollout.trajectory;
    EXPECT_TRUE(std::equal(a.observations.begin(), a.observations.end(), b.observations.begin()));
    EXPECT_TRUE(std::equal(a.actions.begin(), a.actions.end(), b.actions.begin()));
    EXPECT_EQ(cut[n].conditioning, full[n].conditioning);
    if (expected < states.size()) ++shortened;
  }
  EXPECT_GT(shortened, 0u);
}

TEST(Pretrain, RejectsSingleDemoTasks) {
  auto demos = oracle::small_datasets(small_world(), 2, 2, 17);
  demos[1].demos.resize(1);
  policy::TrainConfig c{.steps = 1};
  EXPECT_THROW(pretrain(oracle::small_network(small_world().observation_dim()), demos, c, 17), Error);
}
