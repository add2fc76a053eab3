#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mili/common/error.hpp"
#include "mili/policy/losses.hpp"
#include "mili/policy/train.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace mili;
using namespace mili::policy;

namespace {

const world::World& small_world() {
  static const world::World w{oracle::small_world_config()};
  return w;
}

ModelParams small_params(std::uint64_t seed) {
  return init_params(oracle::small_network(small_world().observation_dim()), seed);
}

// Gradient check over all model tensors for a loss built from a bound model.
double model_gradient_error(const ModelParams& params,
                            const std::function<ad::NodeId(ad::Graph&, const BoundModel&)>& loss) {
  const NetworkConfig* config = &params.config;
  return oracle::gradient_error(
      [&](ad::Graph& g, const std::vector<ad::NodeId>& ids) {
        BoundModel m{.config = config};
        for (std::size_t i = 0; i < kParamCount; ++i) m.nodes[i] = ids[i];
        return loss(g, m);
      },
      params.tensors);
}

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

TEST(NetworkConfig, ValidateNamesField) {
  NetworkConfig c = oracle::small_network(small_world().observation_dim());
  c.embedding_dim = 0;
  try {
    validate(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("embedding_dim"), std::string::npos);
  }
  c = oracle::small_network(small_world().observation_dim() + 1);
  EXPECT_THROW(validate(c), Error);
}

TEST(Init, ShapesBoundsAndDeterminism) {
  const ModelParams p = init_params(NetworkConfig{.obs_dim = world::World(world::WorldConfig{}).observation_dim()}, 3);
  EXPECT_NO_THROW(validate(p));
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const ad::Tensor& t = p.tensors[i];
    const auto param = static_cast<Param>(i);
    if (param == Param::policy_log_std) {
      for (double v : t.values()) EXPECT_EQ(v, p.config.init_log_std);
    } else if (t.rank() == 1) {
      for (double v : t.values()) EXPECT_EQ(v, 0.0) << param_name(param);
    } else {
      // The smallest possible fan sum gives the loosest bound.
      const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
      double biggest = 0.0;
      for (double v : t.values()) biggest = std::max(biggest, std::abs(v));
      EXPECT_LE(biggest, bound) << param_name(param);
      EXPECT_GT(biggest, 0.3 * bound) << param_name(param);
    }
  }
  EXPECT_EQ(p, init_params(p.config, 3));
  EXPECT_NE(p, init_params(p.config, 4));
}

TEST(Nll, ClosedForm) {
  ActionDistribution d{.mean = {0.1, 0.2, 0.3, 0.4}, .log_std = {0, 0, 0, 0}};
  EXPECT_NEAR(nll(d, d.mean), 2.0 * kLog2Pi, 1e-12);
  EXPECT_NEAR(2.0 * kLog2Pi, 3.6757541328186907, 1e-12);
  double previous = nll(d, d.mean);
  for (double offset : {0.1, 0.2, 0.5, 1.0, 3.0}) {
    world::Action a = d.mean;
    a[2] += offset;
    const double v = nll(d, a);
    EXPECT_GT(v, previous);
    previous = v;
  }
}

TEST(Nll, NormalisesUnderQuadrature) {
  // exp(-nll) integrated over one coordinate, others at the mean with unit std.
  ActionDistribution d{.mean = {0.3, 0, 0, 0}, .log_std = {std::log(0.4), 0, 0, 0}};
  const double rest = 1.5 * kLog2Pi;
  double integral = 0.0;
  const double h = 1e-3;
  for (double x = -5.0; x <= 5.0; x += h) {
    world::Action a = d.mean;
    a[0] = x;
    integral += std::exp(-(nll(d, a) - rest)) * h;
  }
  EXPECT_NEAR(integral, 1.0, 1e-3);
}

TEST(Sampling, GreedyAndSampledActions) {
  ActionDistribution d{.mean = {0.1, 0, 0, 0}, .log_std = {-5, -5, -5, -5}};
  EXPECT_EQ(greedy_action(d), (world::Action{0.1, 0, 0, 0}));
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto a = sample_action(d, rng);
    for (std::size_t j = 0; j < world::kActionDim; ++j) EXPECT_LT(std::abs(a[j] - d.mean[j]), 0.1);
  }
  ActionDistribution wide{.mean = {0.5, -0.2, 0, 1}, .log_std = {0, -1, 0.5, 0}};
  const int n = 100000;
  std::array<double, 4> sum{};
  for (int i = 0; i < n; ++i) {
    const auto a = sample_action(wide, rng);
    for (std::size_t j = 0; j < 4; ++j) sum[j] += a[j];
  }
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_LT(std::abs(sum[j] / n - wide.mean[j]), 3.0 * std::exp(wide.log_std[j]) / std::sqrt(double(n)));
}

TEST(Embedding, DeterministicAndIgnoresEffector) {
  const auto data = oracle::small_datasets(small_world(), 2, 2, 1);
  const ModelParams p = small_params(1);
  const Trajectory& t = data[0].demos[0];
  const Embedding a = embed(p, t);
  EXPECT_EQ(a.values, embed(p, t).values);
  Trajectory moved = t;
  for (std::size_t s = 0; s < moved.steps(); ++s)
    for (std::size_t c = 0; c < world::kEffectorDim; ++c) moved.observations[s * moved.obs_dim + c] += 0.37;
  EXPECT_EQ(a.values, embed(p, moved).values);
  EXPECT_NE(a.values, embed(p, data[1].demos[0]).values);
}

TEST(PolicyForward, RepeatableAcceptsZeroAndDependsOnEmbedding) {
  const auto data = oracle::small_datasets(small_world(), 2, 2, 2);
  const ModelParams p = oracle::jittered(small_world(), 2);
  const Trajectory& t = data[0].demos[0];
  const std::span<const double> obs(t.observation(0), t.obs_dim);
  const Embedding e = embed(p, t);
  const ActionDistribution d1 = policy_forward(p, obs, e);
  const ActionDistribution d2 = policy_forward(p, obs, e);
  EXPECT_EQ(d1.mean, d2.mean);
  EXPECT_NO_THROW(policy_forward(p, obs, zero_embedding(p.config)));
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    Embedding a{.values = {gaussian(rng), gaussian(rng), gaussian(rng)}};
    Embedding b{.values = {gaussian(rng), gaussian(rng), gaussian(rng)}};
    EXPECT_NE(policy_forward(p, obs, a).mean, policy_forward(p, obs, b).mean);
  }
}

TEST(PolicyRunner, MatchesGraphForward) {
  const auto data = oracle::small_datasets(small_world(), 3, 2, 4, 6);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelParams p = oracle::jittered(small_world(), seed);
    for (const auto& ds : data) {
      const Embedding e = embed(p, ds.demos[1]);
      const PolicyRunner runner(p, e);
      const Trajectory& t = ds.demos[0];
      for (std::size_t s = 0; s < t.steps(); ++s) {
        const std::span<const double> obs(t.observation(s), t.obs_dim);
        const auto a = policy_forward(p, obs, e);
        const auto b = runner(obs);
        for (std::size_t j = 0; j < world::kActionDim; ++j) {
          EXPECT_NEAR(a.mean[j], b.mean[j], 1e-12);
          EXPECT_EQ(a.log_std[j], b.log_std[j]);
        }
      }
    }
  }
}

TEST(Cosine, ScaleInvariantAndRejectsZero) {
  Embedding a{.values = {1, 2, 3}, .norm = std::sqrt(14.0)};
  Embedding b{.values = {2, 4, 6}, .norm = 2 * std::sqrt(14.0)};
  EXPECT_NEAR(cosine_similarity(a, b), 1.0, 1e-15);
  Embedding c{.values = {-3, 0, 1}, .norm = std::sqrt(10.0)};
  EXPECT_NEAR(cosine_similarity(a, c), 0.0, 1e-15);
  EXPECT_THROW(cosine_similarity(a, Embedding{.values = {0, 0, 0}, .norm = 0}), Error);
}

TEST(LossBc, HandEnumeration) {
  const auto data = oracle::small_datasets(small_world(), 1, 2, 5, 3);
  ModelParams p = oracle::jittered(small_world(), 5);
  p[Param::policy_log_std].fill(0.0);
  // Relabel the actions with the zero-embedding policy's own means.
  Trajectory t = data[0].demos[0];
  ASSERT_EQ(t.steps(), 3u);
  const Embedding zero = zero_embedding(p.config);
  for (std::size_t s = 0; s < t.steps(); ++s) {
    const auto d = policy_forward(p, std::span<const double>(t.observation(s), t.obs_dim), zero);
    std::copy(d.mean.begin(), d.mean.end(), t.actions.begin() + static_cast<std::ptrdiff_t>(s * world::kActionDim));
  }
  const std::vector<Trajectory> one{t};
  EXPECT_NEAR(loss_bc(p, one), 3 * 2.0 * kLog2Pi, 1e-10);
  // Per-step summation on the unmodified demo.
  const Trajectory& u = data[0].demos[1];
  double manual = 0.0;
  for (std::size_t s = 0; s < u.steps(); ++s) {
    const auto d = policy_forward(p, std::span<const double>(u.observation(s), u.obs_dim), zero);
    manual += nll(d, {u.action(s)[0], u.action(s)[1], u.action(s)[2], u.action(s)[3]});
  }
  const std::vector<Trajectory> other{u};
  EXPECT_NEAR(loss_bc(p, other), manual, 1e-10);
  const std::vector<Trajectory> twice{u, u};
  EXPECT_NEAR(loss_bc(p, twice), 2.0 * manual, 1e-10);
  EXPECT_NEAR(loss_bc(p, other, Reduction::mean), manual / static_cast<double>(u.steps()), 1e-12);
}

TEST(LossOil, FullSumEqualsEnumeration) {
  const auto data = oracle::small_datasets(small_world(), 2, 3, 6);
  const ModelParams p = oracle::jittered(small_world(), 6);
  const auto draws = enumerate_oil_draws(data);
  ASSERT_EQ(draws.size(), 12u);
  double literal = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t n = 0; n < 3; ++n) {
        if (m == n) continue;
        const Embedding e = embed(p, data[i].demos[n]);
        const Trajectory& t = data[i].demos[m];
        for (std::size_t s = 0; s < t.steps(); ++s) {
          const auto d = policy_forward(p, std::span<const double>(t.observation(s), t.obs_dim), e);
          literal += nll(d, {t.action(s)[0], t.action(s)[1], t.action(s)[2], t.action(s)[3]});
        }
      }
  EXPECT_NEAR(loss_oil(p, data, draws), literal, 1e-10);
}

TEST(LossOil, PairEnumerationRules) {
  const auto data = oracle::small_datasets(small_world(), 1, 2, 7);
  const auto draws = enumerate_oil_draws(data);
  ASSERT_EQ(draws.size(), 2u);
  for (const auto& d : draws) EXPECT_NE(d.scored, d.conditioning);
  const ModelParams p = small_params(7);
  const std::vector<OilDraw> self{{0, 1, 1}};
  EXPECT_THROW(loss_oil(p, data, self), Error);
  auto single = data;
  single[0].demos.resize(1);
  EXPECT_THROW(enumerate_oil_draws(single), Error);
}

TEST(LossContrastive, HingeArithmetic) {
  EXPECT_EQ(contrastive_term(0.0, true, 1.0), 0.0);
  EXPECT_EQ(contrastive_term(0.25, false, 1.0), 0.75);
  EXPECT_EQ(contrastive_term(1.0, false, 1.0), 0.0);
  EXPECT_EQ(contrastive_term(2.5, false, 1.0), 0.0);
  EXPECT_EQ(contrastive_term(0.4, true, 1.0), 0.4);
  // Graph version on constructed embeddings: |(0.3, 0.4) - 0|^2 = 0.25.
  ad::Graph g;
  const auto a = g.constant(ad::Tensor::matrix(1, 2, {0.3, 0.4}));
  const auto b = g.constant(ad::Tensor::matrix(1, 2, {0.0, 0.0}));
  EXPECT_EQ(g.value(contrastive_pair_term(g, a, b, false, 1.0)).item(), 0.75);
  EXPECT_EQ(g.value(contrastive_pair_term(g, a, b, true, 1.0)).item(), 0.25);
  EXPECT_EQ(g.value(contrastive_pair_term(g, a, a, true, 1.0)).item(), 0.0);
  const auto far = g.constant(ad::Tensor::matrix(1, 2, {1.0, 0.0}));
  EXPECT_EQ(g.value(contrastive_pair_term(g, far, b, false, 1.0)).item(), 0.0);
}

TEST(LossContrastive, FullSumMatchesEmbeddings) {
  const auto data = oracle::small_datasets(small_world(), 3, 2, 8);
  const ModelParams p = oracle::jittered(small_world(), 8);
  const auto pairs = enumerate_contrastive_pairs(data);
  // 3 within-task pairs plus 3 * 4 cross-task pairs.
  ASSERT_EQ(pairs.size(), 15u);
  double expected = 0.0;
  for (const auto& pr : pairs) {
    const auto ea = embed(p, data[pr.dataset_a].demos[pr.demo_a]);
    const auto eb = embed(p, data[pr.dataset_b].demos[pr.demo_b]);
    double h = 0.0;
    for (std::size_t k = 0; k < ea.values.size(); ++k) h += (ea.values[k] - eb.values[k]) * (ea.values[k] - eb.values[k]);
    expected += contrastive_term(h, pr.same_task, 1.0);
  }
  EXPECT_NEAR(loss_contrastive(p, data, pairs, 1.0), expected, 1e-10);
}

TEST(LossContrastive, PairedTrialsNeverParticipate) {
  auto data = oracle::small_datasets(small_world(), 3, 2, 9);
  data[1].provenance = Provenance::paired_trial;
  for (const auto& pr : enumerate_contrastive_pairs(data)) {
    EXPECT_NE(pr.dataset_a, 1u);
    EXPECT_NE(pr.dataset_b, 1u);
  }
  const std::vector<OilDraw> draws{{0, 0, 1}, {1, 0, 1}, {2, 1, 0}};
  for (const auto& pr : contrastive_pairs_from_draws(data, draws)) {
    EXPECT_NE(pr.dataset_a, 1u);
    EXPECT_NE(pr.dataset_b, 1u);
  }
}

TEST(LossTotal, EqualsSumOfParts) {
  const auto data = oracle::small_datasets(small_world(), 3, 3, 10);
  const ModelParams p = oracle::jittered(small_world(), 10);
  Rng rng(10);
  const auto draws = sample_oil_draws(data, 6, rng);
  const auto pairs = contrastive_pairs_from_draws(data, draws);
  EXPECT_NEAR(loss_total(p, data, draws, 1.0),
              loss_oil(p, data, draws) + loss_contrastive(p, data, pairs, 1.0), 1e-10);
}

TEST(GradientOracle, AllLosses) {
  const auto data = oracle::small_datasets(small_world(), 2, 3, 11, 3);
  const auto draws = enumerate_oil_draws(data);
  const auto pairs = enumerate_contrastive_pairs(data);
  std::vector<const Trajectory*> pooled;
  for (const auto& ds : data)
    for (const auto& t : ds.demos) pooled.push_back(&t);
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    ModelParams p = oracle::jittered(small_world(), 100 + draw);
    p[Param::policy_log_std].fill(-0.5);
    EXPECT_LT(model_gradient_error(p, [&](ad::Graph& g, const BoundModel& m) {
                LossBuilder b(g, m, data);
                return b.bc(pooled, Reduction::sum);
              }),
              1e-4)
        << "bc draw " << draw;
    EXPECT_LT(model_gradient_error(p, [&](ad::Graph& g, const BoundModel& m) {
                LossBuilder b(g, m, data);
                return b.oil(draws, Reduction::sum);
              }),
              1e-4)
        << "oil draw " << draw;
    EXPECT_LT(model_gradient_error(p, [&](ad::Graph& g, const BoundModel& m) {
                LossBuilder b(g, m, data);
                return b.contrastive(pairs, 1.0, Reduction::sum);
              }),
              1e-4)
        << "contrastive draw " << draw;
    EXPECT_LT(model_gradient_error(p, [&](ad::Graph& g, const BoundModel& m) {
                LossBuilder b(g, m, data);
                return g.add(b.oil(draws, Reduction::sum), b.contrastive(pairs, 1.0, Reduction::sum));
              }),
              1e-4)
        << "total draw " << draw;
  }
}

TEST(GradientOracle, TotalGradientIsSumOfParts) {
  const auto data = oracle::small_datasets(small_world(), 2, 3, 12, 3);
  const auto draws = enumerate_oil_draws(data);
  const auto pairs = enumerate_contrastive_pairs(data);
  const ModelParams p = oracle::jittered(small_world(), 12);
  auto grads = [&](int which) {
    ad::Graph g;
    const BoundModel m = bind(g, p);
    LossBuilder b(g, m, data);
    ad::NodeId out = which == 0 ? b.oil(draws, Reduction::sum) : b.contrastive(pairs, 1.0, Reduction::sum);
    if (which == 2) out = g.add(b.oil(draws, Reduction::sum), out);
    return g.backward(out);
  };
  const auto oil = grads(0), con = grads(1), total = grads(2);
  for (std::size_t i = 0; i < kParamCount; ++i)
    for (std::size_t k = 0; k < total[i].size(); ++k) EXPECT_NEAR(total[i][k], oil[i][k] + con[i][k], 1e-9);
}

TEST(Samplers, PairedFractionControlsMix) {
  auto data = oracle::small_datasets(small_world(), 4, 2, 13);
  for (std::size_t i = 1; i < 4; ++i) data[i].provenance = Provenance::paired_trial;
  Rng rng(13);
  const auto uniform_draws = sample_oil_draws(data, 4000, rng);
  const auto mixed = sample_oil_draws(data, 4000, rng, 0.25);
  auto paired_share = [&](const std::vector<OilDraw>& d) {
    double n = 0;
    for (const auto& x : d) n += data[x.dataset].provenance == Provenance::paired_trial;
    return n / static_cast<double>(d.size());
  };
  EXPECT_NEAR(paired_share(uniform_draws), 0.75, 0.03);
  EXPECT_NEAR(paired_share(mixed), 0.25, 0.03);
  for (const auto& d : mixed) EXPECT_NE(d.scored, d.conditioning);
  EXPECT_THROW(sample_oil_draws(data, 1, rng, 1.5), Error);
}

TEST(Train, ConfigValidationNamesField) {
  TrainConfig c;
  c.batch = 0;
  try {
    validate(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("train.batch"), std::string::npos);
  }
}

TEST(Train, TotalLossDecreasesAndIsDeterministic) {
  const auto data = oracle::small_datasets(small_world(), 4, 3, 14, 5);
  const ModelParams start = small_params(14);
  TrainConfig c{.steps = 200, .batch = 4, .curve_interval = 20};
  c.adam.lr = 3e-3;
  const auto draws = enumerate_oil_draws(data);
  const double before = loss_total(start, data, draws, 1.0, Reduction::mean);
  const auto a = train(start, data, c, 1);
  const double after = loss_total(a.params, data, draws, 1.0, Reduction::mean);
  EXPECT_LT(after, before);
  EXPECT_EQ(a.curve.size(), 10u);
  EXPECT_EQ(a.curve.back().step, 200u);
  EXPECT_EQ(a.params, train(start, data, c, 1).params);
  EXPECT_NE(a.params, train(start, data, c, 2).params);
}

TEST(Train, BehaviorCloningLossDecreases) {
  const auto data = oracle::small_datasets(small_world(), 4, 3, 15, 5);
  const ModelParams start = small_params(15);
  TrainConfig c{.objective = Objective::bc, .steps = 200, .batch = 4};
  c.adam.lr = 3e-3;
  std::vector<Trajectory> pooled;
  for (const auto& ds : data) pooled.insert(pooled.end(), ds.demos.begin(), ds.demos.end());
  const auto result = train(start, data, c, 3);
  EXPECT_LT(loss_bc(result.params, pooled), loss_bc(start, pooled));
  EXPECT_EQ(result.sampler.draws, 0u);
}

TEST(Train, PairedDatasetsAreDrawn) {
  auto data = oracle::small_datasets(small_world(), 4, 2, 16);
  data[3].provenance = Provenance::paired_trial;
  TrainConfig c{.objective = Objective::oil, .steps = 100, .batch = 4};
  const auto result = train(small_params(16), data, c, 4);
  EXPECT_EQ(result.sampler.draws, 400u);
  EXPECT_GT(result.sampler.paired_trial_draws, 0u);
}
