#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mili/autodiff/adam.hpp"
#include "mili/autodiff/graph.hpp"
#include "mili/common/error.hpp"
#include "support/gradcheck.hpp"

using namespace mili;
using ad::Graph;
using ad::NodeId;
using ad::Tensor;
using oracle::gradient_error;
using oracle::random_tensor;

namespace {

constexpr double kTolerance = 1e-4;
constexpr int kDraws = 20;

// Runs the gradient check on kDraws random parameter sets.
void check_op(const char* name, const std::vector<ad::Shape>& shapes, const oracle::LossFn& fn, double lo = -1.0,
              double hi = 1.0) {
  for (int draw = 0; draw < kDraws; ++draw) {
    Rng rng = make_rng(draw, {99});
    std::vector<Tensor> params;
    for (const auto& s : shapes) params.push_back(random_tensor(s, rng, lo, hi));
    EXPECT_LT(gradient_error(fn, params), kTolerance) << name << " draw " << draw;
  }
}

// Weighted sum so every output element gets a distinct upstream gradient.
NodeId weighted(Graph& g, NodeId x) {
  const Tensor& v = g.value(x);
  Tensor w(v.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7) - 0.05 * static_cast<double>(i % 3);
  return g.sum(g.multiply(x, g.constant(w)));
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
}

TEST(Graph, ForwardValues) {
  Graph g;
  const NodeId a = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const NodeId b = g.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  EXPECT_EQ(g.value(g.matmul(a, b)).storage(), (std::vector<double>{19, 22, 43, 50}));
  EXPECT_EQ(g.value(g.add(a, b)).storage(), (std::vector<double>{6, 8, 10, 12}));
  EXPECT_EQ(g.value(g.sum_rows(a)).storage(), (std::vector<double>{4, 6}));
  EXPECT_EQ(g.value(g.mean(a)).item(), 2.5);
  EXPECT_EQ(g.value(g.squared_l2(a)).item(), 30.0);
  EXPECT_EQ(g.value(g.relu(g.add_scalar(a, -2.5))).storage(), (std::vector<double>{0, 0, 0.5, 1.5}));
  EXPECT_EQ(g.value(g.slice_cols(a, 1, 2)).storage(), (std::vector<double>{2, 4}));
  const std::vector<NodeId> parts{a, b};
  EXPECT_EQ(g.value(g.concat_cols(parts)).storage(), (std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8}));
}

TEST(Graph, ShapeMismatchThrows) {
  Graph g;
  const NodeId a = g.constant(Tensor({2, 3}));
  const NodeId b = g.constant(Tensor({2, 3}));
  try {
    g.matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  EXPECT_THROW(g.add(a, g.constant(Tensor({3, 2}))), Error);
}

TEST(Graph, GaussianNllMatchesClosedForm) {
  Graph g;
  const NodeId mean = g.constant(Tensor::matrix(1, 2, {0.5, -1.0}));
  const NodeId log_std = g.constant(Tensor::vector({0.0, std::log(2.0)}));
  const NodeId target = g.constant(Tensor::matrix(1, 2, {1.5, -1.0}));
  const double expected = 0.0 + 1.0 / 2.0 + std::log(2.0) + 0.0 + std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(g.value(g.gaussian_nll(mean, log_std, target, -5.0, 2.0)).item(), expected, 1e-12);
}

TEST(Graph, SegmentSoftmaxRespectsMask) {
  Graph g;
  const NodeId x = g.constant(Tensor::matrix(4, 1, {1.0, 2.0, 0.0, 5.0}));
  const std::vector<double> mask{1, 1, 1, 0};
  const Tensor& y = g.value(g.segment_softmax(x, 2, mask));
  EXPECT_NEAR(y[0], 1.0 / (1.0 + std::exp(1.0)), 1e-12);
  EXPECT_NEAR(y[0] + y[1], 1.0, 1e-12);
  EXPECT_EQ(y[2], 1.0);
  EXPECT_EQ(y[3], 0.0);
  const std::vector<double> empty{1, 1, 0, 0};
  EXPECT_THROW(g.segment_softmax(x, 2, empty), Error);
}

TEST(Graph, ConstantsGetNoGradientAndParametersDo) {
  Graph g;
  const NodeId p = g.parameter(Tensor::vector({1.0, 2.0}));
  const NodeId c = g.constant(Tensor::vector({3.0, 4.0}));
  const auto grads = g.backward(g.sum(g.multiply(p, c)));
  ASSERT_EQ(grads.size(), 1u);
  EXPECT_EQ(grads[0].storage(), (std::vector<double>{3.0, 4.0}));
}

TEST(Graph, BackwardNeedsScalar) {
  Graph g;
  const NodeId p = g.parameter(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(g.backward(p), Error);
}

TEST(GradientOracle, Elementwise) {
  check_op("add", {{3, 4}, {3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.add(p[0], p[1])); });
  check_op("subtract", {{3, 4}, {3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.subtract(p[0], p[1])); });
  check_op("multiply", {{3, 4}, {3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.multiply(p[0], p[1])); });
  check_op("scale", {{3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.scale(p[0], -1.7)); });
  check_op("add_scalar", {{3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.add_scalar(p[0], 0.4)); });
  check_op("relu", {{3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.relu(p[0])); });
  check_op("tanh", {{3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.tanh(p[0])); });
  check_op("softplus", {{3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.softplus(p[0])); });
}

TEST(GradientOracle, Reductions) {
  check_op("sum", {{3, 4}}, [](Graph& g, const auto& p) { return g.sum(g.multiply(p[0], p[0])); });
  check_op("mean", {{3, 4}}, [](Graph& g, const auto& p) { return g.mean(g.multiply(p[0], p[0])); });
  check_op("sum_rows", {{3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.sum_rows(p[0])); });
  check_op("mean_rows", {{3, 4}}, [](Graph& g, const auto& p) { return weighted(g, g.mean_rows(p[0])); });
  check_op("squared_l2", {{3, 4}}, [](Graph& g, const auto& p) { return g.squared_l2(p[0]); });
}

TEST(GradientOracle, LinearAlgebraAndLayout) {
  check_op("matmul", {{3, 4}, {4, 2}}, [](Graph& g, const auto& p) { return weighted(g, g.matmul(p[0], p[1])); });
  check_op("matmul_vector", {{4}, {4, 2}}, [](Graph& g, const auto& p) { return weighted(g, g.matmul(p[0], p[1])); });
  check_op("bias_add", {{3, 4}, {4}}, [](Graph& g, const auto& p) { return weighted(g, g.bias_add(p[0], p[1])); });
  check_op("concat_cols", {{3, 2}, {3, 3}}, [](Graph& g, const auto& p) {
    const std::vector<NodeId> parts{p[0], p[1]};
    return weighted(g, g.concat_cols(parts));
  });
  check_op("concat_rows", {{2, 3}, {4, 3}}, [](Graph& g, const auto& p) {
    const std::vector<NodeId> parts{p[0], p[1]};
    return weighted(g, g.concat_rows(parts));
  });
  check_op("slice_cols", {{3, 5}}, [](Graph& g, const auto& p) { return weighted(g, g.slice_cols(p[0], 1, 4)); });
  check_op("slice_rows", {{5, 3}}, [](Graph& g, const auto& p) { return weighted(g, g.slice_rows(p[0], 2, 5)); });
}

TEST(GradientOracle, Conv1d) {
  for (const ad::Conv1dSpec spec : {ad::Conv1dSpec{3, 1, 1}, ad::Conv1dSpec{5, 2, 2}, ad::Conv1dSpec{2, 2, 0}})
    check_op("conv1d", {{9, 3}, {spec.kernel * 3, 4}, {4}},
             [spec](Graph& g, const auto& p) { return weighted(g, g.conv1d(p[0], p[1], p[2], spec)); });
}

TEST(GradientOracle, GaussianNll) {
  // log-std inside the clamp range, so the gradient is smooth.
  check_op("gaussian_nll", {{5, 4}, {4}, {5, 4}},
           [](Graph& g, const auto& p) { return g.gaussian_nll(p[0], p[1], p[2], -5.0, 2.0); });
}

TEST(GradientOracle, SegmentOps) {
  const std::vector<double> mask{1, 1, 0, 1, 1, 1};
  check_op("segment_softmax", {{6, 2}}, [&](Graph& g, const auto& p) {
    return weighted(g, g.segment_softmax(p[0], 3, mask));
  });
  check_op("segment_weighted_sum", {{6, 2}, {6, 3}}, [](Graph& g, const auto& p) {
    return weighted(g, g.segment_weighted_sum(p[0], p[1], 3));
  });
  check_op("softmax_pool", {{6, 2}, {6, 3}}, [&](Graph& g, const auto& p) {
    return weighted(g, g.segment_weighted_sum(g.segment_softmax(p[0], 3, mask), p[1], 3));
  });
}

TEST(GradientOracle, SharedSubexpressionsAccumulate) {
  check_op("reuse", {{2, 2}}, [](Graph& g, const auto& p) {
    const NodeId t = g.tanh(p[0]);
    return g.sum(g.add(g.matmul(t, t), g.multiply(t, p[0])));
  });
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Tensor> params{Tensor::vector({1.0, -2.0})};
  const std::vector<Tensor> grads{Tensor::vector({0.5, -3.0})};
  auto state = ad::make_adam_state(params, {.lr = 0.1});
  ad::adam_step(params, grads, state);
  // Bias-corrected first step is lr * g / (|g| + eps').
  EXPECT_NEAR(params[0][0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-9);
  EXPECT_NEAR(params[0][1], -2.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-9);
  EXPECT_EQ(state.t, 1u);
}

TEST(Adam, RejectsNonFiniteGradientWithoutTouchingParams) {
  std::vector<Tensor> params{Tensor::vector({1.0, 2.0})};
  const std::vector<Tensor> grads{Tensor::vector({0.1, std::nan("")})};
  auto state = ad::make_adam_state(params);
  try {
    ad::adam_step(params, grads, state);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
  EXPECT_EQ(params[0].storage(), (std::vector<double>{1.0, 2.0}));
}

TEST(Adam, MinimisesQuadratic) {
  std::vector<Tensor> params{Tensor::vector({3.0, -4.0})};
  auto state = ad::make_adam_state(params, {.lr = 0.05});
  for (int i = 0; i < 2000; ++i) {
    Graph g;
    const NodeId p = g.parameter(params[0]);
    auto grads = g.backward(g.squared_l2(g.add_scalar(p, -1.0)));
    ad::adam_step(params, grads, state);
  }
  EXPECT_NEAR(params[0][0], 1.0, 1e-3);
  EXPECT_NEAR(params[0][1], 1.0, 1e-3);
}
