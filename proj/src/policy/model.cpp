#include "mili/policy/model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mili/common/error.hpp"

namespace mili::policy {

namespace {

constexpr std::size_t kSlotX = 1 + world::kFeatureDim;
constexpr std::size_t kSlotY = kSlotX + 1;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ad::Conv1dSpec conv_spec(const NetworkConfig& c) {
  return {.kernel = c.conv_kernel, .stride = c.conv_stride, .padding = c.conv_kernel / 2};
}

RowMatrix to_matrix(const ad::Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.data(), static_cast<Eigen::Index>(t.rows()),
                                     static_cast<Eigen::Index>(t.cols()));
}

Eigen::RowVectorXd to_row(const ad::Tensor& t) {
  return Eigen::Map<const Eigen::RowVectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}

ActionDistribution make_distribution(const NetworkConfig& c, std::span<const double> mean,
                                     const ad::Tensor& log_std) {
  ActionDistribution d;
  for (std::size_t j = 0; j < world::kActionDim; ++j) {
    d.mean[j] = mean[j];
    d.log_std[j] = std::clamp(log_std[j], c.log_std_min, c.log_std_max);
    if (!std::isfinite(d.mean[j]))
      throw Error(ErrorKind::numeric, "policy_forward: non-finite action mean");
  }
  return d;
}

}  // namespace

void validate(const NetworkConfig& c) {
  auto require = [](bool ok, const char* field, const char* why) {
    if (!ok) throw Error(ErrorKind::config, std::string("network.") + field + ": " + why);
  };
  require(c.obs_dim > world::kEffectorDim && c.object_channels() % world::kSlotDim == 0, "obs_dim",
          "must be the effector channels plus whole object slots");
  for (auto [name, v] : {std::pair{"encoder_hidden", c.encoder_hidden}, std::pair{"feature_dim", c.feature_dim},
                         std::pair{"conv_channels", c.conv_channels}, std::pair{"conv_kernel", c.conv_kernel},
                         std::pair{"conv_stride", c.conv_stride}, std::pair{"embedding_dim", c.embedding_dim},
                         std::pair{"selection_hidden", c.selection_hidden},
                         std::pair{"selection_heads", c.selection_heads},
                         std::pair{"policy_hidden", c.policy_hidden}})
    require(v > 0, name, "must be positive");
  require(c.log_std_min < c.log_std_max, "log_std_min", "must be below log_std_max");
  require(std::isfinite(c.init_log_std), "init_log_std", "must be finite");
}

std::string_view param_name(Param p) {
  switch (p) {
    case Param::encoder_w1: return "encoder.w1";
    case Param::encoder_b1: return "encoder.b1";
    case Param::encoder_w2: return "encoder.w2";
    case Param::encoder_b2: return "encoder.b2";
    case Param::conv1_w: return "embedding.conv1.w";
    case Param::conv1_b: return "embedding.conv1.b";
    case Param::conv2_w: return "embedding.conv2.w";
    case Param::conv2_b: return "embedding.conv2.b";
    case Param::embed_w: return "embedding.out.w";
    case Param::embed_b: return "embedding.out.b";
    case Param::select_w1: return "select.w1";
    case Param::select_w1_embed: return "select.w1_embedding";
    case Param::select_b1: return "select.b1";
    case Param::select_w2: return "select.w2";
    case Param::select_b2: return "select.b2";
    case Param::policy_w1_obs: return "policy.w1_obs";
    case Param::policy_w1_embed: return "policy.w1_embedding";
    case Param::policy_b1: return "policy.b1";
    case Param::policy_w2: return "policy.w2";
    case Param::policy_b2: return "policy.b2";
    case Param::policy_w3: return "policy.w3";
    case Param::policy_b3: return "policy.b3";
    case Param::policy_log_std: return "policy.log_std";
    case Param::count: break;
  }
  return "unknown";
}

std::vector<ad::Shape> param_shapes(const NetworkConfig& c) {
  const std::size_t a = world::kActionDim;
  const std::size_t pooled = c.selection_heads * c.slot_summary_dim();
  return {
      {kSlotInputDim, c.encoder_hidden},
      {c.encoder_hidden},
      {c.encoder_hidden, c.feature_dim},
      {c.feature_dim},
      {c.conv_kernel * c.feature_dim, c.conv_channels},
      {c.conv_channels},
      {c.conv_kernel * c.conv_channels, c.conv_channels},
      {c.conv_channels},
      {c.conv_channels, c.embedding_dim},
      {c.embedding_dim},
      {c.slot_summary_dim(), c.selection_hidden},
      {c.embedding_dim, c.selection_hidden},
      {c.selection_hidden},
      {c.selection_hidden, c.selection_heads},
      {c.selection_heads},
      {pooled + world::kEffectorDim, c.policy_hidden},
      {c.embedding_dim, c.policy_hidden},
      {c.policy_hidden},
      {c.policy_hidden, c.policy_hidden},
      {c.policy_hidden},
      {c.policy_hidden, a},
      {a},
      {a},
  };
}

ModelParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  validate(config);
  ModelParams params{.config = config};
  const auto shapes = param_shapes(config);
  Rng rng = make_rng(seed, {stream::kInit});
  const std::size_t select_fan_in = config.slot_summary_dim() + config.embedding_dim;
  const std::size_t policy_fan_in =
      config.selection_heads * config.slot_summary_dim() + world::kEffectorDim + config.embedding_dim;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const auto p = static_cast<Param>(i);
    ad::Tensor t(shapes[i], 0.0);
    if (p == Param::policy_log_std) {
      t.fill(config.init_log_std);
    } else if (t.rank() == 2) {
      double fan_in = static_cast<double>(t.rows());
      double fan_out = static_cast<double>(t.cols());
      if (p == Param::conv1_w || p == Param::conv2_w) fan_out *= static_cast<double>(config.conv_kernel);
      if (p == Param::policy_w1_obs || p == Param::policy_w1_embed) fan_in = static_cast<double>(policy_fan_in);
      if (p == Param::select_w1 || p == Param::select_w1_embed) fan_in = static_cast<double>(select_fan_in);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : t.values()) v = uniform(rng, -limit, limit);
    }
    params.tensors.push_back(std::move(t));
  }
  return params;
}

void validate(const ModelParams& params) {
  const auto shapes = param_shapes(params.config);
  if (params.tensors.size() != shapes.size())
    throw Error(ErrorKind::shape, "model has " + std::to_string(params.tensors.size()) + " tensors, expected " +
                                      std::to_string(shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto name = std::string(param_name(static_cast<Param>(i)));
    if (params.tensors[i].shape() != shapes[i])
      throw Error(ErrorKind::shape, "parameter " + name + " has shape " +
                                        ad::shape_string(params.tensors[i].shape()) + ", expected " +
                                        ad::shape_string(shapes[i]));
    if (!params.tensors[i].all_finite()) throw Error(ErrorKind::numeric, "parameter " + name + " is not finite");
  }
}

BoundModel bind(ad::Graph& graph, const ModelParams& params) {
  BoundModel m{.config = &params.config};
  for (std::size_t i = 0; i < kParamCount; ++i) m.nodes[i] = graph.parameter(params.tensors[i]);
  return m;
}

namespace {

// Writes the kSlotInputDim encoder inputs of every slot of one observation.
void slot_inputs(const double* obs, std::size_t slots, double* out) {
  const double* objects = obs + world::kEffectorDim;
  for (std::size_t k = 0; k < slots; ++k) {
    const double* slot = objects + k * world::kSlotDim;
    double* dst = out + k * kSlotInputDim;
    std::copy_n(slot, world::kSlotDim, dst);
    double nearest = 0.0;
    if (slot[0] != 0.0) {
      nearest = 1.0;
      for (std::size_t j = 0; j < slots; ++j) {
        const double* other = objects + j * world::kSlotDim;
        if (j == k || other[0] == 0.0) continue;
        nearest = std::min(nearest, std::hypot(slot[kSlotX] - other[kSlotX], slot[kSlotY] - other[kSlotY]));
      }
    }
    dst[world::kSlotDim] = nearest;
  }
}

}  // namespace

SlotBatch policy_slots(const double* observations, std::size_t steps, std::size_t obs_dim) {
  const std::size_t slots = (obs_dim - world::kEffectorDim) / world::kSlotDim;
  SlotBatch b{.steps = steps,
              .slots = slots,
              .inputs = ad::Tensor({steps * slots, kSlotInputDim}),
              .relative = ad::Tensor({steps * slots, 2}),
              .mask = std::vector<double>(steps * slots, 0.0),
              .effector = ad::Tensor({steps, world::kEffectorDim})};
  for (std::size_t t = 0; t < steps; ++t) {
    const double* obs = observations + t * obs_dim;
    std::copy_n(obs, world::kEffectorDim, b.effector.data() + t * world::kEffectorDim);
    slot_inputs(obs, slots, b.inputs.data() + t * slots * kSlotInputDim);
    for (std::size_t k = 0; k < slots; ++k) {
      const double* slot = obs + world::kEffectorDim + k * world::kSlotDim;
      const std::size_t r = t * slots + k;
      b.mask[r] = slot[0] != 0.0 ? 1.0 : 0.0;
      b.relative.at(r, 0) = slot[kSlotX] - obs[0];
      b.relative.at(r, 1) = slot[kSlotY] - obs[1];
    }
  }
  return b;
}

SlotBatch policy_slots(const Trajectory& trajectory) {
  if (trajectory.steps() == 0) throw Error(ErrorKind::data, "cannot encode an empty trajectory");
  return policy_slots(trajectory.observations.data(), trajectory.steps(), trajectory.obs_dim);
}

std::vector<ad::Tensor> embedding_slots(const Trajectory& trajectory, std::size_t min_rows) {
  const std::size_t steps = trajectory.steps();
  if (steps == 0) throw Error(ErrorKind::data, "cannot encode an empty trajectory");
  const std::size_t slots = (trajectory.obs_dim - world::kEffectorDim) / world::kSlotDim;
  const std::size_t rows = std::max(steps, min_rows);
  std::vector<double> step_inputs(slots * kSlotInputDim);
  std::vector<ad::Tensor> out;
  std::vector<std::size_t> present;
  for (std::size_t k = 0; k < slots; ++k)
    if (trajectory.observation(0)[world::kEffectorDim + k * world::kSlotDim] != 0.0) {
      present.push_back(k);
      out.emplace_back(ad::Shape{rows, kSlotInputDim});
    }
  for (std::size_t r = 0; r < rows; ++r) {
    slot_inputs(trajectory.observation(std::min(r, steps - 1)), slots, step_inputs.data());
    for (std::size_t i = 0; i < present.size(); ++i)
      std::copy_n(step_inputs.data() + present[i] * kSlotInputDim, kSlotInputDim,
                  out[i].data() + r * kSlotInputDim);
  }
  return out;
}

ad::NodeId encode(ad::Graph& g, const BoundModel& m, ad::NodeId rows) {
  const ad::NodeId h = g.relu(g.bias_add(g.matmul(rows, m[Param::encoder_w1]), m[Param::encoder_b1]));
  return g.relu(g.bias_add(g.matmul(h, m[Param::encoder_w2]), m[Param::encoder_b2]));
}

ad::NodeId embed(ad::Graph& g, const BoundModel& m, const Trajectory& trajectory) {
  const NetworkConfig& c = *m.config;
  if (trajectory.obs_dim != c.obs_dim)
    throw Error(ErrorKind::shape, "embed: trajectory observation dim " + std::to_string(trajectory.obs_dim) +
                                      " does not match network obs_dim " + std::to_string(c.obs_dim));
  const std::vector<ad::Tensor> blocks = embedding_slots(trajectory, c.conv_kernel);
  if (blocks.empty()) throw Error(ErrorKind::data, "embed: trajectory has no objects");
  const std::size_t rows = blocks.front().rows();
  std::vector<ad::NodeId> leaves;
  for (const ad::Tensor& b : blocks) leaves.push_back(g.constant(b));
  const ad::NodeId features = encode(g, m, leaves.size() == 1 ? leaves.front() : g.concat_rows(leaves));
  ad::NodeId pooled{};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const ad::NodeId seq = blocks.size() == 1 ? features : g.slice_rows(features, i * rows, (i + 1) * rows);
    const ad::NodeId c1 = g.relu(g.conv1d(seq, m[Param::conv1_w], m[Param::conv1_b], conv_spec(c)));
    const ad::NodeId c2 = g.relu(g.conv1d(c1, m[Param::conv2_w], m[Param::conv2_b], conv_spec(c)));
    const ad::NodeId slot = g.mean_rows(c2);
    pooled = i == 0 ? slot : g.add(pooled, slot);
  }
  return g.bias_add(g.matmul(pooled, m[Param::embed_w]), m[Param::embed_b]);
}

ad::NodeId policy_mean(ad::Graph& g, const BoundModel& m, const SlotBatch& batch, ad::NodeId embedding) {
  const NetworkConfig& c = *m.config;
  if (batch.slots != c.slots())
    throw Error(ErrorKind::shape, "policy: batch has " + std::to_string(batch.slots) + " slots, network expects " +
                                      std::to_string(c.slots()));
  const ad::NodeId features = encode(g, m, g.constant(batch.inputs));
  const std::array<ad::NodeId, 2> slot_parts{features, g.constant(batch.relative)};
  const ad::NodeId summary = g.concat_cols(slot_parts);
  const ad::NodeId query = g.bias_add(g.matmul(embedding, m[Param::select_w1_embed]), m[Param::select_b1]);
  const ad::NodeId hidden = g.relu(g.bias_add(g.matmul(summary, m[Param::select_w1]), query));
  const ad::NodeId scores = g.bias_add(g.matmul(hidden, m[Param::select_w2]), m[Param::select_b2]);
  const ad::NodeId weights = g.segment_softmax(scores, batch.slots, batch.mask);
  const ad::NodeId pooled = g.segment_weighted_sum(weights, summary, batch.slots);

  const std::array<ad::NodeId, 2> parts{pooled, g.constant(batch.effector)};
  const ad::NodeId input = g.concat_cols(parts);
  const ad::NodeId context = g.bias_add(g.matmul(embedding, m[Param::policy_w1_embed]), m[Param::policy_b1]);
  const ad::NodeId h1 = g.relu(g.bias_add(g.matmul(input, m[Param::policy_w1_obs]), context));
  const ad::NodeId h2 = g.relu(g.bias_add(g.matmul(h1, m[Param::policy_w2]), m[Param::policy_b2]));
  return g.bias_add(g.matmul(h2, m[Param::policy_w3]), m[Param::policy_b3]);
}

Embedding embed(const ModelParams& params, const Trajectory& trajectory) {
  ad::Graph g;
  const BoundModel m = bind(g, params);
  const ad::Tensor& v = g.value(embed(g, m, trajectory));
  Embedding e{.values = v.storage()};
  double sq = 0.0;
  for (double x : e.values) sq += x * x;
  e.norm = std::sqrt(sq);
  if (!(e.norm >= 1e-8))
    throw Error(ErrorKind::numeric, "embed: degenerate embedding with norm " + std::to_string(e.norm));
  return e;
}

Embedding zero_embedding(const NetworkConfig& config) {
  return Embedding{.values = std::vector<double>(config.embedding_dim, 0.0), .norm = 0.0};
}

ActionDistribution policy_forward(const ModelParams& params, std::span<const double> observation,
                                  const Embedding& embedding) {
  const NetworkConfig& c = params.config;
  if (observation.size() != c.obs_dim || embedding.values.size() != c.embedding_dim)
    throw Error(ErrorKind::shape, "policy_forward: observation dim " + std::to_string(observation.size()) +
                                      " / embedding dim " + std::to_string(embedding.values.size()) +
                                      " do not match network (" + std::to_string(c.obs_dim) + ", " +
                                      std::to_string(c.embedding_dim) + ")");
  ad::Graph g;
  const BoundModel m = bind(g, params);
  const ad::NodeId mean = policy_mean(g, m, policy_slots(observation.data(), 1, c.obs_dim),
                                      g.constant(ad::Tensor({1, c.embedding_dim}, embedding.values)));
  return make_distribution(c, g.value(mean).values(), params[Param::policy_log_std]);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.values.size() != b.values.size())
    throw Error(ErrorKind::shape, "cosine_similarity: embedding dims differ");
  if (!(a.norm > 0.0) || !(b.norm > 0.0))
    throw Error(ErrorKind::numeric, "cosine_similarity: zero-norm embedding");
  double d = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) d += a.values[i] * b.values[i];
  return d / (a.norm * b.norm);
}

double nll(const ActionDistribution& dist, const world::Action& action) {
  double total = 0.5 * static_cast<double>(world::kActionDim) * std::log(2.0 * std::numbers::pi);
  for (std::size_t j = 0; j < world::kActionDim; ++j) {
    const double diff = action[j] - dist.mean[j];
    total += dist.log_std[j] + diff * diff / (2.0 * std::exp(2.0 * dist.log_std[j]));
  }
  return total;
}

world::Action greedy_action(const ActionDistribution& dist) { return dist.mean; }

world::Action sample_action(const ActionDistribution& dist, Rng& rng) {
  world::Action a{};
  for (std::size_t j = 0; j < world::kActionDim; ++j)
    a[j] = dist.mean[j] + std::exp(dist.log_std[j]) * gaussian(rng);
  return a;
}

struct PolicyRunner::Impl {
  NetworkConfig config;
  RowMatrix enc_w1, enc_w2, sel_w1, sel_w2, w1_obs, w2, w3;
  Eigen::RowVectorXd enc_b1, enc_b2, query, sel_b2, context, b2, b3;
  ad::Tensor log_std;
};

PolicyRunner::PolicyRunner(const ModelParams& params, const Embedding& embedding) {
  const NetworkConfig& c = params.config;
  if (embedding.values.size() != c.embedding_dim)
    throw Error(ErrorKind::shape, "PolicyRunner: embedding dim mismatch");
  auto impl = std::make_shared<Impl>();
  impl->config = c;
  impl->enc_w1 = to_matrix(params[Param::encoder_w1]);
  impl->enc_b1 = to_row(params[Param::encoder_b1]);
  impl->enc_w2 = to_matrix(params[Param::encoder_w2]);
  impl->enc_b2 = to_row(params[Param::encoder_b2]);
  const Eigen::Map<const Eigen::RowVectorXd> e(embedding.values.data(), static_cast<Eigen::Index>(c.embedding_dim));
  impl->sel_w1 = to_matrix(params[Param::select_w1]);
  impl->query = e * to_matrix(params[Param::select_w1_embed]) + to_row(params[Param::select_b1]);
  impl->sel_w2 = to_matrix(params[Param::select_w2]);
  impl->sel_b2 = to_row(params[Param::select_b2]);
  impl->w1_obs = to_matrix(params[Param::policy_w1_obs]);
  impl->context = e * to_matrix(params[Param::policy_w1_embed]) + to_row(params[Param::policy_b1]);
  impl->w2 = to_matrix(params[Param::policy_w2]);
  impl->b2 = to_row(params[Param::policy_b2]);
  impl->w3 = to_matrix(params[Param::policy_w3]);
  impl->b3 = to_row(params[Param::policy_b3]);
  impl->log_std = params[Param::policy_log_std];
  impl_ = std::move(impl);
}

ActionDistribution PolicyRunner::operator()(std::span<const double> observation) const {
  const Impl& p = *impl_;
  const NetworkConfig& c = p.config;
  if (observation.size() != c.obs_dim) throw Error(ErrorKind::shape, "PolicyRunner: observation dim mismatch");
  const auto slots = static_cast<Eigen::Index>(c.slots());
  const auto width = static_cast<Eigen::Index>(c.slot_summary_dim());
  const auto heads = static_cast<Eigen::Index>(c.selection_heads);

  RowMatrix inputs(slots, static_cast<Eigen::Index>(kSlotInputDim));
  slot_inputs(observation.data(), c.slots(), inputs.data());
  const RowMatrix h = ((inputs * p.enc_w1).rowwise() + p.enc_b1).cwiseMax(0.0);
  RowMatrix summary(slots, width);
  summary.leftCols(static_cast<Eigen::Index>(c.feature_dim)) = ((h * p.enc_w2).rowwise() + p.enc_b2).cwiseMax(0.0);
  for (Eigen::Index k = 0; k < slots; ++k) {
    const double* slot = observation.data() + world::kEffectorDim + k * static_cast<Eigen::Index>(world::kSlotDim);
    summary(k, width - 2) = slot[kSlotX] - observation[0];
    summary(k, width - 1) = slot[kSlotY] - observation[1];
  }
  const RowMatrix hidden = ((summary * p.sel_w1).rowwise() + p.query).cwiseMax(0.0);
  const RowMatrix scores = (hidden * p.sel_w2).rowwise() + p.sel_b2;

  Eigen::RowVectorXd input(heads * width + static_cast<Eigen::Index>(world::kEffectorDim));
  input.setZero();
  for (Eigen::Index j = 0; j < heads; ++j) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < slots; ++k)
      if (inputs(k, 0) != 0.0) top = std::max(top, scores(k, j));
    if (top == -std::numeric_limits<double>::infinity())
      throw Error(ErrorKind::shape, "PolicyRunner: observation has no objects");
    double total = 0.0;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(width);
    for (Eigen::Index k = 0; k < slots; ++k) {
      if (inputs(k, 0) == 0.0) continue;
      const double w = std::exp(scores(k, j) - top);
      total += w;
      acc += w * summary.row(k);
    }
    input.segment(j * width, width) = acc / total;
  }
  input.tail(static_cast<Eigen::Index>(world::kEffectorDim)) =
      Eigen::Map<const Eigen::RowVectorXd>(observation.data(), world::kEffectorDim);
  const Eigen::RowVectorXd h1 = (input * p.w1_obs + p.context).cwiseMax(0.0);
  const Eigen::RowVectorXd h2 = (h1 * p.w2 + p.b2).cwiseMax(0.0);
  const Eigen::RowVectorXd mean = h2 * p.w3 + p.b3;
  return make_distribution(c, std::span<const double>(mean.data(), world::kActionDim), p.log_std);
}

}  // namespace mili::policy
