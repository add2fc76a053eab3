#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mili/autodiff/tensor.hpp"

namespace mili::ad {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind : std::uint8_t {
  parameter,
  constant,
  add,
  subtract,
  multiply,
  scale,
  add_scalar,
  matmul,
  conv1d,
  relu,
  tanh,
  softplus,
  sum,
  mean,
  sum_rows,
  mean_rows,
  squared_l2,
  concat_cols,
  concat_rows,
  slice_cols,
  slice_rows,
  bias_add,
  gaussian_nll,
  segment_softmax,
  segment_weighted_sum,
};

std::string_view to_string(OpKind kind);

struct Conv1dSpec {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Append-only tape of tensor operations. Node inputs always precede the node,
// so reverse insertion order is a valid topological order for backward.
//
// A graph is single-threaded; build one per loss evaluation.
class Graph {
 public:
  Graph() = default;

  // Leaves. Parameters receive gradients; constants never do.
  NodeId parameter(Tensor value);
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId subtract(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId scale(NodeId x, double factor);
  NodeId add_scalar(NodeId x, double offset);

  // [m, k] x [k, n] -> [m, n]; a rank-1 left operand is treated as [1, k].
  NodeId matmul(NodeId a, NodeId b);

  // x: [T, C_in]; weight: [kernel * C_in, C_out] with row index k * C_in + c;
  // bias: [C_out]. Zero padding on both ends. Output [T_out, C_out].
  NodeId conv1d(NodeId x, NodeId weight, NodeId bias, Conv1dSpec spec);

  NodeId relu(NodeId x);
  NodeId tanh(NodeId x);
  NodeId softplus(NodeId x);

  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  // Column-wise reductions over rows: [m, n] -> [n].
  NodeId sum_rows(NodeId x);
  NodeId mean_rows(NodeId x);
  NodeId squared_l2(NodeId x);

  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId slice_cols(NodeId x, std::size_t begin, std::size_t end);
  NodeId slice_rows(NodeId x, std::size_t begin, std::size_t end);

  // x: [m, n] plus bias [n] added to every row.
  NodeId bias_add(NodeId x, NodeId bias);

  // Diagonal Gaussian negative log-likelihood summed over rows:
  //   sum_r sum_j [ s_j + (a_rj - mu_rj)^2 / (2 exp(2 s_j)) ] + rows * (k / 2) log(2 pi)
  // where s = clamp(log_std, log_std_min, log_std_max). mean and target are
  // [rows, k]; log_std is [k].
  NodeId gaussian_nll(NodeId mean, NodeId log_std, NodeId target, double log_std_min,
                      double log_std_max);

  // Rows come in consecutive groups of `group`. Softmax over the rows of each
  // group, separately per column, restricted to rows whose mask entry is
  // nonzero; masked rows get weight 0. Every group needs one unmasked row.
  NodeId segment_softmax(NodeId x, std::size_t group, std::span<const double> mask);
  // weights [G * group, H], values [G * group, D] -> [G, H * D] with
  // out[g, h * D + d] = sum_k weights[g * group + k, h] * values[g * group + k, d].
  NodeId segment_weighted_sum(NodeId weights, NodeId values, std::size_t group);

  const Tensor& value(NodeId id) const;
  OpKind kind(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t parameter_count() const noexcept { return parameters_.size(); }

  // Reverse-mode sweep from a single-element node. Returns one gradient per
  // parameter leaf, in the order the parameters were added.
  std::vector<Tensor> backward(NodeId output);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    Tensor aux;
    double scalar_a = 0.0;
    double scalar_b = 0.0;
    std::size_t param_a = 0;
    std::size_t param_b = 0;
    std::size_t param_c = 0;
    bool requires_grad = false;
  };

  const Node& node(NodeId id) const;
  NodeId push(Node node);
  void accumulate(std::vector<Tensor>& grads, std::uint32_t target, const Tensor& delta) const;
  void backward_node(std::size_t index, const Tensor& upstream, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> parameters_;
};

}  // namespace mili::ad
