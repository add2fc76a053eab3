#include "mili/autodiff/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mili/common/error.hpp"

namespace mili::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_error(OpKind op, const Shape& a, const Shape& b) {
  throw Error(ErrorKind::shape, std::string(to_string(op)) + ": incompatible shapes " +
                                    shape_string(a) + " and " + shape_string(b));
}

[[noreturn]] void shape_error(OpKind op, const Shape& a, const std::string& why) {
  throw Error(ErrorKind::shape,
              std::string(to_string(op)) + ": invalid shape " + shape_string(a) + " (" + why + ")");
}

void check_finite(OpKind op, const Tensor& t) {
  if (!t.all_finite())
    throw Error(ErrorKind::numeric,
                std::string(to_string(op)) + ": non-finite output of shape " + shape_string(t.shape()));
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Rows of the im2col matrix for a zero-padded 1-D convolution.
Tensor im2col(const Tensor& x, const Conv1dSpec& spec, std::size_t out_len) {
  const std::size_t channels = x.cols();
  const std::size_t len = x.rows();
  Tensor cols(matrix_shape(out_len, spec.kernel * channels));
  for (std::size_t o = 0; o < out_len; ++o) {
    for (std::size_t k = 0; k < spec.kernel; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * spec.stride + k) -
                                 static_cast<std::ptrdiff_t>(spec.padding);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      std::copy_n(x.data() + static_cast<std::size_t>(src) * channels, channels,
                  cols.data() + o * spec.kernel * channels + k * channels);
    }
  }
  return cols;
}

}  // namespace

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::multiply: return "multiply";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::matmul: return "matmul";
    case OpKind::conv1d: return "conv1d";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::softplus: return "softplus";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::sum_rows: return "sum_rows";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::squared_l2: return "squared_l2";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::bias_add: return "bias_add";
    case OpKind::gaussian_nll: return "gaussian_nll";
    case OpKind::segment_softmax: return "segment_softmax";
    case OpKind::segment_weighted_sum: return "segment_weighted_sum";
  }
  return "unknown";
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size())
    throw Error(ErrorKind::shape, "graph: node " + std::to_string(id.index) + " does not exist");
  return nodes_[id.index];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

OpKind Graph::kind(NodeId id) const { return node(id).kind; }

NodeId Graph::push(Node n) {
  if (n.kind != OpKind::parameter && n.kind != OpKind::constant) check_finite(n.kind, n.value);
  for (std::uint32_t in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::parameter(Tensor value) {
  if (!value.all_finite()) throw Error(ErrorKind::numeric, "parameter: non-finite value");
  Node n{.kind = OpKind::parameter, .value = std::move(value), .requires_grad = true};
  const NodeId id = push(std::move(n));
  parameters_.push_back(id.index);
  return id;
}

NodeId Graph::constant(Tensor value) {
  if (!value.all_finite()) throw Error(ErrorKind::numeric, "constant: non-finite value");
  return push(Node{.kind = OpKind::constant, .value = std::move(value)});
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.shape() != y.shape()) shape_error(OpKind::add, x.shape(), y.shape());
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return push(Node{.kind = OpKind::add, .inputs = {a.index, b.index}, .value = std::move(out)});
}

NodeId Graph::subtract(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.shape() != y.shape()) shape_error(OpKind::subtract, x.shape(), y.shape());
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return push(Node{.kind = OpKind::subtract, .inputs = {a.index, b.index}, .value = std::move(out)});
}

NodeId Graph::multiply(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.shape() != y.shape()) shape_error(OpKind::multiply, x.shape(), y.shape());
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return push(Node{.kind = OpKind::multiply, .inputs = {a.index, b.index}, .value = std::move(out)});
}

NodeId Graph::scale(NodeId x, double factor) {
  Tensor out = value(x);
  for (double& v : out.values()) v *= factor;
  return push(Node{.kind = OpKind::scale, .inputs = {x.index}, .value = std::move(out), .scalar_a = factor});
}

NodeId Graph::add_scalar(NodeId x, double offset) {
  Tensor out = value(x);
  for (double& v : out.values()) v += offset;
  return push(Node{.kind = OpKind::add_scalar, .inputs = {x.index}, .value = std::move(out)});
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (y.rank() != 2 || x.cols() != y.rows()) shape_error(OpKind::matmul, x.shape(), y.shape());
  Tensor out(matrix_shape(x.rows(), y.cols()));
  as_matrix(out).noalias() = as_matrix(x) * as_matrix(y);
  return push(Node{.kind = OpKind::matmul, .inputs = {a.index, b.index}, .value = std::move(out)});
}

NodeId Graph::conv1d(NodeId x, NodeId weight, NodeId bias, Conv1dSpec spec) {
  const Tensor& in = value(x);
  const Tensor& w = value(weight);
  const Tensor& b = value(bias);
  if (spec.kernel == 0 || spec.stride == 0)
    shape_error(OpKind::conv1d, in.shape(), "kernel and stride must be positive");
  if (in.rank() != 2) shape_error(OpKind::conv1d, in.shape(), "input must be [T, C_in]");
  if (w.rank() != 2 || w.rows() != spec.kernel * in.cols())
    shape_error(OpKind::conv1d, in.shape(), w.shape());
  if (b.size() != w.cols()) shape_error(OpKind::conv1d, w.shape(), b.shape());
  const std::size_t padded = in.rows() + 2 * spec.padding;
  if (padded < spec.kernel)
    shape_error(OpKind::conv1d, in.shape(), "sequence shorter than kernel after padding");
  const std::size_t out_len = (padded - spec.kernel) / spec.stride + 1;

  Tensor cols = im2col(in, spec, out_len);
  Tensor out(matrix_shape(out_len, w.cols()));
  auto o = as_matrix(out);
  o.noalias() = as_matrix(cols) * as_matrix(w);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return push(Node{.kind = OpKind::conv1d,
                   .inputs = {x.index, weight.index, bias.index},
                   .value = std::move(out),
                   .aux = std::move(cols),
                   .param_a = spec.kernel,
                   .param_b = spec.stride,
                   .param_c = spec.padding});
}

NodeId Graph::relu(NodeId x) {
  Tensor out = value(x);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return push(Node{.kind = OpKind::relu, .inputs = {x.index}, .value = std::move(out)});
}

NodeId Graph::tanh(NodeId x) {
  Tensor out = value(x);
  for (double& v : out.values()) v = std::tanh(v);
  return push(Node{.kind = OpKind::tanh, .inputs = {x.index}, .value = std::move(out)});
}

NodeId Graph::softplus(NodeId x) {
  Tensor out = value(x);
  for (double& v : out.values()) v = softplus_value(v);
  return push(Node{.kind = OpKind::softplus, .inputs = {x.index}, .value = std::move(out)});
}

NodeId Graph::sum(NodeId x) {
  double total = 0.0;
  for (double v : value(x).values()) total += v;
  return push(Node{.kind = OpKind::sum, .inputs = {x.index}, .value = Tensor::scalar(total)});
}

NodeId Graph::mean(NodeId x) {
  const Tensor& in = value(x);
  double total = 0.0;
  for (double v : in.values()) total += v;
  return push(Node{.kind = OpKind::mean,
                   .inputs = {x.index},
                   .value = Tensor::scalar(total / static_cast<double>(in.size()))});
}

NodeId Graph::sum_rows(NodeId x) {
  const Tensor& in = value(x);
  Tensor out({in.cols()});
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t c = 0; c < in.cols(); ++c) out[c] += in.at(r, c);
  return push(Node{.kind = OpKind::sum_rows, .inputs = {x.index}, .value = std::move(out)});
}

NodeId Graph::mean_rows(NodeId x) {
  const Tensor& in = value(x);
  Tensor out({in.cols()});
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t c = 0; c < in.cols(); ++c) out[c] += in.at(r, c);
  const double inv = 1.0 / static_cast<double>(in.rows());
  for (double& v : out.values()) v *= inv;
  return push(Node{.kind = OpKind::mean_rows, .inputs = {x.index}, .value = std::move(out)});
}

NodeId Graph::squared_l2(NodeId x) {
  double total = 0.0;
  for (double v : value(x).values()) total += v * v;
  return push(Node{.kind = OpKind::squared_l2, .inputs = {x.index}, .value = Tensor::scalar(total)});
}

NodeId Graph::concat_cols(std::span<const NodeId> parts) {
  if (parts.empty()) throw Error(ErrorKind::shape, "concat_cols: no inputs");
  const std::size_t rows = value(parts.front()).rows();
  std::size_t total = 0;
  Node n{.kind = OpKind::concat_cols};
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    if (t.rows() != rows) shape_error(OpKind::concat_cols, value(parts.front()).shape(), t.shape());
    total += t.cols();
    n.inputs.push_back(p.index);
  }
  Tensor out(matrix_shape(rows, total));
  std::size_t offset = 0;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(t.data() + r * t.cols(), t.cols(), out.data() + r * total + offset);
    offset += t.cols();
  }
  n.value = std::move(out);
  return push(std::move(n));
}

NodeId Graph::concat_rows(std::span<const NodeId> parts) {
  if (parts.empty()) throw Error(ErrorKind::shape, "concat_rows: no inputs");
  const std::size_t cols = value(parts.front()).cols();
  std::size_t total = 0;
  Node n{.kind = OpKind::concat_rows};
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    if (t.cols() != cols) shape_error(OpKind::concat_rows, value(parts.front()).shape(), t.shape());
    total += t.rows();
    n.inputs.push_back(p.index);
  }
  std::vector<double> data;
  data.reserve(total * cols);
  for (NodeId p : parts) {
    const auto v = value(p).values();
    data.insert(data.end(), v.begin(), v.end());
  }
  n.value = Tensor(matrix_shape(total, cols), std::move(data));
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId x, std::size_t begin, std::size_t end) {
  const Tensor& in = value(x);
  if (begin >= end || end > in.cols())
    shape_error(OpKind::slice_cols, in.shape(),
                "column range [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
  const std::size_t width = end - begin;
  Tensor out(matrix_shape(in.rows(), width));
  for (std::size_t r = 0; r < in.rows(); ++r)
    std::copy_n(in.data() + r * in.cols() + begin, width, out.data() + r * width);
  return push(Node{.kind = OpKind::slice_cols,
                   .inputs = {x.index},
                   .value = std::move(out),
                   .param_a = begin,
                   .param_b = end});
}

NodeId Graph::slice_rows(NodeId x, std::size_t begin, std::size_t end) {
  const Tensor& in = value(x);
  if (begin >= end || end > in.rows())
    shape_error(OpKind::slice_rows, in.shape(),
                "row range [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
  std::vector<double> data(in.data() + begin * in.cols(), in.data() + end * in.cols());
  return push(Node{.kind = OpKind::slice_rows,
                   .inputs = {x.index},
                   .value = Tensor(matrix_shape(end - begin, in.cols()), std::move(data)),
                   .param_a = begin,
                   .param_b = end});
}

NodeId Graph::bias_add(NodeId x, NodeId bias) {
  const Tensor& in = value(x);
  const Tensor& b = value(bias);
  if (b.size() != in.cols() || b.rows() != 1) shape_error(OpKind::bias_add, in.shape(), b.shape());
  Tensor out = in;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += b[c];
  return push(Node{.kind = OpKind::bias_add, .inputs = {x.index, bias.index}, .value = std::move(out)});
}

NodeId Graph::gaussian_nll(NodeId mean, NodeId log_std, NodeId target, double log_std_min,
                           double log_std_max) {
  const Tensor& mu = value(mean);
  const Tensor& ls = value(log_std);
  const Tensor& a = value(target);
  if (mu.shape() != a.shape()) shape_error(OpKind::gaussian_nll, mu.shape(), a.shape());
  if (ls.size() != mu.cols() || ls.rows() != 1) shape_error(OpKind::gaussian_nll, mu.shape(), ls.shape());
  const std::size_t k = mu.cols();
  std::vector<double> clamped(k);
  double log_det = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    clamped[j] = std::clamp(ls[j], log_std_min, log_std_max);
    log_det += clamped[j];
  }
  double total = 0.0;
  for (std::size_t r = 0; r < mu.rows(); ++r) {
    double row = log_det;
    for (std::size_t j = 0; j < k; ++j) {
      const double diff = a.at(r, j) - mu.at(r, j);
      row += diff * diff * 0.5 * std::exp(-2.0 * clamped[j]);
    }
    total += row;
  }
  total += static_cast<double>(mu.rows()) * 0.5 * static_cast<double>(k) *
           std::log(2.0 * std::numbers::pi);
  return push(Node{.kind = OpKind::gaussian_nll,
                   .inputs = {mean.index, log_std.index, target.index},
                   .value = Tensor::scalar(total),
                   .scalar_a = log_std_min,
                   .scalar_b = log_std_max});
}

NodeId Graph::segment_softmax(NodeId x, std::size_t group, std::span<const double> mask) {
  const Tensor& in = value(x);
  if (group == 0 || in.rank() != 2 || in.rows() % group != 0)
    shape_error(OpKind::segment_softmax, in.shape(), "rows must split into groups of " + std::to_string(group));
  if (mask.size() != in.rows())
    shape_error(OpKind::segment_softmax, in.shape(), "mask has " + std::to_string(mask.size()) + " entries");
  const std::size_t cols = in.cols();
  Tensor out(in.shape(), 0.0);
  for (std::size_t g0 = 0; g0 < in.rows(); g0 += group) {
    for (std::size_t c = 0; c < cols; ++c) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t r = g0; r < g0 + group; ++r)
        if (mask[r] != 0.0) top = std::max(top, in.at(r, c));
      if (top == -std::numeric_limits<double>::infinity())
        shape_error(OpKind::segment_softmax, in.shape(), "group starting at row " + std::to_string(g0) +
                                                              " is fully masked");
      double total = 0.0;
      for (std::size_t r = g0; r < g0 + group; ++r)
        if (mask[r] != 0.0) total += out.at(r, c) = std::exp(in.at(r, c) - top);
      for (std::size_t r = g0; r < g0 + group; ++r) out.at(r, c) /= total;
    }
  }
  return push(Node{.kind = OpKind::segment_softmax, .inputs = {x.index}, .value = std::move(out), .param_a = group});
}

NodeId Graph::segment_weighted_sum(NodeId weights, NodeId values, std::size_t group) {
  const Tensor& w = value(weights);
  const Tensor& v = value(values);
  if (group == 0 || w.rank() != 2 || v.rank() != 2 || w.rows() != v.rows() || w.rows() % group != 0)
    shape_error(OpKind::segment_weighted_sum, w.shape(), v.shape());
  const std::size_t heads = w.cols();
  const std::size_t dim = v.cols();
  Tensor out(matrix_shape(w.rows() / group, heads * dim), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double* dst = out.data() + (r / group) * heads * dim;
    for (std::size_t h = 0; h < heads; ++h) {
      const double wh = w.at(r, h);
      for (std::size_t d = 0; d < dim; ++d) dst[h * dim + d] += wh * v.at(r, d);
    }
  }
  return push(Node{.kind = OpKind::segment_weighted_sum,
                   .inputs = {weights.index, values.index},
                   .value = std::move(out),
                   .param_a = group});
}

void Graph::accumulate(std::vector<Tensor>& grads, std::uint32_t target, const Tensor& delta) const {
  if (!nodes_[target].requires_grad) return;
  Tensor& g = grads[target];
  if (g.size() == 0) {
    g = Tensor(nodes_[target].value.shape(), 0.0);
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

std::vector<Tensor> Graph::backward(NodeId output) {
  const Node& out = node(output);
  if (out.value.size() != 1)
    throw Error(ErrorKind::shape,
                "backward: output must be scalar, got " + shape_string(out.value.shape()));
  std::vector<Tensor> grads(output.index + 1);
  if (out.requires_grad) grads[output.index] = Tensor(out.value.shape(), 1.0);
  for (std::size_t i = output.index + 1; i-- > 0;) {
    if (grads[i].size() == 0 || !nodes_[i].requires_grad) continue;
    backward_node(i, grads[i], grads);
  }
  std::vector<Tensor> result;
  result.reserve(parameters_.size());
  for (std::uint32_t p : parameters_) {
    if (p < grads.size() && grads[p].size() != 0)
      result.push_back(std::move(grads[p]));
    else
      result.emplace_back(nodes_[p].value.shape(), 0.0);
  }
  return result;
}

void Graph::backward_node(std::size_t index, const Tensor& up, std::vector<Tensor>& grads) const {
  const Node& n = nodes_[index];
  const auto& in = n.inputs;
  switch (n.kind) {
    case OpKind::parameter:
    case OpKind::constant:
      return;
    case OpKind::add:
      accumulate(grads, in[0], up);
      accumulate(grads, in[1], up);
      return;
    case OpKind::subtract: {
      accumulate(grads, in[0], up);
      Tensor neg = up;
      for (double& v : neg.values()) v = -v;
      accumulate(grads, in[1], neg);
      return;
    }
    case OpKind::multiply: {
      const Tensor& a = nodes_[in[0]].value;
      const Tensor& b = nodes_[in[1]].value;
      Tensor da = up, db = up;
      for (std::size_t i = 0; i < up.size(); ++i) {
        da[i] *= b[i];
        db[i] *= a[i];
      }
      accumulate(grads, in[0], da);
      accumulate(grads, in[1], db);
      return;
    }
    case OpKind::scale: {
      Tensor d = up;
      for (double& v : d.values()) v *= n.scalar_a;
      accumulate(grads, in[0], d);
      return;
    }
    case OpKind::add_scalar:
      accumulate(grads, in[0], up);
      return;
    case OpKind::matmul: {
      const Tensor& a = nodes_[in[0]].value;
      const Tensor& b = nodes_[in[1]].value;
      if (nodes_[in[0]].requires_grad) {
        Tensor da(a.shape());
        as_matrix(da).noalias() = as_matrix(up) * as_matrix(b).transpose();
        accumulate(grads, in[0], da);
      }
      if (nodes_[in[1]].requires_grad) {
        Tensor db(b.shape());
        as_matrix(db).noalias() = as_matrix(a).transpose() * as_matrix(up);
        accumulate(grads, in[1], db);
      }
      return;
    }
    case OpKind::conv1d: {
      const Tensor& x = nodes_[in[0]].value;
      const Tensor& w = nodes_[in[1]].value;
      const Tensor& cols = n.aux;
      if (nodes_[in[1]].requires_grad) {
        Tensor dw(w.shape());
        as_matrix(dw).noalias() = as_matrix(cols).transpose() * as_matrix(up);
        accumulate(grads, in[1], dw);
      }
      if (nodes_[in[2]].requires_grad) {
        Tensor db(nodes_[in[2]].value.shape());
        for (std::size_t r = 0; r < up.rows(); ++r)
          for (std::size_t c = 0; c < up.cols(); ++c) db[c] += up.at(r, c);
        accumulate(grads, in[2], db);
      }
      if (nodes_[in[0]].requires_grad) {
        Tensor dcols(cols.shape());
        as_matrix(dcols).noalias() = as_matrix(up) * as_matrix(w).transpose();
        Tensor dx(x.shape());
        const std::size_t channels = x.cols();
        const std::size_t kernel = n.param_a, stride = n.param_b, padding = n.param_c;
        for (std::size_t o = 0; o < up.rows(); ++o) {
          for (std::size_t k = 0; k < kernel; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + k) -
                                       static_cast<std::ptrdiff_t>(padding);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(x.rows())) continue;
            const double* from = dcols.data() + o * kernel * channels + k * channels;
            double* to = dx.data() + static_cast<std::size_t>(src) * channels;
            for (std::size_t c = 0; c < channels; ++c) to[c] += from[c];
          }
        }
        accumulate(grads, in[0], dx);
      }
      return;
    }
    case OpKind::relu: {
      const Tensor& x = nodes_[in[0]].value;
      Tensor d = up;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(x[i] > 0.0)) d[i] = 0.0;
      accumulate(grads, in[0], d);
      return;
    }
    case OpKind::tanh: {
      Tensor d = up;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - n.value[i] * n.value[i];
      accumulate(grads, in[0], d);
      return;
    }
    case OpKind::softplus: {
      const Tensor& x = nodes_[in[0]].value;
      Tensor d = up;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= sigmoid(x[i]);
      accumulate(grads, in[0], d);
      return;
    }
    case OpKind::sum:
    case OpKind::mean: {
      const Tensor& x = nodes_[in[0]].value;
      const double g = n.kind == OpKind::sum ? up[0] : up[0] / static_cast<double>(x.size());
      accumulate(grads, in[0], Tensor(x.shape(), g));
      return;
    }
    case OpKind::sum_rows:
    case OpKind::mean_rows: {
      const Tensor& x = nodes_[in[0]].value;
      const double factor = n.kind == OpKind::sum_rows ? 1.0 : 1.0 / static_cast<double>(x.rows());
      Tensor d(x.shape());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) d.at(r, c) = up[c] * factor;
      accumulate(grads, in[0], d);
      return;
    }
    case OpKind::squared_l2: {
      Tensor d = nodes_[in[0]].value;
      for (double& v : d.values()) v *= 2.0 * up[0];
      accumulate(grads, in[0], d);
      return;
    }
    case OpKind::concat_cols: {
      std::size_t offset = 0;
      const std::size_t total = n.value.cols();
      for (std::uint32_t part : in) {
        const Tensor& t = nodes_[part].value;
        if (nodes_[part].requires_grad) {
          Tensor d(t.shape());
          for (std::size_t r = 0; r < t.rows(); ++r)
            std::copy_n(up.data() + r * total + offset, t.cols(), d.data() + r * t.cols());
          accumulate(grads, part, d);
        }
        offset += t.cols();
      }
      return;
    }
    case OpKind::concat_rows: {
      std::size_t offset = 0;
      for (std::uint32_t part : in) {
        const Tensor& t = nodes_[part].value;
        if (nodes_[part].requires_grad) {
          Tensor d(t.shape());
          std::copy_n(up.data() + offset, t.size(), d.data());
          accumulate(grads, part, d);
        }
        offset += t.size();
      }
      return;
    }
    case OpKind::slice_cols: {
      const Tensor& x = nodes_[in[0]].value;
      Tensor d(x.shape());
      const std::size_t width = n.param_b - n.param_a;
      for (std::size_t r = 0; r < x.rows(); ++r)
        std::copy_n(up.data() + r * width, width, d.data() + r * x.cols() + n.param_a);
      accumulate(grads, in[0], d);
      return;
    }
    case OpKind::slice_rows: {
      const Tensor& x = nodes_[in[0]].value;
      Tensor d(x.shape());
      std::copy_n(up.data(), up.size(), d.data() + n.param_a * x.cols());
      accumulate(grads, in[0], d);
      return;
    }
    case OpKind::bias_add: {
      accumulate(grads, in[0], up);
      if (nodes_[in[1]].requires_grad) {
        Tensor db(nodes_[in[1]].value.shape());
        for (std::size_t r = 0; r < up.rows(); ++r)
          for (std::size_t c = 0; c < up.cols(); ++c) db[c] += up.at(r, c);
        accumulate(grads, in[1], db);
      }
      return;
    }
    case OpKind::gaussian_nll: {
      const Tensor& mu = nodes_[in[0]].value;
      const Tensor& ls = nodes_[in[1]].value;
      const Tensor& a = nodes_[in[2]].value;
      const std::size_t k = mu.cols();
      const double g = up[0];
      Tensor dmu(mu.shape());
      Tensor dls(ls.shape());
      for (std::size_t j = 0; j < k; ++j) {
        const double s = std::clamp(ls[j], n.scalar_a, n.scalar_b);
        const double inv_var = std::exp(-2.0 * s);
        double sq = 0.0;
        for (std::size_t r = 0; r < mu.rows(); ++r) {
          const double diff = a.at(r, j) - mu.at(r, j);
          dmu.at(r, j) = -g * diff * inv_var;
          sq += diff * diff;
        }
        const bool inside = ls[j] >= n.scalar_a && ls[j] <= n.scalar_b;
        dls[j] = inside ? g * (static_cast<double>(mu.rows()) - sq * inv_var) : 0.0;
      }
      accumulate(grads, in[0], dmu);
      accumulate(grads, in[1], dls);
      if (nodes_[in[2]].requires_grad) {
        Tensor da = dmu;
        for (double& v : da.values()) v = -v;
        accumulate(grads, in[2], da);
      }
      return;
    }
    case OpKind::segment_softmax: {
      const Tensor& y = n.value;
      const std::size_t group = n.param_a;
      Tensor dx(y.shape(), 0.0);
      for (std::size_t g0 = 0; g0 < y.rows(); g0 += group) {
        for (std::size_t c = 0; c < y.cols(); ++c) {
          double dot = 0.0;
          for (std::size_t r = g0; r < g0 + group; ++r) dot += y.at(r, c) * up.at(r, c);
          for (std::size_t r = g0; r < g0 + group; ++r) dx.at(r, c) = y.at(r, c) * (up.at(r, c) - dot);
        }
      }
      accumulate(grads, in[0], dx);
      return;
    }
    case OpKind::segment_weighted_sum: {
      const Tensor& w = nodes_[in[0]].value;
      const Tensor& v = nodes_[in[1]].value;
      const std::size_t group = n.param_a;
      const std::size_t heads = w.cols();
      const std::size_t dim = v.cols();
      Tensor dw(w.shape(), 0.0);
      Tensor dv(v.shape(), 0.0);
      for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* g = up.data() + (r / group) * heads * dim;
        for (std::size_t h = 0; h < heads; ++h) {
          double acc = 0.0;
          for (std::size_t d = 0; d < dim; ++d) {
            acc += g[h * dim + d] * v.at(r, d);
            dv.at(r, d) += g[h * dim + d] * w.at(r, h);
          }
          dw.at(r, h) = acc;
        }
      }
      accumulate(grads, in[0], dw);
      accumulate(grads, in[1], dv);
      return;
    }
  }
}

}  // namespace mili::ad
