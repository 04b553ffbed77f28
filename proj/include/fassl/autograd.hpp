// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fassl/tensor.hpp"

namespace fassl {

using GradientMap = std::map<std::string, Tensor>;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

enum class OpKind {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Scale,
  AddRowBias,
  Relu,
  L2NormalizeRows,
  StandardizeCols,
  LogSoftmaxRows,
  Pick,
  Sum,
  Mean,
  Reshape,
  WeightedSqError,
};

/// Define-by-run tape. Nodes are appended in evaluation order, so the node
/// list is a topological order; backward walks it in exact reverse.
class Graph {
 public:
  /// Accumulates the node's input gradients given its output gradient.
  using BackwardFn = std::function<void(Graph&, std::span<const double> grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Constant input (no gradient).
  Var constant(Tensor value);
  /// Named trainable leaf; its gradient is reported by backward().
  Var param(const std::string& name, Tensor value);

  /// Gradients of a scalar node w.r.t. every named parameter leaf. Leaves the
  /// loss does not reach get zero gradients.
  GradientMap backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }

  // Op-implementation interface.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  std::vector<double>& grad_buffer(std::size_t id) { return grads_.at(id); }

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    std::string name;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

namespace ops {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// x[n×d] + b[d] broadcast over rows.
Var add_row_bias(Var x, Var b);
/// max(0, x); subgradient 0 at 0.
Var relu(Var x);
/// Each row divided by max(||row||, eps).
Var l2_normalize_rows(Var x, double eps);
/// Column-wise (x - mean) / sqrt(var + eps), population variance.
Var standardize_cols(Var x, double eps);
/// Row-wise log-softmax. Entries with exclude[i*cols+j] set are left out of
/// the normalizer and produce 0 with no gradient.
Var log_softmax_rows(Var x, std::vector<bool> exclude = {});
/// Gathers flat indices into a rank-1 tensor.
Var pick(Var x, std::vector<std::size_t> flat_indices);
Var sum(Var x);
Var mean(Var x);
Var reshape(Var x, Shape shape);
/// sum(weights * (x - target)^2) with constant target and weights.
Var weighted_sq_error(Var x, const Tensor& target, const Tensor& weights);

}  // namespace ops
}  // namespace fassl
