// SPDX-License-Identifier: Apache-2.0
#include "fassl/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fassl/errors.hpp"

namespace fassl {

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::param(const std::string& name, Tensor value) {
  for (const auto& n : nodes_) {
    if (n.kind == OpKind::Leaf && n.name == name && n.needs_grad) {
      throw ContractError("duplicate parameter leaf '" + name + "'");
    }
  }
  Node n;
  n.value = std::move(value);
  n.value.set_requires_grad(true);
  n.name = name;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                             [this](std::size_t i) { return nodes_.at(i).needs_grad; });
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

GradientMap Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("loss node belongs to another graph");
  if (nodes_.at(loss.id).value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(nodes_[loss.id].value.shape()));
  }
  grads_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i <= loss.id; ++i) {
    if (nodes_[i].needs_grad) grads_[i].assign(nodes_[i].value.size(), 0.0);
  }
  if (nodes_[loss.id].needs_grad) grads_[loss.id][0] = 1.0;

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward) n.backward(*this, grads_[i]);
  }

  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != OpKind::Leaf || !n.needs_grad) continue;
    std::vector<double> g = i <= loss.id ? grads_[i] : std::vector<double>(n.value.size(), 0.0);
    out.emplace(n.name, Tensor(n.value.shape(), std::move(g)));
  }
  return out;
}

namespace ops {
namespace {

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
}

void require_matrix(Var a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(a.shape()));
  }
}

void add_into(Graph& g, std::size_t id, std::span<const double> src) {
  if (!g.needs_grad(id)) return;
  auto& dst = g.grad_buffer(id);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_str(A.shape()) + " x " +
                         shape_str(B.shape()));
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record(
      OpKind::MatMul, {ia, ib}, matmul_values(A, B),
      [ia, ib, m, k, n](Graph& g, std::span<const double> G) {
        const auto Av = g.value(ia).data();
        const auto Bv = g.value(ib).data();
        if (g.needs_grad(ia)) {
          auto& dA = g.grad_buffer(ia);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * Bv[p * n + j];
              dA[i * k + p] += acc;
            }
        }
        if (g.needs_grad(ib)) {
          auto& dB = g.grad_buffer(ib);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = Av[i * k + p];
              for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
            }
        }
      });
}

Var transpose(Var a) {
  require_matrix(a, "transpose");
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  const std::size_t ia = a.id;
  return a.graph->record(OpKind::Transpose, {ia}, Tensor({c, r}, std::move(out)),
                         [ia, r, c](Graph& g, std::span<const double> G) {
                           if (!g.needs_grad(ia)) return;
                           auto& d = g.grad_buffer(ia);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) d[i * c + j] += G[j * r + i];
                         });
}

namespace {

Var elementwise(OpKind kind, Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) {
    throw DimensionError("elementwise shape mismatch: " + shape_str(A.shape()) + " vs " +
                         shape_str(B.shape()));
  }
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case OpKind::Add: out[i] = A[i] + B[i]; break;
      case OpKind::Sub: out[i] = A[i] - B[i]; break;
      default: out[i] = A[i] * B[i]; break;
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record(kind, {ia, ib}, Tensor(A.shape(), std::move(out)),
                         [kind, ia, ib](Graph& g, std::span<const double> G) {
                           if (kind == OpKind::Mul) {
                             const auto Av = g.value(ia).data();
                             const auto Bv = g.value(ib).data();
                             if (g.needs_grad(ia)) {
                               auto& d = g.grad_buffer(ia);
                               for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i] * Bv[i];
                             }
                             if (g.needs_grad(ib)) {
                               auto& d = g.grad_buffer(ib);
                               for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i] * Av[i];
                             }
                             return;
                           }
                           add_into(g, ia, G);
                           if (!g.needs_grad(ib)) return;
                           auto& d = g.grad_buffer(ib);
                           const double sign = kind == OpKind::Sub ? -1.0 : 1.0;
                           for (std::size_t i = 0; i < G.size(); ++i) d[i] += sign * G[i];
                         });
}

}  // namespace

Var add(Var a, Var b) { return elementwise(OpKind::Add, a, b); }
Var sub(Var a, Var b) { return elementwise(OpKind::Sub, a, b); }
Var mul(Var a, Var b) { return elementwise(OpKind::Mul, a, b); }

Var scale(Var a, double c) {
  const Tensor& A = a.value();
  std::vector<double> out(A.values());
  for (double& v : out) v *= c;
  const std::size_t ia = a.id;
  return a.graph->record(OpKind::Scale, {ia}, Tensor(A.shape(), std::move(out)),
                         [ia, c](Graph& g, std::span<const double> G) {
                           if (!g.needs_grad(ia)) return;
                           auto& d = g.grad_buffer(ia);
                           for (std::size_t i = 0; i < G.size(); ++i) d[i] += c * G[i];
                         });
}

Var add_row_bias(Var x, Var b) {
  require_same_graph(x, b);
  require_matrix(x, "add_row_bias");
  const Tensor& X = x.value();
  const Tensor& B = b.value();
  const std::size_t n = X.rows(), d = X.cols();
  if (B.size() != d) {
    throw DimensionError("bias shape " + shape_str(B.shape()) + " does not match " +
                         shape_str(X.shape()));
  }
  std::vector<double> out(X.values());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += B[j];
  const std::size_t ix = x.id, ib = b.id;
  return x.graph->record(OpKind::AddRowBias, {ix, ib}, Tensor(X.shape(), std::move(out)),
                         [ix, ib, n, d](Graph& g, std::span<const double> G) {
                           add_into(g, ix, G);
                           if (!g.needs_grad(ib)) return;
                           auto& db = g.grad_buffer(ib);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < d; ++j) db[j] += G[i * d + j];
                         });
}

Var relu(Var x) {
  const Tensor& X = x.value();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
  const std::size_t ix = x.id;
  return x.graph->record(OpKind::Relu, {ix}, Tensor(X.shape(), std::move(out)),
                         [ix](Graph& g, std::span<const double> G) {
                           if (!g.needs_grad(ix)) return;
                           const auto Xv = g.value(ix).data();
                           auto& d = g.grad_buffer(ix);
                           for (std::size_t i = 0; i < G.size(); ++i)
                             if (Xv[i] > 0.0) d[i] += G[i];
                         });
}

Var l2_normalize_rows(Var x, double eps) {
  if (!(eps > 0.0)) throw ContractError("l2_normalize_rows: eps must be > 0");
  require_matrix(x, "l2_normalize_rows");
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), d = X.cols();
  std::vector<double> out(n * d);
  std::vector<double> denom(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += X[i * d + j] * X[i * d + j];
    denom[i] = std::max(std::sqrt(ss), eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = X[i * d + j] / denom[i];
  }
  Tensor y({n, d}, out);
  const std::size_t ix = x.id;
  return x.graph->record(
      OpKind::L2NormalizeRows, {ix}, std::move(y),
      [ix, n, d, eps, out = std::move(out), denom = std::move(denom)](Graph& g,
                                                                     std::span<const double> G) {
        if (!g.needs_grad(ix)) return;
        auto& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < n; ++i) {
          const double* yi = out.data() + i * d;
          const double* gi = G.data() + i * d;
          if (denom[i] > eps) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += yi[j] * gi[j];
            for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += (gi[j] - yi[j] * dot) / denom[i];
          } else {
            for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += gi[j] / eps;
          }
        }
      });
}

Var standardize_cols(Var x, double eps) {
  if (!(eps > 0.0)) throw ContractError("standardize_cols: eps must be > 0");
  require_matrix(x, "standardize_cols");
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), d = X.cols();
  std::vector<double> xhat(n * d);
  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += X[i * d + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = X[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    inv_std[j] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) xhat[i * d + j] = (X[i * d + j] - mu) * inv_std[j];
  }
  Tensor y({n, d}, xhat);
  const std::size_t ix = x.id;
  return x.graph->record(
      OpKind::StandardizeCols, {ix}, std::move(y),
      [ix, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph& g, std::span<const double> G) {
        if (!g.needs_grad(ix)) return;
        auto& dx = g.grad_buffer(ix);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j) {
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            g_mean += G[i * d + j];
            gy_mean += G[i * d + j] * xhat[i * d + j];
          }
          g_mean *= inv_n;
          gy_mean *= inv_n;
          for (std::size_t i = 0; i < n; ++i) {
            dx[i * d + j] += inv_std[j] * (G[i * d + j] - g_mean - xhat[i * d + j] * gy_mean);
          }
        }
      });
}

Var log_softmax_rows(Var x, std::vector<bool> exclude) {
  require_matrix(x, "log_softmax_rows");
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), d = X.cols();
  if (!exclude.empty() && exclude.size() != n * d) {
    throw DimensionError("log_softmax_rows: mask size does not match " + shape_str(X.shape()));
  }
  if (exclude.empty()) exclude.assign(n * d, false);
  std::vector<double> out(n * d, 0.0);
  std::vector<double> prob(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j)
      if (!exclude[i * d + j]) mx = std::max(mx, X[i * d + j]);
    if (!std::isfinite(mx)) throw ContractError("log_softmax_rows: row has no included entries");
    double se = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      if (!exclude[i * d + j]) se += std::exp(X[i * d + j] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < d; ++j) {
      if (exclude[i * d + j]) continue;
      out[i * d + j] = X[i * d + j] - lse;
      prob[i * d + j] = std::exp(out[i * d + j]);
    }
  }
  const std::size_t ix = x.id;
  return x.graph->record(
      OpKind::LogSoftmaxRows, {ix}, Tensor({n, d}, std::move(out)),
      [ix, n, d, exclude = std::move(exclude), prob = std::move(prob)](
          Graph& g, std::span<const double> G) {
        if (!g.needs_grad(ix)) return;
        auto& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < n; ++i) {
          double gs = 0.0;
          for (std::size_t j = 0; j < d; ++j)
            if (!exclude[i * d + j]) gs += G[i * d + j];
          for (std::size_t j = 0; j < d; ++j)
            if (!exclude[i * d + j]) dx[i * d + j] += G[i * d + j] - prob[i * d + j] * gs;
        }
      });
}

Var pick(Var x, std::vector<std::size_t> flat_indices) {
  const Tensor& X = x.value();
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= X.size()) throw ContractError("pick: index out of range");
    out[i] = X[flat_indices[i]];
  }
  const std::size_t ix = x.id;
  const std::size_t len = out.size();
  return x.graph->record(OpKind::Pick, {ix}, Tensor({len}, std::move(out)),
                         [ix, idx = std::move(flat_indices)](Graph& g, std::span<const double> G) {
                           if (!g.needs_grad(ix)) return;
                           auto& d = g.grad_buffer(ix);
                           for (std::size_t i = 0; i < idx.size(); ++i) d[idx[i]] += G[i];
                         });
}

Var sum(Var x) {
  const Tensor& X = x.value();
  double s = 0.0;
  for (double v : X.data()) s += v;
  const std::size_t ix = x.id;
  return x.graph->record(OpKind::Sum, {ix}, Tensor::scalar(s),
                         [ix](Graph& g, std::span<const double> G) {
                           if (!g.needs_grad(ix)) return;
                           for (double& v : g.grad_buffer(ix)) v += G[0];
                         });
}

Var mean(Var x) {
  const Tensor& X = x.value();
  if (X.size() == 0) throw ContractError("mean of empty tensor");
  const double inv = 1.0 / static_cast<double>(X.size());
  double s = 0.0;
  for (double v : X.data()) s += v;
  const std::size_t ix = x.id;
  return x.graph->record(OpKind::Mean, {ix}, Tensor::scalar(s * inv),
                         [ix, inv](Graph& g, std::span<const double> G) {
                           if (!g.needs_grad(ix)) return;
                           for (double& v : g.grad_buffer(ix)) v += G[0] * inv;
                         });
}

Var reshape(Var x, Shape shape) {
  const Tensor& X = x.value();
  if (numel(shape) != X.size()) {
    throw DimensionError("reshape " + shape_str(X.shape()) + " to " + shape_str(shape));
  }
  const std::size_t ix = x.id;
  return x.graph->record(OpKind::Reshape, {ix}, Tensor(std::move(shape), X.values()),
                         [ix](Graph& g, std::span<const double> G) { add_into(g, ix, G); });
}

Var weighted_sq_error(Var x, const Tensor& target, const Tensor& weights) {
  const Tensor& X = x.value();
  if (target.shape() != X.shape() || weights.shape() != X.shape()) {
    throw DimensionError("weighted_sq_error: shapes " + shape_str(X.shape()) + ", " +
                         shape_str(target.shape()) + ", " + shape_str(weights.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double r = X[i] - target[i];
    s += weights[i] * r * r;
  }
  const std::size_t ix = x.id;
  return x.graph->record(OpKind::WeightedSqError, {ix}, Tensor::scalar(s),
                         [ix, target, weights](Graph& g, std::span<const double> G) {
                           if (!g.needs_grad(ix)) return;
                           const auto Xv = g.value(ix).data();
                           auto& d = g.grad_buffer(ix);
                           for (std::size_t i = 0; i < d.size(); ++i)
                             d[i] += 2.0 * weights[i] * (Xv[i] - target[i]) * G[0];
                         });
}

}  // namespace ops
}  // namespace fassl
