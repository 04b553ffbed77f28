// SPDX-License-Identifier: Apache-2.0
#include "fassl/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fassl/errors.hpp"

namespace fassl {

std::string_view to_string(Distance d) { return d == Distance::Cosine ? "cosine" : "euclidean"; }

Distance distance_from_string(std::string_view s) {
  if (s == "cosine") return Distance::Cosine;
  if (s == "euclidean") return Distance::Euclidean;
  throw ContractError("unknown distance '" + std::string(s) + "' (expected cosine|euclidean)");
}

namespace {

constexpr double kNormEps = 1e-12;

std::vector<double> normalized_rows(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += out[i * d + j] * out[i * d + j];
    const double denom = std::max(std::sqrt(ss), kNormEps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= denom;
  }
  return out;
}

}  // namespace

double knn_retrieval_accuracy(const Tensor& train_feats, const std::vector<std::size_t>& train_labels,
                              const Tensor& test_feats, const std::vector<std::size_t>& test_labels,
                              std::size_t k, Distance distance) {
  if (train_feats.rank() != 2 || test_feats.rank() != 2) {
    throw DimensionError("knn_retrieval_accuracy: features must be matrices");
  }
  const std::size_t n = train_feats.rows(), q = test_feats.rows(), d = train_feats.cols();
  if (n == 0 || q == 0) throw ContractError("knn_retrieval_accuracy: empty train or test set");
  if (test_feats.cols() != d) {
    throw DimensionError("knn_retrieval_accuracy: feature widths " + shape_str(train_feats.shape()) +
                         " vs " + shape_str(test_feats.shape()));
  }
  if (train_labels.size() != n || test_labels.size() != q) {
    throw ContractError("knn_retrieval_accuracy: label count mismatch");
  }
  if (k < 1 || k > n) throw ContractError("knn_retrieval_accuracy: need 1 <= k <= n");

  const bool cosine = distance == Distance::Cosine;
  const std::vector<double> tr = cosine ? normalized_rows(train_feats) : train_feats.values();
  const std::vector<double> te = cosine ? normalized_rows(test_feats) : test_feats.values();

  std::size_t correct = 0;
  std::vector<double> dist(n);
  std::vector<std::size_t> order(n);
  for (std::size_t qi = 0; qi < q; ++qi) {
    const double* a = te.data() + qi * d;
    for (std::size_t i = 0; i < n; ++i) {
      const double* b = tr.data() + i * d;
      double acc = 0.0;
      if (cosine) {
        for (std::size_t j = 0; j < d; ++j) acc += a[j] * b[j];
        dist[i] = 1.0 - acc;
      } else {
        for (std::size_t j = 0; j < d; ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
        dist[i] = acc;
      }
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t x, std::size_t y) { return dist[x] < dist[y] || (dist[x] == dist[y] && x < y); });
    for (std::size_t r = 0; r < k; ++r) {
      if (train_labels[order[r]] == test_labels[qi]) {
        ++correct;
        break;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(q);
}

std::vector<TaskAccuracy> evaluate_global(const ParamTree& global, const std::vector<DownstreamTask>& tasks,
                                          std::size_t round, const EvalOptions& options) {
  if (tasks.empty()) throw ContractError("evaluate_global: no downstream tasks");
  std::vector<TaskAccuracy> out;
  for (const auto& task : tasks) {
    const Tensor tr = features(global, task.train.feature_matrix(), options.layer);
    const Tensor te = features(global, task.test.feature_matrix(), options.layer);
    const double acc = knn_retrieval_accuracy(tr, task.train.labels(), te, task.test.labels(), options.k,
                                              options.distance);
    out.push_back(TaskAccuracy{task.name, round, acc, options.k});
  }
  return out;
}

void OptimaTracker::update(std::size_t round, const std::vector<TaskAccuracy>& accs,
                           const std::string& checkpoint) {
  if (any_round_ && round <= last_round_) {
    throw ContractError("OptimaTracker: round " + std::to_string(round) + " presented after round " +
                        std::to_string(last_round_));
  }
  for (const auto& a : accs) {
    if (!(a.top1_retrieval >= 0.0 && a.top1_retrieval <= 1.0)) {
      throw ContractError("OptimaTracker: accuracy outside [0, 1] for task " + a.task);
    }
  }
  any_round_ = true;
  last_round_ = round;
  for (const auto& a : accs) {
    auto it = entries_.find(a.task);
    if (it == entries_.end()) {
      entries_.emplace(a.task, Entry{a.top1_retrieval, round, checkpoint});
    } else if (a.top1_retrieval > it->second.best_accuracy) {
      it->second = Entry{a.top1_retrieval, round, checkpoint};
    }
  }
}

const OptimaTracker::Entry& OptimaTracker::at(const std::string& task) const {
  auto it = entries_.find(task);
  if (it == entries_.end()) throw ContractError("OptimaTracker: unknown task '" + task + "'");
  return it->second;
}

std::string OptimaTracker::to_csv() const {
  std::string out = "task,best_round,best_accuracy\n";
  char buf[64];
  for (const auto& [task, e] : entries_) {
    std::snprintf(buf, sizeof(buf), ",%zu,%.6f\n", e.best_round, e.best_accuracy);
    out += task + buf;
  }
  return out;
}

}  // namespace fassl
