// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fassl/data.hpp"
#include "fassl/model.hpp"
#include "fassl/param_tree.hpp"

namespace fassl {

enum class Distance { Cosine, Euclidean };

std::string_view to_string(Distance d);
Distance distance_from_string(std::string_view s);

struct TaskAccuracy {
  std::string task;
  std::size_t round = 0;
  double top1_retrieval = 0.0;
  std::size_t k = 1;
};

/// Fraction of queries whose label occurs among the labels of their k nearest
/// training rows. Ties in distance go to the lower training index.
double knn_retrieval_accuracy(const Tensor& train_feats, const std::vector<std::size_t>& train_labels,
                              const Tensor& test_feats, const std::vector<std::size_t>& test_labels,
                              std::size_t k, Distance distance = Distance::Cosine);

struct EvalOptions {
  std::size_t k = 1;
  Distance distance = Distance::Cosine;
  FeatureLayer layer = FeatureLayer::Backbone;

  bool operator==(const EvalOptions&) const = default;
};

/// Encodes every task's train and test clips with the given model and scores
/// retrieval. Never modifies the model.
std::vector<TaskAccuracy> evaluate_global(const ParamTree& global, const std::vector<DownstreamTask>& tasks,
                                          std::size_t round, const EvalOptions& options = {});

/// Per-task best global model seen so far. A new evaluation replaces the
/// stored optimum only when its accuracy is strictly higher.
class OptimaTracker {
 public:
  struct Entry {
    double best_accuracy = 0.0;
    std::size_t best_round = 0;
    std::string checkpoint;
  };

  /// Rounds must be presented in strictly increasing order.
  void update(std::size_t round, const std::vector<TaskAccuracy>& accs, const std::string& checkpoint);

  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }
  const Entry& at(const std::string& task) const;
  bool empty() const noexcept { return entries_.empty(); }

  /// "task,best_round,best_accuracy" CSV.
  std::string to_csv() const;

 private:
  std::map<std::string, Entry> entries_;
  std::size_t last_round_ = 0;
  bool any_round_ = false;
};

}  // namespace fassl
