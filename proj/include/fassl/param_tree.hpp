// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fassl/tensor.hpp"

namespace fassl {

inline constexpr std::string_view kBackbonePrefix = "backbone.";
inline constexpr std::string_view kHeadPrefix = "head.";

/// Which part of the model travels between server and clients.
enum class Scope { Full, Backbone };

std::string_view to_string(Scope s);
Scope scope_from_string(std::string_view s);

/// Named parameter tensors in canonical (lexicographic) name order.
/// Names are unique dotted paths, e.g. "backbone.fc1.weight".
class ParamTree {
 public:
  using Entry = std::pair<std::string, Tensor>;

  ParamTree() = default;
  explicit ParamTree(std::vector<Entry> entries);

  const std::vector<Entry>& entries() const& noexcept { return entries_; }
  // Iterating a temporary's entries would dangle; bind the tree first.
  const std::vector<Entry>& entries() const&& = delete;
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t scalar_count() const;

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  /// Inserts or replaces, keeping canonical order.
  void set(const std::string& name, Tensor value);

  std::vector<std::string> names() const;
  /// Distinct layer names (entry name minus its last component), canonical order.
  std::vector<std::string> layers() const;
  ParamTree with_prefix(std::string_view prefix) const;
  ParamTree without_prefix(std::string_view prefix) const;

  /// Bit-exact equality of names, shapes and data.
  bool operator==(const ParamTree& other) const;
  /// Same names and shapes.
  bool congruent(const ParamTree& other) const;

 private:
  std::vector<Entry>::const_iterator find(std::string_view name) const;
  std::vector<Entry> entries_;
};

/// Layer an entry belongs to: "backbone.fc1.weight" -> "backbone.fc1".
std::string layer_of(std::string_view entry_name);

/// (transceived, retained). Full keeps everything; Backbone transceives only
/// "backbone." entries.
std::pair<ParamTree, ParamTree> split(const ParamTree& params, Scope scope);
/// Union of disjoint trees; duplicate names are a contract error.
ParamTree merge(const ParamTree& a, const ParamTree& b);

/// Row-major concatenation (canonical name order) of every entry named
/// `layer` or under `layer + "."`.
std::vector<double> flatten_layer(const ParamTree& params, std::string_view layer);
/// Inverse of flatten_layer: copy of `params` with that layer's values replaced.
ParamTree unflatten_layer(const ParamTree& params, std::string_view layer,
                          std::span<const double> values);

}  // namespace fassl
