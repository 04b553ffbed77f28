// SPDX-License-Identifier: Apache-2.0
#include "fassl/param_tree.hpp"

#include <algorithm>

#include "fassl/errors.hpp"

namespace fassl {

std::string_view to_string(Scope s) { return s == Scope::Full ? "full" : "backbone"; }

Scope scope_from_string(std::string_view s) {
  if (s == "full") return Scope::Full;
  if (s == "backbone") return Scope::Backbone;
  throw ContractError("unknown scope '" + std::string(s) + "' (expected full|backbone)");
}

ParamTree::ParamTree(std::vector<Entry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& a, const Entry& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].first == entries_[i - 1].first) {
      throw ContractError("duplicate parameter name '" + entries_[i].first + "'");
    }
  }
}

std::size_t ParamTree::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

std::vector<ParamTree::Entry>::const_iterator ParamTree::find(std::string_view name) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), name,
                             [](const Entry& e, std::string_view n) { return e.first < n; });
  if (it != entries_.end() && it->first == name) return it;
  return entries_.end();
}

bool ParamTree::contains(std::string_view name) const { return find(name) != entries_.end(); }

const Tensor& ParamTree::at(std::string_view name) const {
  auto it = find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParamTree::at(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParamTree&>(*this).at(name));
}

void ParamTree::set(const std::string& name, Tensor value) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), name,
                             [](const Entry& e, const std::string& n) { return e.first < n; });
  if (it != entries_.end() && it->first == name) {
    it->second = std::move(value);
  } else {
    entries_.insert(it, Entry{name, std::move(value)});
  }
}

std::vector<std::string> ParamTree::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::vector<std::string> ParamTree::layers() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    std::string l = layer_of(e.first);
    if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(std::move(l));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ParamTree ParamTree::with_prefix(std::string_view prefix) const {
  ParamTree out;
  for (const auto& e : entries_)
    if (e.first.starts_with(prefix)) out.entries_.push_back(e);
  return out;
}

ParamTree ParamTree::without_prefix(std::string_view prefix) const {
  ParamTree out;
  for (const auto& e : entries_)
    if (!e.first.starts_with(prefix)) out.entries_.push_back(e);
  return out;
}

bool ParamTree::operator==(const ParamTree& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (!(entries_[i].second == other.entries_[i].second)) return false;
  }
  return true;
}

bool ParamTree::congruent(const ParamTree& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.shape() != other.entries_[i].second.shape()) return false;
  }
  return true;
}

std::string layer_of(std::string_view entry_name) {
  const auto pos = entry_name.rfind('.');
  return std::string(pos == std::string_view::npos ? entry_name : entry_name.substr(0, pos));
}

std::pair<ParamTree, ParamTree> split(const ParamTree& params, Scope scope) {
  if (scope == Scope::Full) return {params, ParamTree{}};
  return {params.with_prefix(kBackbonePrefix), params.without_prefix(kBackbonePrefix)};
}

ParamTree merge(const ParamTree& a, const ParamTree& b) {
  std::vector<ParamTree::Entry> all(a.entries());
  all.insert(all.end(), b.entries().begin(), b.entries().end());
  return ParamTree(std::move(all));
}

namespace {

bool in_layer(std::string_view name, std::string_view layer) {
  return name == layer || (name.size() > layer.size() && name.starts_with(layer) &&
                           name[layer.size()] == '.');
}

}  // namespace

std::vector<double> flatten_layer(const ParamTree& params, std::string_view layer) {
  std::vector<double> out;
  bool found = false;
  for (const auto& [name, t] : params.entries()) {
    if (!in_layer(name, layer)) continue;
    found = true;
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  if (!found) throw ContractError("unknown layer '" + std::string(layer) + "'");
  return out;
}

ParamTree unflatten_layer(const ParamTree& params, std::string_view layer,
                          std::span<const double> values) {
  std::vector<ParamTree::Entry> out;
  std::size_t offset = 0;
  bool found = false;
  for (const auto& [name, t] : params.entries()) {
    if (!in_layer(name, layer)) {
      out.emplace_back(name, t);
      continue;
    }
    found = true;
    if (offset + t.size() > values.size()) {
      throw ContractError("unflatten_layer: too few values for layer '" + std::string(layer) + "'");
    }
    std::vector<double> chunk(values.begin() + offset, values.begin() + offset + t.size());
    offset += t.size();
    out.emplace_back(name, Tensor(t.shape(), std::move(chunk)));
  }
  if (!found) throw ContractError("unknown layer '" + std::string(layer) + "'");
  if (offset != values.size()) {
    throw ContractError("unflatten_layer: too many values for layer '" + std::string(layer) + "'");
  }
  return ParamTree(std::move(out));
}

}  // namespace fassl
