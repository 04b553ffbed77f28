// SPDX-License-Identifier: Apache-2.0
#include "fassl/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fassl/errors.hpp"

namespace fassl {

std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::FedAvg: return "fedavg";
    case StrategyKind::FairAvg: return "fairavg";
    case StrategyKind::Loss: return "loss";
    case StrategyKind::FedU: return "fedu";
    case StrategyKind::LDawa: return "ldawa";
  }
  return "unknown";
}

StrategyKind strategy_from_string(std::string_view s) {
  if (s == "fedavg") return StrategyKind::FedAvg;
  if (s == "fairavg") return StrategyKind::FairAvg;
  if (s == "loss") return StrategyKind::Loss;
  if (s == "fedu") return StrategyKind::FedU;
  if (s == "ldawa") return StrategyKind::LDawa;
  throw ContractError("unknown strategy '" + std::string(s) + "' (expected fedavg|fairavg|loss|fedu|ldawa)");
}

std::string_view to_string(LossWeighting w) {
  return w == LossWeighting::Proportional ? "proportional" : "inverse";
}

LossWeighting loss_weighting_from_string(std::string_view s) {
  if (s == "proportional") return LossWeighting::Proportional;
  if (s == "inverse") return LossWeighting::Inverse;
  throw ContractError("unknown loss weighting '" + std::string(s) + "'");
}

void Strategy::validate() const {
  if (kind == StrategyKind::FedU && !(fedu_mu > 0.0)) throw ContractError("FedU requires mu > 0");
}

namespace {

void require_nonempty(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw ContractError("aggregation needs at least one client update");
}

std::vector<double> normalized(const std::vector<double>& w) {
  double total = 0.0;
  for (double v : w) total += v;
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] / total;
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<const ParamTree*> trees_of(const std::vector<ClientUpdate>& updates) {
  std::vector<const ParamTree*> out;
  out.reserve(updates.size());
  for (const auto& u : updates) out.push_back(&u.params);
  return out;
}

void sort_by_client(std::vector<ClientUpdate>& updates) {
  std::stable_sort(updates.begin(), updates.end(),
                   [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
}

void check_congruent(const ParamTree& global_prev, const std::vector<ClientUpdate>& updates) {
  require_nonempty(updates);
  const ParamTree& ref = updates.front().params;
  for (const auto& u : updates) {
    if (u.n_samples < 1) throw ContractError("client update with n_samples < 1");
    if (!std::isfinite(u.mean_loss)) throw ContractError("client update with non-finite loss");
    if (!u.params.congruent(ref)) {
      throw ContractError("client " + std::to_string(u.client_id) + " update is not congruent");
    }
  }
  for (const auto& [name, t] : ref.entries()) {
    if (!global_prev.contains(name) || global_prev.at(name).shape() != t.shape()) {
      throw ContractError("update entry '" + name + "' is not congruent with the global model");
    }
  }
}

}  // namespace

std::vector<double> beta_fedavg(const std::vector<ClientUpdate>& updates) {
  require_nonempty(updates);
  std::vector<double> w;
  for (const auto& u : updates) w.push_back(static_cast<double>(u.n_samples));
  return normalized(w);
}

std::vector<double> beta_fairavg(const std::vector<ClientUpdate>& updates) {
  require_nonempty(updates);
  return std::vector<double>(updates.size(), 1.0 / static_cast<double>(updates.size()));
}

std::vector<double> beta_loss(const std::vector<ClientUpdate>& updates, LossWeighting weighting) {
  require_nonempty(updates);
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.mean_loss < 0.0) throw ContractError("Loss aggregation needs non-negative losses");
    total += u.mean_loss;
  }
  if (total == 0.0) return beta_fairavg(updates);
  std::vector<double> w;
  if (weighting == LossWeighting::Proportional) {
    for (const auto& u : updates) w.push_back(u.mean_loss);
  } else {
    // Zero-loss clients take all the weight when present.
    const bool any_zero = std::any_of(updates.begin(), updates.end(),
                                      [](const ClientUpdate& u) { return u.mean_loss == 0.0; });
    for (const auto& u : updates) {
      w.push_back(any_zero ? (u.mean_loss == 0.0 ? 1.0 : 0.0) : 1.0 / u.mean_loss);
    }
  }
  return normalized(w);
}

ParamTree weighted_combination(const std::vector<const ParamTree*>& trees,
                               const std::vector<double>& betas) {
  if (trees.empty() || trees.size() != betas.size()) {
    throw ContractError("weighted_combination: trees and weights differ in count");
  }
  std::vector<ParamTree::Entry> out;
  for (const auto& [name, ref] : trees.front()->entries()) {
    std::vector<double> acc(ref.size(), 0.0);
    std::vector<double> lo(ref.values()), hi(ref.values());
    for (std::size_t i = 0; i < trees.size(); ++i) {
      const auto v = trees[i]->at(name).data();
      for (std::size_t j = 0; j < acc.size(); ++j) {
        acc[j] += betas[i] * v[j];
        lo[j] = std::min(lo[j], v[j]);
        hi[j] = std::max(hi[j], v[j]);
      }
    }
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] = std::clamp(acc[j], lo[j], hi[j]);
    out.emplace_back(name, Tensor(ref.shape(), std::move(acc)));
  }
  return ParamTree(std::move(out));
}

ParamTree ldawa_aggregate(const ParamTree& global_prev, const std::vector<ClientUpdate>& updates) {
  check_congruent(global_prev, updates);
  const ParamTree& ref = updates.front().params;
  ParamTree result = ref;
  for (const auto& layer : ref.layers()) {
    const std::vector<double> g = flatten_layer(global_prev.with_prefix(layer + "."), layer);
    const double g_norm = std::sqrt(dot(g, g));
    std::vector<double> beta;
    std::vector<ParamTree> layer_trees;
    double total = 0.0;
    for (const auto& u : updates) {
      const std::vector<double> w = flatten_layer(u.params, layer);
      const double w_norm = std::sqrt(dot(w, w));
      const double cos = (g_norm > 0.0 && w_norm > 0.0) ? dot(w, g) / (w_norm * g_norm) : 0.0;
      beta.push_back(std::clamp(cos, 0.0, 1.0));
      total += beta.back();
      layer_trees.push_back(u.params.with_prefix(layer + "."));
    }
    if (total < 1e-12) {
      std::fill(beta.begin(), beta.end(), 1.0);
      total = static_cast<double>(beta.size());
    }
    for (double& b : beta) b /= total;
    std::vector<const ParamTree*> ptrs;
    for (const auto& t : layer_trees) ptrs.push_back(&t);
    const ParamTree combined = weighted_combination(ptrs, beta);
    for (const auto& [name, t] : combined.entries()) result.set(name, t);
  }
  return result;
}

namespace {

double relative_divergence(const ParamTree& client, const ParamTree& global) {
  const std::vector<double> c = flatten_layer(client, "backbone");
  const std::vector<double> g = flatten_layer(global, "backbone");
  double diff = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) diff += (c[i] - g[i]) * (c[i] - g[i]);
  const double g_norm = std::sqrt(dot(g, g));
  if (g_norm == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(diff) / g_norm;
}

}  // namespace

ParamTree fedu_aggregate(const ParamTree& global_prev, const std::vector<ClientUpdate>& updates,
                         double mu) {
  if (!(mu > 0.0)) throw ContractError("FedU requires mu > 0");
  check_congruent(global_prev, updates);
  const ParamTree backbone_global = global_prev.with_prefix(kBackbonePrefix);
  std::vector<ParamTree> backbones, heads;
  for (const auto& u : updates) {
    backbones.push_back(u.params.with_prefix(kBackbonePrefix));
    heads.push_back(u.params.without_prefix(kBackbonePrefix));
  }
  if (backbones.front().empty()) throw ContractError("FedU needs backbone entries in the updates");

  const std::vector<double> beta = beta_fedavg(updates);
  std::vector<const ParamTree*> bb_ptrs;
  for (const auto& t : backbones) bb_ptrs.push_back(&t);
  ParamTree result = weighted_combination(bb_ptrs, beta);
  if (heads.front().empty()) return result;

  std::vector<ClientUpdate> passing;
  std::vector<const ParamTree*> head_ptrs;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (relative_divergence(backbones[i], backbone_global) < mu) {
      passing.push_back(ClientUpdate{updates[i].client_id, {}, updates[i].n_samples, updates[i].mean_loss});
      head_ptrs.push_back(&heads[i]);
    }
  }
  if (passing.empty()) {
    for (const auto& [name, _] : heads.front().entries()) result.set(name, global_prev.at(name));
    return result;
  }
  const ParamTree combined = weighted_combination(head_ptrs, beta_fedavg(passing));
  for (const auto& [name, t] : combined.entries()) {
    result.set(name, t);
  }
  return result;
}

ParamTree aggregate(const Strategy& strategy, const ParamTree& global_prev,
                    std::vector<ClientUpdate> updates) {
  strategy.validate();
  sort_by_client(updates);
  check_congruent(global_prev, updates);
  switch (strategy.kind) {
    case StrategyKind::FedAvg: return weighted_combination(trees_of(updates), beta_fedavg(updates));
    case StrategyKind::FairAvg: return weighted_combination(trees_of(updates), beta_fairavg(updates));
    case StrategyKind::Loss:
      return weighted_combination(trees_of(updates), beta_loss(updates, strategy.loss_weighting));
    case StrategyKind::FedU: return fedu_aggregate(global_prev, updates, strategy.fedu_mu);
    case StrategyKind::LDawa: return ldawa_aggregate(global_prev, updates);
  }
  throw ContractError("unhandled strategy");
}

ParamTree scope_apply(Scope scope, const ParamTree& global_prev, const ParamTree& aggregated) {
  if (scope == Scope::Full) {
    if (!aggregated.congruent(global_prev)) {
      throw ContractError("scope_apply(full): aggregated tree does not cover the full model");
    }
    return aggregated;
  }
  const ParamTree backbone = global_prev.with_prefix(kBackbonePrefix);
  if (!aggregated.congruent(backbone)) {
    throw ContractError("scope_apply(backbone): aggregated tree must hold exactly the backbone");
  }
  return merge(aggregated, global_prev.without_prefix(kBackbonePrefix));
}

}  // namespace fassl
