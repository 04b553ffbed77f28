// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "fassl/param_tree.hpp"

namespace fassl {

/// A client's upload: parameters for the transceived scope only.
struct ClientUpdate {
  std::uint64_t client_id = 0;
  ParamTree params;
  std::size_t n_samples = 0;
  double mean_loss = 0.0;
};

enum class StrategyKind { FedAvg, FairAvg, Loss, FedU, LDawa };

std::string_view to_string(StrategyKind k);
StrategyKind strategy_from_string(std::string_view s);

/// Direction of Loss weighting: proportional gives higher-loss clients more
/// weight; inverse gives lower-loss clients more weight.
enum class LossWeighting { Proportional, Inverse };

std::string_view to_string(LossWeighting w);
LossWeighting loss_weighting_from_string(std::string_view s);

struct Strategy {
  StrategyKind kind = StrategyKind::FedAvg;
  double fedu_mu = 0.5;  ///< FedU backbone divergence threshold
  LossWeighting loss_weighting = LossWeighting::Proportional;

  void validate() const;
  bool operator==(const Strategy&) const = default;
};

/// beta_i = n_i / sum n.
std::vector<double> beta_fedavg(const std::vector<ClientUpdate>& updates);
/// beta_i = 1 / s.
std::vector<double> beta_fairavg(const std::vector<ClientUpdate>& updates);
/// beta_i proportional to mean_loss_i (or its inverse); uniform if all losses are 0.
std::vector<double> beta_loss(const std::vector<ClientUpdate>& updates,
                              LossWeighting weighting = LossWeighting::Proportional);

/// Per layer: beta = clamp(cos(w_i, w_global), 0, 1), renormalized; uniform
/// when every beta of the layer is below 1e-12.
ParamTree ldawa_aggregate(const ParamTree& global_prev, const std::vector<ClientUpdate>& updates);

/// Backbone by FedAvg; heads averaged (FedAvg weights) only over clients whose
/// relative backbone divergence is below mu, else kept from global_prev.
ParamTree fedu_aggregate(const ParamTree& global_prev, const std::vector<ClientUpdate>& updates,
                         double mu);

/// New transceived parameters. Updates are sorted by client_id before any
/// arithmetic, and must all be congruent with each other and with the
/// matching entries of global_prev.
ParamTree aggregate(const Strategy& strategy, const ParamTree& global_prev,
                    std::vector<ClientUpdate> updates);

/// Full: aggregated replaces the global model. Backbone: aggregated backbone
/// merged with the server's existing heads.
ParamTree scope_apply(Scope scope, const ParamTree& global_prev, const ParamTree& aggregated);

/// Sum_i beta_i * w_i reduced in the given order, clamped per scalar to the
/// client range so rounding never leaves the convex hull.
ParamTree weighted_combination(const std::vector<const ParamTree*>& trees,
                               const std::vector<double>& betas);

}  // namespace fassl
