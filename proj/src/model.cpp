// SPDX-License-Identifier: Apache-2.0
#include "fassl/model.hpp"

#include <cmath>

#include "fassl/errors.hpp"
#include "fassl/rng.hpp"

namespace fassl {

void EncoderConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1 || projection_dim < 1 || acop_classes < 1 ||
      acop_segments < 1) {
    throw ContractError("EncoderConfig: all dimensions must be >= 1");
  }
}

std::string_view to_string(FeatureLayer f) {
  return f == FeatureLayer::Backbone ? "backbone" : "projection";
}

FeatureLayer feature_layer_from_string(std::string_view s) {
  if (s == "backbone") return FeatureLayer::Backbone;
  if (s == "projection") return FeatureLayer::Projection;
  throw ContractError("unknown feature layer '" + std::string(s) + "'");
}

ParamTree init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(stream_seed(seed, "init"));
  std::vector<ParamTree::Entry> entries;
  auto linear = [&](const std::string& layer, std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    entries.emplace_back(layer + ".weight", Tensor({in, out}, std::move(w)));
    entries.emplace_back(layer + ".bias", Tensor({out}, 0.0));
  };
  linear("backbone.fc1", cfg.input_dim, cfg.hidden_dim);
  linear("backbone.fc2", cfg.hidden_dim, cfg.embed_dim);
  linear("head.proj.fc1", cfg.embed_dim, cfg.hidden_dim);
  linear("head.proj.fc2", cfg.hidden_dim, cfg.projection_dim);
  linear("head.acop.fc", cfg.acop_segments * cfg.embed_dim, cfg.acop_classes);
  return ParamTree(std::move(entries));
}

BoundParams::BoundParams(Graph& graph, const ParamTree& params, bool trainable) : graph_(&graph) {
  for (const auto& [name, t] : params.entries()) {
    vars_.emplace(name, trainable ? graph.param(name, t) : graph.constant(t));
  }
}

Var BoundParams::operator[](std::string_view name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("parameter '" + std::string(name) + "' not bound");
  return it->second;
}

namespace {

Var linear(const BoundParams& p, const std::string& layer, Var x) {
  return ops::add_row_bias(ops::matmul(x, p[layer + ".weight"]), p[layer + ".bias"]);
}

}  // namespace

Var backbone_forward(const BoundParams& p, Var x) {
  const Tensor& w1 = p["backbone.fc1.weight"].value();
  if (x.value().rank() != 2 || x.value().cols() != w1.rows()) {
    throw ContractError("encode: batch shape " + shape_str(x.shape()) + " does not match input_dim " +
                        std::to_string(w1.rows()));
  }
  Var h = ops::relu(linear(p, "backbone.fc1", x));
  return ops::relu(linear(p, "backbone.fc2", h));
}

Var projection_forward(const BoundParams& p, Var h) {
  return linear(p, "head.proj.fc2", ops::relu(linear(p, "head.proj.fc1", h)));
}

Var acop_head_forward(const BoundParams& p, Var concat) { return linear(p, "head.acop.fc", concat); }

Tensor encode(const ParamTree& params, const Tensor& batch) {
  return features(params, batch, FeatureLayer::Backbone);
}

Tensor features(const ParamTree& params, const Tensor& batch, FeatureLayer layer) {
  Graph g;
  ParamTree needed = params.with_prefix(kBackbonePrefix);
  if (layer == FeatureLayer::Projection) needed = merge(needed, params.with_prefix("head.proj."));
  BoundParams p(g, needed, false);
  Var h = backbone_forward(p, g.constant(batch));
  if (layer == FeatureLayer::Projection) h = projection_forward(p, h);
  return h.value();
}

}  // namespace fassl
