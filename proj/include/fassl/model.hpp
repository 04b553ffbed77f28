// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fassl/autograd.hpp"
#include "fassl/param_tree.hpp"

namespace fassl {

/// MLP encoder dimensions. The backbone maps a flattened clip to an
/// embedding; heads sit under "head.proj." (SimCLR / Barlow Twins) and
/// "head.acop." (order classifier over acop_segments concatenated embeddings).
struct EncoderConfig {
  std::size_t input_dim = 512;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 32;
  std::size_t projection_dim = 32;
  std::size_t acop_classes = 6;
  std::size_t acop_segments = 3;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Which activations serve as retrieval features.
enum class FeatureLayer { Backbone, Projection };

std::string_view to_string(FeatureLayer f);
FeatureLayer feature_layer_from_string(std::string_view s);

/// Seeded init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
ParamTree init_encoder(const EncoderConfig& cfg, std::uint64_t seed);

/// Parameters bound into a graph, trainable or as constants.
class BoundParams {
 public:
  BoundParams(Graph& graph, const ParamTree& params, bool trainable);
  Var operator[](std::string_view name) const;
  Graph& graph() const { return *graph_; }

 private:
  Graph* graph_;
  std::map<std::string, Var, std::less<>> vars_;
};

/// Linear -> ReLU -> Linear -> ReLU.
Var backbone_forward(const BoundParams& p, Var x);
/// Linear -> ReLU -> Linear on backbone output.
Var projection_forward(const BoundParams& p, Var h);
/// Linear classifier on concatenated segment embeddings.
Var acop_head_forward(const BoundParams& p, Var concat);

/// Backbone embeddings for a batch [n x input_dim].
Tensor encode(const ParamTree& params, const Tensor& batch);
/// Retrieval features at the requested layer.
Tensor features(const ParamTree& params, const Tensor& batch, FeatureLayer layer);

}  // namespace fassl
