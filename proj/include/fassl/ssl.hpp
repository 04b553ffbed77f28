// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "fassl/autograd.hpp"
#include "fassl/data.hpp"
#include "fassl/model.hpp"
#include "fassl/rng.hpp"

namespace fassl {

enum class SslTask { Acop, SimClr, BarlowTwins };

std::string_view to_string(SslTask t);
SslTask ssl_task_from_string(std::string_view s);

/// View augmentation: a random contiguous time crop (resampled back to the
/// full frame count by nearest frame), additive Gaussian noise, and per-band
/// zeroing.
struct AugmentPolicy {
  double crop_fraction = 0.6;
  double noise_std = 0.1;
  double band_mask_prob = 0.1;
  std::uint64_t stream_id = 0;

  void validate() const;
  bool operator==(const AugmentPolicy&) const = default;
};

/// Flattened augmented view of a clip.
Tensor augment(const Clip& clip, const AugmentPolicy& policy, Rng& rng);

/// NT-Xent over 2n rows where rows (2i, 2i+1) are positive pairs.
Var nt_xent_loss(Var z, double tau);
double nt_xent_loss(const Tensor& z, double tau);

/// Barlow Twins redundancy-reduction loss on column-standardized embeddings.
Var barlow_twins_loss(Var za, Var zb, double lambda, double eps);
double barlow_twins_loss(const Tensor& za, const Tensor& zb, double lambda, double eps);

using PermutationTable = std::vector<std::vector<std::size_t>>;

/// All permutations of m items in lexicographic order; index 0 is identity.
PermutationTable permutation_table(std::size_t m);

struct AcopBatch {
  Tensor segments;                  ///< (n*m) x (frames*bands), presented order
  std::vector<std::size_t> labels;  ///< permutation index per clip
  std::size_t m = 0;
};

/// Splits each clip into m equal contiguous segments, each resampled to the
/// clip's frame count, and presents them in a uniformly sampled order.
AcopBatch acop_make_batch(std::span<const Clip* const> clips, std::size_t m,
                          const PermutationTable& perms, Rng& rng);

/// Softmax cross-entropy of the order classifier, mean over clips.
Var acop_loss(const BoundParams& params, const AcopBatch& batch);
double acop_loss(const ParamTree& params, const AcopBatch& batch);

/// Loss hyperparameters for the three pretext tasks.
struct SslConfig {
  SslTask task = SslTask::SimClr;
  double tau = 0.5;
  double bt_lambda = 5e-3;
  double bt_eps = 1e-9;
  AugmentPolicy augment;

  bool operator==(const SslConfig&) const = default;
};

/// Builds one training batch for the configured task (views or permuted
/// segments) and returns its loss node.
Var pretext_loss(const SslConfig& cfg, const BoundParams& params,
                 std::span<const Clip* const> clips, const PermutationTable& perms, Rng& rng);

/// Smallest batch the task can form a loss on.
std::size_t min_batch(SslTask task);

}  // namespace fassl
