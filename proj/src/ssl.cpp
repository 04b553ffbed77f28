// SPDX-License-Identifier: Apache-2.0
#include "fassl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fassl/errors.hpp"

namespace fassl {

std::string_view to_string(SslTask t) {
  switch (t) {
    case SslTask::Acop: return "acop";
    case SslTask::SimClr: return "simclr";
    case SslTask::BarlowTwins: return "barlow_twins";
  }
  return "unknown";
}

SslTask ssl_task_from_string(std::string_view s) {
  if (s == "acop") return SslTask::Acop;
  if (s == "simclr") return SslTask::SimClr;
  if (s == "barlow_twins") return SslTask::BarlowTwins;
  throw ContractError("unknown ssl task '" + std::string(s) + "' (expected acop|simclr|barlow_twins)");
}

void AugmentPolicy::validate() const {
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) throw ContractError("crop_fraction must be in (0, 1]");
  if (!(noise_std >= 0.0)) throw ContractError("noise_std must be >= 0");
  if (!(band_mask_prob >= 0.0 && band_mask_prob <= 1.0)) throw ContractError("band_mask_prob must be in [0, 1]");
}

Tensor augment(const Clip& clip, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  const std::size_t frames = clip.frames(), bands = clip.bands();
  if (frames < 2) throw ContractError("augment: clip needs at least 2 frames");
  const auto src = clip.features.data();

  std::size_t len = static_cast<std::size_t>(std::lround(policy.crop_fraction * static_cast<double>(frames)));
  len = std::clamp<std::size_t>(len, 1, frames);
  const std::size_t start = len == frames ? 0 : rng.index(frames - len + 1);

  std::vector<double> view(frames * bands);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t s = start + (t * len) / frames;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(s * bands), bands,
                view.begin() + static_cast<std::ptrdiff_t>(t * bands));
  }
  if (policy.noise_std > 0.0) {
    for (auto& v : view) v += rng.normal(0.0, policy.noise_std);
  }
  if (policy.band_mask_prob > 0.0) {
    for (std::size_t b = 0; b < bands; ++b) {
      if (rng.uniform() < policy.band_mask_prob) {
        for (std::size_t t = 0; t < frames; ++t) view[t * bands + b] = 0.0;
      }
    }
  }
  return Tensor({frames * bands}, std::move(view));
}

Var nt_xent_loss(Var z, double tau) {
  if (!(tau > 0.0)) throw ContractError("nt_xent_loss: tau must be > 0");
  const Tensor& Z = z.value();
  if (Z.rank() != 2 || Z.rows() % 2 != 0) {
    throw ContractError("nt_xent_loss: expects 2n rows of paired views, got " + shape_str(Z.shape()));
  }
  const std::size_t rows = Z.rows();
  if (rows < 4) throw ContractError("nt_xent_loss: needs n >= 2 pairs for negatives");
  Var zn = ops::l2_normalize_rows(z, 1e-12);
  Var logits = ops::scale(ops::matmul(zn, ops::transpose(zn)), 1.0 / tau);
  std::vector<bool> self(rows * rows, false);
  std::vector<std::size_t> positives(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    self[i * rows + i] = true;
    positives[i] = i * rows + (i ^ 1U);
  }
  Var logp = ops::log_softmax_rows(logits, std::move(self));
  return ops::scale(ops::mean(ops::pick(logp, std::move(positives))), -1.0);
}

double nt_xent_loss(const Tensor& z, double tau) {
  Graph g;
  return nt_xent_loss(g.constant(z), tau).value()[0];
}

Var barlow_twins_loss(Var za, Var zb, double lambda, double eps) {
  if (!(lambda >= 0.0)) throw ContractError("barlow_twins_loss: lambda must be >= 0");
  const Tensor& A = za.value();
  const Tensor& B = zb.value();
  if (A.rank() != 2 || A.shape() != B.shape()) {
    throw DimensionError("barlow_twins_loss: shapes " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  }
  const std::size_t n = A.rows(), d = A.cols();
  if (n < 2) throw ContractError("barlow_twins_loss: needs n >= 2");
  Var a = ops::standardize_cols(za, eps);
  Var b = ops::standardize_cols(zb, eps);
  Var c = ops::scale(ops::matmul(ops::transpose(a), b), 1.0 / static_cast<double>(n));
  Tensor target({d, d}, 0.0);
  Tensor weights({d, d}, lambda);
  for (std::size_t i = 0; i < d; ++i) {
    target.at(i, i) = 1.0;
    weights.at(i, i) = 1.0;
  }
  return ops::weighted_sq_error(c, target, weights);
}

double barlow_twins_loss(const Tensor& za, const Tensor& zb, double lambda, double eps) {
  Graph g;
  return barlow_twins_loss(g.constant(za), g.constant(zb), lambda, eps).value()[0];
}

PermutationTable permutation_table(std::size_t m) {
  if (m < 1) throw ContractError("permutation_table: m must be >= 1");
  std::vector<std::size_t> p(m);
  std::iota(p.begin(), p.end(), 0);
  PermutationTable table;
  do {
    table.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return table;
}

AcopBatch acop_make_batch(std::span<const Clip* const> clips, std::size_t m,
                          const PermutationTable& perms, Rng& rng) {
  if (m < 2) throw ContractError("acop_make_batch: m must be >= 2");
  if (perms.empty()) throw ContractError("acop_make_batch: empty permutation table");
  for (const auto& p : perms) {
    if (p.size() != m) throw ContractError("acop_make_batch: permutation length differs from m");
  }
  if (clips.empty()) throw ContractError("acop_make_batch: no clips");
  const std::size_t frames = clips.front()->frames(), bands = clips.front()->bands();
  const std::size_t dim = frames * bands;

  AcopBatch batch;
  batch.m = m;
  std::vector<double> data;
  data.reserve(clips.size() * m * dim);
  for (const Clip* clip : clips) {
    if (clip->frames() != frames || clip->bands() != bands) {
      throw DimensionError("acop_make_batch: clips of unequal shape");
    }
    if (frames < 2 * m) {
      throw ContractError("acop_make_batch: clip of " + std::to_string(frames) +
                          " frames is too short for " + std::to_string(m) + " segments");
    }
    const std::size_t seg_len = frames / m;
    const std::size_t label = rng.index(perms.size());
    const auto src = clip->features.data();
    for (std::size_t pos = 0; pos < m; ++pos) {
      const std::size_t seg_start = perms[label][pos] * seg_len;
      for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t s = seg_start + (t * seg_len) / frames;
        data.insert(data.end(), src.begin() + static_cast<std::ptrdiff_t>(s * bands),
                    src.begin() + static_cast<std::ptrdiff_t>((s + 1) * bands));
      }
    }
    batch.labels.push_back(label);
  }
  batch.segments = Tensor({clips.size() * m, dim}, std::move(data));
  return batch;
}

Var acop_loss(const BoundParams& params, const AcopBatch& batch) {
  Graph& g = params.graph();
  const std::size_t n = batch.labels.size();
  if (n == 0 || batch.segments.rows() != n * batch.m) throw ContractError("acop_loss: malformed batch");
  Var emb = backbone_forward(params, g.constant(batch.segments));
  const std::size_t e = emb.value().cols();
  Var concat = ops::reshape(emb, {n, batch.m * e});
  Var logits = acop_head_forward(params, concat);
  const std::size_t classes = logits.value().cols();
  std::vector<std::size_t> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.labels[i] >= classes) throw ContractError("acop_loss: label exceeds classifier size");
    targets[i] = i * classes + batch.labels[i];
  }
  return ops::scale(ops::mean(ops::pick(ops::log_softmax_rows(logits), std::move(targets))), -1.0);
}

double acop_loss(const ParamTree& params, const AcopBatch& batch) {
  Graph g;
  BoundParams p(g, params, false);
  return acop_loss(p, batch).value()[0];
}

std::size_t min_batch(SslTask task) { return task == SslTask::Acop ? 1 : 2; }

Var pretext_loss(const SslConfig& cfg, const BoundParams& params,
                 std::span<const Clip* const> clips, const PermutationTable& perms, Rng& rng) {
  Graph& g = params.graph();
  if (cfg.task == SslTask::Acop) {
    return acop_loss(params, acop_make_batch(clips, perms.front().size(), perms, rng));
  }
  const std::size_t n = clips.size();
  const std::size_t dim = clips.front()->features.size();
  std::vector<double> a, b;
  a.reserve(n * dim);
  b.reserve(n * dim);
  for (const Clip* clip : clips) {
    const Tensor v1 = augment(*clip, cfg.augment, rng);
    const Tensor v2 = augment(*clip, cfg.augment, rng);
    a.insert(a.end(), v1.data().begin(), v1.data().end());
    b.insert(b.end(), v2.data().begin(), v2.data().end());
  }
  if (cfg.task == SslTask::SimClr) {
    std::vector<double> inter;
    inter.reserve(2 * n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      inter.insert(inter.end(), a.begin() + static_cast<std::ptrdiff_t>(i * dim),
                   a.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
      inter.insert(inter.end(), b.begin() + static_cast<std::ptrdiff_t>(i * dim),
                   b.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    }
    Var z = projection_forward(params, backbone_forward(params, g.constant(Tensor({2 * n, dim}, std::move(inter)))));
    return nt_xent_loss(z, cfg.tau);
  }
  Var za = projection_forward(params, backbone_forward(params, g.constant(Tensor({n, dim}, std::move(a)))));
  Var zb = projection_forward(params, backbone_forward(params, g.constant(Tensor({n, dim}, std::move(b)))));
  return barlow_twins_loss(za, zb, cfg.bt_lambda, cfg.bt_eps);
}

}  // namespace fassl
