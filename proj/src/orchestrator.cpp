// SPDX-License-Identifier: Apache-2.0
#include "fassl/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "fassl/checkpoint.hpp"
#include "fassl/errors.hpp"
#include "fassl/optim.hpp"
#include "fassl/rng.hpp"

namespace fassl {

void RunConfig::validate() const {
  if (rounds < 1) throw ContractError("rounds must be >= 1");
  if (n_clients < 1) throw ContractError("clients must be >= 1");
  if (clients_per_round < 1 || clients_per_round > n_clients) {
    throw ContractError("clients_per_round must be in [1, clients]");
  }
  if (local_epochs < 1) throw ContractError("local_epochs must be >= 1");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ContractError("lr must be >= 0");
  if (!(alpha > 0.0)) throw ContractError("alpha must be > 0");
  if (eval_every < 1) throw ContractError("eval_every must be >= 1");
  if (eval.k < 1) throw ContractError("k must be >= 1");
  if (threads < 1) throw ContractError("threads must be >= 1");
  if (!(ssl.tau > 0.0)) throw ContractError("tau must be > 0");
  if (!(ssl.bt_lambda >= 0.0)) throw ContractError("bt_lambda must be >= 0");
  if (!(ssl.bt_eps > 0.0)) throw ContractError("bt_eps must be > 0");
  ssl.augment.validate();
  strategy.validate();
  encoder.validate();
  if (ssl.task == SslTask::Acop) {
    const std::size_t m = encoder.acop_segments;
    if (m < 2) throw ContractError("acop_segments must be >= 2");
    if (permutation_table(m).size() != encoder.acop_classes) {
      throw ContractError("acop_classes must equal acop_segments! for the permutation table");
    }
  }
}

std::vector<std::uint64_t> sample_clients(std::size_t n_clients, std::size_t per_round, std::size_t round,
                                          std::uint64_t master_seed) {
  if (per_round < 1 || per_round > n_clients) {
    throw ContractError("sample_clients: need 1 <= s <= N (s=" + std::to_string(per_round) +
                        ", N=" + std::to_string(n_clients) + ")");
  }
  std::vector<std::uint64_t> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(stream_seed(master_seed, "sample", round));
  // Partial Fisher-Yates: the first s slots become a uniform sample.
  for (std::size_t i = 0; i < per_round; ++i) std::swap(ids[i], ids[i + rng.index(n_clients - i)]);
  ids.resize(per_round);
  std::sort(ids.begin(), ids.end());
  return ids;
}

LocalResult local_train(const Shard& shard, const ParamTree& global, const ParamTree* retained_head,
                        const RunConfig& cfg, std::uint64_t client_id, std::size_t round) {
  if (shard.empty()) throw ContractError("local_train: client " + std::to_string(client_id) + " has no data");
  ParamTree model = global;
  if (cfg.scope == Scope::Backbone && retained_head != nullptr) {
    model = merge(global.with_prefix(kBackbonePrefix), *retained_head);
  }

  Rng rng(stream_seed(cfg.master_seed, "train", round, client_id));
  Rng aug_rng(stream_seed(stream_seed(cfg.master_seed, "augment", round, client_id), "policy",
                          cfg.ssl.augment.stream_id));
  const PermutationTable perms = permutation_table(std::max<std::size_t>(cfg.encoder.acop_segments, 1));
  const std::size_t min_clips = min_batch(cfg.ssl.task);

  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), 0);
  LocalResult result;
  double last_epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < min_clips) break;
      std::vector<const Clip*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(shard[order[i]]);
      Graph g;
      BoundParams bound(g, model, true);
      Var loss = pretext_loss(cfg.ssl, bound, batch, perms, aug_rng);
      loss_sum += loss.value()[0];
      ++batches;
      const GradientMap grads = g.backward(loss);
      if (cfg.lr > 0.0) model = sgd_step(model, grads, cfg.lr);
      ++result.steps;
    }
    last_epoch_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  }

  auto [transceived, retained] = split(model, cfg.scope);
  result.update = ClientUpdate{client_id, std::move(transceived), shard.size(), last_epoch_loss};
  result.retained = std::move(retained);
  return result;
}

namespace {

std::string round_name(std::size_t round) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "round_%04zu.fssl", round);
  return buf;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

RoundState run_round(const RoundState& state, const RunConfig& cfg, const RoundContext& ctx) {
  if (ctx.shards == nullptr || ctx.shards->size() != cfg.n_clients) {
    throw ContractError("run_round: shard count does not match clients");
  }
  const std::size_t round = state.round + 1;
  if (round > cfg.rounds) throw ContractError("run_round: all rounds already completed");

  RoundState next;
  next.round = round;
  next.client_heads = state.client_heads;

  const auto selected = sample_clients(cfg.n_clients, cfg.clients_per_round, round, cfg.master_seed);
  next.lineage.push_back({"sample", round, 0, stream_seed(cfg.master_seed, "sample", round)});

  std::vector<LocalResult> results(selected.size());
  parallel_for(selected.size(), cfg.threads, [&](std::size_t i) {
    const std::uint64_t id = selected[i];
    const ParamTree* head = nullptr;
    if (cfg.scope == Scope::Backbone) {
      auto it = state.client_heads.find(id);
      if (it != state.client_heads.end()) head = &it->second;
    }
    results[i] = local_train((*ctx.shards)[id], state.global, head, cfg, id, round);
  });

  std::vector<ClientUpdate> updates;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::uint64_t id = selected[i];
    next.lineage.push_back({"train", round, id, stream_seed(cfg.master_seed, "train", round, id)});
    if (ctx.steps) *ctx.steps += results[i].steps;
    if (cfg.scope == Scope::Backbone) next.client_heads[id] = std::move(results[i].retained);
    updates.push_back(std::move(results[i].update));
  }

  const ParamTree aggregated = aggregate(cfg.strategy, state.global, std::move(updates));
  next.global = scope_apply(cfg.scope, state.global, aggregated);

  if (round % cfg.eval_every == 0 && ctx.tasks != nullptr) {
    const auto accs = evaluate_global(next.global, *ctx.tasks, round, cfg.eval);
    std::string ref = round_name(round);
    if (ctx.checkpoint_dir) {
      const auto path = *ctx.checkpoint_dir / ref;
      checkpoint::save(next.global, path);
      ref = path.string();
    }
    if (ctx.tracker) ctx.tracker->update(round, accs, ref);
    if (ctx.on_accuracy)
      for (const auto& a : accs) ctx.on_accuracy(a);
  }
  return next;
}

std::vector<Shard> materialize(const SynthDataset& dataset, const Partition& partition) {
  std::unordered_map<std::uint64_t, const Clip*> by_id;
  for (const auto& c : dataset.clips) by_id.emplace(c.clip_id, &c);
  std::vector<Shard> shards;
  for (const auto& ids : partition.shards) {
    Shard s;
    for (auto id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ContractError("partition references unknown clip " + std::to_string(id));
      s.push_back(it->second);
    }
    shards.push_back(std::move(s));
  }
  return shards;
}

std::string csv_row(const RunConfig& cfg, const TaskAccuracy& acc) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", acc.top1_retrieval);
  return std::to_string(acc.round) + "," + std::string(to_string(cfg.strategy.kind)) + "," +
         std::string(to_string(cfg.scope)) + "," + std::string(to_string(cfg.ssl.task)) + "," +
         std::to_string(cfg.local_epochs) + "," + acc.task + "," + std::to_string(acc.k) + "," + buf;
}

std::string results_csv(const RunConfig& cfg, const std::vector<TaskAccuracy>& log) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& a : log) out += csv_row(cfg, a) + "\n";
  return out;
}

RunResult run(const RunConfig& cfg, const SynthDataset& pretext, const std::vector<DownstreamTask>& tasks,
              const RunOptions& options) {
  cfg.validate();
  if (tasks.empty()) throw ContractError("run: no downstream tasks");
  if (pretext.clips.empty() || pretext.clips.front().features.size() != cfg.encoder.input_dim) {
    throw ContractError("run: pretext clips do not match encoder input_dim " +
                        std::to_string(cfg.encoder.input_dim));
  }
  const Partition partition = dirichlet_partition(pretext, cfg.n_clients, cfg.alpha, cfg.master_seed);
  const std::vector<Shard> shards = materialize(pretext, partition);

  RunResult result;
  for (const auto& s : shards) result.shard_sizes.push_back(s.size());

  std::ofstream csv;
  std::optional<std::filesystem::path> ckpt_dir;
  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir / "checkpoints");
    ckpt_dir = *options.output_dir / "checkpoints";
    csv.open(*options.output_dir / "results.csv", std::ios::trunc | std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write results.csv in " + options.output_dir->string());
    csv << kCsvHeader << '\n' << std::flush;
  }

  auto write_optima = [&] {
    if (!options.output_dir) return;
    std::ofstream f(*options.output_dir / "optima.csv", std::ios::trunc | std::ios::binary);
    f << result.tracker.to_csv();
  };

  RoundContext ctx;
  ctx.shards = &shards;
  ctx.tasks = &tasks;
  ctx.tracker = &result.tracker;
  ctx.checkpoint_dir = ckpt_dir;
  ctx.steps = &result.total_steps;
  ctx.on_accuracy = [&](const TaskAccuracy& a) {
    result.log.push_back(a);
    if (csv.is_open()) csv << csv_row(cfg, a) << '\n' << std::flush;
  };

  RoundState state;
  state.global = init_encoder(cfg.encoder, cfg.master_seed);
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    state = run_round(state, cfg, ctx);
    if (r % cfg.eval_every == 0) write_optima();
    if (options.on_round) options.on_round(state);
  }
  result.final_global = state.global;
  if (options.output_dir) {
    checkpoint::save(result.final_global, *options.output_dir / "final.fssl");
    write_optima();
  }
  return result;
}

}  // namespace fassl
