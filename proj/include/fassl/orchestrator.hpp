// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fassl/aggregation.hpp"
#include "fassl/data.hpp"
#include "fassl/evaluator.hpp"
#include "fassl/model.hpp"
#include "fassl/ssl.hpp"

namespace fassl {

struct RunConfig {
  std::size_t rounds = 100;
  std::size_t n_clients = 100;
  std::size_t clients_per_round = 10;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 64;
  double lr = 0.3;  ///< constant across rounds; 0 disables updates
  SslConfig ssl;
  Strategy strategy;
  Scope scope = Scope::Full;
  double alpha = 0.1;
  std::uint64_t master_seed = 0;
  std::size_t eval_every = 10;
  EvalOptions eval;
  EncoderConfig encoder;
  std::size_t threads = 1;  ///< client training workers; results do not depend on it

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// One seeded RNG stream used during a round.
struct RngStream {
  std::string tag;
  std::size_t round = 0;
  std::uint64_t client_id = 0;
  std::uint64_t seed = 0;
};

struct RoundState {
  std::size_t round = 0;  ///< last completed round (0 before the first)
  ParamTree global;
  /// Backbone scope only: heads each client keeps locally.
  std::map<std::uint64_t, ParamTree> client_heads;
  std::vector<RngStream> lineage;  ///< streams of the last completed round
};

struct LocalResult {
  ClientUpdate update;
  ParamTree retained;  ///< non-transceived part of the trained local model
  std::size_t steps = 0;
};

using Shard = std::vector<const Clip*>;

/// s distinct ids from [0, N), sorted ascending.
std::vector<std::uint64_t> sample_clients(std::size_t n_clients, std::size_t per_round, std::size_t round,
                                          std::uint64_t master_seed);

/// E epochs of SGD on the client's pretext task starting from the global
/// model (merged with the client's own head in backbone scope).
LocalResult local_train(const Shard& shard, const ParamTree& global, const ParamTree* retained_head,
                        const RunConfig& cfg, std::uint64_t client_id, std::size_t round);

using AccuracySink = std::function<void(const TaskAccuracy&)>;

struct RoundContext {
  const std::vector<Shard>* shards = nullptr;
  const std::vector<DownstreamTask>* tasks = nullptr;
  OptimaTracker* tracker = nullptr;
  std::optional<std::filesystem::path> checkpoint_dir;
  AccuracySink on_accuracy;
  std::size_t* steps = nullptr;
};

/// One federated round: sample, train in parallel, aggregate, apply scope,
/// and evaluate when the round is a multiple of eval_every.
RoundState run_round(const RoundState& state, const RunConfig& cfg, const RoundContext& ctx);

struct RunOptions {
  /// When set: results.csv (appended row by row), optima.csv, per-evaluation
  /// checkpoints under checkpoints/, and final.fssl.
  std::optional<std::filesystem::path> output_dir;
  std::function<void(const RoundState&)> on_round;
};

struct RunResult {
  std::vector<TaskAccuracy> log;
  ParamTree final_global;
  OptimaTracker tracker;
  std::size_t total_steps = 0;
  std::vector<std::size_t> shard_sizes;
};

RunResult run(const RunConfig& cfg, const SynthDataset& pretext, const std::vector<DownstreamTask>& tasks,
              const RunOptions& options = {});

/// Fixed results schema.
inline constexpr const char* kCsvHeader = "round,strategy,scope,ssl_task,local_epochs,task,k,accuracy";
std::string csv_row(const RunConfig& cfg, const TaskAccuracy& acc);
std::string results_csv(const RunConfig& cfg, const std::vector<TaskAccuracy>& log);

/// Shards of clip pointers for a partition of `dataset`.
std::vector<Shard> materialize(const SynthDataset& dataset, const Partition& partition);

}  // namespace fassl
