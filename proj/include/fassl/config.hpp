// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fassl/data.hpp"
#include "fassl/orchestrator.hpp"

namespace fassl {

/// Synthetic dataset sizes for an experiment.
struct DataSpec {
  std::size_t pretext_classes = 8;
  std::size_t pretext_per_class = 100;
  std::size_t frames = 32;
  std::size_t bands = 16;
  DownstreamConfig downstream;

  bool operator==(const DataSpec&) const = default;
};

/// A run configuration plus the sweep axes. Each matrix cell is one run with
/// the strategy, scope and local epoch count taken from the axes.
struct ExperimentSpec {
  RunConfig run;
  std::vector<StrategyKind> strategies{StrategyKind::FedAvg};
  std::vector<Scope> scopes{Scope::Full};
  std::vector<std::size_t> local_epochs{1};
  std::filesystem::path output_dir = "fassl_out";
  DataSpec data;
  bool plot = false;

  /// Cartesian product strategies x scopes x local_epochs.
  std::vector<RunConfig> cells() const;
  void validate() const;
  bool operator==(const ExperimentSpec&) const = default;
};

/// Parses `key = value` lines ('#' starts a comment). Missing keys keep
/// their defaults; unknown keys and bad values raise ParseError with the
/// line number.
ExperimentSpec parse_config(const std::filesystem::path& path);
ExperimentSpec parse_config_text(std::string_view text);

/// Applies one key=value override (a command-line flag).
void apply_setting(ExperimentSpec& spec, std::string_view key, std::string_view value, int line = 0);

/// Every key with its current value, in the file format parse_config reads.
std::string emit_config(const ExperimentSpec& spec);

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

/// Directory name of a matrix cell, e.g. "simclr_fedavg_full_e1".
std::string cell_name(const RunConfig& cfg);

}  // namespace fassl
