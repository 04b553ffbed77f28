// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fassl/config.hpp"

namespace fassl {

/// Missing, empty or malformed results files.
class ResultsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

struct ExperimentData {
  SynthDataset pretext;
  std::vector<DownstreamTask> tasks;
};

/// Pretext set and downstream suite for a spec; both derive from the master seed.
ExperimentData build_data(const ExperimentSpec& spec);

/// Config file (or defaults), then the FASSL_OUT value, then flag overrides
/// in the given order. Throws ParseError.
ExperimentSpec resolve_spec(const std::optional<std::filesystem::path>& config_file, const char* env_output_dir,
                            const std::vector<std::pair<std::string, std::string>>& flags);

/// Runs every matrix cell into <output_dir>/<cell_name>/ and prints the
/// optima table. A failing cell does not stop the others.
int cmd_run(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);

struct CurvePoint {
  std::size_t round = 0;
  double accuracy = 0.0;
};

/// task -> series label -> points in file order. Series are keyed by
/// strategy, scope, ssl task and local epochs.
using ResultCurves = std::map<std::string, std::map<std::string, std::vector<CurvePoint>>>;

/// Reads <dir>/results.csv, or every <dir>/*/results.csv when the top level
/// has none.
ResultCurves read_results(const std::filesystem::path& dir);

/// Renders one task's curves as a standalone SVG document.
std::string render_svg(const std::string& task, const std::map<std::string, std::vector<CurvePoint>>& series);

/// Writes <dir>/plot_<task>.svg for every task and returns the paths.
std::vector<std::filesystem::path> plot_results(const std::filesystem::path& dir);

int cmd_plot(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

struct PartitionStats {
  std::vector<std::size_t> sizes;
  std::vector<double> entropies;
  double mean_entropy = 0.0;
  double min_entropy = 0.0;
  double max_entropy = 0.0;
};

PartitionStats partition_stats(const ExperimentSpec& spec);
int cmd_partition_stats(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);

}  // namespace fassl
