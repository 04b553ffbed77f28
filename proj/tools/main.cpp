// SPDX-License-Identifier: Apache-2.0
// fassl: federated self-supervised pretraining simulator.
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "fassl/commands.hpp"
#include "fassl/errors.hpp"

namespace {

struct SpecOptions {
  std::string config;
  std::map<std::string, std::string> values;  // key -> raw flag value
  std::vector<std::pair<std::string, CLI::Option*>> flags;
};

void add_spec_options(CLI::App* cmd, SpecOptions& o) {
  cmd->add_option("-c,--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  for (const auto& key : fassl::config_keys()) {
    auto* opt = cmd->add_option("--" + key.name, o.values[key.name], key.help);
    o.flags.emplace_back(key.name, opt);
  }
}

fassl::ExperimentSpec resolve(const SpecOptions& o) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& [name, opt] : o.flags) {
    if (opt->count() > 0) overrides.emplace_back(name, o.values.at(name));
  }
  std::optional<std::filesystem::path> file;
  if (!o.config.empty()) file = o.config;
  return fassl::resolve_spec(file, std::getenv("FASSL_OUT"), overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated self-supervised pretraining simulator"};
  app.require_subcommand(1);

  SpecOptions run_opts, stats_opts, emit_opts;
  auto* run = app.add_subcommand("run", "run every matrix cell and print the optima table");
  add_spec_options(run, run_opts);
  auto* stats = app.add_subcommand("partition-stats", "per-client shard sizes and label entropy");
  add_spec_options(stats, stats_opts);
  auto* emit = app.add_subcommand("emit-defaults", "print the resolved configuration in config-file form");
  add_spec_options(emit, emit_opts);

  std::string plot_dir;
  auto* plot = app.add_subcommand("plot", "write one SVG per downstream task from results CSVs");
  plot->add_option("dir", plot_dir, "results directory (defaults to FASSL_OUT or fassl_out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fassl::kExitConfig;
  }

  try {
    if (*run) return fassl::cmd_run(resolve(run_opts), std::cout, std::cerr);
    if (*stats) return fassl::cmd_partition_stats(resolve(stats_opts), std::cout, std::cerr);
    if (*emit) {
      std::cout << fassl::emit_config(resolve(emit_opts));
      return fassl::kExitOk;
    }
    if (*plot) {
      if (plot_dir.empty()) {
        const char* env = std::getenv("FASSL_OUT");
        plot_dir = env && *env ? env : fassl::ExperimentSpec{}.output_dir.string();
      }
      return fassl::cmd_plot(plot_dir, std::cout, std::cerr);
    }
  } catch (const fassl::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return fassl::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fassl::kExitRuntime;
  }
  return fassl::kExitOk;
}
