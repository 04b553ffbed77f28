#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fassl/commands.hpp"
#include "fassl/errors.hpp"

using namespace fassl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fassl_cli_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentSpec tiny_spec(const fs::path& out) {
  return parse_config_text(
      "rounds = 2\nclients = 4\nclients_per_round = 2\neval_every = 1\nbatch_size = 8\nalpha = 1\n"
      "pretext_classes = 2\npretext_per_class = 8\nframes = 12\nbands = 4\nhidden_dim = 8\nembed_dim = 4\n"
      "projection_dim = 4\ndownstream_classes = 2\ndownstream_train_per_class = 3\n"
      "downstream_test_per_class = 3\noutput_dir = " +
      out.string() + "\n");
}

// Minimal well-formedness: every element closed in order, attributes quoted.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while ((i = s.find('<', i)) != std::string::npos) {
    const std::size_t j = s.find('>', i);
    if (j == std::string::npos) return false;
    std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.starts_with("?") || tag.starts_with("!")) continue;
    if (std::count(tag.begin(), tag.end(), '"') % 2) return false;
    if (tag.starts_with("/")) {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.ends_with("/");
    const std::string name = tag.substr(0, tag.find_first_of(" /"));
    if (stack.empty()) {
      if (root_seen) return false;
      root_seen = true;
    }
    if (!self_closing) stack.push_back(name);
  }
  return root_seen && stack.empty();
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = 0; (p = s.find(needle, p)) != std::string::npos; p += needle.size()) ++n;
  return n;
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const ExperimentSpec spec = parse_config_text("");
  EXPECT_EQ(spec.run.rounds, 100u);
  EXPECT_EQ(spec.run.n_clients, 100u);
  EXPECT_EQ(spec.run.clients_per_round, 10u);
  EXPECT_EQ(spec.run.local_epochs, 1u);
  EXPECT_EQ(spec.run.batch_size, 64u);
  EXPECT_EQ(spec.run.alpha, 0.1);
  EXPECT_EQ(spec.run.encoder.input_dim, 512u);
  EXPECT_EQ(spec.data.pretext_classes, 8u);
  EXPECT_EQ(spec.data.pretext_per_class, 100u);
  EXPECT_EQ(spec, ExperimentSpec{});
  EXPECT_EQ(spec.cells().size(), 1u);
}

TEST(Config, RangeAndParseErrorsCarryLineNumbers) {
  try {
    parse_config_text("rounds = 5\n\nalpha = -1\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
  try {
    parse_config_text("# comment\nbogus_key = 1\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("unknown key"), std::string::npos);
  }
  EXPECT_THROW(parse_config_text("rounds = ten\n"), ParseError);
  EXPECT_THROW(parse_config_text("rounds = 3.5\n"), ParseError);
  EXPECT_THROW(parse_config_text("rounds = 0\n"), ParseError);
  EXPECT_THROW(parse_config_text("lr = nan\n"), ParseError);
  EXPECT_THROW(parse_config_text("strategy = fedavg, nope\n"), ParseError);
  EXPECT_THROW(parse_config_text("just a line\n"), ParseError);
  EXPECT_THROW(parse_config_text("clients = 5\n"), ParseError);  // s = 10 > N
  EXPECT_THROW(parse_config("/nonexistent/fassl.cfg"), ParseError);
}

TEST(Config, CommentsListsAndDerivedFields) {
  const ExperimentSpec spec = parse_config_text(
      "strategy = fedavg, ldawa   # two strategies\nscope = full,backbone\nlocal_epochs = 1,10\n"
      "frames = 24\nbands = 8\nacop_segments = 4\nssl_task = acop\n");
  EXPECT_EQ(spec.strategies, (std::vector<StrategyKind>{StrategyKind::FedAvg, StrategyKind::LDawa}));
  EXPECT_EQ(spec.scopes, (std::vector<Scope>{Scope::Full, Scope::Backbone}));
  EXPECT_EQ(spec.local_epochs, (std::vector<std::size_t>{1, 10}));
  EXPECT_EQ(spec.run.encoder.input_dim, 24u * 8);
  EXPECT_EQ(spec.run.encoder.acop_classes, 24u);
  EXPECT_EQ(spec.cells().size(), 8u);
  EXPECT_EQ(cell_name(spec.cells().back()), "acop_ldawa_backbone_e10");
}

TEST(Config, EmitParseRoundTrip) {
  const ExperimentSpec defaults;
  EXPECT_EQ(parse_config_text(emit_config(defaults)), defaults);
  const ExperimentSpec custom = parse_config_text(
      "lr = 0.123456789012345\nalpha = 3e-2\nstrategy = loss,fedu\nloss_weighting = inverse\n"
      "distance = euclidean\nfeature_layer = projection\nplot = true\nseed = 18446744073709551615\n"
      "output_dir = some/where\n");
  const ExperimentSpec back = parse_config_text(emit_config(custom));
  EXPECT_EQ(back, custom);
  EXPECT_EQ(back.run.master_seed, 18446744073709551615ULL);
  EXPECT_EQ(back.run.lr, 0.123456789012345);
  for (const auto& key : config_keys()) {
    EXPECT_NE(emit_config(custom).find("\n" + key.name + " = "), std::string::npos) << key.name;
  }
}

TEST(Config, ResolvePrecedence) {
  const fs::path dir = temp_dir("resolve");
  fs::create_directories(dir);
  std::ofstream(dir / "a.cfg") << "rounds = 7\nalpha = 2\noutput_dir = from_file\n";
  ExperimentSpec s = resolve_spec(dir / "a.cfg", nullptr, {});
  EXPECT_EQ(s.run.rounds, 7u);
  EXPECT_EQ(s.output_dir, "from_file");
  s = resolve_spec(dir / "a.cfg", "from_env", {});
  EXPECT_EQ(s.output_dir, "from_env");
  s = resolve_spec(dir / "a.cfg", "from_env", {{"output_dir", "from_flag"}, {"rounds", "9"}});
  EXPECT_EQ(s.output_dir, "from_flag");
  EXPECT_EQ(s.run.rounds, 9u);
  EXPECT_EQ(s.run.alpha, 2.0);
  s = resolve_spec(std::nullopt, "", {});
  EXPECT_EQ(s.output_dir, "fassl_out");
  EXPECT_THROW(resolve_spec(std::nullopt, nullptr, {{"alpha", "-1"}}), ParseError);
  fs::remove_all(dir);
}

TEST(CmdRun, MatrixDirectoriesAndDeterminism) {
  const fs::path out = temp_dir("matrix");
  ExperimentSpec spec = tiny_spec(out);
  apply_setting(spec, "strategy", "fedavg,ldawa");
  apply_setting(spec, "scope", "full,backbone");
  std::ostringstream o, e;
  ASSERT_EQ(cmd_run(spec, o, e), kExitOk) << e.str();
  std::size_t dirs = 0;
  for (const auto& entry : fs::directory_iterator(out)) {
    if (!entry.is_directory()) continue;
    ++dirs;
    for (const char* f : {"config.cfg", "results.csv", "optima.csv", "final.fssl"}) {
      EXPECT_TRUE(fs::exists(entry.path() / f)) << entry.path() << " " << f;
    }
    EXPECT_TRUE(fs::is_directory(entry.path() / "checkpoints"));
    const ExperimentSpec cell = parse_config(entry.path() / "config.cfg");
    EXPECT_EQ(cell.cells().size(), 1u);
    EXPECT_EQ(cell_name(cell.cells().front()), entry.path().filename().string());
  }
  EXPECT_EQ(dirs, 4u);
  EXPECT_NE(o.str().find("simclr_ldawa_backbone_e1"), std::string::npos);
  EXPECT_NE(o.str().find("band_profile"), std::string::npos);
  EXPECT_NE(o.str().find(" ("), std::string::npos);

  const std::string first = slurp(out / "simclr_ldawa_full_e1" / "results.csv");
  const std::string first_ckpt = slurp(out / "simclr_ldawa_full_e1" / "final.fssl");
  std::ostringstream o2, e2;
  ASSERT_EQ(cmd_run(spec, o2, e2), kExitOk);
  EXPECT_EQ(slurp(out / "simclr_ldawa_full_e1" / "results.csv"), first);
  EXPECT_EQ(slurp(out / "simclr_ldawa_full_e1" / "final.fssl"), first_ckpt);
  EXPECT_EQ(o.str(), o2.str());
  fs::remove_all(out);
}

TEST(CmdRun, ExitCodes) {
  const fs::path out = temp_dir("exit");
  ExperimentSpec spec = tiny_spec(out);
  std::ostringstream o, e;
  ExperimentSpec invalid = spec;
  invalid.strategies.clear();
  EXPECT_EQ(cmd_run(invalid, o, e), kExitConfig);

  // A file where the output directory should be.
  fs::create_directories(out);
  std::ofstream(out / "blocker") << "x";
  ExperimentSpec blocked = spec;
  blocked.output_dir = out / "blocker" / "sub";
  EXPECT_EQ(cmd_run(blocked, o, e), kExitConfig);

  // One cell cannot write its directory; the other completes.
  apply_setting(spec, "scope", "full,backbone");
  std::ofstream(out / "simclr_fedavg_full_e1") << "not a directory";
  std::ostringstream o3, e3;
  EXPECT_EQ(cmd_run(spec, o3, e3), kExitRuntime);
  EXPECT_NE(e3.str().find("simclr_fedavg_full_e1"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "simclr_fedavg_backbone_e1" / "results.csv"));
  fs::remove_all(out);
}

TEST(CmdRun, InterruptedRunLeavesValidPartialCsv) {
  const fs::path out = temp_dir("partial");
  const ExperimentSpec spec = tiny_spec(out);
  const ExperimentData data = build_data(spec);
  RunConfig cfg = spec.cells().front();
  cfg.rounds = 3;
  RunOptions opts;
  opts.output_dir = out / "cell";
  opts.on_round = [](const RoundState& s) {
    if (s.round == 2) throw std::runtime_error("interrupted");
  };
  EXPECT_THROW(run(cfg, data.pretext, data.tasks, opts), std::runtime_error);
  const ResultCurves curves = read_results(out / "cell");
  ASSERT_EQ(curves.size(), data.tasks.size());
  for (const auto& [task, series] : curves) {
    ASSERT_EQ(series.size(), 1u);
    EXPECT_EQ(series.begin()->second.size(), 2u) << task;
  }
  fs::remove_all(out);
}

TEST(CmdPlot, OnePolylinePerSeriesWithMatchingPoints) {
  const fs::path out = temp_dir("plot");
  ExperimentSpec spec = tiny_spec(out);
  apply_setting(spec, "plot", "true");
  std::ostringstream o, e;
  ASSERT_EQ(cmd_run(spec, o, e), kExitOk) << e.str();
  const ExperimentData data = build_data(spec);
  for (const auto& t : data.tasks) {
    const fs::path svg = out / ("plot_" + t.name + ".svg");
    ASSERT_TRUE(fs::exists(svg)) << svg;
    const std::string doc = slurp(svg);
    EXPECT_TRUE(well_formed_xml(doc)) << svg;
    EXPECT_EQ(count_of(doc, "<polyline"), 1u);
    const auto pts_at = doc.find("points=\"", doc.find("<polyline")) + 8;
    const std::string pts = doc.substr(pts_at, doc.find('"', pts_at) - pts_at);
    EXPECT_EQ(count_of(pts, ",") , spec.run.rounds / spec.run.eval_every);
  }

  // Two series after a second strategy joins.
  apply_setting(spec, "strategy", "fedavg,fairavg");
  apply_setting(spec, "plot", "false");
  ASSERT_EQ(cmd_run(spec, o, e), kExitOk);
  const auto written = plot_results(out);
  ASSERT_EQ(written.size(), data.tasks.size());
  const ResultCurves curves = read_results(out);
  for (const auto& path : written) {
    const std::string doc = slurp(path);
    EXPECT_TRUE(well_formed_xml(doc));
    EXPECT_EQ(count_of(doc, "<polyline"), 2u);
  }
  for (const auto& [task, series] : curves) {
    for (const auto& [label, points] : series) {
      std::size_t rows = 0;
      const std::string csv =
          slurp(out / ("simclr_" + label.substr(0, label.find('/')) + "_full_e1") / "results.csv");
      std::istringstream in(csv);
      std::string line;
      while (std::getline(in, line))
        if (line.find("," + task + ",") != std::string::npos) ++rows;
      EXPECT_EQ(points.size(), rows) << task << " " << label;
    }
  }
  fs::remove_all(out);
}

TEST(CmdPlot, MissingOrEmptyResultsAreNamedErrors) {
  const fs::path out = temp_dir("plot_err");
  EXPECT_THROW(read_results(out), ResultsError);
  fs::create_directories(out);
  EXPECT_THROW(read_results(out), ResultsError);
  std::ofstream(out / "results.csv") << "";
  EXPECT_THROW(read_results(out), ResultsError);
  std::ofstream(out / "results.csv") << "round,strategy,scope,ssl_task,local_epochs,task,k,accuracy\n";
  EXPECT_THROW(read_results(out), ResultsError);
  std::ofstream(out / "results.csv") << "wrong,header\n1,2\n";
  EXPECT_THROW(read_results(out), ResultsError);
  std::ostringstream o, e;
  EXPECT_EQ(cmd_plot(out, o, e), kExitConfig);
  EXPECT_NE(e.str().find("plot error"), std::string::npos);
  fs::remove_all(out);
}

TEST(RenderSvg, SinglePolylineWellFormed) {
  const std::string doc = render_svg("t<&>", {{"fedavg/full/simclr/e1", {{10, 0.5}, {20, 0.75}, {30, 0.7}}}});
  EXPECT_TRUE(well_formed_xml(doc));
  EXPECT_EQ(count_of(doc, "<polyline"), 1u);
  EXPECT_NE(doc.find("t&lt;&amp;&gt;"), std::string::npos);
}

TEST(PartitionStats, SingleClientAndSizes) {
  ExperimentSpec spec = parse_config_text("clients = 1\nclients_per_round = 1\npretext_per_class = 10\n");
  PartitionStats st = partition_stats(spec);
  ASSERT_EQ(st.sizes.size(), 1u);
  EXPECT_EQ(st.sizes[0], 80u);
  EXPECT_NEAR(st.entropies[0], std::log(8.0), 1e-12);

  spec = parse_config_text("clients = 20\nclients_per_round = 5\npretext_per_class = 20\n");
  st = partition_stats(spec);
  std::size_t total = 0;
  for (auto s : st.sizes) total += s;
  EXPECT_EQ(total, 160u);
  EXPECT_LE(st.min_entropy, st.mean_entropy);
  EXPECT_LE(st.mean_entropy, st.max_entropy);

  std::ostringstream o, e;
  EXPECT_EQ(cmd_partition_stats(spec, o, e), kExitOk);
  EXPECT_EQ(o.str().substr(0, 20), "client,size,entropy\n");
  EXPECT_NE(o.str().find("mean="), std::string::npos);
}

TEST(PartitionStats, HigherAlphaHigherEntropy) {
  double low = 0, high = 0;
  for (int seed = 0; seed < 20; ++seed) {
    ExperimentSpec spec = parse_config_text("clients = 20\nclients_per_round = 5\npretext_per_class = 20\n");
    apply_setting(spec, "seed", std::to_string(seed));
    apply_setting(spec, "alpha", "0.1");
    low += partition_stats(spec).mean_entropy;
    apply_setting(spec, "alpha", "100");
    high += partition_stats(spec).mean_entropy;
  }
  EXPECT_GT(high, low);
}

#ifdef FASSL_CLI_PATH
TEST(CliBinary, SubcommandsAndExitCodes) {
  const std::string cli = FASSL_CLI_PATH;
  const fs::path out = temp_dir("binary");
  fs::create_directories(out);
  auto status = [](const std::string& cmd) {
    const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
  };
  EXPECT_EQ(status(cli + " emit-defaults > " + (out / "d.cfg").string()), 0);
  EXPECT_EQ(parse_config(out / "d.cfg"), ExperimentSpec{});
  EXPECT_EQ(status(cli + " emit-defaults --alpha=-1"), kExitConfig);
  EXPECT_EQ(status(cli + " emit-defaults --no-such-flag 3"), kExitConfig);
  EXPECT_EQ(status(cli), kExitConfig);
  EXPECT_EQ(status(cli + " partition-stats --clients 4 --clients_per_round 2 --pretext_per_class 4"), 0);
  EXPECT_EQ(status(cli + " plot " + (out / "nothing").string()), kExitConfig);
  EXPECT_EQ(status("FASSL_OUT=" + (out / "env").string() + " " + cli + " emit-defaults | grep -q 'output_dir = " +
                   (out / "env").string() + "'"),
            0);
  fs::remove_all(out);
}
#endif
