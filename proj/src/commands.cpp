// SPDX-License-Identifier: Apache-2.0
#include "fassl/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fassl/errors.hpp"

namespace fassl {
namespace fs = std::filesystem;

ExperimentData build_data(const ExperimentSpec& spec) {
  ExperimentData d;
  d.pretext = synth_dataset(spec.data.pretext_classes, spec.data.pretext_per_class, spec.data.frames,
                            spec.data.bands, spec.run.master_seed);
  d.tasks = downstream_suite(spec.run.master_seed, spec.data.downstream);
  return d;
}

ExperimentSpec resolve_spec(const std::optional<fs::path>& config_file, const char* env_output_dir,
                            const std::vector<std::pair<std::string, std::string>>& flags) {
  ExperimentSpec spec = config_file ? parse_config(*config_file) : ExperimentSpec{};
  if (env_output_dir != nullptr && *env_output_dir != '\0') apply_setting(spec, "output_dir", env_output_dir);
  for (const auto& [key, value] : flags) apply_setting(spec, key, value);
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw ParseError(e.what(), 0);
  }
  return spec;
}

namespace {

std::string optima_cell(const OptimaTracker::Entry& e) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f (%zu)", 100.0 * e.best_accuracy, e.best_round);
  return buf;
}

void print_optima(std::ostream& out, const std::vector<std::pair<std::string, OptimaTracker>>& rows,
                  const std::vector<std::string>& tasks) {
  std::size_t w0 = 4;
  for (const auto& [name, _] : rows) w0 = std::max(w0, name.size());
  std::vector<std::size_t> widths;
  for (const auto& t : tasks) widths.push_back(std::max<std::size_t>(t.size(), 12));

  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  auto emit = [&out](std::string line) {
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  };
  std::string header = pad("cell", w0);
  for (std::size_t j = 0; j < tasks.size(); ++j) header += "  " + pad(tasks[j], widths[j]);
  emit(header);
  for (const auto& [name, tracker] : rows) {
    std::string line = pad(name, w0);
    for (std::size_t j = 0; j < tasks.size(); ++j) {
      const auto it = tracker.entries().find(tasks[j]);
      line += "  " + pad(it == tracker.entries().end() ? "-" : optima_cell(it->second), widths[j]);
    }
    emit(line);
  }
}

// One cell gets a config file that reproduces exactly that cell.
ExperimentSpec single_cell(const ExperimentSpec& spec, const RunConfig& cell, const fs::path& dir) {
  ExperimentSpec s = spec;
  s.run = cell;
  s.strategies = {cell.strategy.kind};
  s.scopes = {cell.scope};
  s.local_epochs = {cell.local_epochs};
  s.output_dir = dir;
  s.plot = false;
  return s;
}

}  // namespace

int cmd_run(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    spec.validate();
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::error_code ec;
  fs::create_directories(spec.output_dir, ec);
  if (ec) {
    err << "config error: cannot create output directory '" << spec.output_dir.string() << "': "
        << ec.message() << '\n';
    return kExitConfig;
  }

  ExperimentData data;
  try {
    data = build_data(spec);
  } catch (const std::exception& e) {
    err << "error: building datasets: " << e.what() << '\n';
    return kExitRuntime;
  }
  std::vector<std::string> task_names;
  for (const auto& t : data.tasks) task_names.push_back(t.name);

  std::vector<std::pair<std::string, OptimaTracker>> rows;
  bool failed = false;
  for (const auto& cell : spec.cells()) {
    const std::string name = cell_name(cell);
    const fs::path dir = spec.output_dir / name;
    try {
      fs::create_directories(dir);
      std::ofstream(dir / "config.cfg", std::ios::trunc | std::ios::binary)
          << emit_config(single_cell(spec, cell, dir));
      RunOptions options;
      options.output_dir = dir;
      options.on_round = [&](const RoundState& s) {
        if (s.round % cell.eval_every == 0 || s.round == cell.rounds) {
          err << name << ": round " << s.round << '/' << cell.rounds << '\n';
        }
      };
      RunResult result = run(cell, data.pretext, data.tasks, options);
      rows.emplace_back(name, std::move(result.tracker));
    } catch (const std::exception& e) {
      err << "error: cell " << name << " failed: " << e.what() << '\n';
      failed = true;
    }
  }
  print_optima(out, rows, task_names);

  if (spec.plot && !rows.empty()) {
    if (cmd_plot(spec.output_dir, out, err) != kExitOk) failed = true;
  }
  return failed ? kExitRuntime : kExitOk;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void read_one(const fs::path& path, ResultCurves& curves) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ResultsError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw ResultsError("empty results file " + path.string());
  if (line != kCsvHeader) throw ResultsError("unexpected header in " + path.string());
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 8) {
      throw ResultsError(path.string() + ":" + std::to_string(line_no) + ": expected 8 fields");
    }
    CurvePoint p;
    const auto& r = fields[0];
    const auto& a = fields[7];
    auto [rp, rec] = std::from_chars(r.data(), r.data() + r.size(), p.round);
    auto [ap, aec] = std::from_chars(a.data(), a.data() + a.size(), p.accuracy);
    if (rec != std::errc{} || rp != r.data() + r.size() || aec != std::errc{} || ap != a.data() + a.size()) {
      throw ResultsError(path.string() + ":" + std::to_string(line_no) + ": malformed round or accuracy");
    }
    const std::string series = fields[1] + "/" + fields[2] + "/" + fields[3] + "/e" + fields[4];
    curves[fields[5]][series].push_back(p);
    ++rows;
  }
  if (rows == 0) throw ResultsError("no result rows in " + path.string());
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

ResultCurves read_results(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ResultsError("results directory not found: " + dir.string());
  ResultCurves curves;
  if (fs::exists(dir / "results.csv")) {
    read_one(dir / "results.csv", curves);
    return curves;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "results.csv")) files.push_back(entry.path() / "results.csv");
  }
  if (files.empty()) throw ResultsError("no results.csv under " + dir.string());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) read_one(f, curves);
  return curves;
}

std::string render_svg(const std::string& task, const std::map<std::string, std::vector<CurvePoint>>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr double W = 720, H = 440, L = 60, R = 220, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  std::size_t max_round = 1;
  for (const auto& [_, pts] : series)
    for (const auto& p : pts) max_round = std::max(max_round, p.round);
  auto sx = [&](double r) { return L + pw * r / static_cast<double>(max_round); };
  auto sy = [&](double a) { return T + ph * (1.0 - std::clamp(a, 0.0, 1.0)); };

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(task)
    << ": top-1 retrieval accuracy</text>\n";
  // axes and gridlines
  s << "<g stroke=\"#ccc\" stroke-width=\"1\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = sy(i / 5.0);
    s << "<line x1=\"" << L << "\" y1=\"" << fmt(y) << "\" x2=\"" << L + pw << "\" y2=\"" << fmt(y) << "\"/>\n";
  }
  s << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 5; ++i) {
    s << "<text x=\"" << L - 8 << "\" y=\"" << fmt(sy(i / 5.0) + 4) << "\" text-anchor=\"end\">" << fmt(i * 0.2)
      << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double r = max_round * i / 5.0;
    s << "<text x=\"" << fmt(sx(r)) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">" << fmt(r)
      << "</text>\n";
  }
  s << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">round</text>\n</g>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph << "\" stroke=\"black\"/>\n";

  std::size_t i = 0;
  for (const auto& [label, pts] : series) {
    const char* color = palette[i % std::size(palette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j) s << ' ';
      s << fmt(sx(static_cast<double>(pts[j].round))) << ',' << fmt(sy(pts[j].accuracy));
    }
    s << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(i) + 8;
    s << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << L + pw + 38 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << xml_escape(label) << "</text>\n";
    ++i;
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<fs::path> plot_results(const fs::path& dir) {
  const ResultCurves curves = read_results(dir);
  std::vector<fs::path> written;
  for (const auto& [task, series] : curves) {
    const fs::path path = dir / ("plot_" + task + ".svg");
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw ResultsError("cannot write " + path.string());
    f << render_svg(task, series);
    written.push_back(path);
  }
  return written;
}

int cmd_plot(const fs::path& dir, std::ostream& out, std::ostream& err) {
  try {
    for (const auto& p : plot_results(dir)) out << "wrote " << p.string() << '\n';
    return kExitOk;
  } catch (const ResultsError& e) {
    err << "plot error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

PartitionStats partition_stats(const ExperimentSpec& spec) {
  spec.validate();
  const SynthDataset pretext = synth_dataset(spec.data.pretext_classes, spec.data.pretext_per_class,
                                             spec.data.frames, spec.data.bands, spec.run.master_seed);
  const Partition partition = dirichlet_partition(pretext, spec.run.n_clients, spec.run.alpha, spec.run.master_seed);
  PartitionStats st;
  for (const auto& shard : partition.shards) {
    st.sizes.push_back(shard.size());
    st.entropies.push_back(label_entropy(pretext, shard));
  }
  double sum = 0.0;
  for (double h : st.entropies) sum += h;
  st.mean_entropy = sum / static_cast<double>(st.entropies.size());
  st.min_entropy = *std::min_element(st.entropies.begin(), st.entropies.end());
  st.max_entropy = *std::max_element(st.entropies.begin(), st.entropies.end());
  return st;
}

int cmd_partition_stats(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  PartitionStats st;
  try {
    spec.validate();
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    st = partition_stats(spec);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  char buf[96];
  out << "client,size,entropy\n";
  for (std::size_t i = 0; i < st.sizes.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.6f\n", i, st.sizes[i], st.entropies[i]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "alpha=%.17g mean=%.6f min=%.6f max=%.6f\n", spec.run.alpha, st.mean_entropy,
                st.min_entropy, st.max_entropy);
  out << buf;
  return kExitOk;
}

}  // namespace fassl
