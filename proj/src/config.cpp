// SPDX-License-Identifier: Apache-2.0
#include "fassl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "fassl/errors.hpp"

namespace fassl {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    if (item.empty()) throw ContractError("empty list item");
    out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ContractError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return x;
}

std::size_t parse_size(std::string_view v, std::size_t min = 1) {
  const auto x = parse_u64(v);
  if (x < min) throw ContractError("must be >= " + std::to_string(min));
  return static_cast<std::size_t>(x);
}

double parse_double(std::string_view v) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(x)) {
    throw ContractError("expected a number, got '" + std::string(v) + "'");
  }
  return x;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ContractError("expected true|false, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += f(items[i]);
  }
  return out;
}

double positive(double x) {
  if (!(x > 0.0)) throw ContractError("must be > 0");
  return x;
}

double non_negative(double x) {
  if (!(x >= 0.0)) throw ContractError("must be >= 0");
  return x;
}

double unit_interval(double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw ContractError("must be in [0, 1]");
  return x;
}

struct KeyDef {
  std::string name;
  std::string help;
  std::function<void(ExperimentSpec&, std::string_view)> set;
  std::function<std::string(const ExperimentSpec&)> get;
};

#define SIZE_KEY(key, field, help, min)                                                     \
  KeyDef {                                                                                  \
    key, help, [](ExperimentSpec& s, std::string_view v) { s.field = parse_size(v, min); }, \
        [](const ExperimentSpec& s) { return std::to_string(s.field); }                     \
  }
#define DOUBLE_KEY(key, field, help, check)                                                  \
  KeyDef {                                                                                   \
    key, help, [](ExperimentSpec& s, std::string_view v) { s.field = check(parse_double(v)); }, \
        [](const ExperimentSpec& s) { return fmt_double(s.field); }                          \
  }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      SIZE_KEY("rounds", run.rounds, "federated rounds R", 1),
      SIZE_KEY("clients", run.n_clients, "client pool size N", 1),
      SIZE_KEY("clients_per_round", run.clients_per_round, "clients sampled per round s", 1),
      KeyDef{"local_epochs", "local epochs E (comma list = sweep axis)",
             [](ExperimentSpec& s, std::string_view v) {
               std::vector<std::size_t> out;
               for (auto item : split_list(v)) out.push_back(parse_size(item, 1));
               s.local_epochs = out;
             },
             [](const ExperimentSpec& s) {
               return join(s.local_epochs, [](std::size_t e) { return std::to_string(e); });
             }},
      SIZE_KEY("batch_size", run.batch_size, "local batch size", 1),
      DOUBLE_KEY("lr", run.lr, "constant SGD learning rate", non_negative),
      KeyDef{"ssl_task", "pretext task: acop | simclr | barlow_twins",
             [](ExperimentSpec& s, std::string_view v) { s.run.ssl.task = ssl_task_from_string(v); },
             [](const ExperimentSpec& s) { return std::string(to_string(s.run.ssl.task)); }},
      KeyDef{"strategy", "aggregation: fedavg | fairavg | loss | fedu | ldawa (comma list = sweep axis)",
             [](ExperimentSpec& s, std::string_view v) {
               std::vector<StrategyKind> out;
               for (auto item : split_list(v)) out.push_back(strategy_from_string(item));
               s.strategies = out;
             },
             [](const ExperimentSpec& s) {
               return join(s.strategies, [](StrategyKind k) { return std::string(to_string(k)); });
             }},
      KeyDef{"scope", "transceived parameters: full | backbone (comma list = sweep axis)",
             [](ExperimentSpec& s, std::string_view v) {
               std::vector<Scope> out;
               for (auto item : split_list(v)) out.push_back(scope_from_string(item));
               s.scopes = out;
             },
             [](const ExperimentSpec& s) {
               return join(s.scopes, [](Scope c) { return std::string(to_string(c)); });
             }},
      DOUBLE_KEY("alpha", run.alpha, "Dirichlet concentration (lower = more heterogeneous)", positive),
      KeyDef{"seed", "master seed; every random stream derives from it",
             [](ExperimentSpec& s, std::string_view v) { s.run.master_seed = parse_u64(v); },
             [](const ExperimentSpec& s) { return std::to_string(s.run.master_seed); }},
      SIZE_KEY("eval_every", run.eval_every, "rounds between downstream evaluations", 1),
      SIZE_KEY("k", run.eval.k, "neighbours for retrieval accuracy", 1),
      KeyDef{"distance", "retrieval distance: cosine | euclidean",
             [](ExperimentSpec& s, std::string_view v) { s.run.eval.distance = distance_from_string(v); },
             [](const ExperimentSpec& s) { return std::string(to_string(s.run.eval.distance)); }},
      KeyDef{"feature_layer", "retrieval features: backbone | projection",
             [](ExperimentSpec& s, std::string_view v) { s.run.eval.layer = feature_layer_from_string(v); },
             [](const ExperimentSpec& s) { return std::string(to_string(s.run.eval.layer)); }},
      DOUBLE_KEY("fedu_mu", run.strategy.fedu_mu, "FedU relative backbone divergence threshold", positive),
      KeyDef{"loss_weighting", "Loss strategy direction: proportional | inverse",
             [](ExperimentSpec& s, std::string_view v) {
               s.run.strategy.loss_weighting = loss_weighting_from_string(v);
             },
             [](const ExperimentSpec& s) { return std::string(to_string(s.run.strategy.loss_weighting)); }},
      DOUBLE_KEY("tau", run.ssl.tau, "NT-Xent temperature", positive),
      DOUBLE_KEY("bt_lambda", run.ssl.bt_lambda, "Barlow Twins off-diagonal weight", non_negative),
      DOUBLE_KEY("bt_eps", run.ssl.bt_eps, "Barlow Twins std guard", positive),
      SIZE_KEY("acop_segments", run.encoder.acop_segments, "ACOP segments per clip (classes = m!)", 2),
      SIZE_KEY("hidden_dim", run.encoder.hidden_dim, "encoder hidden width", 1),
      SIZE_KEY("embed_dim", run.encoder.embed_dim, "backbone embedding width", 1),
      SIZE_KEY("projection_dim", run.encoder.projection_dim, "projection head output width", 1),
      KeyDef{"crop_fraction", "augmentation time-crop fraction in (0, 1]",
             [](ExperimentSpec& s, std::string_view v) {
               const double x = parse_double(v);
               if (!(x > 0.0 && x <= 1.0)) throw ContractError("must be in (0, 1]");
               s.run.ssl.augment.crop_fraction = x;
             },
             [](const ExperimentSpec& s) { return fmt_double(s.run.ssl.augment.crop_fraction); }},
      DOUBLE_KEY("noise_std", run.ssl.augment.noise_std, "augmentation noise std", non_negative),
      DOUBLE_KEY("band_mask_prob", run.ssl.augment.band_mask_prob, "augmentation band-mask probability",
                 unit_interval),
      KeyDef{"augment_stream", "augmentation RNG stream id",
             [](ExperimentSpec& s, std::string_view v) { s.run.ssl.augment.stream_id = parse_u64(v); },
             [](const ExperimentSpec& s) { return std::to_string(s.run.ssl.augment.stream_id); }},
      SIZE_KEY("threads", run.threads, "client training workers", 1),
      KeyDef{"output_dir", "results directory (FASSL_OUT overrides)",
             [](ExperimentSpec& s, std::string_view v) {
               if (v.empty()) throw ContractError("must not be empty");
               s.output_dir = std::string(v);
             },
             [](const ExperimentSpec& s) { return s.output_dir.string(); }},
      KeyDef{"plot", "write SVG plots after the run",
             [](ExperimentSpec& s, std::string_view v) { s.plot = parse_bool(v); },
             [](const ExperimentSpec& s) { return std::string(s.plot ? "true" : "false"); }},
      SIZE_KEY("pretext_classes", data.pretext_classes, "pretext dataset classes", 1),
      SIZE_KEY("pretext_per_class", data.pretext_per_class, "pretext clips per class", 1),
      SIZE_KEY("frames", data.frames, "frames per clip", 2),
      SIZE_KEY("bands", data.bands, "bands per frame", 1),
      SIZE_KEY("downstream_classes", data.downstream.n_classes, "classes per downstream task", 1),
      SIZE_KEY("downstream_train_per_class", data.downstream.train_per_class,
               "downstream retrieval-gallery clips per class", 1),
      SIZE_KEY("downstream_test_per_class", data.downstream.test_per_class,
               "downstream query clips per class", 1),
  };
  return defs;
}

#undef SIZE_KEY
#undef DOUBLE_KEY

std::size_t factorial(std::size_t m) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= m; ++i) f *= i;
  return f;
}

// Derived fields follow the keys they depend on.
void sync(ExperimentSpec& s) {
  s.run.strategy.kind = s.strategies.front();
  s.run.scope = s.scopes.front();
  s.run.local_epochs = s.local_epochs.front();
  s.run.encoder.input_dim = s.data.frames * s.data.bands;
  s.run.encoder.acop_classes = factorial(s.run.encoder.acop_segments);
  s.data.downstream.frames = s.data.frames;
  s.data.downstream.bands = s.data.bands;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& d : key_defs()) out.push_back({d.name, d.help});
    return out;
  }();
  return keys;
}

std::vector<RunConfig> ExperimentSpec::cells() const {
  std::vector<RunConfig> out;
  for (auto strategy : strategies)
    for (auto scope : scopes)
      for (auto epochs : local_epochs) {
        RunConfig cfg = run;
        cfg.strategy.kind = strategy;
        cfg.scope = scope;
        cfg.local_epochs = epochs;
        out.push_back(cfg);
      }
  return out;
}

void ExperimentSpec::validate() const {
  if (strategies.empty() || scopes.empty() || local_epochs.empty()) {
    throw ContractError("matrix axes must be non-empty");
  }
  if (run.encoder.acop_segments > 6) throw ContractError("acop_segments must be <= 6");
  if (data.frames < 2 * run.encoder.acop_segments) {
    throw ContractError("frames must be >= 2 * acop_segments");
  }
  if (data.pretext_classes * data.pretext_per_class < run.n_clients) {
    throw ContractError("pretext dataset is smaller than the client pool");
  }
  for (const auto& cfg : cells()) cfg.validate();
}

void apply_setting(ExperimentSpec& spec, std::string_view key, std::string_view value, int line) {
  const auto& defs = key_defs();
  auto it = std::find_if(defs.begin(), defs.end(), [&](const KeyDef& d) { return d.name == key; });
  if (it == defs.end()) throw ParseError("unknown key '" + std::string(key) + "'", line);
  try {
    it->set(spec, trim(value));
  } catch (const ContractError& e) {
    throw ParseError(std::string(key) + ": " + e.what(), line);
  }
  sync(spec);
}

ExperimentSpec parse_config_text(std::string_view text) {
  ExperimentSpec spec;
  sync(spec);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("missing key before '='", line_no);
    apply_setting(spec, key, trim(line.substr(eq + 1)), line_no);
  }
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw ParseError(e.what(), 0);
  }
  return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open config file '" + path.string() + "'", 0);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string emit_config(const ExperimentSpec& spec) {
  std::string out = "# fassl experiment configuration\n";
  for (const auto& d : key_defs()) {
    out += "# " + d.help + "\n" + d.name + " = " + d.get(spec) + "\n";
  }
  return out;
}

std::string cell_name(const RunConfig& cfg) {
  return std::string(to_string(cfg.ssl.task)) + "_" + std::string(to_string(cfg.strategy.kind)) + "_" +
         std::string(to_string(cfg.scope)) + "_e" + std::to_string(cfg.local_epochs);
}

}  // namespace fassl
