// SPDX-License-Identifier: Apache-2.0
#include "fassl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <stdexcept>

#include "fassl/checkpoint.hpp"
#include "fassl/errors.hpp"
#include "fassl/rng.hpp"

namespace fassl {

std::string_view to_string(GeneratorFamily f) {
  switch (f) {
    case GeneratorFamily::Pretext: return "pretext";
    case GeneratorFamily::BandProfile: return "band_profile";
    case GeneratorFamily::TemporalPattern: return "temporal_pattern";
    case GeneratorFamily::NoiseTexture: return "noise_texture";
  }
  return "unknown";
}

std::vector<std::size_t> SynthDataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(c.label);
  return out;
}

Tensor SynthDataset::feature_matrix() const {
  if (clips.empty()) return Tensor({0, 0});
  const std::size_t d = clips.front().features.size();
  std::vector<double> data;
  data.reserve(clips.size() * d);
  for (const auto& c : clips) {
    if (c.features.size() != d) throw DimensionError("dataset clips have unequal sizes");
    data.insert(data.end(), c.features.data().begin(), c.features.data().end());
  }
  return Tensor({clips.size(), d}, std::move(data));
}

namespace {

void require_positive(std::size_t v, const char* what) {
  if (v < 1) throw ContractError(std::string(what) + " must be >= 1");
}

ClassProfile random_bumps(Rng& rng, std::size_t bands) {
  const double hi = static_cast<double>(bands) - 1.0;
  ClassProfile p;
  p.center1 = rng.uniform(0.0, hi);
  p.width1 = rng.uniform(0.8, 2.0);
  p.amp1 = rng.uniform(0.7, 1.4);
  p.center2 = rng.uniform(0.0, hi);
  p.width2 = rng.uniform(0.8, 2.0);
  p.amp2 = rng.uniform(0.3, 0.9);
  return p;
}

double bump(double b, double center, double width) {
  const double z = (b - center) / width;
  return std::exp(-0.5 * z * z);
}

Clip make_clip(const GeneratorSpec& spec, std::size_t label, std::uint64_t clip_id, Split split) {
  const ClassProfile& cp = spec.classes.at(label);
  Rng rng(stream_seed(spec.seed, split == Split::Train ? "clip-train" : "clip-test", clip_id));
  const double gain = rng.uniform(1.0 - spec.gain_jitter, 1.0 + spec.gain_jitter);
  const double period = cp.period * rng.uniform(1.0 - spec.period_jitter, 1.0 + spec.period_jitter);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double shift1 = rng.uniform(-spec.center_jitter, spec.center_jitter);
  const double shift2 = rng.uniform(-spec.center_jitter, spec.center_jitter);

  std::vector<double> profile(spec.bands);
  for (std::size_t b = 0; b < spec.bands; ++b) {
    const double bb = static_cast<double>(b);
    profile[b] = spec.base_level + cp.amp1 * bump(bb, cp.center1 + shift1, cp.width1) +
                 cp.amp2 * bump(bb, cp.center2 + shift2, cp.width2);
  }

  std::vector<double> x(spec.frames * spec.bands);
  std::vector<double> texture(spec.bands, 0.0);
  const double innov = cp.texture_std * std::sqrt(1.0 - cp.texture_rho * cp.texture_rho);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double env =
        1.0 + cp.depth * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
    for (std::size_t b = 0; b < spec.bands; ++b) {
      if (cp.texture_std > 0.0) {
        texture[b] = t == 0 ? rng.normal(0.0, cp.texture_std)
                            : cp.texture_rho * texture[b] + rng.normal(0.0, innov);
      }
      x[t * spec.bands + b] = gain * profile[b] * env + texture[b] + rng.normal(0.0, spec.noise_std);
    }
  }
  return Clip{Tensor({spec.frames, spec.bands}, std::move(x)), label, clip_id};
}

}  // namespace

GeneratorSpec pretext_generator(std::size_t n_classes, std::size_t frames, std::size_t bands,
                                std::uint64_t seed) {
  require_positive(n_classes, "n_classes");
  require_positive(frames, "frames");
  require_positive(bands, "bands");
  GeneratorSpec spec;
  spec.family = GeneratorFamily::Pretext;
  spec.seed = stream_seed(seed, "pretext");
  spec.frames = frames;
  spec.bands = bands;
  spec.noise_std = 0.1;
  spec.gain_jitter = 0.2;
  spec.period_jitter = 0.1;
  spec.center_jitter = 0.3;
  Rng rng(stream_seed(spec.seed, "classes"));
  for (std::size_t c = 0; c < n_classes; ++c) {
    ClassProfile p = random_bumps(rng, bands);
    p.period = rng.uniform(4.0, 16.0);
    p.depth = 0.6;
    spec.classes.push_back(p);
  }
  return spec;
}

SynthDataset generate(const GeneratorSpec& spec, std::size_t n_per_class, Split split) {
  require_positive(n_per_class, "n_per_class");
  if (spec.classes.empty()) throw ContractError("generator has no classes");
  SynthDataset ds;
  ds.n_classes = spec.classes.size();
  ds.generator = spec;
  ds.split = split;
  ds.clips.reserve(n_per_class * ds.n_classes);
  const std::uint64_t base = split == Split::Train ? 0 : kTestIdOffset;
  std::uint64_t id = base;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t c = 0; c < ds.n_classes; ++c) ds.clips.push_back(make_clip(spec, c, id++, split));
  }
  return ds;
}

SynthDataset synth_dataset(std::size_t n_classes, std::size_t n_per_class, std::size_t frames,
                           std::size_t bands, std::uint64_t seed) {
  return generate(pretext_generator(n_classes, frames, bands, seed), n_per_class, Split::Train);
}

std::vector<DownstreamTask> downstream_suite(std::uint64_t seed, const DownstreamConfig& cfg) {
  require_positive(cfg.n_classes, "n_classes");
  auto base_spec = [&](GeneratorFamily family) {
    GeneratorSpec spec;
    spec.family = family;
    spec.seed = stream_seed(seed, "downstream", static_cast<std::uint64_t>(family));
    spec.frames = cfg.frames;
    spec.bands = cfg.bands;
    return spec;
  };
  std::vector<GeneratorSpec> specs;

  {
    // Classes differ only in band profile; the temporal envelope is a
    // per-clip nuisance with widely varying period.
    GeneratorSpec spec = base_spec(GeneratorFamily::BandProfile);
    spec.noise_std = 0.1;
    spec.gain_jitter = 0.3;
    spec.period_jitter = 0.6;
    spec.center_jitter = 0.5;
    Rng rng(stream_seed(spec.seed, "classes"));
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      ClassProfile p = random_bumps(rng, cfg.bands);
      p.period = 8.0;
      p.depth = 0.8;
      spec.classes.push_back(p);
    }
    specs.push_back(std::move(spec));
  }
  {
    // Shared band profile; classes differ in envelope period.
    GeneratorSpec spec = base_spec(GeneratorFamily::TemporalPattern);
    spec.noise_std = 0.1;
    spec.gain_jitter = 0.2;
    spec.period_jitter = 0.05;
    spec.center_jitter = 1.0;
    Rng rng(stream_seed(spec.seed, "classes"));
    const ClassProfile shared = random_bumps(rng, cfg.bands);
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      ClassProfile p = shared;
      p.period = 3.0 + 2.5 * static_cast<double>(c);
      p.depth = 0.8;
      spec.classes.push_back(p);
    }
    specs.push_back(std::move(spec));
  }
  {
    // Shared profile, flat envelope; classes differ in noise texture.
    GeneratorSpec spec = base_spec(GeneratorFamily::NoiseTexture);
    spec.noise_std = 0.05;
    spec.gain_jitter = 0.2;
    spec.center_jitter = 1.0;
    Rng rng(stream_seed(spec.seed, "classes"));
    const ClassProfile shared = random_bumps(rng, cfg.bands);
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      ClassProfile p = shared;
      p.depth = 0.0;
      p.texture_rho = (c % 2 == 0) ? 0.0 : 0.9;
      p.texture_std = 0.15 * static_cast<double>(1 + c / 2);
      spec.classes.push_back(p);
    }
    specs.push_back(std::move(spec));
  }

  std::vector<DownstreamTask> tasks;
  for (const auto& spec : specs) {
    tasks.push_back(DownstreamTask{std::string(to_string(spec.family)),
                                   generate(spec, cfg.train_per_class, Split::Train),
                                   generate(spec, cfg.test_per_class, Split::Test)});
  }
  return tasks;
}

Partition dirichlet_partition(const SynthDataset& dataset, std::size_t n_clients, double alpha,
                              std::uint64_t seed) {
  if (n_clients < 1) throw ContractError("dirichlet_partition: n_clients must be >= 1");
  if (!(alpha > 0.0)) throw ContractError("dirichlet_partition: alpha must be > 0");
  if (dataset.size() < n_clients) {
    throw ContractError("dirichlet_partition: dataset of " + std::to_string(dataset.size()) +
                        " clips cannot fill " + std::to_string(n_clients) + " shards");
  }
  Partition part;
  part.shards.resize(n_clients);
  if (n_clients == 1) {
    for (const auto& c : dataset.clips) part.shards[0].push_back(c.clip_id);
    return part;
  }
  Rng rng(stream_seed(seed, "partition"));
  for (std::size_t cls = 0; cls < dataset.n_classes; ++cls) {
    const std::vector<double> p = rng.dirichlet(alpha, n_clients);
    for (const auto& clip : dataset.clips) {
      if (clip.label == cls) part.shards[rng.categorical(p)].push_back(clip.clip_id);
    }
  }
  for (std::size_t i = 0; i < n_clients; ++i) {
    if (!part.shards[i].empty()) continue;
    std::size_t largest = 0;
    for (std::size_t j = 1; j < n_clients; ++j)
      if (part.shards[j].size() > part.shards[largest].size()) largest = j;
    part.shards[i].push_back(part.shards[largest].back());
    part.shards[largest].pop_back();
  }
  return part;
}

double label_entropy(const SynthDataset& dataset, const std::vector<std::uint64_t>& shard) {
  if (shard.empty()) return 0.0;
  std::map<std::uint64_t, std::size_t> label_of;
  for (const auto& c : dataset.clips) label_of.emplace(c.clip_id, c.label);
  std::vector<std::size_t> counts(dataset.n_classes, 0);
  for (auto id : shard) {
    auto it = label_of.find(id);
    if (it == label_of.end()) throw ContractError("shard references unknown clip " + std::to_string(id));
    ++counts.at(it->second);
  }
  double h = 0.0;
  const double n = static_cast<double>(shard.size());
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

Tensor features_flat(const Clip& clip) {
  return Tensor({clip.features.size()}, clip.features.values());
}

namespace {


std::string clip_key(std::uint64_t id, const char* field) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "clips.%020llu.%s", static_cast<unsigned long long>(id), field);
  return buf;
}

}  // namespace

void save_dataset(const SynthDataset& dataset, const std::filesystem::path& path) {
  const GeneratorSpec& g = dataset.generator;
  std::vector<ParamTree::Entry> entries;
  entries.emplace_back("meta.n_classes", Tensor::scalar(static_cast<double>(dataset.n_classes)));
  entries.emplace_back("meta.split", Tensor::scalar(dataset.split == Split::Train ? 0.0 : 1.0));
  // The seed is split into 32-bit halves so it survives f64 storage exactly.
  entries.emplace_back(
      "generator.scalars",
      Tensor({10}, {static_cast<double>(static_cast<int>(g.family)), static_cast<double>(g.seed >> 32),
                    static_cast<double>(g.seed & 0xffffffffULL), static_cast<double>(g.frames),
                    static_cast<double>(g.bands), g.noise_std, g.base_level, g.gain_jitter,
                    g.period_jitter, g.center_jitter}));
  std::vector<double> cls;
  for (const auto& c : g.classes) {
    cls.insert(cls.end(), {c.center1, c.width1, c.amp1, c.center2, c.width2, c.amp2, c.period,
                           c.depth, c.texture_rho, c.texture_std});
  }
  entries.emplace_back("generator.classes", Tensor({g.classes.size(), 10}, std::move(cls)));
  for (const auto& clip : dataset.clips) {
    entries.emplace_back(clip_key(clip.clip_id, "features"), clip.features);
    entries.emplace_back(clip_key(clip.clip_id, "label"),
                         Tensor::scalar(static_cast<double>(clip.label)));
  }
  checkpoint::save(ParamTree(std::move(entries)), path);
}

SynthDataset load_dataset(const std::filesystem::path& path) {
  const ParamTree tree = checkpoint::load(path);
  SynthDataset ds;
  ds.n_classes = static_cast<std::size_t>(tree.at("meta.n_classes")[0]);
  ds.split = tree.at("meta.split")[0] == 0.0 ? Split::Train : Split::Test;
  const Tensor& s = tree.at("generator.scalars");
  GeneratorSpec& g = ds.generator;
  g.family = static_cast<GeneratorFamily>(static_cast<int>(s[0]));
  g.seed = (static_cast<std::uint64_t>(s[1]) << 32) | static_cast<std::uint64_t>(s[2]);
  g.frames = static_cast<std::size_t>(s[3]);
  g.bands = static_cast<std::size_t>(s[4]);
  g.noise_std = s[5];
  g.base_level = s[6];
  g.gain_jitter = s[7];
  g.period_jitter = s[8];
  g.center_jitter = s[9];
  const Tensor& cls = tree.at("generator.classes");
  for (std::size_t r = 0; r < cls.shape()[0]; ++r) {
    const double* v = cls.data().data() + r * 10;
    g.classes.push_back(ClassProfile{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]});
  }
  // Canonical name order sorts clips by zero-padded id.
  for (const auto& [name, t] : tree.entries()) {
    if (!name.starts_with("clips.") || !name.ends_with(".features")) continue;
    const std::uint64_t id = std::stoull(name.substr(6, 20));
    ds.clips.push_back(Clip{t, static_cast<std::size_t>(tree.at(clip_key(id, "label"))[0]), id});
  }
  return ds;
}

}  // namespace fassl
