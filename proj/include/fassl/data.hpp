// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fassl/tensor.hpp"

namespace fassl {

/// What distinguishes classes of a generator.
enum class GeneratorFamily { Pretext, BandProfile, TemporalPattern, NoiseTexture };

std::string_view to_string(GeneratorFamily f);

/// Per-class generative parameters. A clip is
///   x[t, b] = gain * profile(b) * (1 + depth * sin(2 pi t / period + phase)) + noise
/// where profile is base + two Gaussian bumps over bands, and noise is an
/// AR(1) process over time (coefficient texture_rho, std texture_std) plus
/// i.i.d. Gaussian noise of the generator's noise_std.
struct ClassProfile {
  double center1 = 0, width1 = 1, amp1 = 1;
  double center2 = 0, width2 = 1, amp2 = 0;
  double period = 8, depth = 0.5;
  double texture_rho = 0, texture_std = 0;

  bool operator==(const ClassProfile&) const = default;
};

struct GeneratorSpec {
  GeneratorFamily family = GeneratorFamily::Pretext;
  std::uint64_t seed = 0;
  std::size_t frames = 32;
  std::size_t bands = 16;
  double noise_std = 0.1;
  double base_level = 0.1;
  double gain_jitter = 0.0;   ///< gain ~ U(1 - g, 1 + g) per clip
  double period_jitter = 0.0; ///< period scaled by U(1 - j, 1 + j) per clip
  double center_jitter = 0.0; ///< bump centers shifted by U(-j, j) bands per clip
  std::vector<ClassProfile> classes;

  bool operator==(const GeneratorSpec&) const = default;
};

enum class Split { Train, Test };

struct Clip {
  Tensor features;  ///< frames x bands
  std::size_t label = 0;
  std::uint64_t clip_id = 0;

  std::size_t frames() const { return features.shape()[0]; }
  std::size_t bands() const { return features.shape()[1]; }
};

struct SynthDataset {
  std::vector<Clip> clips;
  std::size_t n_classes = 0;
  GeneratorSpec generator;
  Split split = Split::Train;

  std::size_t size() const noexcept { return clips.size(); }
  std::vector<std::size_t> labels() const;
  /// Rows are flattened clips.
  Tensor feature_matrix() const;
};

struct DownstreamTask {
  std::string name;
  SynthDataset train;
  SynthDataset test;
};

/// Sizes of the synthetic downstream suite.
struct DownstreamConfig {
  std::size_t frames = 32;
  std::size_t bands = 16;
  std::size_t n_classes = 6;
  std::size_t train_per_class = 25;
  std::size_t test_per_class = 25;

  bool operator==(const DownstreamConfig&) const = default;
};

struct Partition {
  std::vector<std::vector<std::uint64_t>> shards;  ///< clip ids per client
};

GeneratorSpec pretext_generator(std::size_t n_classes, std::size_t frames, std::size_t bands,
                                std::uint64_t seed);

/// Clips are produced class-interleaved; ids start at 0 for Train and at
/// kTestIdOffset for Test so splits of one generator never collide.
inline constexpr std::uint64_t kTestIdOffset = 1'000'000'000ULL;
SynthDataset generate(const GeneratorSpec& spec, std::size_t n_per_class, Split split);

/// Pretext-family training set.
SynthDataset synth_dataset(std::size_t n_classes, std::size_t n_per_class, std::size_t frames,
                           std::size_t bands, std::uint64_t seed);

/// Band-profile, temporal-pattern and noise-texture tasks, each drawn from a
/// generator seeded independently of the pretext set.
std::vector<DownstreamTask> downstream_suite(std::uint64_t seed, const DownstreamConfig& cfg = {});

/// Class-wise Dirichlet(alpha) proportions over clients, clips assigned by
/// categorical draws. Empty shards take one clip from the largest shard.
Partition dirichlet_partition(const SynthDataset& dataset, std::size_t n_clients, double alpha,
                              std::uint64_t seed);

/// Shannon entropy (nats) of the label histogram of one shard.
double label_entropy(const SynthDataset& dataset, const std::vector<std::uint64_t>& shard);

/// Row-major flattening of a clip's frames x bands matrix.
Tensor features_flat(const Clip& clip);

/// Dataset dump in the checkpoint container format.
void save_dataset(const SynthDataset& dataset, const std::filesystem::path& path);
SynthDataset load_dataset(const std::filesystem::path& path);

}  // namespace fassl
