#pragma once

// Run configuration. Serialised as nested JSON; every field is optional on
// input and falls back to the defaults below.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genrefuse/data.hpp"

namespace genrefuse {

struct ModelConfig {
  std::size_t n_mels = 128;
  std::vector<std::size_t> channels{16, 32, 64, 64, 128};
  std::size_t embed_dim = 64;  // frozen text embedding width E
  std::uint64_t embed_seed = 1234;
  std::size_t lyrics_dim = 64;  // adapter output width
  std::size_t attn_dim = 64;
  std::size_t heads = 1;
  std::size_t fused_dim = 64;
  std::size_t gcn_hidden = 64;
  std::size_t gcn_layers = 2;
  std::string denominator = "row";
  std::size_t lyric_length = 128;

  bool operator==(const ModelConfig&) const = default;
};

struct LossConfig {
  double lambda = 0.3;
  double tau_init = 0.07;
  std::size_t proj_dim = 32;
  bool normalize = true;

  bool operator==(const LossConfig&) const = default;
};

struct TrainConfig {
  std::string optimizer = "adam";
  double lr = 1e-4;
  std::size_t halve_every = 50;
  std::size_t batch_size = 16;
  std::size_t epochs = 60;
  std::size_t patience = 0;  // stop after this many epochs without a val improvement; 0 disables
  double threshold = 0.5;
  std::uint64_t split_seed = 0;
  double split_train = 0.7;
  double split_val = 0.1;
  double split_test = 0.2;

  bool operator==(const TrainConfig&) const = default;
};

struct AblationFlags {
  bool use_al_loss = true;
  bool use_scma = true;
  bool use_gcem = true;

  bool operator==(const AblationFlags&) const = default;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  AblationFlags ablation;
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string out_dir;

  bool operator==(const RunConfig&) const = default;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  /// Throws ConfigError on the first invalid field.
  void validate() const;
  /// Turns off the named components: comma list of al-loss, scma, gcem.
  void apply_ablation(const std::string& list);
  /// lambda, or 0 when the alignment loss is ablated.
  double effective_lambda() const { return ablation.use_al_loss ? loss.lambda : 0.0; }
  SplitRatios split_ratios() const { return {train.split_train, train.split_val, train.split_test}; }
};

}  // namespace genrefuse
