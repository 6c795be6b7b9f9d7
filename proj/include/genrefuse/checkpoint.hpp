#pragma once

// Binary checkpoint: "MGCK", u32 version, u64 header length, JSON header
// (config, genres, tensor directory), then f32 little-endian payloads.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genrefuse/config.hpp"
#include "genrefuse/nn.hpp"

namespace genrefuse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  RunConfig config;
  std::vector<std::string> genre_names;
  std::size_t vocab_size = 0;
  std::size_t epoch = 0;
  double best_val_f = 0;
};

struct StoredTensor {
  std::string name;
  Shape shape;
  bool trainable = true;
  std::vector<float> values;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<StoredTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointMeta& meta, const ParameterSet<float>& params);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const ParameterSet<float>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `params`; names and shapes must match exactly.
void restore_parameters(const Checkpoint& ckpt, ParameterSet<float>& params);

}  // namespace genrefuse
