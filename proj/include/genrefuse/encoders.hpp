#pragma once

// Per-modality encoders: the five-block convolutional audio encoder, the
// frozen hash-embedding text encoder with its trainable adapter, genre-name
// node features and mean pooling.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "genrefuse/nn.hpp"
#include "genrefuse/tensor.hpp"

namespace genrefuse {

/// Lowercases and splits on anything that is not an ASCII letter or digit.
std::vector<std::string> tokenize(std::string_view text);

/// Token -> id map. Ids 0 and 1 are reserved for padding and unknown tokens.
class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnknown = 1;

  Vocabulary();
  /// Sorted, de-duplicated tokens of all texts after the reserved entries.
  static Vocabulary build(const std::vector<std::string>& texts);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_json() const;
  static Vocabulary from_json(const std::string& json);

  std::int64_t id(const std::string& token) const;
  std::vector<std::int64_t> encode(std::string_view text) const;
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::int64_t id) const;

 private:
  void insert(const std::string& token, std::int64_t id);
  std::map<std::string, std::int64_t> ids_;
  std::vector<std::string> tokens_;
};

/// Frozen stand-in for a pretrained text encoder: every key maps to a fixed
/// Gaussian vector derived from (seed, key) by hashing. Nothing here is
/// trainable, so no gradient buffer ever exists for these vectors.
class FrozenEmbedder {
 public:
  FrozenEmbedder(std::size_t dim, std::uint64_t seed, std::size_t vocab_size);

  std::size_t dim() const { return dim_; }
  std::size_t vocab_size() const { return vocab_size_; }

  /// Vector for a token id; the padding id maps to the zero vector.
  std::vector<double> embed_id(std::int64_t id) const;
  /// Vector for an arbitrary token string (used for genre names).
  std::vector<double> embed_token(std::string_view token) const;

  /// L x dim constant tensor for a token-id sequence.
  template <typename T>
  Tensor<T> embed_sequence(const std::vector<std::int64_t>& ids) const;

 private:
  std::vector<double> from_key(std::uint64_t key) const;
  std::size_t dim_;
  std::uint64_t seed_;
  std::size_t vocab_size_;
};

/// F: one row per genre, the mean of the frozen vectors of the name's tokens.
template <typename T>
Tensor<T> genre_node_features(const std::vector<std::string>& genre_names,
                              const FrozenEmbedder& embedder);

/// Mean over the sequence axis: L x d -> 1 x d.
template <typename T>
Tensor<T> pool_embedding(const Tensor<T>& seq);

struct AudioEncoderConfig {
  std::size_t n_mels = 128;
  std::vector<std::size_t> channels{16, 32, 64, 64, 128};
};

/// Blocks of [3x3 conv -> ReLU -> 2x2 max-pool], then the frequency axis is
/// averaged away to leave a (ceil(T / 2^blocks) x channels.back()) sequence.
template <typename T>
class AudioEncoder {
 public:
  static constexpr std::size_t kMinFrames = 32;

  AudioEncoder(AudioEncoderConfig config, Rng& rng);

  /// mel: n_mels x T, T >= kMinFrames.
  Tensor<T> forward(const Tensor<T>& mel) const;
  void register_params(ParameterSet<T>& params, const std::string& prefix) const;

  std::size_t output_dim() const { return config_.channels.back(); }
  static std::size_t output_steps(std::size_t frames, std::size_t blocks);
  const AudioEncoderConfig& config() const { return config_; }

 private:
  AudioEncoderConfig config_;
  std::vector<Tensor<T>> weights_;
  std::vector<Tensor<T>> biases_;
};

/// Frozen embedding followed by a trainable linear adapter: L -> L x out_dim.
template <typename T>
class LyricsEncoder {
 public:
  LyricsEncoder(const FrozenEmbedder& embedder, std::size_t out_dim, Rng& rng);

  Tensor<T> forward(const std::vector<std::int64_t>& ids) const;
  /// Frozen (pre-adapter) sequence, exposed for tests.
  Tensor<T> frozen(const std::vector<std::int64_t>& ids) const;
  void register_params(ParameterSet<T>& params, const std::string& prefix) const;
  std::size_t output_dim() const { return adapter_.out_features(); }

 private:
  FrozenEmbedder embedder_;
  Linear<T> adapter_;
};

extern template class AudioEncoder<float>;
extern template class AudioEncoder<double>;
extern template class LyricsEncoder<float>;
extern template class LyricsEncoder<double>;

}  // namespace genrefuse
