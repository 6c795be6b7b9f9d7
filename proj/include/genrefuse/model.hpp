#pragma once

// Full classifier: audio and lyrics encoders, symmetric or concatenation
// fusion, graph or linear head, and the contrastive projection heads.

#include <optional>
#include <string>
#include <vector>

#include "genrefuse/config.hpp"
#include "genrefuse/data.hpp"
#include "genrefuse/encoders.hpp"
#include "genrefuse/fusion.hpp"
#include "genrefuse/graph.hpp"
#include "genrefuse/losses.hpp"
#include "genrefuse/nn.hpp"

namespace genrefuse {

/// A1, A2, A and the normalised adjacency from training-split label counts
/// and genre-name embeddings.
CorrelationMatrices genre_correlation(const ModelConfig& config, const std::vector<std::string>& genre_names,
                                      const CooccurrenceCounts& train_counts);

template <typename T>
class GenreModel {
 public:
  struct Output {
    Tensor<T> logits;         // B x G
    Tensor<T> audio_pooled;   // B x audio width
    Tensor<T> lyrics_pooled;  // B x lyrics width
  };

  struct Losses {
    Tensor<T> total;
    Tensor<T> bce;
    Tensor<T> alignment;  // undefined when the alignment loss is ablated
  };

  GenreModel(const RunConfig& config, const std::vector<std::string>& genre_names, std::size_t vocab_size,
             const CooccurrenceCounts& train_counts);

  Output forward(const std::vector<Tensor<T>>& mels, const std::vector<std::vector<std::int64_t>>& tokens) const;
  Losses loss(const Output& out, const Tensor<T>& labels) const;
  Losses loss(const Batch<T>& batch) const { return loss(forward(batch.mels, batch.tokens), batch.labels); }

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  /// Tensors the optimizer updates: all trainable parameters, minus the
  /// contrastive heads when the alignment loss is off.
  std::vector<Tensor<T>> optimized_params() const;
  const RunConfig& config() const { return config_; }
  const std::vector<std::string>& genre_names() const { return genre_names_; }
  std::size_t vocab_size() const { return vocab_size_; }
  Tensor<T> temperature() const { return contrastive_.temperature(); }

 private:
  RunConfig config_;
  std::vector<std::string> genre_names_;
  std::size_t vocab_size_;
  Rng rng_;
  AudioEncoder<T> audio_;
  LyricsEncoder<T> lyrics_;
  std::optional<SymmetricFusion<T>> scma_;
  std::optional<ConcatFusion<T>> concat_;
  std::optional<GcnHead<T>> gcn_;
  std::optional<Linear<T>> head_;
  ContrastiveHead<T> contrastive_;
  ParameterSet<T> params_;
};

extern template class GenreModel<float>;
extern template class GenreModel<double>;

}  // namespace genrefuse
