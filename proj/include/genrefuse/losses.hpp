#pragma once

// Audio-lyrics contrastive loss with a learnable temperature, multi-label
// BCE, and their weighted combination.

#include <cstddef>
#include <string>
#include <utility>

#include "genrefuse/nn.hpp"
#include "genrefuse/tensor.hpp"

namespace genrefuse {

struct ContrastiveConfig {
  std::size_t proj_dim = 32;
  double tau_init = 0.07;
  double tau_min = 0.01;
  double tau_max = 1.0;
  bool normalize = true;  // L2-normalise projections before the dot product
};

/// Dot product of two 1 x p rows, as a scalar tensor.
template <typename T>
Tensor<T> similarity(const Tensor<T>& a_row, const Tensor<T>& l_row);

template <typename T>
struct ContrastiveTerms {
  Tensor<T> audio_to_lyrics;
  Tensor<T> lyrics_to_audio;
  Tensor<T> total;  // mean of the two
};

/// Symmetric InfoNCE over the B x B similarity matrix S = E_a E_l^T with
/// matched pairs on the diagonal. tau is a positive scalar tensor.
template <typename T>
ContrastiveTerms<T> contrastive_terms(const Tensor<T>& sim, const Tensor<T>& tau);

template <typename T>
Tensor<T> contrastive_loss(const Tensor<T>& audio_emb, const Tensor<T>& lyrics_emb, const Tensor<T>& tau);

/// Mean over all entries of max(x,0) - x y + log1p(exp(-|x|)).
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& targets);

/// lambda * l_al + (1 - lambda) * l_bce, lambda in [0, 1].
template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_al, const Tensor<T>& l_bce, double lambda);

/// Projection heads g_a, g_l and the log-temperature parameter.
template <typename T>
class ContrastiveHead {
 public:
  ContrastiveHead(std::size_t audio_dim, std::size_t lyrics_dim, ContrastiveConfig config, Rng& rng);

  /// tau = clamp(exp(log_tau), tau_min, tau_max) as a scalar tensor.
  Tensor<T> temperature() const;
  /// Projected (and optionally normalised) B x p embeddings.
  std::pair<Tensor<T>, Tensor<T>> project(const Tensor<T>& audio, const Tensor<T>& lyrics) const;
  Tensor<T> loss(const Tensor<T>& audio, const Tensor<T>& lyrics) const;
  void register_params(ParameterSet<T>& params, const std::string& prefix) const;

  Tensor<T>& log_tau() { return log_tau_; }
  const ContrastiveConfig& config() const { return config_; }

 private:
  ContrastiveConfig config_;
  Linear<T> audio_proj_;
  Linear<T> lyrics_proj_;
  Tensor<T> log_tau_;
};

extern template class ContrastiveHead<float>;
extern template class ContrastiveHead<double>;

}  // namespace genrefuse
