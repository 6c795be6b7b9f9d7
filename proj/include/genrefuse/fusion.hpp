#pragma once

// Cross-modal attention and the two fusion variants: symmetric (audio
// queries lyrics, lyrics query audio) and the plain concatenation baseline.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "genrefuse/nn.hpp"
#include "genrefuse/tensor.hpp"

namespace genrefuse {

/// softmax(Q K^T / sqrt(d_head)) V with Q from one sequence and K, V from
/// another. Each head attends over an equal slice of the d projected columns.
template <typename T>
class CrossModalAttention {
 public:
  CrossModalAttention(std::size_t query_dim, std::size_t kv_dim, std::size_t attn_dim, std::size_t heads,
                      Rng& rng);

  /// query_seq: m x query_dim, kv_seq: n x kv_dim -> m x attn_dim.
  Tensor<T> forward(const Tensor<T>& query_seq, const Tensor<T>& kv_seq) const;
  /// Attention weight matrix (m x n) for each head.
  std::vector<Tensor<T>> attention_weights(const Tensor<T>& query_seq, const Tensor<T>& kv_seq) const;

  void register_params(ParameterSet<T>& params, const std::string& prefix) const;

  std::size_t attn_dim() const { return attn_dim_; }
  std::size_t heads() const { return heads_; }
  Linear<T>& query() { return wq_; }
  Linear<T>& key() { return wk_; }
  Linear<T>& value() { return wv_; }

 private:
  void check_inputs(const Tensor<T>& query_seq, const Tensor<T>& kv_seq) const;

  std::size_t attn_dim_;
  std::size_t heads_;
  Linear<T> wq_;
  Linear<T> wk_;
  Linear<T> wv_;
};

/// Two mirrored attention branches, each mean-pooled over its query
/// sequence, concatenated (2d) and projected to the fused width D.
template <typename T>
class SymmetricFusion {
 public:
  SymmetricFusion(std::size_t audio_dim, std::size_t lyrics_dim, std::size_t attn_dim, std::size_t heads,
                  std::size_t fused_dim, Rng& rng);
  SymmetricFusion(CrossModalAttention<T> audio_to_lyrics, CrossModalAttention<T> lyrics_to_audio,
                  Linear<T> projection);

  /// Pooled (1 x d) outputs of the audio-query and lyrics-query branches.
  std::pair<Tensor<T>, Tensor<T>> branches(const Tensor<T>& audio_seq, const Tensor<T>& lyrics_seq) const;
  /// 1 x fused_dim.
  Tensor<T> forward(const Tensor<T>& audio_seq, const Tensor<T>& lyrics_seq) const;
  void register_params(ParameterSet<T>& params, const std::string& prefix) const;

 private:
  CrossModalAttention<T> a2l_;
  CrossModalAttention<T> l2a_;
  Linear<T> proj_;
};

/// Ablation baseline: mean-pool each sequence, concatenate, project to D.
template <typename T>
class ConcatFusion {
 public:
  ConcatFusion(std::size_t audio_dim, std::size_t lyrics_dim, std::size_t fused_dim, Rng& rng);

  Tensor<T> forward(const Tensor<T>& audio_seq, const Tensor<T>& lyrics_seq) const;
  void register_params(ParameterSet<T>& params, const std::string& prefix) const;
  Linear<T>& projection() { return proj_; }

 private:
  Linear<T> proj_;
};

extern template class CrossModalAttention<float>;
extern template class CrossModalAttention<double>;
extern template class SymmetricFusion<float>;
extern template class SymmetricFusion<double>;
extern template class ConcatFusion<float>;
extern template class ConcatFusion<double>;

}  // namespace genrefuse
