#include "genrefuse/fusion.hpp"

#include <cmath>

#include "genrefuse/encoders.hpp"
#include "genrefuse/ops.hpp"

namespace genrefuse {

template <typename T>
CrossModalAttention<T>::CrossModalAttention(std::size_t query_dim, std::size_t kv_dim, std::size_t attn_dim,
                                            std::size_t heads, Rng& rng)
    : attn_dim_(attn_dim), heads_(heads) {
  if (attn_dim == 0 || heads == 0 || attn_dim % heads != 0) {
    throw ConfigError("attention: attn_dim (" + std::to_string(attn_dim) + ") must be a positive multiple of heads (" +
                      std::to_string(heads) + ")");
  }
  wq_ = Linear<T>(query_dim, attn_dim, rng);
  wk_ = Linear<T>(kv_dim, attn_dim, rng);
  wv_ = Linear<T>(kv_dim, attn_dim, rng);
}

template <typename T>
void CrossModalAttention<T>::check_inputs(const Tensor<T>& query_seq, const Tensor<T>& kv_seq) const {
  if (query_seq.rank() != 2 || kv_seq.rank() != 2 || query_seq.dim(1) != wq_.in_features() ||
      kv_seq.dim(1) != wk_.in_features()) {
    throw DimensionError("attention: query " + shape_str(query_seq.shape()) + " / key-value " +
                         shape_str(kv_seq.shape()) + " incompatible with projections expecting widths " +
                         std::to_string(wq_.in_features()) + " / " + std::to_string(wk_.in_features()));
  }
  if (query_seq.dim(0) == 0 || kv_seq.dim(0) == 0) throw DimensionError("attention: empty sequence");
}

template <typename T>
std::vector<Tensor<T>> CrossModalAttention<T>::attention_weights(const Tensor<T>& query_seq,
                                                                 const Tensor<T>& kv_seq) const {
  check_inputs(query_seq, kv_seq);
  const auto q = wq_.forward(query_seq);
  const auto k = wk_.forward(kv_seq);
  const std::size_t dh = attn_dim_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor<T>> out;
  for (std::size_t h = 0; h < heads_; ++h) {
    const auto qh = heads_ == 1 ? q : ops::slice_cols(q, h * dh, (h + 1) * dh);
    const auto kh = heads_ == 1 ? k : ops::slice_cols(k, h * dh, (h + 1) * dh);
    out.push_back(ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt)));
  }
  return out;
}

template <typename T>
Tensor<T> CrossModalAttention<T>::forward(const Tensor<T>& query_seq, const Tensor<T>& kv_seq) const {
  const auto weights = attention_weights(query_seq, kv_seq);
  const auto v = wv_.forward(kv_seq);
  if (heads_ == 1) return ops::matmul(weights[0], v);
  const std::size_t dh = attn_dim_ / heads_;
  std::vector<Tensor<T>> parts;
  for (std::size_t h = 0; h < heads_; ++h) {
    parts.push_back(ops::matmul(weights[h], ops::slice_cols(v, h * dh, (h + 1) * dh)));
  }
  return ops::concat(parts, 1);
}

template <typename T>
void CrossModalAttention<T>::register_params(ParameterSet<T>& params, const std::string& prefix) const {
  wq_.register_params(params, prefix + ".wq");
  wk_.register_params(params, prefix + ".wk");
  wv_.register_params(params, prefix + ".wv");
}

template <typename T>
SymmetricFusion<T>::SymmetricFusion(std::size_t audio_dim, std::size_t lyrics_dim, std::size_t attn_dim,
                                    std::size_t heads, std::size_t fused_dim, Rng& rng)
    : a2l_(audio_dim, lyrics_dim, attn_dim, heads, rng),
      l2a_(lyrics_dim, audio_dim, attn_dim, heads, rng),
      proj_(2 * attn_dim, fused_dim, rng) {}

template <typename T>
SymmetricFusion<T>::SymmetricFusion(CrossModalAttention<T> audio_to_lyrics, CrossModalAttention<T> lyrics_to_audio,
                                    Linear<T> projection)
    : a2l_(std::move(audio_to_lyrics)), l2a_(std::move(lyrics_to_audio)), proj_(std::move(projection)) {}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> SymmetricFusion<T>::branches(const Tensor<T>& audio_seq,
                                                             const Tensor<T>& lyrics_seq) const {
  if (audio_seq.rank() != 2 || lyrics_seq.rank() != 2 || audio_seq.dim(0) == 0 || lyrics_seq.dim(0) == 0) {
    throw DimensionError("symmetric fusion: both sequences must be non-empty matrices");
  }
  return {pool_embedding(a2l_.forward(audio_seq, lyrics_seq)), pool_embedding(l2a_.forward(lyrics_seq, audio_seq))};
}

template <typename T>
Tensor<T> SymmetricFusion<T>::forward(const Tensor<T>& audio_seq, const Tensor<T>& lyrics_seq) const {
  auto [audio_branch, lyrics_branch] = branches(audio_seq, lyrics_seq);
  return proj_.forward(ops::concat<T>({audio_branch, lyrics_branch}, 1));
}

template <typename T>
void SymmetricFusion<T>::register_params(ParameterSet<T>& params, const std::string& prefix) const {
  a2l_.register_params(params, prefix + ".a2l");
  l2a_.register_params(params, prefix + ".l2a");
  proj_.register_params(params, prefix + ".proj");
}

template <typename T>
ConcatFusion<T>::ConcatFusion(std::size_t audio_dim, std::size_t lyrics_dim, std::size_t fused_dim, Rng& rng)
    : proj_(audio_dim + lyrics_dim, fused_dim, rng) {}

template <typename T>
Tensor<T> ConcatFusion<T>::forward(const Tensor<T>& audio_seq, const Tensor<T>& lyrics_seq) const {
  return proj_.forward(ops::concat<T>({pool_embedding(audio_seq), pool_embedding(lyrics_seq)}, 1));
}

template <typename T>
void ConcatFusion<T>::register_params(ParameterSet<T>& params, const std::string& prefix) const {
  proj_.register_params(params, prefix + ".concat_proj");
}

template class CrossModalAttention<float>;
template class CrossModalAttention<double>;
template class SymmetricFusion<float>;
template class SymmetricFusion<double>;
template class ConcatFusion<float>;
template class ConcatFusion<double>;

}  // namespace genrefuse
