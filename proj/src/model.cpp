#include "genrefuse/model.hpp"

#include "genrefuse/ops.hpp"

namespace genrefuse {

CorrelationMatrices genre_correlation(const ModelConfig& config, const std::vector<std::string>& genre_names,
                                      const CooccurrenceCounts& train_counts) {
  const FrozenEmbedder embedder(config.embed_dim, config.embed_seed, 2);
  return build_correlation(train_counts, genre_node_features<double>(genre_names, embedder),
                           parse_denominator_mode(config.denominator));
}

namespace {

ContrastiveConfig contrastive_config(const LossConfig& loss) {
  ContrastiveConfig c;
  c.proj_dim = loss.proj_dim;
  c.tau_init = loss.tau_init;
  c.normalize = loss.normalize;
  return c;
}

}  // namespace

// Members are initialised in declaration order from one seeded stream, so
// the parameter values depend only on (config, seed).
template <typename T>
GenreModel<T>::GenreModel(const RunConfig& config, const std::vector<std::string>& genre_names,
                          std::size_t vocab_size, const CooccurrenceCounts& train_counts)
    : config_(config),
      genre_names_(genre_names),
      vocab_size_(vocab_size),
      rng_(config.seed),
      audio_(AudioEncoderConfig{config.model.n_mels, config.model.channels}, rng_),
      lyrics_(FrozenEmbedder(config.model.embed_dim, config.model.embed_seed, vocab_size), config.model.lyrics_dim,
              rng_),
      contrastive_(config.model.channels.back(), config.model.lyrics_dim, contrastive_config(config.loss), rng_) {
  config_.validate();
  if (genre_names.empty()) throw ConfigError("model: no genres");
  if (train_counts.num_genres != genre_names.size()) {
    throw DimensionError("model: counts cover " + std::to_string(train_counts.num_genres) + " genres, expected " +
                         std::to_string(genre_names.size()));
  }
  const auto& m = config_.model;
  const std::size_t audio_dim = m.channels.back();
  if (config_.ablation.use_scma) {
    scma_.emplace(audio_dim, m.lyrics_dim, m.attn_dim, m.heads, m.fused_dim, rng_);
  } else {
    concat_.emplace(audio_dim, m.lyrics_dim, m.fused_dim, rng_);
  }
  if (config_.ablation.use_gcem) {
    const auto corr = genre_correlation(m, genre_names, train_counts);
    const FrozenEmbedder embedder(m.embed_dim, m.embed_seed, 2);
    std::vector<std::size_t> widths{m.embed_dim};
    for (std::size_t l = 0; l + 1 < m.gcn_layers; ++l) widths.push_back(m.gcn_hidden);
    widths.push_back(m.fused_dim);
    gcn_.emplace(tensor_cast<T>(genre_node_features<double>(genre_names, embedder)), tensor_cast<T>(corr.adjacency),
                 widths, rng_);
  } else {
    head_.emplace(m.fused_dim, genre_names.size(), rng_);
  }

  audio_.register_params(params_, "audio");
  lyrics_.register_params(params_, "lyrics");
  if (scma_) scma_->register_params(params_, "fusion");
  if (concat_) concat_->register_params(params_, "fusion");
  if (gcn_) gcn_->register_params(params_, "gcn");
  if (head_) head_->register_params(params_, "head");
  contrastive_.register_params(params_, "contrastive");
}

template <typename T>
typename GenreModel<T>::Output GenreModel<T>::forward(const std::vector<Tensor<T>>& mels,
                                                      const std::vector<std::vector<std::int64_t>>& tokens) const {
  if (mels.empty() || mels.size() != tokens.size()) {
    throw DimensionError("model: " + std::to_string(mels.size()) + " mels and " + std::to_string(tokens.size()) +
                         " token sequences");
  }
  std::vector<Tensor<T>> fused, audio_pooled, lyrics_pooled;
  for (std::size_t b = 0; b < mels.size(); ++b) {
    const auto audio_seq = audio_.forward(mels[b]);
    const auto lyrics_seq = lyrics_.forward(tokens[b]);
    fused.push_back(scma_ ? scma_->forward(audio_seq, lyrics_seq) : concat_->forward(audio_seq, lyrics_seq));
    audio_pooled.push_back(pool_embedding(audio_seq));
    lyrics_pooled.push_back(pool_embedding(lyrics_seq));
  }
  Output out;
  const auto fused_batch = ops::concat(fused, 0);
  out.logits = gcn_ ? gcn_->forward(fused_batch) : classify_ablated(fused_batch, *head_);
  out.audio_pooled = ops::concat(audio_pooled, 0);
  out.lyrics_pooled = ops::concat(lyrics_pooled, 0);
  return out;
}

template <typename T>
typename GenreModel<T>::Losses GenreModel<T>::loss(const Output& out, const Tensor<T>& labels) const {
  Losses l;
  l.bce = bce_loss(out.logits, labels);
  if (!config_.ablation.use_al_loss) {
    l.total = l.bce;
    return l;
  }
  l.alignment = contrastive_.loss(out.audio_pooled, out.lyrics_pooled);
  l.total = total_loss(l.alignment, l.bce, config_.loss.lambda);
  return l;
}

template <typename T>
std::vector<Tensor<T>> GenreModel<T>::optimized_params() const {
  std::vector<Tensor<T>> out;
  for (const auto& e : params_.entries()) {
    if (!e.trainable) continue;
    if (!config_.ablation.use_al_loss && e.name.rfind("contrastive.", 0) == 0) continue;
    out.push_back(e.tensor);
  }
  return out;
}

template class GenreModel<float>;
template class GenreModel<double>;

}  // namespace genrefuse
