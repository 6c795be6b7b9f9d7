#include "genrefuse/losses.hpp"

#include <cmath>

#include "genrefuse/ops.hpp"

namespace genrefuse {

template <typename T>
Tensor<T> similarity(const Tensor<T>& a_row, const Tensor<T>& l_row) {
  if (a_row.shape() != l_row.shape() || a_row.rank() != 2 || a_row.dim(0) != 1) {
    throw DimensionError("similarity: expected two 1 x p rows, got " + shape_str(a_row.shape()) + " and " +
                         shape_str(l_row.shape()));
  }
  return ops::sum(ops::mul(a_row, l_row));
}

template <typename T>
ContrastiveTerms<T> contrastive_terms(const Tensor<T>& sim, const Tensor<T>& tau) {
  if (sim.rank() != 2 || sim.dim(0) != sim.dim(1) || sim.dim(0) == 0) {
    throw DimensionError("contrastive loss: similarity matrix must be non-empty B x B, got " + shape_str(sim.shape()));
  }
  if (tau.numel() != 1 || !(tau.item() > 0)) throw ConfigError("contrastive loss: temperature must be positive");
  const auto logits = ops::div_scalar(sim, tau);
  ContrastiveTerms<T> t;
  t.audio_to_lyrics = ops::scale(ops::mean(ops::diagonal(ops::log_softmax_rows(logits))), -1.0);
  t.lyrics_to_audio = ops::scale(ops::mean(ops::diagonal(ops::log_softmax_rows(ops::transpose(logits)))), -1.0);
  t.total = ops::scale(ops::add(t.audio_to_lyrics, t.lyrics_to_audio), 0.5);
  return t;
}

template <typename T>
Tensor<T> contrastive_loss(const Tensor<T>& audio_emb, const Tensor<T>& lyrics_emb, const Tensor<T>& tau) {
  if (audio_emb.rank() != 2 || audio_emb.shape() != lyrics_emb.shape()) {
    throw DimensionError("contrastive loss: embeddings " + shape_str(audio_emb.shape()) + " and " +
                         shape_str(lyrics_emb.shape()) + " must both be B x p");
  }
  return contrastive_terms(ops::matmul(audio_emb, ops::transpose(lyrics_emb)), tau).total;
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& targets) {
  return ops::bce_with_logits(logits, targets);
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_al, const Tensor<T>& l_bce, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("loss weight lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  return ops::add(ops::scale(l_al, lambda), ops::scale(l_bce, 1.0 - lambda));
}

template <typename T>
ContrastiveHead<T>::ContrastiveHead(std::size_t audio_dim, std::size_t lyrics_dim, ContrastiveConfig config, Rng& rng)
    : config_(config), audio_proj_(audio_dim, config.proj_dim, rng), lyrics_proj_(lyrics_dim, config.proj_dim, rng) {
  if (!(config_.tau_min > 0 && config_.tau_min <= config_.tau_init && config_.tau_init <= config_.tau_max)) {
    throw ConfigError("temperature init " + std::to_string(config_.tau_init) + " outside [" +
                      std::to_string(config_.tau_min) + ", " + std::to_string(config_.tau_max) + "]");
  }
  log_tau_ = Tensor<T>::scalar(static_cast<T>(std::log(config_.tau_init)), true);
}

template <typename T>
Tensor<T> ContrastiveHead<T>::temperature() const {
  return ops::clamp(ops::exp(log_tau_), config_.tau_min, config_.tau_max);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> ContrastiveHead<T>::project(const Tensor<T>& audio, const Tensor<T>& lyrics) const {
  auto a = audio_proj_.forward(audio);
  auto l = lyrics_proj_.forward(lyrics);
  if (config_.normalize) {
    a = ops::l2_normalize_rows(a);
    l = ops::l2_normalize_rows(l);
  }
  return {a, l};
}

template <typename T>
Tensor<T> ContrastiveHead<T>::loss(const Tensor<T>& audio, const Tensor<T>& lyrics) const {
  auto [a, l] = project(audio, lyrics);
  return contrastive_loss(a, l, temperature());
}

template <typename T>
void ContrastiveHead<T>::register_params(ParameterSet<T>& params, const std::string& prefix) const {
  audio_proj_.register_params(params, prefix + ".audio_proj");
  lyrics_proj_.register_params(params, prefix + ".lyrics_proj");
  params.add(prefix + ".log_tau", log_tau_);
}

#define GENREFUSE_INSTANTIATE_LOSSES(T)                                                  \
  template Tensor<T> similarity<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template ContrastiveTerms<T> contrastive_terms<T>(const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> contrastive_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> bce_loss<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, double);          \
  template class ContrastiveHead<T>;

GENREFUSE_INSTANTIATE_LOSSES(float)
GENREFUSE_INSTANTIATE_LOSSES(double)

}  // namespace genrefuse
