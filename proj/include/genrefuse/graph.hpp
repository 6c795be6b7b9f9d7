#pragma once

// Genre correlation graph: co-occurrence counts, conditional-probability and
// cosine-similarity matrices, adjacency normalisation, the GCN over genre
// node features and the two classifier heads.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "genrefuse/nn.hpp"
#include "genrefuse/tensor.hpp"

namespace genrefuse {

using LabelSet = std::vector<std::size_t>;

struct CooccurrenceCounts {
  std::size_t num_genres = 0;
  std::vector<std::int64_t> n;  // samples containing genre g
  std::vector<std::int64_t> m;  // G x G, samples containing both i and j

  std::int64_t pair(std::size_t i, std::size_t j) const { return m[i * num_genres + j]; }
};

/// Duplicate ids inside one set count once.
CooccurrenceCounts count_cooccurrence(const std::vector<LabelSet>& label_sets, std::size_t num_genres);

/// kRow: M[i][j] / N[i], i.e. P(j | i). kAsWritten: M[i][j] / N[j].
enum class DenominatorMode { kRow, kAsWritten };
DenominatorMode parse_denominator_mode(std::string_view name);
std::string to_string(DenominatorMode mode);

/// Rows (kRow) or columns (kAsWritten) of genres that never occur stay zero.
Tensor<double> conditional_probability_matrix(const CooccurrenceCounts& counts, DenominatorMode mode);
/// Cosine similarity of the rows of F.
Tensor<double> similarity_matrix(const Tensor<double>& features);
/// (A1 + A2) / 2.
Tensor<double> combine(const Tensor<double>& a1, const Tensor<double>& a2);
/// Negatives clamped to zero, then each row divided by its sum. All-zero
/// rows become the self-loop row e_i.
Tensor<double> normalize_adjacency(const Tensor<double>& a);

struct CorrelationMatrices {
  Tensor<double> a1;
  Tensor<double> a2;
  Tensor<double> a;
  Tensor<double> adjacency;
};

CorrelationMatrices build_correlation(const CooccurrenceCounts& counts, const Tensor<double>& features,
                                      DenominatorMode mode);

/// H_{l+1} = ReLU(A H_l W_l) for all but the last layer, which has no ReLU.
template <typename T>
Tensor<T> gcn_forward(const Tensor<T>& features, const Tensor<T>& adjacency, const std::vector<Tensor<T>>& weights);

/// logits[b][k] = fused[b] . nodes[k].
template <typename T>
Tensor<T> classify(const Tensor<T>& fused, const Tensor<T>& node_embeddings);

template <typename T>
class GcnHead {
 public:
  /// widths: E, hidden..., D. Features and adjacency are fixed buffers.
  GcnHead(Tensor<T> features, Tensor<T> adjacency, const std::vector<std::size_t>& widths, Rng& rng);

  Tensor<T> node_embeddings() const;
  Tensor<T> forward(const Tensor<T>& fused) const;
  void register_params(ParameterSet<T>& params, const std::string& prefix) const;

  std::vector<Tensor<T>>& weights() { return weights_; }
  std::size_t num_genres() const { return features_.dim(0); }

 private:
  Tensor<T> features_;
  Tensor<T> adjacency_;
  std::vector<Tensor<T>> weights_;
};

/// Baseline head when the graph module is ablated: Linear(D -> G).
template <typename T>
Tensor<T> classify_ablated(const Tensor<T>& fused, const Linear<T>& head);

extern template class GcnHead<float>;
extern template class GcnHead<double>;

}  // namespace genrefuse
