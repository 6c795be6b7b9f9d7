#include "genrefuse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "genrefuse/ops.hpp"

namespace genrefuse {

CooccurrenceCounts count_cooccurrence(const std::vector<LabelSet>& label_sets, std::size_t num_genres) {
  CooccurrenceCounts c;
  c.num_genres = num_genres;
  c.n.assign(num_genres, 0);
  c.m.assign(num_genres * num_genres, 0);
  for (std::size_t s = 0; s < label_sets.size(); ++s) {
    const std::set<std::size_t> uniq(label_sets[s].begin(), label_sets[s].end());
    for (const auto g : uniq) {
      if (g >= num_genres) {
        throw InputError("co-occurrence: genre id " + std::to_string(g) + " in label set " + std::to_string(s) +
                         " is out of range for " + std::to_string(num_genres) + " genres");
      }
    }
    for (const auto i : uniq) {
      ++c.n[i];
      for (const auto j : uniq) ++c.m[i * num_genres + j];
    }
  }
  return c;
}

DenominatorMode parse_denominator_mode(std::string_view name) {
  if (name == "row") return DenominatorMode::kRow;
  if (name == "as-written") return DenominatorMode::kAsWritten;
  throw ConfigError("unknown denominator mode '" + std::string(name) + "' (expected row or as-written)");
}

std::string to_string(DenominatorMode mode) { return mode == DenominatorMode::kRow ? "row" : "as-written"; }

Tensor<double> conditional_probability_matrix(const CooccurrenceCounts& counts, DenominatorMode mode) {
  const std::size_t g = counts.num_genres;
  std::vector<double> a(g * g, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const std::int64_t den = mode == DenominatorMode::kRow ? counts.n[i] : counts.n[j];
      if (den > 0) a[i * g + j] = static_cast<double>(counts.pair(i, j)) / static_cast<double>(den);
    }
  }
  return Tensor<double>::from({g, g}, std::move(a));
}

Tensor<double> similarity_matrix(const Tensor<double>& features) {
  if (features.rank() != 2) throw DimensionError("similarity: expected G x E features, got " + shape_str(features.shape()));
  const std::size_t g = features.dim(0), e = features.dim(1);
  const auto f = features.data();
  std::vector<double> norms(g);
  for (std::size_t i = 0; i < g; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < e; ++k) s += f[i * e + k] * f[i * e + k];
    if (s == 0.0) throw ConfigError("similarity: genre " + std::to_string(i) + " has a zero-norm embedding");
    norms[i] = std::sqrt(s);
  }
  std::vector<double> a(g * g);
  for (std::size_t i = 0; i < g; ++i) {
    a[i * g + i] = 1.0;
    for (std::size_t j = i + 1; j < g; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < e; ++k) dot += f[i * e + k] * f[j * e + k];
      const double c = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      a[i * g + j] = c;
      a[j * g + i] = c;
    }
  }
  return Tensor<double>::from({g, g}, std::move(a));
}

Tensor<double> combine(const Tensor<double>& a1, const Tensor<double>& a2) {
  if (a1.shape() != a2.shape()) {
    throw DimensionError("combine: " + shape_str(a1.shape()) + " vs " + shape_str(a2.shape()));
  }
  std::vector<double> a(a1.numel());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.5 * (a1.data()[i] + a2.data()[i]);
  return Tensor<double>::from(a1.shape(), std::move(a));
}

Tensor<double> normalize_adjacency(const Tensor<double>& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw DimensionError("adjacency must be square, got " + shape_str(a.shape()));
  const std::size_t g = a.dim(0);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < g; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < g; ++j) {
      auto& v = out[i * g + j];
      v = std::max(v, 0.0);
      s += v;
    }
    if (s > 0) {
      for (std::size_t j = 0; j < g; ++j) out[i * g + j] /= s;
    } else {
      out[i * g + i] = 1.0;
    }
  }
  return Tensor<double>::from({g, g}, std::move(out));
}

CorrelationMatrices build_correlation(const CooccurrenceCounts& counts, const Tensor<double>& features,
                                      DenominatorMode mode) {
  if (features.rank() != 2 || features.dim(0) != counts.num_genres) {
    throw DimensionError("correlation: " + std::to_string(counts.num_genres) + " genres but features " +
                         shape_str(features.shape()));
  }
  CorrelationMatrices c;
  c.a1 = conditional_probability_matrix(counts, mode);
  c.a2 = similarity_matrix(features);
  c.a = combine(c.a1, c.a2);
  c.adjacency = normalize_adjacency(c.a);
  return c;
}

template <typename T>
Tensor<T> gcn_forward(const Tensor<T>& features, const Tensor<T>& adjacency, const std::vector<Tensor<T>>& weights) {
  if (weights.empty()) throw ConfigError("gcn: at least one layer is required");
  if (adjacency.rank() != 2 || features.rank() != 2 || adjacency.dim(0) != adjacency.dim(1) ||
      adjacency.dim(1) != features.dim(0)) {
    throw DimensionError("gcn: adjacency " + shape_str(adjacency.shape()) + " does not match features " +
                         shape_str(features.shape()));
  }
  auto h = features;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = ops::matmul(ops::matmul(adjacency, h), weights[l]);
    if (l + 1 < weights.size()) h = ops::relu(h);
  }
  return h;
}

template <typename T>
Tensor<T> classify(const Tensor<T>& fused, const Tensor<T>& node_embeddings) {
  if (fused.rank() != 2 || node_embeddings.rank() != 2 || fused.dim(1) != node_embeddings.dim(1)) {
    throw DimensionError("classify: fused " + shape_str(fused.shape()) + " vs node embeddings " +
                         shape_str(node_embeddings.shape()));
  }
  return ops::matmul(fused, ops::transpose(node_embeddings));
}

template <typename T>
GcnHead<T>::GcnHead(Tensor<T> features, Tensor<T> adjacency, const std::vector<std::size_t>& widths, Rng& rng)
    : features_(std::move(features)), adjacency_(std::move(adjacency)) {
  if (widths.size() < 2) throw ConfigError("gcn: widths need at least input and output entries");
  if (features_.rank() != 2 || features_.dim(1) != widths.front()) {
    throw DimensionError("gcn: features " + shape_str(features_.shape()) + " do not have width " +
                         std::to_string(widths.front()));
  }
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    weights_.push_back(init_normal<T>({widths[l], widths[l + 1]}, 1.0 / std::sqrt(static_cast<double>(widths[l])), rng));
  }
  gcn_forward(features_, adjacency_, weights_);  // validates the adjacency shape
}

template <typename T>
Tensor<T> GcnHead<T>::node_embeddings() const {
  return gcn_forward(features_, adjacency_, weights_);
}

template <typename T>
Tensor<T> GcnHead<T>::forward(const Tensor<T>& fused) const {
  return classify(fused, node_embeddings());
}

template <typename T>
void GcnHead<T>::register_params(ParameterSet<T>& params, const std::string& prefix) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) params.add(prefix + ".layer" + std::to_string(l) + ".weight", weights_[l]);
  params.add(prefix + ".features", features_, false);
  params.add(prefix + ".adjacency", adjacency_, false);
}

template <typename T>
Tensor<T> classify_ablated(const Tensor<T>& fused, const Linear<T>& head) {
  if (fused.rank() != 2 || fused.dim(1) != head.in_features()) {
    throw DimensionError("linear head: fused " + shape_str(fused.shape()) + " but head expects width " +
                         std::to_string(head.in_features()));
  }
  return head.forward(fused);
}

#define GENREFUSE_INSTANTIATE_GRAPH(T)                                                                  \
  template Tensor<T> gcn_forward<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<Tensor<T>>&); \
  template Tensor<T> classify<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> classify_ablated<T>(const Tensor<T>&, const Linear<T>&);                          \
  template class GcnHead<T>;

GENREFUSE_INSTANTIATE_GRAPH(float)
GENREFUSE_INSTANTIATE_GRAPH(double)

}  // namespace genrefuse
