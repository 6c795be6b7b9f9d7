#pragma once

// Multi-label metrics: sample-averaged Jaccard accuracy and F1, plus micro and
// macro F1 and per-genre precision/recall.

#include <cstddef>
#include <string>
#include <vector>

#include "genrefuse/graph.hpp"
#include "genrefuse/tensor.hpp"

namespace genrefuse {

struct MetricsReport {
  double accuracy = 0;   // mean |Y n P| / |Y u P|, empty/empty counts as 1
  double f_measure = 0;  // mean 2|Y n P| / (|Y| + |P|), 0/0 counts as 1
  double micro_f1 = 0;
  double macro_f1 = 0;
  std::vector<double> precision;  // per genre
  std::vector<double> recall;
  double threshold = 0.5;
  std::size_t samples = 0;

  std::string to_json(const std::vector<std::string>& genre_names) const;
};

double sample_jaccard(const LabelSet& truth, const LabelSet& pred);
double sample_f1(const LabelSet& truth, const LabelSet& pred);

MetricsReport compute_metrics(const std::vector<LabelSet>& truth, const std::vector<LabelSet>& pred,
                              std::size_t num_genres, double threshold = 0.5);

/// Genres whose sigmoid(logit) >= threshold, per row.
template <typename T>
std::vector<LabelSet> predictions_from_logits(const Tensor<T>& logits, double threshold);

/// Empirical per-genre frequency over the given label sets.
std::vector<double> label_priors(const std::vector<LabelSet>& sets, std::size_t num_genres);

struct PriorBaseline {
  double accuracy = 0;
  double f_measure = 0;
};

/// Expected sample metrics of a predictor that ignores its input and includes
/// each genre independently with probability priors[g]. Computed exactly by
/// dynamic programming over (hits, false positives) for each test sample.
PriorBaseline label_prior_baseline(const std::vector<double>& priors, const std::vector<LabelSet>& test_sets);

}  // namespace genrefuse
