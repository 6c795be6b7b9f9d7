#include "genrefuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace genrefuse {

namespace {

std::size_t intersection_size(const LabelSet& a, const LabelSet& b) {
  const std::set<std::size_t> sa(a.begin(), a.end());
  std::size_t n = 0;
  for (const auto g : std::set<std::size_t>(b.begin(), b.end())) n += sa.count(g);
  return n;
}

std::size_t unique_size(const LabelSet& a) { return std::set<std::size_t>(a.begin(), a.end()).size(); }

}  // namespace

double sample_jaccard(const LabelSet& truth, const LabelSet& pred) {
  const auto inter = intersection_size(truth, pred);
  const auto uni = unique_size(truth) + unique_size(pred) - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double sample_f1(const LabelSet& truth, const LabelSet& pred) {
  const auto inter = intersection_size(truth, pred);
  const auto den = unique_size(truth) + unique_size(pred);
  return den == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(den);
}

MetricsReport compute_metrics(const std::vector<LabelSet>& truth, const std::vector<LabelSet>& pred,
                              std::size_t num_genres, double threshold) {
  if (truth.size() != pred.size()) {
    throw DimensionError("metrics: " + std::to_string(truth.size()) + " label sets vs " +
                         std::to_string(pred.size()) + " predictions");
  }
  if (truth.empty()) throw InputError("metrics: no samples");
  MetricsReport r;
  r.threshold = threshold;
  r.samples = truth.size();
  std::vector<double> tp(num_genres, 0), fp(num_genres, 0), fn(num_genres, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    r.accuracy += sample_jaccard(truth[i], pred[i]);
    r.f_measure += sample_f1(truth[i], pred[i]);
    const std::set<std::size_t> t(truth[i].begin(), truth[i].end());
    const std::set<std::size_t> p(pred[i].begin(), pred[i].end());
    for (const auto g : p) {
      if (g >= num_genres) throw InputError("metrics: predicted genre " + std::to_string(g) + " out of range");
      (t.count(g) ? tp : fp)[g] += 1;
    }
    for (const auto g : t) {
      if (g >= num_genres) throw InputError("metrics: true genre " + std::to_string(g) + " out of range");
      if (!p.count(g)) fn[g] += 1;
    }
  }
  const auto n = static_cast<double>(truth.size());
  r.accuracy /= n;
  r.f_measure /= n;
  double stp = 0, sfp = 0, sfn = 0, macro = 0;
  for (std::size_t g = 0; g < num_genres; ++g) {
    stp += tp[g];
    sfp += fp[g];
    sfn += fn[g];
    // A genre that is neither present nor predicted is scored as perfect.
    const bool idle = tp[g] + fp[g] + fn[g] == 0;
    r.precision.push_back(idle ? 1.0 : (tp[g] + fp[g] > 0 ? tp[g] / (tp[g] + fp[g]) : 0.0));
    r.recall.push_back(idle ? 1.0 : (tp[g] + fn[g] > 0 ? tp[g] / (tp[g] + fn[g]) : 0.0));
    macro += idle ? 1.0 : 2 * tp[g] / (2 * tp[g] + fp[g] + fn[g]);
  }
  r.micro_f1 = stp + sfp + sfn == 0 ? 1.0 : 2 * stp / (2 * stp + sfp + sfn);
  r.macro_f1 = num_genres == 0 ? 1.0 : macro / static_cast<double>(num_genres);
  return r;
}

std::string MetricsReport::to_json(const std::vector<std::string>& genre_names) const {
  nlohmann::ordered_json j;
  j["samples"] = samples;
  j["threshold"] = threshold;
  j["accuracy"] = accuracy;
  j["f_measure"] = f_measure;
  j["micro_f1"] = micro_f1;
  j["macro_f1"] = macro_f1;
  auto per = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < precision.size(); ++g) {
    per.push_back({{"genre", g < genre_names.size() ? genre_names[g] : std::to_string(g)},
                   {"precision", precision[g]},
                   {"recall", recall[g]}});
  }
  j["per_genre"] = per;
  return j.dump(2);
}

template <typename T>
std::vector<LabelSet> predictions_from_logits(const Tensor<T>& logits, double threshold) {
  if (logits.rank() != 2) throw DimensionError("predictions: logits must be B x G, got " + shape_str(logits.shape()));
  // sigmoid(x) >= t  <=>  x >= log(t / (1 - t))
  const double cut = std::log(threshold / (1.0 - threshold));
  std::vector<LabelSet> out(logits.dim(0));
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    for (std::size_t g = 0; g < logits.dim(1); ++g) {
      if (static_cast<double>(logits.at(b, g)) >= cut) out[b].push_back(g);
    }
  }
  return out;
}

std::vector<double> label_priors(const std::vector<LabelSet>& sets, std::size_t num_genres) {
  std::vector<double> p(num_genres, 0.0);
  if (sets.empty()) return p;
  for (const auto& s : sets) {
    for (const auto g : std::set<std::size_t>(s.begin(), s.end())) p.at(g) += 1;
  }
  for (auto& v : p) v /= static_cast<double>(sets.size());
  return p;
}

PriorBaseline label_prior_baseline(const std::vector<double>& priors, const std::vector<LabelSet>& test_sets) {
  if (test_sets.empty()) throw InputError("prior baseline: no test samples");
  const std::size_t g = priors.size();
  PriorBaseline out;
  for (const auto& set : test_sets) {
    const std::set<std::size_t> truth(set.begin(), set.end());
    // prob[h][f]: probability of h hits among true genres and f false positives.
    std::vector<std::vector<double>> prob(g + 1, std::vector<double>(g + 1, 0.0));
    prob[0][0] = 1.0;
    for (std::size_t k = 0; k < g; ++k) {
      const double p = priors[k];
      const bool is_true = truth.count(k) > 0;
      for (std::size_t h = k + 1; h-- > 0;) {
        for (std::size_t f = k + 1 - h; f-- > 0;) {
          const double v = prob[h][f];
          if (v == 0.0) continue;
          prob[h][f] = v * (1 - p);
          (is_true ? prob[h + 1][f] : prob[h][f + 1]) += v * p;
        }
      }
    }
    const auto y = static_cast<double>(truth.size());
    for (std::size_t h = 0; h <= g; ++h) {
      for (std::size_t f = 0; h + f <= g; ++f) {
        const double v = prob[h][f];
        if (v == 0.0) continue;
        const double hits = static_cast<double>(h), fps = static_cast<double>(f);
        const double uni = y + fps;
        const double den = y + hits + fps;
        out.accuracy += v * (uni == 0 ? 1.0 : hits / uni);
        out.f_measure += v * (den == 0 ? 1.0 : 2 * hits / den);
      }
    }
  }
  out.accuracy /= static_cast<double>(test_sets.size());
  out.f_measure /= static_cast<double>(test_sets.size());
  return out;
}

template std::vector<LabelSet> predictions_from_logits<float>(const Tensor<float>&, double);
template std::vector<LabelSet> predictions_from_logits<double>(const Tensor<double>&, double);

}  // namespace genrefuse
