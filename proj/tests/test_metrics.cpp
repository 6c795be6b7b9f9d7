#include <cmath>
#include <set>

#include "doctest.h"
#include "genrefuse/metrics.hpp"
#include "genrefuse/rng.hpp"

using namespace genrefuse;

namespace {

LabelSet random_set(Rng& rng, std::size_t g, double p) {
  LabelSet s;
  for (std::size_t k = 0; k < g; ++k)
    if (rng.uniform(0.0, 1.0) < p) s.push_back(k);
  return s;
}

}  // namespace

TEST_CASE("sample metrics worked example") {
  // truth {rock, pop}, predicted {rock}
  CHECK(sample_jaccard({0, 1}, {0}) == 0.5);
  CHECK(sample_f1({0, 1}, {0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(sample_jaccard({}, {}) == 1.0);
  CHECK(sample_f1({}, {}) == 1.0);
  CHECK(sample_f1({2}, {}) == 0.0);
  CHECK(sample_jaccard({1}, {3}) == 0.0);

  const auto r = compute_metrics({{0, 1}, {2}}, {{0}, {2}}, 3);
  CHECK(r.accuracy == doctest::Approx(0.75));
  CHECK(r.f_measure == doctest::Approx((2.0 / 3.0 + 1.0) / 2));
  CHECK(r.precision == std::vector<double>{1, 0, 1});
  CHECK(r.recall == std::vector<double>{1, 0, 1});
  CHECK(r.micro_f1 == doctest::Approx(2.0 * 2 / (2 * 2 + 0 + 1)));
}

TEST_CASE("perfect predictions and idle genres") {
  const std::vector<LabelSet> t{{0}, {0, 2}, {2}};
  const auto r = compute_metrics(t, t, 4);
  CHECK(r.accuracy == 1.0);
  CHECK(r.f_measure == 1.0);
  CHECK(r.micro_f1 == 1.0);
  CHECK(r.macro_f1 == 1.0);
  CHECK(r.precision[1] == 1.0);
  CHECK_THROWS_AS(compute_metrics(t, {{0}}, 4), DimensionError);
  CHECK_THROWS_AS(compute_metrics({{5}}, {{0}}, 4), InputError);
  CHECK_THROWS_AS(compute_metrics({}, {}, 4), InputError);
}

TEST_CASE("random metrics stay in bounds and match set arithmetic") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t g = 1 + rng.below(8);
    std::vector<LabelSet> t, p;
    for (int i = 0; i < 10; ++i) {
      t.push_back(random_set(rng, g, 0.4));
      p.push_back(random_set(rng, g, 0.4));
    }
    const auto r = compute_metrics(t, p, g);
    double acc = 0, f = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::set<std::size_t> a(t[i].begin(), t[i].end()), b(p[i].begin(), p[i].end()), uni = a;
      uni.insert(b.begin(), b.end());
      double inter = 0;
      for (auto x : a) inter += b.count(x);
      acc += uni.empty() ? 1.0 : inter / static_cast<double>(uni.size());
      f += a.size() + b.size() == 0 ? 1.0 : 2 * inter / static_cast<double>(a.size() + b.size());
    }
    CHECK(r.accuracy == doctest::Approx(acc / 10));
    CHECK(r.f_measure == doctest::Approx(f / 10));
    CHECK(r.accuracy <= r.f_measure + 1e-12);
    for (const double v : {r.accuracy, r.f_measure, r.micro_f1, r.macro_f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("threshold cut on logits") {
  const auto logits = Tensor<double>::from({2, 3}, {0.0, -0.01, 2.0, -5, 0.5, 0.4});
  CHECK(predictions_from_logits(logits, 0.5) == std::vector<LabelSet>{{0, 2}, {1, 2}});
  const double cut = std::log(0.6 / 0.4);
  const auto edge = Tensor<double>::from({1, 2}, {cut + 1e-12, cut - 1e-9});
  CHECK(predictions_from_logits(edge, 0.6) == std::vector<LabelSet>{{0}});
}

TEST_CASE("label priors") {
  const auto p = label_priors({{0, 1}, {1}, {1, 1}, {}}, 3);
  CHECK(p == std::vector<double>{0.25, 0.75, 0.0});
}

TEST_CASE("prior baseline equals enumeration over all predictions") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t g = 1 + rng.below(6);
    std::vector<double> priors(g);
    for (auto& v : priors) v = rng.uniform(0.0, 1.0);
    std::vector<LabelSet> tests;
    for (int i = 0; i < 5; ++i) tests.push_back(random_set(rng, g, 0.5));

    double acc = 0, f = 0;
    for (const auto& t : tests) {
      for (std::size_t mask = 0; mask < (std::size_t{1} << g); ++mask) {
        double prob = 1;
        LabelSet pred;
        for (std::size_t k = 0; k < g; ++k) {
          const bool on = (mask >> k) & 1;
          prob *= on ? priors[k] : 1 - priors[k];
          if (on) pred.push_back(k);
        }
        acc += prob * sample_jaccard(t, pred);
        f += prob * sample_f1(t, pred);
      }
    }
    const auto b = label_prior_baseline(priors, tests);
    CHECK(b.accuracy == doctest::Approx(acc / 5).epsilon(1e-12));
    CHECK(b.f_measure == doctest::Approx(f / 5).epsilon(1e-12));
  }
}

TEST_CASE("prior baseline agrees with Monte Carlo sampling") {
  const std::vector<double> priors{0.5, 0.5, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4};
  Rng rng(3);
  std::vector<LabelSet> tests;
  for (int i = 0; i < 40; ++i) tests.push_back(random_set(rng, 12, 0.4));
  const auto exact = label_prior_baseline(priors, tests);
  double f = 0;
  const int draws = 4000;
  for (int d = 0; d < draws; ++d) {
    for (const auto& t : tests) {
      LabelSet pred;
      for (std::size_t k = 0; k < 12; ++k)
        if (rng.uniform(0.0, 1.0) < priors[k]) pred.push_back(k);
      f += sample_f1(t, pred);
    }
  }
  CHECK(std::abs(f / (draws * 40.0) - exact.f_measure) < 0.005);
}
