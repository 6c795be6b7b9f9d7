#include <cmath>

#include "doctest.h"
#include "genrefuse/graph.hpp"
#include "genrefuse/ops.hpp"
#include "gradcheck.hpp"

using namespace genrefuse;
using genrefuse::testing::random_tensor;
using genrefuse::testing::TensorD;

namespace {

std::vector<LabelSet> random_label_sets(Rng& rng, std::size_t count, std::size_t genres) {
  std::vector<LabelSet> sets(count);
  for (auto& s : sets) {
    const std::size_t k = rng.below(5);  // may be empty, may repeat ids
    for (std::size_t i = 0; i < k; ++i) s.push_back(rng.below(genres));
  }
  return sets;
}

// Counts by scanning every set for each (i, j) pair separately.
std::int64_t count_pair(const std::vector<LabelSet>& sets, std::size_t i, std::size_t j) {
  std::int64_t c = 0;
  for (const auto& s : sets) {
    const bool hi = std::find(s.begin(), s.end(), i) != s.end();
    const bool hj = std::find(s.begin(), s.end(), j) != s.end();
    if (hi && hj) ++c;
  }
  return c;
}

}  // namespace

TEST_CASE("co-occurrence counts on the worked example") {
  const std::vector<LabelSet> sets{{0, 1}, {0}, {1, 2}};
  const auto c = count_cooccurrence(sets, 3);
  CHECK(c.n == std::vector<std::int64_t>{2, 2, 1});
  CHECK(c.pair(0, 1) == 1);
  CHECK(c.pair(1, 2) == 1);
  CHECK(c.pair(0, 2) == 0);

  const auto row = conditional_probability_matrix(c, DenominatorMode::kRow);
  CHECK(row.at(0, 1) == 0.5);
  CHECK(row.at(1, 2) == 0.5);
  CHECK(row.at(2, 1) == 1.0);
  const auto lit = conditional_probability_matrix(c, DenominatorMode::kAsWritten);
  CHECK(lit.at(0, 1) == 0.5);
  CHECK(lit.at(2, 1) == 0.5);
  CHECK(lit.at(1, 2) == 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(row.at(i, i) == 1.0);
    CHECK(lit.at(i, i) == 1.0);
  }
}

TEST_CASE("co-occurrence edge cases") {
  const auto empty = count_cooccurrence({}, 4);
  for (auto v : empty.n) CHECK(v == 0);
  for (auto v : empty.m) CHECK(v == 0);
  const auto a1 = conditional_probability_matrix(empty, DenominatorMode::kRow);
  for (double v : a1.data()) CHECK(v == 0.0);

  const auto singles = count_cooccurrence({{0}, {2}, {2}, {3}}, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(singles.pair(i, j) == (i == j ? singles.n[i] : 0));

  CHECK_THROWS_AS(count_cooccurrence({{0, 4}}, 4), InputError);
}

TEST_CASE("conditional probabilities equal the counting oracle exactly, both modes") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t g = 1 + rng.below(8);
    const auto sets = random_label_sets(rng, 1 + rng.below(40), g);
    const auto c = count_cooccurrence(sets, g);
    const auto row = conditional_probability_matrix(c, DenominatorMode::kRow);
    const auto lit = conditional_probability_matrix(c, DenominatorMode::kAsWritten);
    for (std::size_t i = 0; i < g; ++i) {
      const auto ni = count_pair(sets, i, i);
      CHECK(c.n[i] == ni);
      for (std::size_t j = 0; j < g; ++j) {
        const auto mij = count_pair(sets, i, j);
        const auto nj = count_pair(sets, j, j);
        CHECK(c.pair(i, j) == mij);
        // Division of two small integers is correctly rounded, so equality is exact.
        CHECK(row.at(i, j) == (ni > 0 ? static_cast<double>(mij) / static_cast<double>(ni) : 0.0));
        CHECK(lit.at(i, j) == (nj > 0 ? static_cast<double>(mij) / static_cast<double>(nj) : 0.0));
      }
    }
  }
}

TEST_CASE("correlation matrix properties over 10^4 random label multisets") {
  Rng rng(22);
  const std::size_t g = 10;
  auto features = random_tensor(rng, {g, 6}, -1, 1, false);
  const auto a2 = similarity_matrix(features);
  for (std::size_t i = 0; i < g; ++i) {
    CHECK(std::abs(a2.at(i, i) - 1.0) <= 1e-6);
    for (std::size_t j = 0; j < g; ++j) {
      CHECK(a2.at(i, j) == a2.at(j, i));
      CHECK(std::abs(a2.at(i, j)) <= 1.0);
    }
  }

  bool ok = true;
  for (int trial = 0; trial < 10000 && ok; ++trial) {
    const auto sets = random_label_sets(rng, 1 + rng.below(30), g);
    const auto c = count_cooccurrence(sets, g);
    for (const auto mode : {DenominatorMode::kRow, DenominatorMode::kAsWritten}) {
      const auto m = build_correlation(c, features, mode);
      for (std::size_t i = 0; i < g; ++i) {
        if (c.n[i] > 0 && m.a1.at(i, i) != 1.0) ok = false;
        double row_sum = 0;
        for (std::size_t j = 0; j < g; ++j) {
          const double v = m.a1.at(i, j);
          if (!(v >= 0.0 && v <= 1.0)) ok = false;
          if (c.pair(i, j) != c.pair(j, i) || c.pair(i, j) > std::min(c.n[i], c.n[j])) ok = false;
          if (m.a.at(i, j) != 0.5 * (m.a1.at(i, j) + m.a2.at(i, j))) ok = false;
          if (m.adjacency.at(i, j) < 0.0) ok = false;
          row_sum += m.adjacency.at(i, j);
        }
        if (std::abs(row_sum - 1.0) > 1e-6) ok = false;
      }
    }
  }
  CHECK(ok);
}

TEST_CASE("cosine similarity matches the scalar oracle and ignores row scale") {
  Rng rng(23);
  const auto f = random_tensor(rng, {5, 8}, -2, 2, false);
  const auto a2 = similarity_matrix(f);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t k = 0; k < 8; ++k) {
        dot += f.at(i, k) * f.at(j, k);
        ni += f.at(i, k) * f.at(i, k);
        nj += f.at(j, k) * f.at(j, k);
      }
      CHECK(std::abs(a2.at(i, j) - dot / std::sqrt(ni * nj)) < 1e-6);
    }
  const auto scaled = similarity_matrix(ops::scale(f, 3.7));
  for (std::size_t i = 0; i < 25; ++i) CHECK(std::abs(scaled.data()[i] - a2.data()[i]) < 1e-6);

  const auto ortho = similarity_matrix(Tensor<double>::from({2, 2}, {1, 0, 0, 2}));
  CHECK(ortho.at(0, 1) == 0.0);
  const auto same = similarity_matrix(Tensor<double>::from({2, 2}, {1, 2, 1, 2}));
  CHECK(same.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(similarity_matrix(Tensor<double>::from({2, 2}, {1, 2, 0, 0})), ConfigError);
}

TEST_CASE("combine and normalize_adjacency") {
  const auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  const auto zero = Tensor<double>::zeros({2, 2});
  const auto half = combine(zero, eye);
  CHECK(std::vector<double>(half.data().begin(), half.data().end()) == std::vector<double>{0.5, 0, 0, 0.5});
  const auto same = combine(eye, eye);
  CHECK(std::equal(same.data().begin(), same.data().end(), eye.data().begin()));
  CHECK_THROWS_AS(combine(eye, Tensor<double>::zeros({3, 3})), DimensionError);

  const auto n_eye = normalize_adjacency(eye);
  CHECK(std::equal(n_eye.data().begin(), n_eye.data().end(), eye.data().begin()));
  const auto uniform = normalize_adjacency(Tensor<double>::full({4, 4}, 0.3));
  for (double v : uniform.data()) CHECK(v == 0.25);
  // negative entries clamp to zero; an all-non-positive row becomes a self loop
  const auto mixed = normalize_adjacency(Tensor<double>::from({2, 2}, {-1, -0.5, 0.2, 0.6}));
  CHECK(mixed.at(0, 0) == 1.0);
  CHECK(mixed.at(0, 1) == 0.0);
  CHECK(mixed.at(1, 0) == doctest::Approx(0.25));
  CHECK(mixed.at(1, 1) == doctest::Approx(0.75));
}

TEST_CASE("gcn forward: trivial cases and loop oracle") {
  const auto f = Tensor<double>::from({2, 2}, {1, -2, -3, 4});
  const auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  const auto relu_f = gcn_forward(f, eye, {eye, eye});
  CHECK(std::vector<double>(relu_f.data().begin(), relu_f.data().end()) == std::vector<double>{1, 0, 0, 4});
  const auto one_layer = gcn_forward(f, eye, {eye});
  CHECK(std::equal(one_layer.data().begin(), one_layer.data().end(), f.data().begin()));

  Rng rng(24);
  // two identical nodes with a symmetric adjacency stay identical
  auto twin = Tensor<double>::from({3, 3}, {0.5, 1, -1, 0.5, 1, -1, 2, 0, 1});
  auto adj = normalize_adjacency(Tensor<double>::from({3, 3}, {1, 0.5, 0.2, 0.5, 1, 0.2, 0.3, 0.3, 1}));
  std::vector<TensorD> ws{random_tensor(rng, {3, 4}, -1, 1, false), random_tensor(rng, {4, 4}, -1, 1, false),
                          random_tensor(rng, {4, 2}, -1, 1, false)};
  const auto out = gcn_forward(twin, adj, ws);
  CHECK(out.at(0, 0) == out.at(1, 0));
  CHECK(out.at(0, 1) == out.at(1, 1));

  const std::size_t g = 5, e = 4, h = 6, d = 3;
  const auto feat = random_tensor(rng, {g, e}, -1, 1, false);
  const auto a = normalize_adjacency(random_tensor(rng, {g, g}, 0, 1, false));
  std::vector<TensorD> w{random_tensor(rng, {e, h}, -1, 1, false), random_tensor(rng, {h, d}, -1, 1, false)};
  const auto got = gcn_forward(feat, a, w);
  std::vector<std::vector<double>> cur(g, std::vector<double>(e));
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t k = 0; k < e; ++k) cur[i][k] = feat.at(i, k);
  for (std::size_t l = 0; l < 2; ++l) {
    const std::size_t in = w[l].dim(0), outw = w[l].dim(1);
    std::vector<std::vector<double>> next(g, std::vector<double>(outw, 0.0));
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t o = 0; o < outw; ++o) {
        double acc = 0;
        for (std::size_t j = 0; j < g; ++j)
          for (std::size_t k = 0; k < in; ++k) acc += a.at(i, j) * cur[j][k] * w[l].at(k, o);
        next[i][o] = l == 0 ? std::max(acc, 0.0) : acc;
      }
    cur = next;
  }
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t o = 0; o < d; ++o) CHECK(std::abs(got.at(i, o) - cur[i][o]) < 1e-5);

  CHECK_THROWS_AS(gcn_forward(feat, Tensor<double>::zeros({4, 4}), w), DimensionError);
  CHECK_THROWS_AS(gcn_forward(feat, a, {random_tensor(rng, {3, 2}, -1, 1, false)}), DimensionError);
}

TEST_CASE("classifier heads") {
  Rng rng(25);
  const auto nodes = random_tensor(rng, {4, 3}, -1, 1, false);
  const auto zeros = classify(Tensor<double>::zeros({2, 3}), nodes);
  for (double v : zeros.data()) CHECK(v == 0.0);
  const auto sig = ops::sigmoid(zeros);
  for (double v : sig.data()) CHECK(v == 0.5);

  auto fused = Tensor<double>::from({1, 3}, {nodes.at(2, 0), nodes.at(2, 1), nodes.at(2, 2)});
  const auto logits = classify(fused, nodes);
  double sq = 0;
  for (std::size_t k = 0; k < 3; ++k) sq += nodes.at(2, k) * nodes.at(2, k);
  CHECK(logits.at(0, 2) == doctest::Approx(sq).epsilon(1e-15));
  const auto batch = random_tensor(rng, {3, 3}, -1, 1, false);
  const auto l2 = classify(batch, nodes);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t k = 0; k < 4; ++k) {
      double acc = 0;
      for (std::size_t c = 0; c < 3; ++c) acc += batch.at(b, c) * nodes.at(k, c);
      CHECK(l2.at(b, k) == doctest::Approx(acc).epsilon(1e-14));
    }
  CHECK_THROWS_AS(classify(Tensor<double>::zeros({1, 2}), nodes), DimensionError);

  Linear<double> head(3, 4, rng);
  head.weight() = Tensor<double>::zeros({3, 4}, true);
  const auto zero_logits = classify_ablated(batch, head);
  for (double v : zero_logits.data()) CHECK(v == 0.0);
  Linear<double> id_head(3, 3, rng);
  id_head.weight() = Tensor<double>::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}, true);
  const auto same = classify_ablated(batch, id_head);
  CHECK(std::equal(same.data().begin(), same.data().end(), batch.data().begin()));
  CHECK_THROWS_AS(classify_ablated(Tensor<double>::zeros({1, 2}), head), DimensionError);
}

TEST_CASE("gcn head registers weights and fixed buffers") {
  Rng rng(26);
  GcnHead<float> head(Tensor<float>::full({12, 64}, 0.1f), Tensor<float>::full({12, 12}, 1.0f / 12), {64, 64, 64}, rng);
  ParameterSet<float> params;
  head.register_params(params, "gcn");
  CHECK(params.contains("gcn.layer0.weight"));
  CHECK(params.contains("gcn.layer1.weight"));
  CHECK(params.trainable().size() == 2);
  CHECK(params.entries().size() == 4);
  CHECK(head.forward(Tensor<float>::zeros({3, 64})).shape() == Shape{3, 12});
}

TEST_CASE("gcn head plus classifier gradients match finite differences") {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(700 + seed);
    const auto feat = random_tensor(rng, {4, 3}, -1, 1, false);
    const auto adj = normalize_adjacency(random_tensor(rng, {4, 4}, 0, 1, false));
    GcnHead<double> head(feat, adj, {3, 5, 2}, rng);
    std::vector<TensorD> inputs = head.weights();
    inputs.push_back(random_tensor(rng, {3, 2}));
    const double err = genrefuse::testing::max_gradient_error(inputs, [&] {
      return genrefuse::testing::weighted_sum(head.forward(inputs.back()), seed);
    });
    CHECK(err < 1e-5);
  }
}
