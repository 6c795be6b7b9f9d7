#include <algorithm>

#include "doctest.h"
#include "genrefuse/model.hpp"
#include "genrefuse/ops.hpp"
#include "gradcheck.hpp"

using namespace genrefuse;
using genrefuse::testing::max_gradient_error;
using genrefuse::testing::random_tensor;

namespace {

const std::vector<std::string> kGenres{"rock", "pop", "jazz"};

RunConfig tiny_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.model.n_mels = 8;
  c.model.channels = {2, 3};
  c.model.embed_dim = 6;
  c.model.lyrics_dim = 4;
  c.model.attn_dim = 4;
  c.model.heads = 2;
  c.model.fused_dim = 4;
  c.model.gcn_hidden = 5;
  c.model.lyric_length = 5;
  c.loss.proj_dim = 3;
  return c;
}

CooccurrenceCounts tiny_counts() { return count_cooccurrence({{0, 1}, {1}, {2}, {0, 1, 2}}, 3); }

struct TinyBatch {
  std::vector<Tensor<double>> mels;
  std::vector<std::vector<std::int64_t>> tokens;
  Tensor<double> labels;
};

TinyBatch tiny_batch(std::uint64_t seed) {
  Rng rng(seed);
  TinyBatch b;
  for (int i = 0; i < 2; ++i) {
    b.mels.push_back(random_tensor(rng, {8, 32}, -1, 1, false));
    std::vector<std::int64_t> t(5);
    for (auto& v : t) v = static_cast<std::int64_t>(rng.below(12));
    b.tokens.push_back(t);
  }
  b.labels = Tensor<double>::from({2, 3}, {1, 1, 0, 0, 0, 1});
  return b;
}

bool has_prefix(const ParameterSet<double>& p, const std::string& prefix) {
  return std::any_of(p.entries().begin(), p.entries().end(),
                     [&](const auto& e) { return e.name.rfind(prefix, 0) == 0; });
}

}  // namespace

TEST_CASE("component flags decide which parameters exist") {
  auto c = tiny_config(1);
  const GenreModel<double> full(c, kGenres, 12, tiny_counts());
  CHECK(has_prefix(full.params(), "gcn.layer0.weight"));
  CHECK(has_prefix(full.params(), "gcn.layer1.weight"));
  CHECK_FALSE(has_prefix(full.params(), "head."));
  CHECK(has_prefix(full.params(), "fusion.a2l"));
  CHECK(has_prefix(full.params(), "contrastive.log_tau"));

  c.apply_ablation("gcem,scma");
  const GenreModel<double> base(c, kGenres, 12, tiny_counts());
  CHECK_FALSE(has_prefix(base.params(), "gcn."));
  CHECK(has_prefix(base.params(), "head."));
  CHECK_FALSE(has_prefix(base.params(), "fusion.a2l"));
  CHECK(has_prefix(base.params(), "fusion.concat_proj"));

  const auto b = tiny_batch(3);
  CHECK(base.forward(b.mels, b.tokens).logits.shape() == Shape{2, 3});
  CHECK(full.forward(b.mels, b.tokens).logits.shape() == Shape{2, 3});
  CHECK_THROWS_AS(full.forward(b.mels, {b.tokens[0]}), DimensionError);
  CHECK_THROWS_AS(GenreModel<double>(tiny_config(1), kGenres, 12, count_cooccurrence({}, 2)), DimensionError);
}

TEST_CASE("same seed, same parameters") {
  const GenreModel<double> a(tiny_config(4), kGenres, 12, tiny_counts());
  const GenreModel<double> b(tiny_config(4), kGenres, 12, tiny_counts());
  const GenreModel<double> c(tiny_config(5), kGenres, 12, tiny_counts());
  bool differs = false;
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto x = a.params().entries()[i].tensor.data();
    const auto y = b.params().entries()[i].tensor.data();
    const auto z = c.params().entries()[i].tensor.data();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    differs = differs || !std::equal(x.begin(), x.end(), z.begin(), z.end());
  }
  CHECK(differs);
}

TEST_CASE("lambda zero gives exactly the BCE") {
  auto c = tiny_config(2);
  c.loss.lambda = 0.0;
  const GenreModel<double> m(c, kGenres, 12, tiny_counts());
  const auto b = tiny_batch(9);
  const auto l = m.loss(m.forward(b.mels, b.tokens), b.labels);
  CHECK(l.total.item() == l.bce.item());
  CHECK(l.alignment.item() > 0.0);
}

TEST_CASE("without the alignment loss the contrastive heads get no gradient") {
  auto c = tiny_config(2);
  c.apply_ablation("al-loss");
  const GenreModel<double> m(c, kGenres, 12, tiny_counts());
  const auto opt = m.optimized_params();
  CHECK(opt.size() + 5 == m.params().trainable().size());  // 2 projections x (W, b) + log_tau
  const auto b = tiny_batch(9);
  const auto l = m.loss(m.forward(b.mels, b.tokens), b.labels);
  l.total.backward();
  for (const auto& e : m.params().entries()) {
    if (e.name.rfind("contrastive.", 0) != 0) continue;
    if (!e.tensor.has_grad()) continue;
    for (const double g : e.tensor.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("composite gradient check over 20 seeds") {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = tiny_config(seed);
    if (seed % 2) c.model.denominator = "as-written";
    c.loss.lambda = 0.3;
    const GenreModel<double> m(c, kGenres, 12, tiny_counts());
    auto params = m.params().trainable();
    const auto b = tiny_batch(100 + seed);
    worst = std::max(worst, max_gradient_error(params, [&] {
                       return m.loss(m.forward(b.mels, b.tokens), b.labels).total;
                     }));
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-5);
}
