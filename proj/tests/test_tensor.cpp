#include <cmath>
#include <limits>

#include "doctest.h"
#include "genrefuse/ops.hpp"
#include "genrefuse/optim.hpp"
#include "gradcheck.hpp"

using namespace genrefuse;
using genrefuse::testing::max_gradient_error;
using genrefuse::testing::random_tensor;
using genrefuse::testing::TensorD;
using genrefuse::testing::weighted_sum;

namespace {

constexpr double kGradTol = 1e-5;
constexpr int kSeeds = 20;

// One random-input gradient check per seed; `build` creates the inputs.
template <typename Build, typename Loss>
void check_gradients(Build build, Loss loss) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1000 + seed);
    std::vector<TensorD> inputs = build(rng);
    const double err =
        max_gradient_error(inputs, [&] { return loss(inputs, static_cast<std::uint64_t>(seed)); });
    CHECK_MESSAGE(err < kGradTol, "seed " << seed << " error " << err);
  }
}

}  // namespace

TEST_CASE("matmul hand examples") {
  auto m = TensorD::from({2, 2}, {5, -1, 2.5, 7});
  auto eye = TensorD::from({2, 2}, {1, 0, 0, 1});
  auto out = ops::matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.data()[i] == m.data()[i]);

  auto a = TensorD::from({2, 2}, {1, 2, 3, 4});
  auto ones = TensorD::from({2, 1}, {1, 1});
  auto r = ops::matmul(a, ones);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.data()[0] == 3);
  CHECK(r.data()[1] == 7);
}

TEST_CASE("matmul shape mismatch reports both shapes") {
  auto a = TensorD::zeros({2, 3});
  auto b = TensorD::zeros({2, 3});
  try {
    ops::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("by [2x3]") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(A*B) w.r.t. A is ones * B^T") {
  Rng rng(7);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2}, -2, 2, false);
  ops::sum(ops::matmul(a, b)).backward();
  auto expected = ops::matmul(TensorD::full({3, 2}, 1.0), ops::transpose(b));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.grad()[i] == doctest::Approx(expected.data()[i]));

  std::vector<TensorD> inputs{a};
  CHECK(max_gradient_error(inputs, [&] { return ops::sum(ops::matmul(inputs[0], b)); }) < kGradTol);
}

TEST_CASE("softmax_rows examples") {
  auto uniform = ops::softmax_rows(TensorD::from({1, 3}, {0, 0, 0}));
  for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto big = ops::softmax_rows(TensorD::from({1, 2}, {1000, 0}));
  CHECK(big.data()[0] == doctest::Approx(1.0));
  CHECK(big.data()[1] < 1e-300);

  // Scalar oracle e^x_i / sum_j e^x_j.
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  auto s = ops::softmax_rows(TensorD::from({1, 3}, {1, 2, 3}));
  CHECK(s.data()[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(s.data()[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(s.data()[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-12));
  CHECK(s.data()[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(s.data()[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(s.data()[2] == doctest::Approx(0.66524).epsilon(1e-4));

  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ops::softmax_rows(TensorD::from({1, 2}, {nan, 0})), NumericError);
}

TEST_CASE("softmax_rows rows sum to one and ignore row shifts") {
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto x = random_tensor(rng, {4, 7}, -10, 10, false);
    auto y = ops::softmax_rows(x);
    std::vector<double> shifted(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < 4; ++i) {
      const double c = rng.uniform(-50, 50);
      for (std::size_t j = 0; j < 7; ++j) shifted[i * 7 + j] += c;
    }
    auto ys = ops::softmax_rows(TensorD::from({4, 7}, shifted));
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        total += y.at(i, j);
        CHECK(y.at(i, j) >= 0.0);
        CHECK(std::abs(y.at(i, j) - ys.at(i, j)) < 1e-6);
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("backward analytic cases") {
  Rng rng(3);
  auto x = random_tensor(rng, {2, 3});
  ops::sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  auto y = random_tensor(rng, {3, 2});
  ops::sum(ops::mul(y, y)).backward();
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.grad()[i] == doctest::Approx(2 * y.data()[i]));

  CHECK_THROWS_AS(ops::relu(x).backward(), ContractError);
}

TEST_CASE("backward twice accumulates; zero_grad resets") {
  Rng rng(5);
  auto x = random_tensor(rng, {2, 2});
  auto loss = ops::sum(ops::mul(x, x));
  loss.backward();
  std::vector<double> first(x.grad().begin(), x.grad().end());
  loss.backward();
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(2 * first[i]));
  x.zero_grad();
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("no-grad mode records nothing") {
  Rng rng(9);
  auto x = random_tensor(rng, {2, 2});
  NoGradGuard guard;
  auto y = ops::relu(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("non-finite outputs are errors") {
  CHECK_THROWS_AS(ops::exp(TensorD::from({1}, {1000.0})), NumericError);
  CHECK_THROWS_AS(ops::div_scalar(TensorD::from({1}, {1.0}), TensorD::scalar(0.0)), NumericError);
}

TEST_CASE("gradient check: elementwise and scalar ops") {
  check_gradients([](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
                  [](auto& in, std::uint64_t s) {
                    auto y = ops::add(ops::mul(in[0], in[1]), ops::sub(in[1], ops::scale(in[0], 0.5)));
                    return weighted_sum(y, s);
                  });
  check_gradients(
      [](Rng& r) {
        return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {1}, 0.5, 2.0)};
      },
      [](auto& in, std::uint64_t s) {
        return weighted_sum(ops::add(ops::mul_scalar(in[0], in[1]), ops::div_scalar(in[0], in[1])), s);
      });
  check_gradients([](Rng& r) { return std::vector{random_tensor(r, {4, 3}), random_tensor(r, {3})}; },
                  [](auto& in, std::uint64_t s) { return weighted_sum(ops::add_row_bias(in[0], in[1]), s); });
}

TEST_CASE("gradient check: nonlinearities") {
  auto one = [](Rng& r) { return std::vector{random_tensor(r, {4, 5})}; };
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::relu(in[0]), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::sigmoid(in[0]), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::exp(in[0]), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::clamp(in[0], -1.0, 1.5), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::softmax_rows(in[0]), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::log_softmax_rows(in[0]), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::l2_normalize_rows(in[0]), s); });
}

TEST_CASE("gradient check: linear algebra and reshaping") {
  check_gradients([](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {4, 5})}; },
                  [](auto& in, std::uint64_t s) { return weighted_sum(ops::matmul(in[0], in[1]), s); });
  auto one = [](Rng& r) { return std::vector{random_tensor(r, {4, 4})}; };
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::transpose(in[0]), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::diagonal(in[0]), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::sum_axis(in[0], 0), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::mean_axis(in[0], 1), s); });
  check_gradients(one, [](auto& in, std::uint64_t) { return ops::mean(ops::mul(in[0], in[0])); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::slice_cols(in[0], 1, 3), s); });
  check_gradients(one, [](auto& in, std::uint64_t s) { return weighted_sum(ops::reshape(in[0], {2, 8}), s); });
  check_gradients([](Rng& r) { return std::vector{random_tensor(r, {2, 3}), random_tensor(r, {4, 3})}; },
                  [](auto& in, std::uint64_t s) { return weighted_sum(ops::concat<double>({in[0], in[1]}, 0), s); });
  check_gradients([](Rng& r) { return std::vector{random_tensor(r, {3, 2}), random_tensor(r, {3, 5})}; },
                  [](auto& in, std::uint64_t s) { return weighted_sum(ops::concat<double>({in[0], in[1]}, 1), s); });
}

TEST_CASE("gradient check: convolution stack") {
  check_gradients(
      [](Rng& r) {
        return std::vector{random_tensor(r, {2, 7, 5}), random_tensor(r, {3, 2, 3, 3}), random_tensor(r, {3})};
      },
      [](auto& in, std::uint64_t s) { return weighted_sum(ops::conv2d_3x3(in[0], in[1], in[2]), s); });
  check_gradients([](Rng& r) { return std::vector{random_tensor(r, {2, 5, 7})}; },
                  [](auto& in, std::uint64_t s) { return weighted_sum(ops::maxpool2x2(in[0]), s); });
  check_gradients([](Rng& r) { return std::vector{random_tensor(r, {3, 4, 6})}; },
                  [](auto& in, std::uint64_t s) { return weighted_sum(ops::freq_mean_sequence(in[0]), s); });
}

TEST_CASE("gradient check: bce_with_logits") {
  check_gradients([](Rng& r) { return std::vector{random_tensor(r, {3, 5})}; },
                  [](auto& in, std::uint64_t s) {
                    Rng rng(s);
                    std::vector<double> y(15);
                    for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
                    return ops::bce_with_logits(in[0], TensorD::from({3, 5}, y));
                  });
}

TEST_CASE("conv2d_3x3 matches direct loop oracle with zero padding") {
  Rng rng(11);
  auto x = random_tensor(rng, {2, 5, 6}, -2, 2, false);
  auto w = random_tensor(rng, {3, 2, 3, 3}, -2, 2, false);
  auto b = random_tensor(rng, {3}, -2, 2, false);
  auto y = ops::conv2d_3x3(x, w, b);
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 6; ++j) {
        double acc = b.data()[o];
        for (int c = 0; c < 2; ++c)
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              const int ii = i + di, jj = j + dj;
              if (ii < 0 || ii >= 5 || jj < 0 || jj >= 6) continue;
              acc += w.data()[((o * 2 + c) * 3 + di + 1) * 3 + dj + 1] * x.data()[(c * 5 + ii) * 6 + jj];
            }
        CHECK(y.data()[(o * 5 + i) * 6 + j] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("maxpool2x2 uses ceil mode") {
  auto x = TensorD::from({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = ops::maxpool2x2(x);
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(y.data()[0] == 5);
  CHECK(y.data()[1] == 6);
  CHECK(y.data()[2] == 8);
  CHECK(y.data()[3] == 9);
}

TEST_CASE("forward determinism is bit-exact") {
  auto run = [] {
    Rng rng(42);
    auto x = genrefuse::testing::random_tensor(rng, {2, 16, 12}, -2, 2, false);
    auto w = genrefuse::testing::random_tensor(rng, {4, 2, 3, 3}, -2, 2, false);
    auto b = genrefuse::testing::random_tensor(rng, {4}, -2, 2, false);
    auto y = ops::freq_mean_sequence(ops::maxpool2x2(ops::relu(ops::conv2d_3x3(x, w, b))));
    return std::vector<double>(y.data().begin(), y.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("optimizer: plain SGD step") {
  auto p = Tensor<double>::scalar(1.0, true);
  p.mutable_grad()[0] = 1.0;
  Optimizer<double> opt({OptimizerKind::kSgd, 0.1, 50}, {p});
  opt.step(0);
  CHECK(p.item() == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(opt.state().step_count == 1);
}

TEST_CASE("optimizer: learning-rate schedule halves every 50 epochs") {
  CHECK(scheduled_learning_rate(1e-4, 0, 50) == 1e-4);
  CHECK(scheduled_learning_rate(1e-4, 49, 50) == 1e-4);
  CHECK(scheduled_learning_rate(1e-4, 50, 50) == 5e-5);
  CHECK(scheduled_learning_rate(1e-4, 100, 50) == 2.5e-5);

  auto p = Tensor<double>::scalar(0.0, true);
  Optimizer<double> opt({OptimizerKind::kSgd, 1e-4, 50}, {p});
  p.mutable_grad()[0] = 1.0;
  opt.step(50);
  CHECK(opt.state().learning_rate == 5e-5);
  CHECK(p.item() == -5e-5);
}

TEST_CASE("optimizer: Adam first step moves by lr * sign(grad)") {
  auto p = Tensor<double>::from({2}, {1.0, -1.0}, true);
  p.mutable_grad()[0] = 3.0;
  p.mutable_grad()[1] = -0.02;
  Optimizer<double> opt({}, {p});
  CHECK(opt.state().first_moment.size() == 1);
  CHECK(opt.state().first_moment[0].size() == 2);
  opt.step(0);
  CHECK(p.data()[0] == doctest::Approx(1.0 - 1e-4).epsilon(1e-9));
  CHECK(p.data()[1] == doctest::Approx(-1.0 + 1e-4).epsilon(1e-9));
}

TEST_CASE("optimizer: missing gradient is a contract error") {
  auto p = Tensor<double>::scalar(1.0, true);
  Optimizer<double> opt({}, {p});
  CHECK_THROWS_AS(opt.step(0), ContractError);
  CHECK_THROWS_AS(Optimizer<double>(OptimizerConfig{OptimizerKind::kSgd, 0.0, 50}, {p}), ConfigError);
}
