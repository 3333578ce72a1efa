#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "roer/errors.hpp"
#include "roer/nn.hpp"
#include "roer/rng.hpp"

namespace nn = roer::nn;

namespace {

nn::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, roer::Rng& rng) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = 2.0 * roer::uniform01(rng) - 1.0;
  return m;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

const std::vector<nn::NetworkSpec> kArchitectures = {
    {3, {4}, 2},
    {5, {8, 6}, 1},
    {2, {7, 5, 3}, 3},
};

}  // namespace

TEST(Nn, InitDeterministicAndShaped) {
  const nn::NetworkSpec spec{3, {4}, 2};
  const auto a = nn::init(spec, 42);
  const auto b = nn::init(spec, 42);
  const auto c = nn::init(spec, 43);
  EXPECT_EQ(a.flatten(), b.flatten());
  EXPECT_NE(a.flatten(), c.flatten());
  ASSERT_EQ(a.num_layers(), 2u);
  EXPECT_EQ(a.weights[0].rows(), 4);
  EXPECT_EQ(a.weights[0].cols(), 3);
  EXPECT_EQ(a.weights[1].rows(), 2);
  EXPECT_EQ(a.weights[1].cols(), 4);
  EXPECT_EQ(a.num_params(), 4u * 3 + 4 + 2 * 4 + 2);
  const double bound = 1.0 / std::sqrt(3.0);
  EXPECT_LE(a.weights[0].cwiseAbs().maxCoeff(), bound);
}

TEST(Nn, ZeroParametersGiveZeroOutput) {
  const auto p = nn::init({3, {5, 5}, 2}, 1).zeros_like();
  roer::Rng rng(1);
  EXPECT_EQ(nn::forward(p, random_matrix(3, 4, rng)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Nn, IdentityLinearLayer) {
  auto p = nn::init({3, {}, 3}, 1);
  p.weights[0] = nn::Matrix::Identity(3, 3);
  p.biases[0].setZero();
  roer::Rng rng(2);
  const auto x = random_matrix(3, 5, rng);
  EXPECT_EQ(nn::forward(p, x), x);
}

TEST(Nn, BatchedEqualsStacked) {
  const auto p = nn::init({4, {6, 6}, 2}, 3);
  roer::Rng rng(3);
  const auto x = random_matrix(4, 7, rng);
  const auto y = nn::forward(p, x);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const nn::Matrix col = x.col(j);
    EXPECT_LE((nn::forward(p, col) - y.col(j)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Nn, ShapeMismatch) {
  const auto p = nn::init({4, {6}, 2}, 3);
  EXPECT_THROW(nn::forward(p, nn::Matrix::Zero(3, 2)), roer::InvalidInput);
  nn::ForwardCache cache;
  nn::forward(p, nn::Matrix::Zero(4, 2), cache);
  EXPECT_THROW(nn::backward(p, cache, nn::Matrix::Zero(3, 2)), roer::InvalidInput);
}

TEST(Nn, LinearWeightGradientIsOuterProductSum) {
  const auto p = nn::init({3, {}, 2}, 4);
  roer::Rng rng(4);
  const auto x = random_matrix(3, 6, rng);
  const auto g = nn::backward(p, x, nn::Matrix::Ones(2, 6));
  nn::Matrix expected = nn::Matrix::Ones(2, 6) * x.transpose();
  EXPECT_LE((g.params.weights[0] - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((g.params.biases[0] - nn::Vector::Constant(2, 6.0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Nn, ParameterGradientsMatchFiniteDifferences) {
  const double h = 1e-5;
  for (int seed = 0; seed < 20; ++seed) {
    for (const auto& spec : kArchitectures) {
      auto p = nn::init(spec, 100 + seed);
      roer::Rng rng(seed);
      const auto x = random_matrix(static_cast<Eigen::Index>(spec.input_dim), 4, rng);
      const auto upstream = random_matrix(static_cast<Eigen::Index>(spec.output_dim), 4, rng);
      const auto grads = nn::backward(p, x, upstream).params.flatten();
      auto flat = p.flatten();
      auto objective = [&](const std::vector<double>& theta) {
        p.unflatten(theta);
        return nn::forward(p, x).cwiseProduct(upstream).sum();
      };
      for (std::size_t i = 0; i < flat.size(); ++i) {
        auto plus = flat, minus = flat;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (objective(plus) - objective(minus)) / (2 * h);
        EXPECT_LE(relative_error(fd, grads[i]), 1e-4) << "seed " << seed << " param " << i;
      }
      p.unflatten(flat);
    }
  }
}

TEST(Nn, InputGradientsMatchFiniteDifferences) {
  const double h = 1e-5;
  for (int seed = 0; seed < 20; ++seed) {
    for (const auto& spec : kArchitectures) {
      const auto p = nn::init(spec, 200 + seed);
      roer::Rng rng(seed);
      const auto x = random_matrix(static_cast<Eigen::Index>(spec.input_dim), 3, rng);
      const auto upstream = random_matrix(static_cast<Eigen::Index>(spec.output_dim), 3, rng);
      const auto gx = nn::backward(p, x, upstream).input;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        nn::Matrix plus = x, minus = x;
        plus.data()[i] += h;
        minus.data()[i] -= h;
        const double fd =
            (nn::forward(p, plus).cwiseProduct(upstream).sum() - nn::forward(p, minus).cwiseProduct(upstream).sum()) /
            (2 * h);
        EXPECT_LE(relative_error(fd, gx.data()[i]), 1e-4);
      }
    }
  }
}

TEST(Nn, ScalarInputGradients) {
  const auto p = nn::init({4, {8, 8}, 1}, 9);
  roer::Rng rng(9);
  const auto x = random_matrix(4, 5, rng);
  nn::ForwardCache cache;
  nn::forward(p, x, cache);
  const auto per_sample = nn::input_gradients(p, cache);
  const auto summed = nn::backward(p, cache, nn::Matrix::Ones(1, 5)).input;
  EXPECT_LE((per_sample - summed).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = nn::init({3, {4}, 2}, 1);
  const auto before = p.flatten();
  nn::Adam opt(p, {});
  opt.step(p, p.zeros_like());
  EXPECT_EQ(p.flatten(), before);
}

TEST(Adam, FirstStepMagnitude) {
  auto p = nn::init({3, {4}, 2}, 1);
  const auto before = p.flatten();
  auto g = p.zeros_like();
  auto flat = g.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = (i % 2 ? 1.0 : -1.0) * (0.1 + 0.01 * i);
  g.unflatten(flat);
  nn::AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  nn::Adam opt(p, cfg);
  ASSERT_TRUE(opt.step(p, g));
  const auto after = p.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    const double expected = -cfg.learning_rate * flat[i] / (std::abs(flat[i]) + cfg.epsilon);
    EXPECT_NEAR(after[i] - before[i], expected, 1e-15);
  }
}

TEST(Adam, SkipsNonFinite) {
  auto p = nn::init({2, {}, 1}, 1);
  const auto before = p.flatten();
  auto g = p.zeros_like();
  g.biases[0](0) = std::nan("");
  nn::Adam opt(p, {});
  EXPECT_FALSE(opt.step(p, g));
  EXPECT_EQ(opt.skipped(), 1u);
  EXPECT_EQ(opt.steps(), 0u);
  EXPECT_EQ(p.flatten(), before);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    auto p = nn::init({3, {5}, 1}, 7);
    nn::Adam opt(p, {});
    roer::Rng rng(7);
    const auto x = random_matrix(3, 8, rng);
    for (int i = 0; i < 50; ++i) {
      const auto y = nn::forward(p, x);
      opt.step(p, nn::backward(p, x, 2.0 * y).params);
    }
    return p.flatten();
  };
  EXPECT_EQ(run(), run());
}

TEST(Polyak, Examples) {
  const auto online = nn::init({2, {3}, 1}, 1);
  auto target = nn::init({2, {3}, 1}, 2);
  nn::polyak(target, online, 1.0);
  EXPECT_EQ(target.flatten(), online.flatten());

  auto zero = online.zeros_like();
  auto two = online.zeros_like();
  auto flat = two.flatten();
  std::fill(flat.begin(), flat.end(), 2.0);
  two.unflatten(flat);
  nn::polyak(zero, two, 0.5);
  for (double v : zero.flatten()) EXPECT_EQ(v, 1.0);

  auto t = nn::init({2, {3}, 1}, 3);
  double prev = INFINITY;
  for (int i = 0; i < 50; ++i) {
    nn::polyak(t, online, 0.2);
    double dist = 0.0;
    const auto a = t.flatten(), b = online.flatten();
    for (std::size_t k = 0; k < a.size(); ++k) dist = std::max(dist, std::abs(a[k] - b[k]));
    EXPECT_LE(dist, prev);
    prev = dist;
  }
  EXPECT_LT(prev, 1e-4);
  EXPECT_THROW(nn::polyak(t, nn::init({2, {4}, 1}, 1), 0.5), roer::InvalidInput);
}

TEST(Nn, ParameterSerializationRoundTrip) {
  const auto p = nn::init({3, {7, 2}, 4}, 5);
  const auto bytes = nn::save_parameters(p);
  const auto back = nn::load_parameters(bytes);
  EXPECT_EQ(back.spec, p.spec);
  EXPECT_EQ(back.flatten(), p.flatten());
  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 2);
  EXPECT_THROW(nn::load_parameters(truncated), roer::FormatError);
}
