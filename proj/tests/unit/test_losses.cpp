#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "roer/errors.hpp"
#include "roer/losses.hpp"
#include "roer/nn.hpp"
#include "roer/rng.hpp"

namespace ls = roer::losses;
namespace nn = roer::nn;

namespace {

std::vector<double> random_vector(std::size_t n, double lo, double hi, roer::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * roer::uniform01(rng);
  return v;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

}  // namespace

TEST(TdError, Examples) {
  EXPECT_NEAR(ls::td_error(1.0, 0.99, 10.0, 10.0, false), 0.9, 1e-12);
  EXPECT_DOUBLE_EQ(ls::td_error(1.0, 0.99, 10.0, 3.0, true), -2.0);
  const double v = 2.0 / (1.0 - 0.9);
  EXPECT_NEAR(ls::td_error(2.0, 0.9, v, v, false), 0.0, 1e-12);
  EXPECT_THROW(ls::td_error(std::nan(""), 0.9, 0, 0, false), roer::InvalidInput);
}

TEST(ExtremeV, Examples) {
  const auto zero = ls::extreme_v_loss(std::vector<double>(5, 0.0), 1.0, 7.0);
  EXPECT_EQ(zero.value, 0.0);
  for (double g : zero.gradient) EXPECT_EQ(g, 0.0);

  const auto one = ls::extreme_v_loss(std::vector<double>{std::log(2.0)}, 1.0, 7.0);
  EXPECT_NEAR(one.value, 1.0 - std::log(2.0), 1e-15);
  EXPECT_NEAR(one.value, 0.3069, 1e-4);

  const auto clipped = ls::extreme_v_loss(std::vector<double>{12.0}, 1.0, 7.0);
  EXPECT_EQ(clipped.clipped, 1u);
  EXPECT_EQ(clipped.max_exponent, 7.0);
  EXPECT_TRUE(std::isfinite(clipped.value));
  EXPECT_NEAR(clipped.value, std::exp(7.0) - 12.0 - 1.0, 1e-9);

  EXPECT_THROW(ls::extreme_v_loss(std::vector<double>{0.0}, 0.0, 7.0), roer::ConfigError);
}

TEST(ExtremeV, NonNegativeWithMinimumAtZero) {
  roer::Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto r = random_vector(8, -3.0, 3.0, rng);
    const auto out = ls::extreme_v_loss(r, 0.5 + roer::uniform01(rng), 50.0);
    EXPECT_GT(out.value, 0.0);
  }
}

TEST(ExtremeV, GradientMatchesFiniteDifferences) {
  const double h = 1e-5;
  for (int seed = 0; seed < 20; ++seed) {
    roer::Rng rng(seed);
    const std::size_t n = 1 + roer::uniform_index(rng, 32);
    const auto q = random_vector(n, -2.0, 2.0, rng);
    auto v = random_vector(n, -2.0, 2.0, rng);
    const double beta = 0.3 + 2.0 * roer::uniform01(rng);
    auto loss_at = [&](const std::vector<double>& values) {
      std::vector<double> r(n);
      for (std::size_t i = 0; i < n; ++i) r[i] = q[i] - values[i];
      return ls::extreme_v_loss(r, beta, 7.0);
    };
    const auto out = loss_at(v);
    for (std::size_t i = 0; i < n; ++i) {
      auto plus = v, minus = v;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (loss_at(plus).value - loss_at(minus).value) / (2 * h);
      EXPECT_LE(relative_error(fd, out.gradient[i]), 1e-4) << "seed " << seed;
    }
  }
}

TEST(ExtremeV, SplitFormGradient) {
  const double h = 1e-6;
  roer::Rng rng(3);
  const auto target = random_vector(6, -1.0, 1.0, rng);
  const auto q = random_vector(6, -1.0, 1.0, rng);
  const auto v = random_vector(6, -1.0, 1.0, rng);
  auto loss_at = [&](const std::vector<double>& values) {
    std::vector<double> e(6), l(6);
    for (std::size_t i = 0; i < 6; ++i) {
      e[i] = target[i] - values[i];
      l[i] = q[i] - values[i];
    }
    return ls::extreme_v_loss_split(e, l, 0.8, 7.0);
  };
  const auto out = loss_at(v);
  for (std::size_t i = 0; i < 6; ++i) {
    auto plus = v, minus = v;
    plus[i] += h;
    minus[i] -= h;
    EXPECT_LE(relative_error((loss_at(plus).value - loss_at(minus).value) / (2 * h), out.gradient[i]), 1e-4);
  }
}

TEST(Chi2Loss, ValueAndGradient) {
  const std::vector<double> r = {1.0, -2.0};
  const auto out = ls::chi2_v_loss(r, 2.0);
  EXPECT_DOUBLE_EQ(out.value, 0.5 * (0.125 + 0.5));
  EXPECT_DOUBLE_EQ(out.gradient[0], -0.5 / 4.0);
  EXPECT_DOUBLE_EQ(out.gradient[1], 1.0 / 4.0);
}

TEST(Huber, Examples) {
  const std::vector<double> w1 = {1.0};
  EXPECT_DOUBLE_EQ(ls::weighted_huber_critic_loss(std::vector<double>{0.0}, std::vector<double>{0.5}, w1, 1.0).value,
                   0.125);
  EXPECT_DOUBLE_EQ(ls::weighted_huber_critic_loss(std::vector<double>{0.0}, std::vector<double>{2.0}, w1, 1.0).value,
                   1.5);
  const auto a = ls::weighted_huber_critic_loss(std::vector<double>{0.3}, std::vector<double>{1.7}, w1, 1.0);
  const auto b =
      ls::weighted_huber_critic_loss(std::vector<double>{0.3}, std::vector<double>{1.7}, std::vector<double>{2.0}, 1.0);
  EXPECT_DOUBLE_EQ(b.value, 2.0 * a.value);
  EXPECT_DOUBLE_EQ(b.gradient[0], 2.0 * a.gradient[0]);
  EXPECT_THROW(
      ls::weighted_huber_critic_loss(std::vector<double>{0.0}, std::vector<double>{1.0}, std::vector<double>{0.0}, 1.0),
      roer::InvalidInput);
}

TEST(Huber, GradientMatchesFiniteDifferences) {
  const double h = 1e-5;
  for (int seed = 0; seed < 20; ++seed) {
    roer::Rng rng(seed);
    const std::size_t n = 1 + roer::uniform_index(rng, 32);
    auto q = random_vector(n, -3.0, 3.0, rng);
    const auto y = random_vector(n, -3.0, 3.0, rng);
    const auto w = random_vector(n, 0.1, 3.0, rng);
    const double k = 0.5 + roer::uniform01(rng);
    const auto out = ls::weighted_huber_critic_loss(q, y, w, k);
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(std::abs(y[i] - q[i]) - k) < 10 * h) continue;
      auto plus = q, minus = q;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (ls::weighted_huber_critic_loss(plus, y, w, k).value -
                         ls::weighted_huber_critic_loss(minus, y, w, k).value) /
                        (2 * h);
      EXPECT_LE(relative_error(fd, out.gradient[i]), 1e-4) << "seed " << seed;
    }
  }
}

TEST(Huber, ContinuousAndSmoothAtBound) {
  const double k = 1.3;
  for (double s : {-1.0, 1.0}) {
    const double lo = s * (k - 1e-9), hi = s * (k + 1e-9);
    EXPECT_NEAR(ls::huber(lo, k), ls::huber(hi, k), 1e-8);
    EXPECT_NEAR(ls::huber_prime(lo, k), ls::huber_prime(hi, k), 1e-8);
  }
}

TEST(Huber, MeanSquareLimit) {
  roer::Rng rng(2);
  const auto q = random_vector(10, -1.0, 1.0, rng);
  const auto y = random_vector(10, -1.0, 1.0, rng);
  const std::vector<double> w(10, 1.0);
  const auto inf = ls::weighted_huber_critic_loss(q, y, w, INFINITY);
  const auto big = ls::weighted_huber_critic_loss(q, y, w, 5.0);
  EXPECT_DOUBLE_EQ(inf.value, big.value);
  double mse = 0.0;
  for (std::size_t i = 0; i < 10; ++i) mse += 0.5 * (y[i] - q[i]) * (y[i] - q[i]) / 10.0;
  EXPECT_NEAR(inf.value, mse, 1e-15);
}

TEST(Penalty, AnalyticLinearCritic) {
  auto critic = nn::init({3, {}, 1}, 1);
  roer::Rng rng(1);
  nn::Matrix x(3, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = roer::uniform01(rng);

  critic.weights[0] << 0.3, 0.4, 0.0;  // norm 0.5
  auto out = ls::gradient_penalty(critic, x);
  for (double k : out.kappa) EXPECT_EQ(k, 0.0);

  critic.weights[0] << 1.2, 1.6, 0.0;  // norm 2
  out = ls::gradient_penalty(critic, x);
  for (double k : out.kappa) EXPECT_NEAR(k, 1.0, 1e-14);

  critic.weights[0] << 1.0, 2.0, 2.0;  // norm 3
  out = ls::gradient_penalty(critic, x);
  for (double k : out.kappa) EXPECT_NEAR(k, 4.0, 1e-14);
  EXPECT_NEAR(out.value, 4.0, 1e-14);
}

TEST(Penalty, ParameterGradientMatchesFiniteDifferences) {
  const double h = 1e-5;
  for (int seed = 0; seed < 20; ++seed) {
    auto critic = nn::init({4, {6, 5}, 1}, 300 + seed);
    // Scale up so the hinge is active for most samples.
    critic.scale(2.5);
    roer::Rng rng(seed);
    nn::Matrix x(4, 6);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * roer::uniform01(rng) - 1.0;
    const auto w = random_vector(6, 0.5, 2.0, rng);
    const auto out = ls::gradient_penalty(critic, x, w);
    const auto analytic = out.param_gradient.flatten();
    auto flat = critic.flatten();
    for (std::size_t i = 0; i < flat.size(); ++i) {
      auto plus = flat, minus = flat;
      plus[i] += h;
      minus[i] -= h;
      critic.unflatten(plus);
      const double fp = ls::gradient_penalty(critic, x, w).value;
      critic.unflatten(minus);
      const double fm = ls::gradient_penalty(critic, x, w).value;
      critic.unflatten(flat);
      EXPECT_LE(relative_error((fp - fm) / (2 * h), analytic[i]), 1e-4) << "seed " << seed << " param " << i;
    }
  }
}
