#include "roer/losses.hpp"

#include <algorithm>
#include <cmath>

#include "roer/errors.hpp"

namespace roer::losses {

double td_error(double reward, double gamma, double v_next, double v_curr, bool terminal) {
  if (!std::isfinite(reward) || !std::isfinite(v_next) || !std::isfinite(v_curr) || !std::isfinite(gamma)) {
    throw InvalidInput("td_error inputs must be finite");
  }
  return reward + (terminal ? 0.0 : gamma * v_next) - v_curr;
}

LossOutput extreme_v_loss_split(std::span<const double> exp_residuals, std::span<const double> linear_residuals,
                                double beta, double grad_clip) {
  if (!(beta > 0.0)) throw ConfigError("extreme_v_loss: beta must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("extreme_v_loss: grad_clip must be positive");
  if (exp_residuals.size() != linear_residuals.size() || exp_residuals.empty()) {
    throw InvalidInput("extreme_v_loss: residual vectors must be nonempty and of equal length");
  }
  const auto n = static_cast<double>(exp_residuals.size());
  LossOutput out;
  out.gradient.resize(exp_residuals.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < exp_residuals.size(); ++i) {
    double z = exp_residuals[i] / beta;
    bool clipped = false;
    if (z > grad_clip) {
      z = grad_clip;
      clipped = true;
      ++out.clipped;
    }
    out.max_exponent = std::max(out.max_exponent, z);
    const double e = std::exp(z);
    sum += e - linear_residuals[i] / beta - 1.0;
    // d/dV: exponential term contributes -e/beta unless clipped, linear term +1/beta.
    out.gradient[i] = ((clipped ? 0.0 : -e) + 1.0) / (n * beta);
  }
  out.value = sum / n;
  return out;
}

LossOutput extreme_v_loss(std::span<const double> residuals, double beta, double grad_clip) {
  return extreme_v_loss_split(residuals, residuals, beta, grad_clip);
}

LossOutput chi2_v_loss(std::span<const double> residuals, double beta) {
  if (!(beta > 0.0)) throw ConfigError("chi2_v_loss: beta must be positive");
  if (residuals.empty()) throw InvalidInput("chi2_v_loss: empty batch");
  const auto n = static_cast<double>(residuals.size());
  LossOutput out;
  out.gradient.resize(residuals.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double z = residuals[i] / beta;
    sum += 0.5 * z * z;
    out.max_exponent = std::max(out.max_exponent, z);
    out.gradient[i] = -z / (beta * n);
  }
  out.value = sum / n;
  return out;
}

double huber(double x, double k) {
  const double a = std::abs(x);
  return a <= k ? 0.5 * x * x : k * (a - 0.5 * k);
}

double huber_prime(double x, double k) { return std::clamp(x, -k, k); }

LossOutput weighted_huber_critic_loss(std::span<const double> q_pred, std::span<const double> target,
                                      std::span<const double> weights, double k) {
  if (q_pred.size() != target.size() || q_pred.size() != weights.size() || q_pred.empty()) {
    throw InvalidInput("weighted_huber_critic_loss: inputs must be nonempty and of equal length");
  }
  if (!(k > 0.0)) throw ConfigError("huber bound must be positive");
  const auto n = static_cast<double>(q_pred.size());
  LossOutput out;
  out.gradient.resize(q_pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < q_pred.size(); ++i) {
    if (!(weights[i] > 0.0)) throw InvalidInput("critic loss weights must be positive");
    const double r = target[i] - q_pred[i];
    sum += weights[i] * huber(r, k);
    if (std::abs(r) > k) ++out.clipped;
    out.gradient[i] = -weights[i] * huber_prime(r, k) / n;
  }
  out.value = sum / n;
  return out;
}

PenaltyOutput gradient_penalty(const nn::ParameterSet& critic, const nn::ForwardCache& cache,
                               std::span<const double> weights) {
  const auto grads = nn::input_gradients(critic, cache);
  const auto batch = grads.cols();
  if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != batch) {
    throw InvalidInput("gradient_penalty: weight count differs from batch size");
  }
  PenaltyOutput out;
  out.kappa.resize(batch);
  out.gradient_norms.resize(batch);
  nn::Matrix directions = nn::Matrix::Zero(grads.rows(), batch);
  const double n = static_cast<double>(batch);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double norm = grads.col(i).norm();
    const double excess = std::max(norm - 1.0, 0.0);
    out.gradient_norms[i] = norm;
    out.kappa[i] = excess * excess;
    sum += w * out.kappa[i];
    // d kappa / d g = 2 (|g| - 1) g / |g| on the active side.
    if (excess > 0.0) directions.col(i) = (w * 2.0 * excess / (norm * n)) * grads.col(i);
  }
  out.value = sum / n;
  out.param_gradient = nn::input_gradient_vjp(critic, cache, directions);
  return out;
}

PenaltyOutput gradient_penalty(const nn::ParameterSet& critic, const nn::Matrix& inputs,
                               std::span<const double> weights) {
  nn::ForwardCache cache;
  nn::forward(critic, inputs, cache);
  return gradient_penalty(critic, cache, weights);
}

}  // namespace roer::losses
