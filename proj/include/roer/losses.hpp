#pragma once

#include <limits>
#include <span>
#include <vector>

#include "roer/nn.hpp"

namespace roer::losses {

struct LossOutput {
  double value = 0.0;
  // d value / d prediction, one entry per sample.
  std::vector<double> gradient;
  std::size_t clipped = 0;
  double max_exponent = -std::numeric_limits<double>::infinity();
};

// delta = r + gamma * v_next * (1 - terminal) - v_curr
double td_error(double reward, double gamma, double v_next, double v_curr, bool terminal);

// Gumbel regression loss on residuals R_i = Q_i - V_i:
//   loss = mean(exp(z_i) - R_i / beta - 1),  z_i = min(R_i / beta, grad_clip).
// Non-negative with its minimum 0 at R = 0 while the clip is inactive.
// `gradient` is d loss / d V_i.
LossOutput extreme_v_loss(std::span<const double> residuals, double beta, double grad_clip);

// Split form with separate exponential and linear residuals, e.g.
// exp_residuals = B*Q - V and linear_residuals = Q - V. Gradient is w.r.t. V
// (both residuals move with -V).
LossOutput extreme_v_loss_split(std::span<const double> exp_residuals, std::span<const double> linear_residuals,
                                double beta, double grad_clip);

// Pearson chi^2 counterpart of the Gumbel loss, mean(f*(z) - z) with
// f*(z) = z^2 / 2 + z and z = R / beta, i.e. mean(z^2 / 2). Gradient w.r.t. V.
LossOutput chi2_v_loss(std::span<const double> residuals, double beta);

// huber_k(x) = x^2 / 2 for |x| <= k, else k (|x| - k / 2). k = +inf gives the
// mean-square form.
double huber(double x, double k);
double huber_prime(double x, double k);

// loss = mean(w_i * huber_k(target_i - q_i)); `gradient` is d loss / d q_i.
LossOutput weighted_huber_critic_loss(std::span<const double> q_pred, std::span<const double> target,
                                      std::span<const double> weights, double k);

struct PenaltyOutput {
  // mean_i(w_i * kappa_i) with kappa_i = max(|grad_x Q(x_i)| - 1, 0)^2
  double value = 0.0;
  std::vector<double> kappa;
  std::vector<double> gradient_norms;
  nn::ParameterSet param_gradient;
};

// `inputs` is (input_dim x batch); `weights` empty means unit weights.
PenaltyOutput gradient_penalty(const nn::ParameterSet& critic, const nn::Matrix& inputs,
                               std::span<const double> weights = {});
// Same, reusing a forward cache already computed on the inputs.
PenaltyOutput gradient_penalty(const nn::ParameterSet& critic, const nn::ForwardCache& cache,
                               std::span<const double> weights = {});

}  // namespace roer::losses
