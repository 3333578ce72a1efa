#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roer/divergences.hpp"
#include "roer/harness/config.hpp"
#include "roer/mdp.hpp"
#include "roer/rng.hpp"

namespace roer::harness {

using ConjugatePrimeFn = std::function<double(const divergences::DivergenceSpec&, double)>;

// max over a log-spaced grid on [lo, hi] of |f*'(f'(x)) - x|.
double conjugate_identity_error(divergences::Kind kind, std::size_t points, double lo, double hi,
                                const ConjugatePrimeFn& conj_prime = divergences::conjugate_prime);

struct FenchelYoungResult {
  // min over random pairs of f(x) + f*(y) - x y (non-negative when the inequality holds)
  double min_gap = 0.0;
  // max over the same x of |f(x) + f*(f'(x)) - x f'(x)| (equality case)
  double equality_error = 0.0;
};
FenchelYoungResult fenchel_young(divergences::Kind kind, std::size_t pairs, Rng& rng);

// Largest telescoping residual over random (MDP, policy, Q) triples.
double telescoping_max_residual(std::size_t triples, std::size_t n_states, std::size_t n_actions, Rng& rng);

// The fixed 2-state, 2-action instance used by the dual-recovery check.
mdp::TabularMdp two_state_mdp();

struct DualRecoveryResult {
  // TV between normalized f*'(delta / beta) d_data and d* for uniform d_data.
  double tv_uniform_data = 0.0;
  // max |ratio - 1| on the support when d_data = d*.
  double ratio_deviation = 0.0;
  std::size_t iterations = 0;
};
DualRecoveryResult dual_recovery(const mdp::TabularMdp& mdp, divergences::Kind kind, double beta);

struct SamplingResult {
  std::vector<double> frequencies;
  double max_abs_deviation = 0.0;
  double chi2 = 0.0;
  double critical = 0.0;  // 99.9% quantile with k - 1 degrees of freedom
};
SamplingResult sum_tree_proportionality(std::span<const double> priorities, std::size_t draws, Rng& rng);

// Upper quantile of the chi-squared distribution.
double chi2_critical(double dof, double level);

// Fraction of random policies whose expected reward under their occupancy
// does not exceed the optimal policy's (should be 1).
double occupancy_maximizer_rate(std::size_t policies, Rng& rng);

struct OracleCheck {
  std::string name;
  bool passed = false;
  double tolerance = 0.0;
  double measured = 0.0;
  std::string detail;
};

struct OracleReport {
  std::vector<OracleCheck> checks;

  bool passed() const;
  Json to_json() const;
};

struct OracleOptions {
  std::uint64_t seed = 0;
  // Negative control: scale f*' of this kind by (1 + corruption).
  std::optional<divergences::Kind> corrupt_conjugate;
  double corruption = 1e-3;
};

OracleReport run_oracle_suite(const OracleOptions& opts = {});

}  // namespace roer::harness
