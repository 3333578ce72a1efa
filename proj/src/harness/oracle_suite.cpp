#include "roer/harness/oracle_suite.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "roer/errors.hpp"
#include "roer/replay.hpp"

namespace roer::harness {

namespace dv = divergences;

double conjugate_identity_error(dv::Kind kind, std::size_t points, double lo, double hi,
                                const ConjugatePrimeFn& conj_prime) {
  if (points < 2 || !(lo > 0.0) || !(hi > lo)) throw InvalidInput("invalid identity grid");
  const dv::DivergenceSpec spec{kind};
  double worst = 0.0;
  const double step = std::log(hi / lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo * std::exp(step * static_cast<double>(i));
    worst = std::max(worst, std::abs(conj_prime(spec, dv::generator_prime(spec, x)) - x));
  }
  return worst;
}

FenchelYoungResult fenchel_young(dv::Kind kind, std::size_t pairs, Rng& rng) {
  const dv::DivergenceSpec spec{kind};
  const auto dom = spec.domain_conj();
  // Sample y from the conjugate domain intersected with [-3, 3], kept off open ends.
  const double ylo = std::max(dom.lo, -3.0) + (std::isfinite(dom.lo) && !dom.lo_closed ? 1e-3 : 0.0);
  const double yhi = std::min(dom.hi, 3.0) - (std::isfinite(dom.hi) && !dom.hi_closed ? 1e-3 : 0.0);
  FenchelYoungResult out;
  out.min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pairs; ++i) {
    const double x = 0.1 * std::pow(100.0, uniform01(rng));
    const double y = ylo + (yhi - ylo) * uniform01(rng);
    out.min_gap = std::min(out.min_gap, dv::generator(spec, x) + dv::conjugate(spec, y) - x * y);
    if (kind != dv::Kind::TotalVariation) {
      const double g = dv::generator_prime(spec, x);
      const double eq = dv::generator(spec, x) + dv::conjugate(spec, g) - x * g;
      out.equality_error = std::max(out.equality_error, std::abs(eq) / std::max(1.0, std::abs(x * g)));
    }
  }
  return out;
}

double telescoping_max_residual(std::size_t triples, std::size_t n_states, std::size_t n_actions, Rng& rng) {
  double worst = 0.0;
  for (std::size_t k = 0; k < triples; ++k) {
    const double gamma = 0.5 + 0.49 * uniform01(rng);
    const auto m = mdp::random_mdp(n_states, n_actions, gamma, rng);
    const auto pi = mdp::random_policy(m, rng);
    std::vector<double> q(m.n_pairs());
    for (auto& v : q) v = 10.0 * (2.0 * uniform01(rng) - 1.0);
    worst = std::max(worst, mdp::telescoping_check(m, pi, q));
  }
  return worst;
}

mdp::TabularMdp two_state_mdp() {
  mdp::TabularMdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = 0.9;
  m.transitions = {0.9, 0.1,   // s0, a0
                   0.2, 0.8,   // s0, a1
                   0.7, 0.3,   // s1, a0
                   0.1, 0.9};  // s1, a1
  m.rewards = {0.0, 0.5, 1.0, 0.2};
  m.initial = {0.5, 0.5};
  m.validate();
  return m;
}

DualRecoveryResult dual_recovery(const mdp::TabularMdp& m, dv::Kind kind, double beta) {
  const auto vi = mdp::value_iteration(m);
  const auto pi = mdp::deterministic_policy(m, vi.greedy);
  const auto d_star = mdp::occupancy(m, pi);
  const dv::DivergenceSpec spec{kind};
  DualRecoveryResult out;

  const std::vector<double> uniform(m.n_pairs(), 1.0 / static_cast<double>(m.n_pairs()));
  const auto sol = mdp::dual_minimize(m, uniform, beta, spec, pi);
  out.tv_uniform_data = mdp::total_variation(sol.reweighted, d_star);
  out.iterations = sol.iterations;

  const auto matched = mdp::dual_minimize(m, d_star, beta, spec, pi);
  for (std::size_t i = 0; i < m.n_pairs(); ++i) {
    if (d_star[i] <= 0.0) continue;
    const double ratio = dv::conjugate_prime(spec, matched.residuals[i] / beta);
    out.ratio_deviation = std::max(out.ratio_deviation, std::abs(ratio - 1.0));
  }
  out.iterations += matched.iterations;
  return out;
}

double chi2_critical(double dof, double level) {
  const boost::math::chi_squared dist(dof);
  return boost::math::quantile(dist, level);
}

SamplingResult sum_tree_proportionality(std::span<const double> priorities, std::size_t draws, Rng& rng) {
  if (priorities.size() < 2 || draws == 0) throw InvalidInput("need at least two priorities and one draw");
  replay::PriorityBuffer buffer(priorities.size(), 1, 1);
  for (std::size_t i = 0; i < priorities.size(); ++i) {
    buffer.push({{static_cast<double>(i)}, {0.0}, 0.0, {0.0}, false, i});
  }
  std::vector<std::size_t> idx(priorities.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  buffer.update_priorities(idx, priorities);

  std::vector<double> counts(priorities.size(), 0.0);
  const auto batch = buffer.sample_proportional(draws, rng);
  for (auto i : batch.indices) counts[i] += 1.0;
  double total = 0.0;
  for (double p : priorities) total += p;
  SamplingResult out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expected = priorities[i] / total;
    const double freq = counts[i] / static_cast<double>(draws);
    out.frequencies.push_back(freq);
    out.max_abs_deviation = std::max(out.max_abs_deviation, std::abs(freq - expected));
    const double e = expected * static_cast<double>(draws);
    out.chi2 += (counts[i] - e) * (counts[i] - e) / e;
  }
  out.critical = chi2_critical(static_cast<double>(priorities.size() - 1), 0.999);
  return out;
}

double occupancy_maximizer_rate(std::size_t policies, Rng& rng) {
  const auto m = mdp::random_mdp(5, 3, 0.9, rng);
  const auto vi = mdp::value_iteration(m);
  const double best = mdp::expected_reward(m, mdp::occupancy(m, mdp::deterministic_policy(m, vi.greedy)));
  std::size_t ok = 0;
  for (std::size_t k = 0; k < policies; ++k) {
    const auto pi = mdp::random_policy(m, rng);
    if (mdp::expected_reward(m, mdp::occupancy(m, pi)) <= best + 1e-12) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(policies);
}

bool OracleReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

Json OracleReport::to_json() const {
  Json arr = Json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name},
                   {"passed", c.passed},
                   {"tolerance", c.tolerance},
                   {"measured", c.measured},
                   {"detail", c.detail}});
  }
  std::vector<std::string> failed;
  for (const auto& c : checks) {
    if (!c.passed) failed.push_back(c.name);
  }
  return Json{{"passed", passed()}, {"failed", failed}, {"checks", arr}};
}

OracleReport run_oracle_suite(const OracleOptions& opts) {
  OracleReport report;
  auto add = [&](std::string name, double measured, double tol, bool passed, std::string detail = {}) {
    report.checks.push_back({std::move(name), passed, tol, measured, std::move(detail)});
  };

  ConjugatePrimeFn conj_prime = dv::conjugate_prime;
  if (opts.corrupt_conjugate) {
    const auto bad = *opts.corrupt_conjugate;
    const double scale = 1.0 + opts.corruption;
    conj_prime = [bad, scale](const dv::DivergenceSpec& s, double y) {
      const double v = dv::conjugate_prime(s, y);
      return s.kind == bad ? v * scale : v;
    };
  }

  for (auto kind : dv::kDifferentiableKinds) {
    const double err = conjugate_identity_error(kind, 200, 0.1, 10.0, conj_prime);
    add("conjugate_identity/" + std::string(dv::kind_name(kind)), err, 1e-9, err <= 1e-9);
  }
  Rng rng = make_rng(opts.seed, Stream::kScheme);
  for (auto kind : dv::kAllKinds) {
    const auto fy = fenchel_young(kind, 10000, rng);
    const double violation = std::max(0.0, -fy.min_gap);
    add("fenchel_young/" + std::string(dv::kind_name(kind)), std::max(violation, fy.equality_error), 1e-9,
        violation <= 1e-9 && fy.equality_error <= 1e-9);
  }
  const double tele = telescoping_max_residual(100, 5, 3, rng);
  add("telescoping", tele, 1e-8, tele <= 1e-8);

  const auto dual = dual_recovery(two_state_mdp(), dv::Kind::KL, 1.0);
  add("dual_recovery/uniform_data_tv", dual.tv_uniform_data, 0.05, dual.tv_uniform_data <= 0.05);
  add("dual_recovery/matched_ratio", dual.ratio_deviation, 0.05, dual.ratio_deviation <= 0.05);

  const std::vector<double> prios = {1.0, 2.0, 3.0};
  const auto sampling = sum_tree_proportionality(prios, 60000, rng);
  add("sum_tree/frequency", sampling.max_abs_deviation, 0.01, sampling.max_abs_deviation <= 0.01);
  add("sum_tree/chi2", sampling.chi2, sampling.critical, sampling.chi2 < sampling.critical);

  const double rate = occupancy_maximizer_rate(100, rng);
  add("occupancy/optimal_maximizes_reward", rate, 1.0, rate == 1.0, "fraction of random policies dominated");
  return report;
}

}  // namespace roer::harness
