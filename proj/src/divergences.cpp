#include "roer/divergences.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace roer::divergences {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(double v, std::string_view what) {
  if (!std::isfinite(v)) throw InvalidInput(std::string(what) + " must be finite");
}

void check_f_domain(const DivergenceSpec& spec, double x) {
  require_finite(x, "generator argument");
  const auto dom = spec.domain_f();
  if (!dom.contains(x)) {
    throw InvalidInput(std::string(spec.name()) + ": generator argument " + std::to_string(x) + " outside " +
                       dom.describe());
  }
}

void check_conj_domain(const DivergenceSpec& spec, double y) {
  require_finite(y, "conjugate argument");
  const auto dom = spec.domain_conj();
  if (!dom.contains(y)) {
    std::string bound = (y <= dom.lo) ? "lower bound " + std::to_string(dom.lo) : "upper bound " + std::to_string(dom.hi);
    throw InvalidInput(std::string(spec.name()) + ": conjugate argument " + std::to_string(y) + " violates " + bound +
                       " of " + dom.describe());
  }
}

}  // namespace

bool Interval::contains(double v) const {
  const bool above = lo_closed ? v >= lo : v > lo;
  const bool below = hi_closed ? v <= hi : v < hi;
  return above && below;
}

std::string Interval::describe() const {
  std::ostringstream os;
  os << (lo_closed ? '[' : '(') << lo << ", " << hi << (hi_closed ? ']' : ')');
  return os.str();
}

NonDifferentiable::NonDifferentiable(std::string_view kind, double x, Interval subgradient)
    : InvalidInput(std::string(kind) + ": generator not differentiable at " + std::to_string(x) +
                   ", subgradient range " + subgradient.describe()),
      subgradient_(subgradient) {}

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::KL: return "kl";
    case Kind::ReverseKL: return "reverse_kl";
    case Kind::PearsonChi2: return "pearson_chi2";
    case Kind::NeymanChi2: return "neyman_chi2";
    case Kind::TotalVariation: return "total_variation";
    case Kind::SquaredHellinger: return "squared_hellinger";
  }
  return "unknown";
}

Kind parse_kind(std::string_view name) {
  for (Kind k : kAllKinds) {
    if (kind_name(k) == name) return k;
  }
  throw ConfigError("unknown divergence kind '" + std::string(name) + "'");
}

std::string_view DivergenceSpec::name() const { return kind_name(kind); }

Interval DivergenceSpec::domain_f() const { return {0.0, kInf}; }

Interval DivergenceSpec::domain_conj() const {
  switch (kind) {
    case Kind::KL: return {-kInf, kInf};
    case Kind::ReverseKL: return {-kInf, 1.0};
    case Kind::PearsonChi2: return {-1.0, kInf};
    case Kind::NeymanChi2: return {-kInf, 0.5};
    case Kind::TotalVariation: return {-0.5, 0.5, true, true};
    case Kind::SquaredHellinger: return {-kInf, 2.0};
  }
  return {-kInf, kInf};
}

double generator(const DivergenceSpec& spec, double x) {
  check_f_domain(spec, x);
  switch (spec.kind) {
    case Kind::KL: return x * std::log(x) - x + 1.0;
    case Kind::ReverseKL: return -std::log(x) + x - 1.0;
    case Kind::PearsonChi2: return 0.5 * (x - 1.0) * (x - 1.0);
    case Kind::NeymanChi2: return (x - 1.0) * (x - 1.0) / (2.0 * x);
    case Kind::TotalVariation: return 0.5 * std::abs(x - 1.0);
    case Kind::SquaredHellinger: {
      const double r = std::sqrt(x) - 1.0;
      return 2.0 * r * r;
    }
  }
  return 0.0;
}

Interval subdifferential(const DivergenceSpec& spec, double x) {
  check_f_domain(spec, x);
  if (spec.kind == Kind::TotalVariation) {
    if (x == 1.0) return {-0.5, 0.5, true, true};
    const double g = x > 1.0 ? 0.5 : -0.5;
    return {g, g, true, true};
  }
  const double g = generator_prime(spec, x);
  return {g, g, true, true};
}

double generator_prime(const DivergenceSpec& spec, double x) {
  check_f_domain(spec, x);
  switch (spec.kind) {
    case Kind::KL: return std::log(x);
    case Kind::ReverseKL: return 1.0 - 1.0 / x;
    case Kind::PearsonChi2: return x - 1.0;
    case Kind::NeymanChi2: return 0.5 * (1.0 - 1.0 / (x * x));
    case Kind::TotalVariation:
      if (x == 1.0) throw NonDifferentiable(spec.name(), x, {-0.5, 0.5, true, true});
      return x > 1.0 ? 0.5 : -0.5;
    case Kind::SquaredHellinger: return 2.0 - 2.0 / std::sqrt(x);
  }
  return 0.0;
}

double conjugate(const DivergenceSpec& spec, double y) {
  check_conj_domain(spec, y);
  switch (spec.kind) {
    case Kind::KL: return std::expm1(y);
    case Kind::ReverseKL: return -std::log1p(-y);
    case Kind::PearsonChi2: return 0.5 * y * y + y;
    case Kind::NeymanChi2: return 1.0 - std::sqrt(1.0 - 2.0 * y);
    case Kind::TotalVariation: return y;
    case Kind::SquaredHellinger: return 2.0 * y / (2.0 - y);
  }
  return 0.0;
}

double conjugate_prime(const DivergenceSpec& spec, double y) {
  check_conj_domain(spec, y);
  switch (spec.kind) {
    case Kind::KL: return std::exp(y);
    case Kind::ReverseKL: return 1.0 / (1.0 - y);
    case Kind::PearsonChi2: return y + 1.0;
    case Kind::NeymanChi2: return 1.0 / std::sqrt(1.0 - 2.0 * y);
    case Kind::TotalVariation: return 1.0;
    case Kind::SquaredHellinger: {
      const double d = 2.0 - y;
      return 4.0 / (d * d);
    }
  }
  return 0.0;
}

double conjugate_second(const DivergenceSpec& spec, double y) {
  check_conj_domain(spec, y);
  switch (spec.kind) {
    case Kind::KL: return std::exp(y);
    case Kind::ReverseKL: return 1.0 / ((1.0 - y) * (1.0 - y));
    case Kind::PearsonChi2: return 1.0;
    case Kind::NeymanChi2: return std::pow(1.0 - 2.0 * y, -1.5);
    case Kind::TotalVariation: return 0.0;
    case Kind::SquaredHellinger: {
      const double d = 2.0 - y;
      return 8.0 / (d * d * d);
    }
  }
  return 0.0;
}

}  // namespace roer::divergences
