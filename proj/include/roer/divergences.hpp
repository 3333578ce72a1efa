#pragma once

#include <array>
#include <string>
#include <string_view>

#include "roer/errors.hpp"

namespace roer::divergences {

enum class Kind { KL, ReverseKL, PearsonChi2, NeymanChi2, TotalVariation, SquaredHellinger };

inline constexpr std::array<Kind, 6> kAllKinds = {Kind::KL,         Kind::ReverseKL,      Kind::PearsonChi2,
                                                  Kind::NeymanChi2, Kind::TotalVariation, Kind::SquaredHellinger};

// Kinds whose generator is differentiable everywhere on (0, inf).
inline constexpr std::array<Kind, 5> kDifferentiableKinds = {Kind::KL, Kind::ReverseKL, Kind::PearsonChi2,
                                                             Kind::NeymanChi2, Kind::SquaredHellinger};

// Interval with optional open/closed ends; infinite bounds are always open.
struct Interval {
  double lo;
  double hi;
  bool lo_closed = false;
  bool hi_closed = false;

  bool contains(double v) const;
  std::string describe() const;
};

// An f-divergence row. The generators are shifted so that f(1) = 0 and
// f'(1) = 0, which makes them the exact Legendre duals of the listed
// conjugates:
//
//   kind               f(x)                  f*(y)              f*'(y)
//   kl                 x log x - x + 1       e^y - 1            e^y
//   reverse_kl         -log x + x - 1        -log(1 - y)        1 / (1 - y)
//   pearson_chi2       (x - 1)^2 / 2         y^2 / 2 + y        y + 1
//   neyman_chi2        (x - 1)^2 / (2x)      1 - sqrt(1 - 2y)   1 / sqrt(1 - 2y)
//   total_variation    |x - 1| / 2           y                  1
//   squared_hellinger  2 (sqrt x - 1)^2      2y / (2 - y)       4 / (2 - y)^2
struct DivergenceSpec {
  Kind kind = Kind::KL;

  Interval domain_f() const;
  Interval domain_conj() const;
  std::string_view name() const;
};

// Stable lowercase identifiers ("kl", "reverse_kl", ...).
std::string_view kind_name(Kind kind);
Kind parse_kind(std::string_view name);  // throws ConfigError

// Raised by generator_prime at a point where the generator has a kink.
class NonDifferentiable : public InvalidInput {
 public:
  NonDifferentiable(std::string_view kind, double x, Interval subgradient);
  const Interval& subgradient() const { return subgradient_; }

 private:
  Interval subgradient_;
};

double generator(const DivergenceSpec& spec, double x);
double generator_prime(const DivergenceSpec& spec, double x);
// Subdifferential of the generator at x; a degenerate [v, v] where smooth.
Interval subdifferential(const DivergenceSpec& spec, double x);
double conjugate(const DivergenceSpec& spec, double y);
double conjugate_prime(const DivergenceSpec& spec, double y);
// Second derivative of the conjugate, used by the dual solver's Newton steps.
double conjugate_second(const DivergenceSpec& spec, double y);

}  // namespace roer::divergences
