#pragma once

#include <cstdint>

namespace fragtree {

/// ln Γ(x) for x > 0. Upward recurrence to x >= 10, then the Stirling series.
double log_gamma(double x);

/// ψ(x) = Γ'(x)/Γ(x) for x > 0.
double digamma(double x);

/// One-step exponents of the branching random walk with Poisson–Dirichlet(θ) offspring.
struct BrwExponents {
  double t = 1.0;
  double theta = 1.0;
  double beta = 1.0;         ///< Γ(t)Γ(θ+1)/Γ(θ+t)
  double kappa = 0.0;        ///< log beta
  double kappa_prime = 0.0;  ///< ψ(t) − ψ(θ+t)
};

BrwExponents brw_exponents(double t, double theta);

/// E[Σ_i (A_i/m)^t] for an Ewens(m,θ) partition with block sizes A_i.
/// This is exp(κ_{m+1}(t)), the finite-mass version of β_t(θ).
double finite_mass_exponent(std::uint64_t m, double t, double theta);

/// Speed and height constants of the fragmentation tree.
///
/// t_star solves t·κ'(t) = κ(t) on (1,∞); v_star = −κ(t_star)/t_star is the
/// speed and c_star = 1/v_star the height constant. c_plus is the weaker
/// integer-moment constant min_{2<=s<=200} s/(−log β_s(θ)), attained at s_plus.
struct HeightConstants {
  double theta = 0.0;
  double t_star = 0.0;
  double v_star = 0.0;
  double c_star = 0.0;
  double c_plus = 0.0;
  int s_plus = 0;
};

HeightConstants height_constants(double theta);

/// Largest s scanned by the c_plus search.
inline constexpr int kCPlusSearchCap = 200;

}  // namespace fragtree
