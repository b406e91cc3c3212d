#include "fragtree/constants.hpp"

#include "fragtree/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace fragtree {
namespace {

constexpr double kShiftTarget = 10.0;

// Stirling correction ln Γ(x) − [(x−½)ln x − x + ½ln 2π] for x >= 10.
// Coefficients B_{2k}/(2k(2k−1)), k = 1..8; the k=9 term is below 1e-19 at x=10.
double stirling_tail(double x) {
  static constexpr double kCoef[] = {
      1.0 / 12.0,          -1.0 / 360.0,      1.0 / 1260.0,        -1.0 / 1680.0,
      1.0 / 1188.0,        -691.0 / 360360.0, 1.0 / 156.0,         -3617.0 / 122400.0,
  };
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double sum = 0.0;
  for (int k = 7; k >= 0; --k) sum = sum * inv2 + kCoef[k];
  return sum * inv;
}

void require_theta(double theta, const char* who) {
  if (!(theta > 0.0) || !std::isfinite(theta))
    throw DomainError(std::string(who) + ": theta must be a positive finite number");
}

}  // namespace

double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("log_gamma: argument must be > 0");
  double shift_log = 0.0;
  if (x < kShiftTarget) {
    double prod = 1.0;
    while (x < kShiftTarget) {
      prod *= x;
      x += 1.0;
    }
    shift_log = std::log(prod);
  }
  constexpr double kHalfLog2Pi = 0.91893853320467274178032973640561764;
  return (x - 0.5) * std::log(x) - x + kHalfLog2Pi + stirling_tail(x) - shift_log;
}

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("digamma: argument must be > 0");
  double acc = 0.0;
  while (x < kShiftTarget) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  // ψ(x) ~ ln x − 1/(2x) − Σ B_{2k}/(2k x^{2k})
  static constexpr double kCoef[] = {
      1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0,
  };
  const double inv2 = 1.0 / (x * x);
  double sum = 0.0;
  for (int k = 6; k >= 0; --k) sum = sum * inv2 + kCoef[k];
  return acc + std::log(x) - 0.5 / x - sum * inv2;
}

BrwExponents brw_exponents(double t, double theta) {
  if (!(t >= 1.0) || !std::isfinite(t)) throw DomainError("brw_exponents: t must be >= 1");
  require_theta(theta, "brw_exponents");
  BrwExponents e;
  e.t = t;
  e.theta = theta;
  e.kappa = log_gamma(t) + log_gamma(theta + 1.0) - log_gamma(theta + t);
  e.beta = std::exp(e.kappa);
  e.kappa_prime = digamma(t) - digamma(theta + t);
  return e;
}

double finite_mass_exponent(std::uint64_t m, double t, double theta) {
  if (m == 0) throw DomainError("finite_mass_exponent: m must be >= 1");
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("finite_mass_exponent: t must be > 0");
  require_theta(theta, "finite_mass_exponent");
  const auto md = static_cast<double>(m);
  // θ m^{-t} Σ_j j^{t-1} R_{m,j}; every summand is positive, so a plain sum is stable.
  const double log_prefix = std::log(theta) - t * std::log(md);
  // R_{m,1} = m/(m−1+θ), R_{m,j+1} = R_{m,j} (m−j)/(m−j−1+θ)
  double sum = 0.0;
  double ratio = md / (md - 1.0 + theta);
  for (std::uint64_t j = 1; j <= m; ++j) {
    const auto jd = static_cast<double>(j);
    sum += (t == 1.0 ? 1.0 : std::exp((t - 1.0) * std::log(jd))) * ratio;
    ratio *= (md - jd) / (md - jd - 1.0 + theta);
  }
  return std::exp(log_prefix) * sum;
}

HeightConstants height_constants(double theta) {
  require_theta(theta, "height_constants");
  // g(t) = κ(t) − t κ'(t) is positive just above 1 and tends to −∞.
  auto g = [theta](double t) {
    const BrwExponents e = brw_exponents(t, theta);
    return e.kappa - t * e.kappa_prime;
  };
  double lo = 1.000001;
  double hi = 4.0;
  while (g(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw InternalError("height_constants: no sign change of g on [1, 1e6]");
  }
  if (!(g(lo) > 0.0)) throw InternalError("height_constants: g(lo) is not positive");
  while (hi - lo > 1e-12 * std::max(1.0, lo)) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) > 0.0 ? lo : hi) = mid;
  }

  HeightConstants hc;
  hc.theta = theta;
  hc.t_star = 0.5 * (lo + hi);
  const BrwExponents at = brw_exponents(hc.t_star, theta);
  hc.v_star = -at.kappa / hc.t_star;
  hc.c_star = 1.0 / hc.v_star;

  hc.c_plus = std::numeric_limits<double>::infinity();
  for (int s = 2; s <= kCPlusSearchCap; ++s) {
    const double value = s / (-brw_exponents(static_cast<double>(s), theta).kappa);
    if (value < hc.c_plus) {
      hc.c_plus = value;
      hc.s_plus = s;
    }
  }
  return hc;
}

}  // namespace fragtree
