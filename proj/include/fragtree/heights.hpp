#pragma once

#include "fragtree/exact.hpp"
#include "fragtree/fragmentation.hpp"

#include <cstdint>
#include <vector>

namespace fragtree {

/// Truncated power series a_0 + a_1 z + ... + a_N z^N.
using Series = std::vector<double>;

/// exp(g) to the degree of g, by k e_k = Σ_{i=1}^k i g_i e_{k−i}. Requires g[0] == 0.
Series series_exp(const Series& g);
std::vector<Rational> series_exp(const std::vector<Rational>& g);

/// Coefficientwise product truncated to degree `deg`.
Series series_mul(const Series& a, const Series& b, std::size_t deg);

struct HeightLimits {
  std::size_t max_n = 4000;
  std::size_t max_h = 64;
  double stop_tail = 1e-12;  ///< rows stop changing once 1 − q_N(h) is below this
};

/// q[n][h] = P(H_n <= h) for 1 <= n <= N, 0 <= h <= H (row 0 unused).
struct HeightCdfTable {
  double theta = 0.0;
  std::size_t N = 0;
  std::size_t H = 0;
  std::size_t rows_computed = 0;  ///< number of h-rows produced by the recursion
  std::vector<std::vector<double>> q;

  double cdf(std::size_t n, std::size_t h) const;
  /// P(H_n = h)
  double pmf(std::size_t n, std::size_t h) const;
  double mean(std::size_t n) const;
};

struct ExactHeightCdfTable {
  RationalParam theta;
  std::size_t N = 0;
  std::size_t H = 0;
  std::vector<std::vector<Rational>> q;
};

HeightCdfTable exact_height_cdf(std::size_t N, std::size_t H, double theta, const HeightLimits& lim = {});
/// Rational arithmetic; N <= 64.
ExactHeightCdfTable exact_height_cdf(std::size_t N, std::size_t H, const RationalParam& theta);

/// max_k |[z^k] ((1−z)^θ F_h(z) − exp(−θ Φ_{h−1}(z)))| for k <= N, with F_h read off
/// row h of the table and Φ_{h−1} from row h−1. The table must cover n = N + 1.
double key_identity_residual(std::size_t h, double theta, std::size_t N);
double key_identity_residual(std::size_t h, const HeightCdfTable& table, std::size_t N);

/// Negative binomial (θ, r): (1−r)^θ θ^{(m)}/m! r^m.
double neg_binomial_pmf(std::uint64_t m, double r, double theta);
double neg_binomial_mean(double r, double theta);
double neg_binomial_var(double r, double theta);
/// r_n = (n−1)/(n−1+θ), the parameter centring the mixture at n−1.
double r_n(std::uint64_t n, double theta);

struct ThresholdDiagnostic {
  std::uint64_t n = 0;
  std::size_t h = 0;
  double r = 0.0;
  std::size_t J = 0;               ///< truncation index of Φ
  double phi = 0.0;                ///< Σ_{j<=J} p_j(h−1) r^j / j
  double phi_tail_bound = 0.0;     ///< r^{J+1}/((J+1)(1−r))
  double poissonized = 0.0;        ///< exp(−θ φ)
  double mixture = 0.0;            ///< Σ_{m<=J} NB(m) q_{m+1}(h)
  double mixture_tail_bound = 0.0; ///< NB mass above J
  double q_n = 0.0;                ///< q_n(h) from the table
  double lower = 0.0;              ///< bracket for q_n(h) derived from the mixture
  double upper = 1.0;
};

/// Requires a table with N >= J + 1, J = 20 n. Throws BudgetError (coverage) otherwise,
/// or if the truncation tail exceeds `tail_tol`.
ThresholdDiagnostic threshold_diagnostic(std::uint64_t n, std::size_t h, double theta,
                                         const HeightCdfTable& table, double tail_tol = 1e-9);

// ---------------------------------------------------------------------------
// Statistics of a sampled tree

std::uint32_t height(const MassTree& t);
/// V_ℓ^{(s)} = Σ_{|u|=ℓ} (K(u)−1)_s for ℓ = 0..height.
std::vector<double> s_mass_profile(const MassTree& t, unsigned s);
/// Number of root children of mass >= ceil((n−1)^{1−δ}).
std::uint64_t macroscopic_count(const MassTree& t, double delta);
std::uint64_t macroscopic_threshold(std::uint64_t n, double delta);

/// (k)_s = k(k−1)...(k−s+1) as a double.
double falling_factorial(std::uint64_t k, unsigned s);

struct TreeStats {
  std::uint64_t n = 0;
  std::uint32_t height = 0;
  std::vector<unsigned> s_values;
  std::vector<std::vector<double>> smass;  ///< smass[i][ℓ] for s = s_values[i]
  double delta = 0.0;
  std::uint64_t n0 = 0;
};

TreeStats tree_stats(const MassTree& t, const std::vector<unsigned>& s_values, double delta);

/// Same statistics from the streaming sampler; equal to tree_stats(sample_fragmentation(...))
/// for the same random stream.
TreeStats sample_tree_stats(std::uint64_t n, double theta, Rng& rng, const std::vector<unsigned>& s_values,
                            double delta);

}  // namespace fragtree
