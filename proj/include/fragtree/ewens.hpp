#pragma once

#include "fragtree/exact.hpp"
#include "fragtree/random.hpp"

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace fragtree {

/// Partition of m in count-vector form: counts[j] = c_j, number of blocks of size j.
/// Stored sparsely; zero counts are never kept.
struct CountVector {
  std::uint64_t m = 0;
  std::map<std::uint64_t, std::uint64_t> counts;

  std::uint64_t count(std::uint64_t j) const;
  std::uint64_t num_blocks() const;
  /// Σ j·c_j == m.
  bool feasible() const;
  /// Block sizes A_1 >= A_2 >= ...
  std::vector<std::uint64_t> block_sizes() const;
  /// (c_1, ..., c_m), dense.
  std::vector<std::uint64_t> dense() const;

  static CountVector from_dense(const std::vector<std::uint64_t>& c);
  static CountVector from_blocks(const std::vector<std::uint64_t>& sizes);

  friend bool operator==(const CountVector&, const CountVector&) = default;
  friend auto operator<=>(const CountVector&, const CountVector&) = default;
};

/// Ewens(m,θ) probability of a count vector. Throws StructureError if infeasible.
double ewens_pmf(const CountVector& cv, double theta);
Rational ewens_pmf_exact(const CountVector& cv, const RationalParam& theta);

/// Chinese restaurant process; table sizes in the order the tables were opened.
std::vector<std::uint64_t> crp_table_sizes(std::uint64_t m, double theta, Rng& rng);
CountVector sample_ewens_crp(std::uint64_t m, double theta, Rng& rng);

/// Ewens(m,θ) block sizes in size-biased order. Uses the CRP for small m and
/// the size-biased stick (J = 1 + Binomial(rem−1, V), V ~ Beta(1,θ)) above.
/// Used by the fragmentation samplers.
std::vector<std::uint64_t> sample_ewens_blocks(std::uint64_t m, double theta, Rng& rng);

/// Above this mass sample_ewens_blocks switches from the CRP to stick breaking.
inline constexpr std::uint64_t kCrpMassLimit = 64;

/// E[Π_r (C_{j_r})_{a_r}] under Ewens(m,θ), for distinct j_r. Returns 0 if Σ a_r j_r > m.
double mixed_factorial_moment(std::uint64_t m, double theta,
                              const std::vector<std::pair<std::uint64_t, std::uint64_t>>& spec);

/// First sticks of a GEM(θ) draw and the length of stick left over.
struct StickWeights {
  std::vector<double> weights;
  double residual = 1.0;  ///< Π_k (1−V_k) over the drawn sticks
};

/// GEM(θ) weights P_k = V_k Π_{i<k}(1−V_i), V_k ~ Beta(1,θ), first `trunc` sticks.
StickWeights sample_gem(double theta, std::size_t trunc, Rng& rng);

/// Beta(1,θ) variate, 1 − U^{1/θ}.
double sample_beta_1_theta(double theta, Rng& rng);

/// All partitions of m as count vectors (m <= 40), in a fixed order.
std::vector<CountVector> enumerate_partitions(std::uint64_t m);

/// Rising factorial θ^{(k)} = θ(θ+1)...(θ+k−1), exact.
Rational rising_factorial(const Rational& theta, std::uint64_t k);

/// log θ^{(k)} = logΓ(θ+k) − logΓ(θ).
double log_rising_factorial(double theta, std::uint64_t k);

}  // namespace fragtree
