#pragma once

#include "fragtree/ewens.hpp"
#include "fragtree/random.hpp"
#include "fragtree/trees.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fragtree {

using NodeRef = std::uint32_t;
inline constexpr NodeRef kNoNode = std::numeric_limits<NodeRef>::max();
inline constexpr std::uint64_t kMaxArenaNodes = std::uint64_t{1} << 31;

struct MassNode {
  NodeRef parent = kNoNode;
  NodeRef first_child = kNoNode;  ///< children occupy [first_child, first_child + child_count)
  std::uint32_t child_count = 0;
  std::uint32_t depth = 0;
  std::uint64_t mass = 1;
};

/// Arena of a fragmentation tree. Node 0 is the root; the children of a node are
/// contiguous and in nonincreasing mass order.
struct MassTree {
  std::vector<MassNode> nodes;
  std::uint64_t root_mass = 0;
  /// Per-node label; empty for unlabelled trees.
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return nodes.size(); }
  bool labelled() const { return !labels.empty(); }
  std::span<const MassNode> children(NodeRef v) const {
    const auto& n = nodes[v];
    if (n.child_count == 0) return {};
    return {nodes.data() + n.first_child, n.child_count};
  }
};

/// Alias kept for readability at call sites that need the label map.
using LabelledMassTree = MassTree;

/// Top-down Ewens fragmentation: a node of mass k >= 2 splits k−1 by Ewens(k−1,θ).
MassTree sample_fragmentation(std::uint64_t n, double theta, Rng& rng);

/// Depth-first streaming version of sample_fragmentation. Consumes the random
/// stream exactly like sample_fragmentation and calls visit(mass, depth, parent_mass)
/// once per node in the same split order, parent_mass = 0 for the root. Nothing but
/// the pending frontier is kept in memory.
template <class Visit>
void stream_fragmentation(std::uint64_t n, double theta, Rng& rng, Visit&& visit);

/// Labelled construction on label sets: each split runs a CRP over the sorted
/// labels of S \ {min S}; node label = min of its set.
LabelledMassTree sample_labelled_fragmentation(std::uint64_t n, double theta, Rng& rng);

/// Consistent growth 𝒯_1 ⊂ ... ⊂ 𝒯_n by descend-or-attach. Returns the parent
/// label of each label (−1 for label 0); snapshot k is the restriction to labels < k.
std::vector<std::int64_t> grow_recursive_parents(std::uint64_t n, double theta, Rng& rng);

/// All n snapshots of grow_recursive_parents as labelled mass trees.
std::vector<LabelledMassTree> grow_recursive_tree(std::uint64_t n, double theta, Rng& rng);

/// Builds a mass tree from a parent array (any vertex order). Masses are subtree
/// sizes; children sorted by decreasing mass, then by `labels` (or input index).
MassTree mass_tree_from_parents(const ParentArray& parent, const std::vector<std::uint32_t>& labels = {});

/// Throws StructureError unless masses, depths and child order satisfy the invariants.
void validate_mass_tree(const MassTree& t);

ParentArray mass_tree_parents(const MassTree& t);
CanonicalTree mass_tree_shape(const MassTree& t);

/// For labelled trees: parent label of each label (−1 for the root).
std::vector<std::int64_t> labelled_key(const LabelledMassTree& t);

/// [{"id":0,"parent":null,"mass":n,"depth":0}, ...] (plus "label" when labelled).
std::string mass_tree_to_json(const MassTree& t);
MassTree mass_tree_from_json(const std::string& json);

// ---------------------------------------------------------------------------
// Spine

/// Normalized law of the next spine mass j ∈ {1..k−1} at a spine node of mass k,
/// proportional to j^{t−1} Γ(m+1)Γ(m−j+θ)/(Γ(m−j+1)Γ(m+θ)), m = k−1. Index j−1.
std::vector<double> spine_step_pmf(std::uint64_t k, double t, double theta);

/// κ_k(t) = log β_{k−1,t}(θ), with κ_1 = 0.
double kappa_k(std::uint64_t k, double t, double theta);

/// Draws spine steps. Small masses use the exact pmf (cached CDFs); large masses
/// propose J = 1 + Binomial(m−1, W), W ~ Beta(t,θ), and accept with probability
/// r(J)/M, r(j) = j^{t−1}Γ(j)/Γ(j+t−1).
class SpineStepSampler {
 public:
  SpineStepSampler(double t, double theta);
  std::uint64_t next_mass(std::uint64_t k, Rng& rng);
  double t() const { return t_; }
  double theta() const { return theta_; }

  static constexpr std::uint64_t kTableLimit = 2048;

 private:
  double t_;
  double theta_;
  double log_bound_;
  std::map<std::uint64_t, std::vector<double>> cdf_;
};

struct SpinePath {
  std::vector<std::uint64_t> masses;      ///< K(U_0..U_h)
  std::vector<double> displacements;      ///< X_1..X_h
  std::vector<double> S;                  ///< S_0..S_h
  double kappa_sum = 0.0;                 ///< Σ_{ℓ<h} κ_{K(U_ℓ)}(t); NaN when not tracked
  double t = 1.0;
  double theta = 1.0;
};

struct SpineSample {
  SpinePath path;
  /// Masses of the non-spine children at each step (empty on cemetery steps).
  std::vector<std::vector<std::uint64_t>> siblings;
};

struct SpineOptions {
  bool siblings = true;
  bool kappa = true;
};

/// Largest spine mass for which κ_k(t) is tracked (its cost is O(k)).
inline constexpr std::uint64_t kKappaMassLimit = 10'000'000;

SpineSample sample_spine(std::uint64_t n, double theta, double t, std::uint32_t h, Rng& rng,
                         const SpineOptions& opts = {});
SpineSample sample_spine(std::uint64_t n, std::uint32_t h, SpineStepSampler& steps, Rng& rng,
                         const SpineOptions& opts = {});

/// Z̃_h(t) of one (cemetery-extended) tree: the sum over genuine depth-h vertices
/// and over leaves above depth h of exp(−t S_h(u) − Σ_{ℓ<h} κ_{K(u_ℓ)}(t)).
/// `kappa[k]` must hold κ_k(t) for k <= root mass.
double additive_martingale(const MassTree& tree, double t, std::uint32_t h, const std::vector<double>& kappa);
std::vector<double> kappa_table(std::uint64_t n, double t, double theta);

struct ManyToOneResult {
  double lhs = 0.0;       ///< mean of Z̃_h(t) over untilted trees
  double lhs_se = 0.0;
  double rhs = 0.0;       ///< mean of 1 under the spine measure
  double rhs_se = 0.0;
  /// E[#{|u| = h : K(u) >= 2}] directly and through the spine weight exp(tS_h + Σκ).
  double count_direct = 0.0;
  double count_direct_se = 0.0;
  double count_spine = 0.0;
  double count_spine_se = 0.0;
  double max_abs_dev_t1 = 0.0;  ///< max |Z̃_h(1) − 1| seen, only filled when t == 1
};

ManyToOneResult many_to_one_check(std::uint64_t n, double theta, double t, std::uint32_t h,
                                  std::uint64_t reps, Rng& rng);

// ---------------------------------------------------------------------------

namespace detail {
void check_fragmentation_args(std::uint64_t n, double theta);
void sort_nonincreasing(std::vector<std::uint64_t>& blocks);
}  // namespace detail

template <class Visit>
void stream_fragmentation(std::uint64_t n, double theta, Rng& rng, Visit&& visit) {
  detail::check_fragmentation_args(n, theta);
  struct Pending {
    std::uint64_t mass;
    std::uint64_t parent_mass;
    std::uint32_t depth;
  };
  std::vector<Pending> stack{{n, 0, 0}};
  std::vector<std::uint64_t> blocks;
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    visit(cur.mass, cur.depth, cur.parent_mass);
    if (cur.mass < 2) continue;
    blocks = sample_ewens_blocks(cur.mass - 1, theta, rng);
    detail::sort_nonincreasing(blocks);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it)
      stack.push_back({*it, cur.mass, cur.depth + 1});
  }
}

}  // namespace fragtree
