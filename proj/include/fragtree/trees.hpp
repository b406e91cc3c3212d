#pragma once

#include "fragtree/exact.hpp"
#include "fragtree/random.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fragtree {

/// Parent array of a rooted tree: parent[v] is v's parent, -1 for the root.
using ParentArray = std::vector<std::int64_t>;

/// Isomorphism class of a rooted tree. A leaf is "()", an inner node is "(" followed
/// by its children's encodings in nondecreasing lexicographic order, then ")".
struct CanonicalTree {
  std::string canon;
  std::size_t n = 0;

  friend bool operator==(const CanonicalTree&, const CanonicalTree&) = default;
  friend auto operator<=>(const CanonicalTree&, const CanonicalTree&) = default;
};

struct HookData {
  BigInt d;    ///< number of standard labellings, n!/Π|t_v|
  BigInt aut;  ///< |Aut(t)|
  BigInt u;    ///< d / aut
  std::vector<std::size_t> subtree_sizes;  ///< preorder
};

/// Throws StructureError unless `parent` has exactly one root and no cycles.
CanonicalTree canonicalize(const ParentArray& parent);

/// Parses any balanced encoding (children in any order) and returns the canonical form.
CanonicalTree parse_tree(const std::string& text);

/// Preorder parent array of an encoding; vertex 0 is the root.
ParentArray to_parent_array(const std::string& text);

/// All isomorphism classes with n vertices, sorted by canonical string. n <= 16.
std::vector<CanonicalTree> enumerate_trees(std::size_t n);

HookData hook_counts(const CanonicalTree& t);

/// (Π_{i<n} binom(i+1,2), Σ_{t} d(t)u(t)). n <= 12.
std::pair<BigInt, BigInt> fundamental_identity(std::size_t n);

/// One run of the uniform-descent leaf-removal walk. Requires n >= 2.
CanonicalTree random_leaf_removal(const CanonicalTree& t, Rng& rng);

/// m_t(t'): number of leaves whose removal gives class t'.
std::map<std::string, std::uint64_t> leaf_removal_multiplicities(const CanonicalTree& t);

/// Exact law of random_leaf_removal, m_t(t')·d(t')/d(t).
std::map<std::string, Rational> leaf_removal_law(const CanonicalTree& t);

/// Plancherel weights d(t)u(t)/Π binom(i+1,2) over all classes of size n.
std::map<std::string, Rational> plancherel_weights(std::size_t n);

}  // namespace fragtree
