#pragma once

#include "fragtree/trees.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fragtree {

/// Step i of a chord sequence (1-based) is the pair (u_i, v_i) with 0 <= u_i < v_i <= i.
struct ChordPair {
  std::uint32_t u = 0;
  std::uint32_t v = 0;

  friend bool operator==(const ChordPair&, const ChordPair&) = default;
  friend auto operator<=>(const ChordPair&, const ChordPair&) = default;
};
using ChordSequence = std::vector<ChordPair>;

struct BiNode {
  std::int64_t parent = -1;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
};

/// Rooted tree whose vertices carry two standard labellings (left, right).
/// Node identity is the arena index; labels are data.
struct BilabelledTree {
  std::vector<BiNode> nodes;
  std::size_t size() const { return nodes.size(); }
};

/// The map F. Throws StructureError naming the first offending step.
BilabelledTree sequence_to_bitree(const ChordSequence& s);

/// The inverse map G. Throws StructureError if the tree is not bilabelled.
ChordSequence bitree_to_sequence(const BilabelledTree& bt);

/// Throws StructureError describing the first violated invariant.
void validate_bitree(const BilabelledTree& bt);

/// True if `labels` is a bijection onto {0..n-1} increasing from parent to child.
bool is_standard_labelling(const ParentArray& parent, const std::vector<std::uint32_t>& labels);

/// Arena-independent key: for r = 0..n-1, the left label of the node with right label r
/// and the right label of its parent.
std::vector<std::uint32_t> bitree_key(const BilabelledTree& bt);

ParentArray bitree_shape(const BilabelledTree& bt);

/// All Π binom(i+1,2) sequences of length n-1. n <= 8.
std::vector<ChordSequence> enumerate_sequences(std::size_t n);

/// "0,1;0,1;2,3"; the empty string is the empty sequence.
ChordSequence parse_sequence(const std::string& text);
std::string format_sequence(const ChordSequence& s);

/// [{"id":0,"parent":null,"left":0,"right":0}, ...]
std::string bitree_to_json(const BilabelledTree& bt);
BilabelledTree bitree_from_json(const std::string& json);

/// Indented "(left,right)" lines, children in order of right label.
std::string bitree_to_text(const BilabelledTree& bt);

}  // namespace fragtree
