#include "fragtree/trees.hpp"

#include "fragtree/errors.hpp"

#include <algorithm>
#include <functional>
#include <string_view>

namespace fragtree {
namespace {

struct ParsedTree {
  ParentArray parent;
  std::vector<std::size_t> start;  // offset of each vertex's '(' in the text
  std::vector<std::size_t> size;   // subtree sizes
};

ParsedTree parse(const std::string& text) {
  if (text.empty() || text.size() % 2 != 0) throw StructureError("malformed tree string");
  ParsedTree p;
  std::vector<std::int64_t> stack;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '(') {
      if (stack.empty() && !p.parent.empty()) throw StructureError("tree string has several roots");
      p.parent.push_back(stack.empty() ? -1 : stack.back());
      p.start.push_back(i);
      stack.push_back(static_cast<std::int64_t>(p.parent.size() - 1));
    } else if (c == ')') {
      if (stack.empty()) throw StructureError("unbalanced tree string");
      stack.pop_back();
    } else {
      throw StructureError(std::string("unexpected character '") + c + "' in tree string");
    }
  }
  if (!stack.empty()) throw StructureError("unbalanced tree string");
  const std::size_t n = p.parent.size();
  p.size.assign(n, 1);
  for (std::size_t v = n; v-- > 1;) p.size[static_cast<std::size_t>(p.parent[v])] += p.size[v];
  return p;
}

ParentArray remove_vertex(const ParentArray& parent, std::size_t leaf) {
  ParentArray out;
  out.reserve(parent.size() - 1);
  for (std::size_t v = 0; v < parent.size(); ++v) {
    if (v == leaf) continue;
    std::int64_t p = parent[v];
    if (p > static_cast<std::int64_t>(leaf)) --p;
    out.push_back(p);
  }
  return out;
}

BigInt binom2_product(std::size_t n) {
  BigInt lhs = 1;
  for (std::size_t i = 1; i < n; ++i) lhs *= BigInt(i) * (i + 1) / 2;
  return lhs;
}

}  // namespace

CanonicalTree canonicalize(const ParentArray& parent) {
  const std::size_t n = parent.size();
  if (n == 0) throw StructureError("empty tree");
  std::vector<std::vector<std::size_t>> children(n);
  std::size_t root = n;
  for (std::size_t v = 0; v < n; ++v) {
    const std::int64_t p = parent[v];
    if (p < 0) {
      if (root != n) throw StructureError("tree has more than one root");
      root = v;
    } else if (static_cast<std::size_t>(p) >= n || static_cast<std::size_t>(p) == v) {
      throw StructureError("invalid parent reference");
    } else {
      children[static_cast<std::size_t>(p)].push_back(v);
    }
  }
  if (root == n) throw StructureError("tree has no root");

  std::vector<std::size_t> order{root};
  for (std::size_t i = 0; i < order.size(); ++i)
    for (auto c : children[order[i]]) order.push_back(c);
  if (order.size() != n) throw StructureError("tree is disconnected or has a cycle");

  std::vector<std::string> code(n);
  std::vector<std::string> parts;
  for (std::size_t i = n; i-- > 0;) {
    const std::size_t v = order[i];
    parts.clear();
    for (auto c : children[v]) parts.push_back(std::move(code[c]));
    std::sort(parts.begin(), parts.end());
    std::string s = "(";
    for (auto& part : parts) s += part;
    s += ')';
    code[v] = std::move(s);
  }
  return {std::move(code[root]), n};
}

ParentArray to_parent_array(const std::string& text) { return parse(text).parent; }

CanonicalTree parse_tree(const std::string& text) { return canonicalize(parse(text).parent); }

std::vector<CanonicalTree> enumerate_trees(std::size_t n) {
  if (n == 0) throw DomainError("enumerate_trees: n must be >= 1");
  if (n > 16) throw BudgetError("enumerate_trees: n > 16");
  // by_size[s] holds the canonical strings of all classes of size s, sorted.
  std::vector<std::vector<std::string>> by_size(n + 1);
  by_size[1] = {"()"};
  for (std::size_t size = 2; size <= n; ++size) {
    std::vector<std::string> out;
    std::vector<const std::string*> chosen;
    // children chosen as a multiset, nondecreasing in (size, index)
    std::function<void(std::size_t, std::size_t, std::size_t)> rec =
        [&](std::size_t rem, std::size_t min_size, std::size_t min_idx) {
          if (rem == 0) {
            std::vector<std::string_view> sorted;
            for (auto* s : chosen) sorted.emplace_back(*s);
            std::sort(sorted.begin(), sorted.end());
            std::string code = "(";
            for (auto sv : sorted) code += sv;
            code += ')';
            out.push_back(std::move(code));
            return;
          }
          for (std::size_t s = min_size; s <= rem; ++s) {
            const auto& list = by_size[s];
            for (std::size_t i = (s == min_size ? min_idx : 0); i < list.size(); ++i) {
              chosen.push_back(&list[i]);
              rec(rem - s, s, i);
              chosen.pop_back();
            }
          }
        };
    rec(size - 1, 1, 0);
    std::sort(out.begin(), out.end());
    by_size[size] = std::move(out);
  }
  std::vector<CanonicalTree> result;
  for (auto& s : by_size[n]) result.push_back({s, n});
  return result;
}

HookData hook_counts(const CanonicalTree& t) {
  const std::string canon = parse_tree(t.canon).canon;
  const ParsedTree p = parse(canon);
  const std::size_t n = p.parent.size();

  HookData h;
  h.subtree_sizes = p.size;
  BigInt denom = 1;
  for (auto s : p.size) denom *= s;
  const BigInt nf = factorial(static_cast<unsigned>(n));
  if (nf % denom != 0) throw InternalError("hook_counts: n! not divisible by hook product");
  h.d = nf / denom;

  std::vector<std::vector<std::string_view>> kids(n);
  const std::string_view text(canon);
  for (std::size_t v = 1; v < n; ++v)
    kids[static_cast<std::size_t>(p.parent[v])].push_back(text.substr(p.start[v], 2 * p.size[v]));
  h.aut = 1;
  for (auto& list : kids) {
    std::sort(list.begin(), list.end());
    for (std::size_t i = 0; i < list.size();) {
      std::size_t j = i;
      while (j < list.size() && list[j] == list[i]) ++j;
      h.aut *= factorial(static_cast<unsigned>(j - i));
      i = j;
    }
  }
  if (h.d % h.aut != 0) throw InternalError("hook_counts: |Aut| does not divide d");
  h.u = h.d / h.aut;
  return h;
}

std::pair<BigInt, BigInt> fundamental_identity(std::size_t n) {
  if (n == 0) throw DomainError("fundamental_identity: n must be >= 1");
  if (n > 12) throw BudgetError("fundamental_identity: n > 12");
  BigInt rhs = 0;
  for (const auto& t : enumerate_trees(n)) {
    const HookData h = hook_counts(t);
    rhs += h.d * h.u;
  }
  return {binom2_product(n), rhs};
}

CanonicalTree random_leaf_removal(const CanonicalTree& t, Rng& rng) {
  const ParsedTree p = parse(t.canon);
  const std::size_t n = p.parent.size();
  if (n < 2) throw DomainError("random_leaf_removal: tree must have at least 2 vertices");
  // In preorder the subtree of v is the contiguous range [v, v + size(v)).
  std::size_t v = uniform_below(rng, n);
  while (p.size[v] > 1) v = v + 1 + uniform_below(rng, p.size[v] - 1);
  return canonicalize(remove_vertex(p.parent, v));
}

std::map<std::string, std::uint64_t> leaf_removal_multiplicities(const CanonicalTree& t) {
  const ParsedTree p = parse(t.canon);
  std::map<std::string, std::uint64_t> m;
  for (std::size_t v = 1; v < p.parent.size(); ++v)
    if (p.size[v] == 1) ++m[canonicalize(remove_vertex(p.parent, v)).canon];
  return m;
}

std::map<std::string, Rational> leaf_removal_law(const CanonicalTree& t) {
  const BigInt d = hook_counts(t).d;
  std::map<std::string, Rational> law;
  for (auto& [code, mult] : leaf_removal_multiplicities(t)) {
    const BigInt dp = hook_counts(CanonicalTree{code, t.n - 1}).d;
    law[code] = Rational(BigInt(mult) * dp, d);
  }
  return law;
}

std::map<std::string, Rational> plancherel_weights(std::size_t n) {
  const BigInt total = binom2_product(n);
  std::map<std::string, Rational> w;
  for (const auto& t : enumerate_trees(n)) {
    const HookData h = hook_counts(t);
    w[t.canon] = Rational(h.d * h.u, total);
  }
  return w;
}

}  // namespace fragtree
