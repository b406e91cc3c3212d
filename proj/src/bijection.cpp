#include "fragtree/bijection.hpp"

#include "fragtree/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

namespace fragtree {
namespace {

std::uint32_t parse_label(std::string_view s, const std::string& whole) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw StructureError("malformed chord sequence: '" + whole + "'");
  return v;
}

std::vector<std::vector<std::size_t>> children_by_right(const BilabelledTree& bt) {
  std::vector<std::vector<std::size_t>> kids(bt.size());
  for (std::size_t i = 0; i < bt.size(); ++i)
    if (bt.nodes[i].parent >= 0) kids[static_cast<std::size_t>(bt.nodes[i].parent)].push_back(i);
  for (auto& k : kids)
    std::sort(k.begin(), k.end(), [&](auto a, auto b) { return bt.nodes[a].right < bt.nodes[b].right; });
  return kids;
}

}  // namespace

BilabelledTree sequence_to_bitree(const ChordSequence& s) {
  BilabelledTree bt;
  bt.nodes.push_back({-1, 0, 0});
  for (std::size_t i = 1; i <= s.size(); ++i) {
    const auto [u, v] = s[i - 1];
    if (!(u < v && v <= i))
      throw StructureError("chord sequence step " + std::to_string(i) + ": need 0 <= u < v <= " +
                           std::to_string(i) + ", got (" + std::to_string(u) + "," +
                           std::to_string(v) + ")");
    std::int64_t host = -1;
    for (std::size_t k = 0; k < bt.nodes.size(); ++k) {
      auto& node = bt.nodes[k];
      if (node.left == u) host = static_cast<std::int64_t>(k);
      if (node.left >= v) ++node.left;
    }
    if (host < 0) throw InternalError("sequence_to_bitree: no node with left label u");
    bt.nodes.push_back({host, v, static_cast<std::uint32_t>(i)});
  }
  return bt;
}

bool is_standard_labelling(const ParentArray& parent, const std::vector<std::uint32_t>& labels) {
  const std::size_t n = parent.size();
  if (labels.size() != n) return false;
  std::vector<char> seen(n, 0);
  for (auto l : labels) {
    if (l >= n || seen[l]) return false;
    seen[l] = 1;
  }
  for (std::size_t v = 0; v < n; ++v)
    if (parent[v] >= 0 && labels[static_cast<std::size_t>(parent[v])] >= labels[v]) return false;
  return true;
}

ParentArray bitree_shape(const BilabelledTree& bt) {
  ParentArray p(bt.size());
  for (std::size_t i = 0; i < bt.size(); ++i) p[i] = bt.nodes[i].parent;
  return p;
}

void validate_bitree(const BilabelledTree& bt) {
  const std::size_t n = bt.size();
  if (n == 0) throw StructureError("empty bilabelled tree");
  const ParentArray parent = bitree_shape(bt);
  canonicalize(parent);  // one root, connected, acyclic
  std::vector<std::uint32_t> left(n), right(n);
  for (std::size_t i = 0; i < n; ++i) {
    left[i] = bt.nodes[i].left;
    right[i] = bt.nodes[i].right;
    if (parent[i] < 0 && (left[i] != 0 || right[i] != 0))
      throw StructureError("root must carry labels (0,0)");
  }
  if (!is_standard_labelling(parent, left)) throw StructureError("left labels are not a standard labelling");
  if (!is_standard_labelling(parent, right)) throw StructureError("right labels are not a standard labelling");
}

ChordSequence bitree_to_sequence(const BilabelledTree& bt) {
  validate_bitree(bt);
  const std::size_t n = bt.size();
  std::vector<BiNode> nodes = bt.nodes;
  std::vector<std::size_t> by_right(n);
  for (std::size_t k = 0; k < n; ++k) by_right[nodes[k].right] = k;
  std::vector<char> alive(n, 1);
  ChordSequence s(n > 0 ? n - 1 : 0);
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t w = by_right[i];
    const std::uint32_t v = nodes[w].left;
    const std::uint32_t u = nodes[static_cast<std::size_t>(nodes[w].parent)].left;
    s[i - 1] = {u, v};
    alive[w] = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (alive[k] && nodes[k].left > v) --nodes[k].left;
  }
  return s;
}

std::vector<std::uint32_t> bitree_key(const BilabelledTree& bt) {
  const std::size_t n = bt.size();
  std::vector<std::uint32_t> key(2 * n, 0);
  for (const auto& node : bt.nodes) {
    key[2 * node.right] = node.left;
    key[2 * node.right + 1] =
        node.parent < 0 ? 0 : bt.nodes[static_cast<std::size_t>(node.parent)].right;
  }
  return key;
}

std::vector<ChordSequence> enumerate_sequences(std::size_t n) {
  if (n == 0) throw DomainError("enumerate_sequences: n must be >= 1");
  if (n > 8) throw BudgetError("enumerate_sequences: n > 8");
  std::vector<ChordSequence> out;
  ChordSequence cur;
  std::function<void(std::uint32_t)> rec = [&](std::uint32_t i) {
    if (i == n) {
      out.push_back(cur);
      return;
    }
    for (std::uint32_t v = 1; v <= i; ++v)
      for (std::uint32_t u = 0; u < v; ++u) {
        cur.push_back({u, v});
        rec(i + 1);
        cur.pop_back();
      }
  };
  rec(1);
  return out;
}

ChordSequence parse_sequence(const std::string& text) {
  ChordSequence s;
  if (text.empty()) return s;
  std::string_view rest(text);
  while (true) {
    const auto semi = rest.find(';');
    const std::string_view item = rest.substr(0, semi);
    const auto comma = item.find(',');
    if (comma == std::string_view::npos) throw StructureError("malformed chord sequence: '" + text + "'");
    s.push_back({parse_label(item.substr(0, comma), text), parse_label(item.substr(comma + 1), text)});
    if (semi == std::string_view::npos) break;
    rest.remove_prefix(semi + 1);
  }
  return s;
}

std::string format_sequence(const ChordSequence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(s[i].u) + "," + std::to_string(s[i].v);
  }
  return out;
}

std::string bitree_to_json(const BilabelledTree& bt) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < bt.size(); ++i) {
    const auto& node = bt.nodes[i];
    nlohmann::json j;
    j["id"] = i;
    j["parent"] = node.parent < 0 ? nlohmann::json(nullptr) : nlohmann::json(node.parent);
    j["left"] = node.left;
    j["right"] = node.right;
    arr.push_back(std::move(j));
  }
  return arr.dump();
}

BilabelledTree bitree_from_json(const std::string& json) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw StructureError(std::string("invalid JSON: ") + e.what());
  }
  if (!arr.is_array()) throw StructureError("bilabelled tree JSON must be an array");
  const std::size_t n = arr.size();
  BilabelledTree bt;
  bt.nodes.resize(n);
  std::vector<char> seen(n, 0);
  try {
    for (const auto& j : arr) {
      const auto id = j.at("id").get<std::size_t>();
      if (id >= n || seen[id]) throw StructureError("node ids must be 0..n-1 without repeats");
      seen[id] = 1;
      auto& node = bt.nodes[id];
      node.parent = j.at("parent").is_null() ? -1 : j.at("parent").get<std::int64_t>();
      node.left = j.at("left").get<std::uint32_t>();
      node.right = j.at("right").get<std::uint32_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw StructureError(std::string("invalid node record: ") + e.what());
  }
  return bt;
}

std::string bitree_to_text(const BilabelledTree& bt) {
  const auto kids = children_by_right(bt);
  std::ostringstream os;
  std::function<void(std::size_t, int)> rec = [&](std::size_t v, int depth) {
    os << std::string(2 * static_cast<std::size_t>(depth), ' ') << '(' << bt.nodes[v].left << ','
       << bt.nodes[v].right << ")\n";
    for (auto c : kids[v]) rec(c, depth + 1);
  };
  for (std::size_t v = 0; v < bt.size(); ++v)
    if (bt.nodes[v].parent < 0) rec(v, 0);
  return os.str();
}

}  // namespace fragtree
