#include "fragtree/fragmentation.hpp"

#include "fragtree/constants.hpp"
#include "fragtree/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <random>

namespace fragtree {

namespace detail {

void check_fragmentation_args(std::uint64_t n, double theta) {
  if (n == 0) throw DomainError("tree size n must be >= 1");
  if (!(theta > 0.0) || !std::isfinite(theta)) throw DomainError("theta must be > 0");
}

void sort_nonincreasing(std::vector<std::uint64_t>& blocks) {
  std::stable_sort(blocks.begin(), blocks.end(), std::greater<>());
}

}  // namespace detail

namespace {

void check_arena(std::uint64_t n) {
  if (n >= kMaxArenaNodes) throw BudgetError("tree too large for a 32-bit node arena");
}

// Running mean and variance of a stream of doubles.
struct Moments {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++count;
    const double d = x - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (x - mean);
  }
  double se() const {
    if (count < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count));
  }
};

}  // namespace

MassTree sample_fragmentation(std::uint64_t n, double theta, Rng& rng) {
  detail::check_fragmentation_args(n, theta);
  check_arena(n);
  MassTree tree;
  tree.root_mass = n;
  tree.nodes.reserve(n);
  tree.nodes.push_back({kNoNode, kNoNode, 0, 0, n});
  std::vector<NodeRef> stack{0};
  std::vector<std::uint64_t> blocks;
  while (!stack.empty()) {
    const NodeRef v = stack.back();
    stack.pop_back();
    const std::uint64_t mass = tree.nodes[v].mass;
    if (mass < 2) continue;
    blocks = sample_ewens_blocks(mass - 1, theta, rng);
    detail::sort_nonincreasing(blocks);
    const auto first = static_cast<NodeRef>(tree.nodes.size());
    const std::uint32_t depth = tree.nodes[v].depth + 1;
    for (auto b : blocks) tree.nodes.push_back({v, kNoNode, 0, depth, b});
    tree.nodes[v].first_child = first;
    tree.nodes[v].child_count = static_cast<std::uint32_t>(blocks.size());
    for (std::size_t i = blocks.size(); i-- > 0;) stack.push_back(first + static_cast<NodeRef>(i));
  }
  return tree;
}

LabelledMassTree sample_labelled_fragmentation(std::uint64_t n, double theta, Rng& rng) {
  detail::check_fragmentation_args(n, theta);
  check_arena(n);
  LabelledMassTree tree;
  tree.root_mass = n;
  tree.nodes.push_back({kNoNode, kNoNode, 0, 0, n});
  tree.labels.push_back(0);
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0U);
  std::vector<std::vector<std::uint32_t>> sets{std::move(all)};  // indexed by node ref
  std::vector<NodeRef> stack{0};
  std::vector<std::uint32_t> table_of;
  while (!stack.empty()) {
    const NodeRef v = stack.back();
    stack.pop_back();
    std::vector<std::uint32_t> set = std::move(sets[v]);
    if (set.size() < 2) continue;
    // CRP over set[1..], seating the labels in increasing order
    std::vector<std::vector<std::uint32_t>> tables;
    table_of.assign(set.size() - 1, 0);
    for (std::size_t t = 1; t < set.size(); ++t) {
      const double seated = static_cast<double>(t - 1);
      std::uint32_t table;
      if (t == 1 || uniform01(rng) * (theta + seated) < theta) {
        table = static_cast<std::uint32_t>(tables.size());
        tables.emplace_back();
      } else {
        table = table_of[uniform_below(rng, t - 1)];
      }
      table_of[t - 1] = table;
      tables[table].push_back(set[t]);
    }
    std::stable_sort(tables.begin(), tables.end(), [](const auto& a, const auto& b) {
      if (a.size() != b.size()) return a.size() > b.size();
      return a.front() < b.front();
    });
    const auto first = static_cast<NodeRef>(tree.nodes.size());
    const std::uint32_t depth = tree.nodes[v].depth + 1;
    for (auto& tab : tables) {
      tree.nodes.push_back({v, kNoNode, 0, depth, tab.size()});
      tree.labels.push_back(tab.front());
      sets.push_back(std::move(tab));
    }
    tree.nodes[v].first_child = first;
    tree.nodes[v].child_count = static_cast<std::uint32_t>(tables.size());
    for (std::size_t i = tables.size(); i-- > 0;) stack.push_back(first + static_cast<NodeRef>(i));
  }
  return tree;
}

std::vector<std::int64_t> grow_recursive_parents(std::uint64_t n, double theta, Rng& rng) {
  detail::check_fragmentation_args(n, theta);
  check_arena(n);
  std::vector<std::int64_t> parent(n, -1);
  std::vector<std::uint64_t> size(n, 1);
  std::vector<std::vector<std::uint32_t>> kids(n);
  for (std::uint32_t label = 1; label < n; ++label) {
    std::uint32_t v = 0;
    while (true) {
      const double below = static_cast<double>(size[v] - 1);
      if (kids[v].empty() || uniform01(rng) * (theta + below) < theta) break;
      std::uint64_t r = uniform_below(rng, size[v] - 1);
      std::uint32_t next = kids[v].front();
      for (auto c : kids[v]) {
        if (r < size[c]) {
          next = c;
          break;
        }
        r -= size[c];
      }
      v = next;
    }
    parent[label] = v;
    kids[v].push_back(label);
    for (std::int64_t a = v; a >= 0; a = parent[static_cast<std::size_t>(a)]) ++size[static_cast<std::size_t>(a)];
  }
  return parent;
}

std::vector<LabelledMassTree> grow_recursive_tree(std::uint64_t n, double theta, Rng& rng) {
  const auto parent = grow_recursive_parents(n, theta, rng);
  std::vector<LabelledMassTree> snaps;
  snaps.reserve(n);
  for (std::uint64_t k = 1; k <= n; ++k) {
    ParentArray prefix(parent.begin(), parent.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::uint32_t> labels(k);
    std::iota(labels.begin(), labels.end(), 0U);
    snaps.push_back(mass_tree_from_parents(prefix, labels));
  }
  return snaps;
}

MassTree mass_tree_from_parents(const ParentArray& parent, const std::vector<std::uint32_t>& labels) {
  const CanonicalTree shape = canonicalize(parent);  // validates the structure
  const std::size_t n = shape.n;
  check_arena(n);
  if (!labels.empty() && labels.size() != n) throw StructureError("label array has the wrong length");
  std::vector<std::vector<std::size_t>> kids(n);
  std::size_t root = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (parent[v] < 0) {
      root = v;
    } else {
      kids[static_cast<std::size_t>(parent[v])].push_back(v);
    }
  }
  std::vector<std::size_t> order{root};
  for (std::size_t i = 0; i < order.size(); ++i)
    for (auto c : kids[order[i]]) order.push_back(c);
  std::vector<std::uint64_t> size(n, 1);
  for (std::size_t i = n; i-- > 1;) size[static_cast<std::size_t>(parent[order[i]])] += size[order[i]];

  auto tie = [&](std::size_t v) -> std::uint64_t { return labels.empty() ? v : labels[v]; };
  MassTree tree;
  tree.root_mass = n;
  tree.nodes.push_back({kNoNode, kNoNode, 0, 0, n});
  if (!labels.empty()) tree.labels.push_back(labels[root]);
  std::vector<std::pair<std::size_t, NodeRef>> stack{{root, 0}};
  while (!stack.empty()) {
    auto [v, ref] = stack.back();
    stack.pop_back();
    auto& ch = kids[v];
    if (ch.empty()) continue;
    std::sort(ch.begin(), ch.end(), [&](auto a, auto b) {
      if (size[a] != size[b]) return size[a] > size[b];
      return tie(a) < tie(b);
    });
    const auto first = static_cast<NodeRef>(tree.nodes.size());
    const std::uint32_t depth = tree.nodes[ref].depth + 1;
    for (auto c : ch) {
      tree.nodes.push_back({ref, kNoNode, 0, depth, size[c]});
      if (!labels.empty()) tree.labels.push_back(labels[c]);
    }
    tree.nodes[ref].first_child = first;
    tree.nodes[ref].child_count = static_cast<std::uint32_t>(ch.size());
    for (std::size_t i = ch.size(); i-- > 0;) stack.push_back({ch[i], first + static_cast<NodeRef>(i)});
  }
  return tree;
}

void validate_mass_tree(const MassTree& t) {
  const std::size_t n = t.size();
  if (n == 0) throw StructureError("empty mass tree");
  if (t.nodes[0].parent != kNoNode || t.nodes[0].depth != 0 || t.nodes[0].mass != t.root_mass)
    throw StructureError("root record is inconsistent");
  if (t.labelled() && t.labels.size() != n) throw StructureError("label array has the wrong length");
  std::vector<char> claimed(n, 0);
  for (NodeRef v = 0; v < n; ++v) {
    const auto& node = t.nodes[v];
    if (node.mass == 0) throw StructureError("node with zero mass");
    std::uint64_t total = 0;
    std::uint64_t prev = std::numeric_limits<std::uint64_t>::max();
    if (node.child_count > 0 && (node.first_child == kNoNode || node.first_child + static_cast<std::uint64_t>(node.child_count) > n))
      throw StructureError("child range out of bounds");
    for (std::uint32_t i = 0; i < node.child_count; ++i) {
      const NodeRef c = node.first_child + i;
      const auto& child = t.nodes[c];
      if (claimed[c]++) throw StructureError("node is the child of two parents");
      if (child.parent != v) throw StructureError("parent link does not match child range");
      if (child.depth != node.depth + 1) throw StructureError("depth is not parent depth + 1");
      if (child.mass > prev) throw StructureError("children are not in nonincreasing mass order");
      prev = child.mass;
      total += child.mass;
    }
    if (node.mass == 1 ? node.child_count != 0 : total != node.mass - 1)
      throw StructureError("mass conservation K(u) - 1 = sum of children fails at node " + std::to_string(v));
  }
  for (NodeRef v = 1; v < n; ++v)
    if (!claimed[v]) throw StructureError("node is not reachable from the root");
}

ParentArray mass_tree_parents(const MassTree& t) {
  ParentArray p(t.size());
  for (std::size_t v = 0; v < t.size(); ++v)
    p[v] = t.nodes[v].parent == kNoNode ? -1 : static_cast<std::int64_t>(t.nodes[v].parent);
  return p;
}

CanonicalTree mass_tree_shape(const MassTree& t) { return canonicalize(mass_tree_parents(t)); }

std::vector<std::int64_t> labelled_key(const LabelledMassTree& t) {
  if (!t.labelled()) throw StructureError("tree carries no labels");
  std::vector<std::int64_t> key(t.size(), -1);
  for (std::size_t v = 0; v < t.size(); ++v) {
    const NodeRef p = t.nodes[v].parent;
    key.at(t.labels[v]) = p == kNoNode ? -1 : static_cast<std::int64_t>(t.labels[p]);
  }
  return key;
}

std::string mass_tree_to_json(const MassTree& t) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t v = 0; v < t.size(); ++v) {
    const auto& node = t.nodes[v];
    nlohmann::json j;
    j["id"] = v;
    j["parent"] = node.parent == kNoNode ? nlohmann::json(nullptr) : nlohmann::json(node.parent);
    j["mass"] = node.mass;
    j["depth"] = node.depth;
    if (t.labelled()) j["label"] = t.labels[v];
    arr.push_back(std::move(j));
  }
  return arr.dump();
}

MassTree mass_tree_from_json(const std::string& json) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw StructureError(std::string("invalid JSON: ") + e.what());
  }
  if (!arr.is_array() || arr.empty()) throw StructureError("tree JSON must be a nonempty array");
  const std::size_t n = arr.size();
  ParentArray parent(n, -1);
  std::vector<std::uint64_t> mass(n, 0);
  std::vector<std::uint32_t> labels;
  std::vector<char> seen(n, 0);
  try {
    for (const auto& j : arr) {
      const auto id = j.at("id").get<std::size_t>();
      if (id >= n || seen[id]) throw StructureError("node ids must be 0..n-1 without repeats");
      seen[id] = 1;
      parent[id] = j.at("parent").is_null() ? -1 : j.at("parent").get<std::int64_t>();
      mass[id] = j.at("mass").get<std::uint64_t>();
      if (j.contains("label")) {
        if (labels.empty()) labels.assign(n, 0);
        labels[id] = j.at("label").get<std::uint32_t>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw StructureError(std::string("invalid node record: ") + e.what());
  }
  MassTree tree = mass_tree_from_parents(parent, labels);
  // the stated masses must be the subtree sizes
  std::vector<std::uint64_t> sub(n, 1);
  {
    std::vector<std::size_t> order;
    std::vector<std::vector<std::size_t>> kids(n);
    std::size_t root = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (parent[v] < 0) root = v; else kids[static_cast<std::size_t>(parent[v])].push_back(v);
    }
    order.push_back(root);
    for (std::size_t i = 0; i < order.size(); ++i)
      for (auto c : kids[order[i]]) order.push_back(c);
    for (std::size_t i = n; i-- > 1;) sub[static_cast<std::size_t>(parent[order[i]])] += sub[order[i]];
  }
  for (std::size_t v = 0; v < n; ++v)
    if (sub[v] != mass[v]) throw StructureError("node " + std::to_string(v) + ": mass is not its subtree size");
  return tree;
}

// ---------------------------------------------------------------------------

std::vector<double> spine_step_pmf(std::uint64_t k, double t, double theta) {
  if (k < 2) throw DomainError("spine_step_pmf: k must be >= 2");
  if (!(t >= 1.0) || !std::isfinite(t)) throw DomainError("spine_step_pmf: t must be >= 1");
  detail::check_fragmentation_args(1, theta);
  const std::uint64_t m = k - 1;
  const auto md = static_cast<double>(m);
  std::vector<double> w(m);
  double top = -std::numeric_limits<double>::infinity();
  for (std::uint64_t j = 1; j <= m; ++j) {
    const auto jd = static_cast<double>(j);
    w[j - 1] = (t - 1.0) * std::log(jd) + log_gamma(md - jd + theta) - log_gamma(md - jd + 1.0);
    top = std::max(top, w[j - 1]);
  }
  double total = 0.0;
  for (auto& x : w) {
    x = std::exp(x - top);
    total += x;
  }
  for (auto& x : w) x /= total;
  return w;
}

double kappa_k(std::uint64_t k, double t, double theta) {
  if (k <= 1 || t == 1.0) return 0.0;  // β_{m,1} = 1
  return std::log(finite_mass_exponent(k - 1, t, theta));
}

SpineStepSampler::SpineStepSampler(double t, double theta) : t_(t), theta_(theta) {
  if (!(t >= 1.0) || !std::isfinite(t)) throw DomainError("spine: t must be >= 1");
  detail::check_fragmentation_args(1, theta);
  double best = 0.0;  // log 1; r(j) -> 1 as j grows
  for (int j = 1; j <= 1000; ++j) {
    const double jd = j;
    best = std::max(best, (t - 1.0) * std::log(jd) + log_gamma(jd) - log_gamma(jd + t - 1.0));
  }
  log_bound_ = best + 1e-9;
}

std::uint64_t SpineStepSampler::next_mass(std::uint64_t k, Rng& rng) {
  if (k <= 2) return 1;
  const std::uint64_t m = k - 1;
  if (k <= kTableLimit) {
    auto it = cdf_.find(k);
    if (it == cdf_.end()) {
      auto pmf = spine_step_pmf(k, t_, theta_);
      std::partial_sum(pmf.begin(), pmf.end(), pmf.begin());
      it = cdf_.emplace(k, std::move(pmf)).first;
    }
    const auto& cdf = it->second;
    const double u = uniform01(rng) * cdf.back();
    const auto pos = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    return std::min<std::uint64_t>(static_cast<std::uint64_t>(pos) + 1, m);
  }
  std::gamma_distribution<double> ga(t_, 1.0);
  std::gamma_distribution<double> gb(theta_, 1.0);
  while (true) {
    const double x = ga(rng);
    const double y = gb(rng);
    const double w = x / (x + y);
    std::binomial_distribution<std::uint64_t> bin(m - 1, w);
    const std::uint64_t j = 1 + bin(rng);
    const auto jd = static_cast<double>(j);
    const double log_r = (t_ - 1.0) * std::log(jd) + log_gamma(jd) - log_gamma(jd + t_ - 1.0);
    if (std::log(uniform01(rng)) < log_r - log_bound_) return j;
  }
}

SpineSample sample_spine(std::uint64_t n, double theta, double t, std::uint32_t h, Rng& rng,
                         const SpineOptions& opts) {
  SpineStepSampler steps(t, theta);
  return sample_spine(n, h, steps, rng, opts);
}

SpineSample sample_spine(std::uint64_t n, std::uint32_t h, SpineStepSampler& steps, Rng& rng,
                         const SpineOptions& opts) {
  detail::check_fragmentation_args(n, steps.theta());
  SpineSample out;
  SpinePath& p = out.path;
  p.t = steps.t();
  p.theta = steps.theta();
  p.masses.push_back(n);
  p.S.push_back(0.0);
  p.kappa_sum = opts.kappa ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  for (std::uint32_t l = 1; l <= h; ++l) {
    const std::uint64_t k = p.masses.back();
    std::uint64_t j = 1;
    double x = 0.0;
    std::vector<std::uint64_t> sib;
    if (k >= 2) {
      if (opts.kappa) {
        if (k > kKappaMassLimit) throw BudgetError("spine: kappa tracking requested for a huge mass");
        p.kappa_sum += kappa_k(k, p.t, p.theta);
      }
      j = steps.next_mass(k, rng);
      x = std::log(static_cast<double>(k - 1)) - std::log(static_cast<double>(j));
      if (opts.siblings && k - 1 > j) {
        sib = sample_ewens_blocks(k - 1 - j, p.theta, rng);
        detail::sort_nonincreasing(sib);
      }
    }
    p.masses.push_back(j);
    p.displacements.push_back(x);
    p.S.push_back(p.S.back() + x);
    if (opts.siblings) out.siblings.push_back(std::move(sib));
  }
  return out;
}

std::vector<double> kappa_table(std::uint64_t n, double t, double theta) {
  std::vector<double> kappa(n + 1, 0.0);
  for (std::uint64_t k = 2; k <= n; ++k) kappa[k] = kappa_k(k, t, theta);
  return kappa;
}

double additive_martingale(const MassTree& tree, double t, std::uint32_t h, const std::vector<double>& kappa) {
  if (kappa.size() <= tree.root_mass) throw DomainError("additive_martingale: kappa table too short");
  std::vector<double> logf(tree.size(), 0.0);
  double z = 0.0;
  for (NodeRef v = 0; v < tree.size(); ++v) {
    const auto& node = tree.nodes[v];
    if (node.depth > h) continue;
    if (v != 0) {
      const auto& par = tree.nodes[node.parent];
      const double x = std::log(static_cast<double>(par.mass - 1)) - std::log(static_cast<double>(node.mass));
      logf[v] = logf[node.parent] - t * x - kappa[par.mass];
    }
    if (node.depth == h || node.mass == 1) z += std::exp(logf[v]);
  }
  return z;
}

ManyToOneResult many_to_one_check(std::uint64_t n, double theta, double t, std::uint32_t h,
                                  std::uint64_t reps, Rng& rng) {
  if (reps == 0) throw DomainError("many_to_one_check: reps must be >= 1");
  if (!(t >= 1.0)) throw DomainError("many_to_one_check: t must be >= 1");
  const auto kappa = kappa_table(n, t, theta);
  ManyToOneResult res;
  Moments z, cnt;
  for (std::uint64_t r = 0; r < reps; ++r) {
    const MassTree tree = sample_fragmentation(n, theta, rng);
    const double zr = additive_martingale(tree, t, h, kappa);
    z.add(zr);
    if (t == 1.0) res.max_abs_dev_t1 = std::max(res.max_abs_dev_t1, std::abs(zr - 1.0));
    double c = 0.0;
    for (const auto& node : tree.nodes)
      if (node.depth == h && node.mass >= 2) c += 1.0;
    cnt.add(c);
  }
  SpineStepSampler steps(t, theta);
  Moments one, weighted;
  for (std::uint64_t r = 0; r < reps; ++r) {
    const SpineSample sp = sample_spine(n, h, steps, rng, {.siblings = false, .kappa = true});
    one.add(1.0);
    const double w = std::exp(t * sp.path.S.back() + sp.path.kappa_sum);
    weighted.add(sp.path.masses.back() >= 2 ? w : 0.0);
  }
  res.lhs = z.mean;
  res.lhs_se = z.se();
  res.rhs = one.mean;
  res.rhs_se = one.se();
  res.count_direct = cnt.mean;
  res.count_direct_se = cnt.se();
  res.count_spine = weighted.mean;
  res.count_spine_se = weighted.se();
  return res;
}

}  // namespace fragtree
