#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fragtree/errors.hpp"
#include "fragtree/fragmentation.hpp"
#include "fragtree/trees.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <vector>

using namespace fragtree;

namespace {

// Ewens(m,θ) probability of a multiset of block sizes, straight from the sampling formula.
double esf(const std::vector<std::uint64_t>& sizes, double theta) {
  std::uint64_t m = 0;
  std::map<std::uint64_t, unsigned> c;
  for (auto a : sizes) {
    m += a;
    ++c[a];
  }
  double lp = std::lgamma(static_cast<double>(m) + 1) + std::lgamma(theta) - std::lgamma(theta + static_cast<double>(m));
  for (auto [j, cj] : c)
    lp += cj * std::log(theta) - cj * std::log(static_cast<double>(j)) - std::lgamma(cj + 1.0);
  return std::exp(lp);
}

std::vector<std::string> top_level_children(const std::string& canon) {
  std::vector<std::string> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 1; i + 1 < canon.size(); ++i) {
    if (canon[i] == '(') {
      if (depth == 0) start = i;
      ++depth;
    } else if (--depth == 0) {
      out.push_back(canon.substr(start, i - start + 1));
    }
  }
  return out;
}

// Exact probability that the fragmentation tree of size |t| is isomorphic to t.
double class_prob(const std::string& canon, double theta, std::map<std::string, double>& memo) {
  if (auto it = memo.find(canon); it != memo.end()) return it->second;
  const auto kids = top_level_children(canon);
  double p = 1.0;
  if (!kids.empty()) {
    std::vector<std::uint64_t> sizes;
    std::map<std::size_t, std::map<std::string, unsigned>> by_size;
    for (auto& k : kids) {
      sizes.push_back(k.size() / 2);
      ++by_size[k.size() / 2][k];
    }
    p = esf(sizes, theta);
    for (auto& [s, classes] : by_size) {
      unsigned c = 0;
      for (auto& [k, mult] : classes) {
        c += mult;
        p *= std::pow(class_prob(k, theta, memo), mult) / std::tgamma(mult + 1.0);
      }
      p *= std::tgamma(c + 1.0);
    }
  }
  memo[canon] = p;
  return p;
}

std::map<std::string, double> class_law(std::size_t n, double theta) {
  std::map<std::string, double> memo, out;
  for (const auto& t : enumerate_trees(n)) out[t.canon] = class_prob(t.canon, theta, memo);
  return out;
}

// Exact labelled law over parent-of-label arrays (parent[l] < l).
double labelled_prob(const std::vector<std::int64_t>& parent, double theta) {
  const std::size_t n = parent.size();
  std::vector<std::vector<std::size_t>> kids(n);
  for (std::size_t l = 1; l < n; ++l) kids[static_cast<std::size_t>(parent[l])].push_back(l);
  std::vector<std::uint64_t> sub(n, 1);
  for (std::size_t l = n; l-- > 1;) sub[static_cast<std::size_t>(parent[l])] += sub[l];
  double p = 1.0;
  for (std::size_t v = 0; v < n; ++v) {
    if (kids[v].empty()) continue;
    // set partition of the labels below v: θ^k Π (|B|−1)! / θ^{(m)}
    const auto m = static_cast<double>(sub[v] - 1);
    double lp = std::lgamma(theta) - std::lgamma(theta + m);
    for (auto c : kids[v]) lp += std::log(theta) + std::lgamma(static_cast<double>(sub[c]));
    p *= std::exp(lp);
  }
  return p;
}

std::map<std::vector<std::int64_t>, double> labelled_law(std::size_t n, double theta) {
  std::map<std::vector<std::int64_t>, double> out;
  std::vector<std::int64_t> p(n, -1);
  std::function<void(std::size_t)> rec = [&](std::size_t v) {
    if (v == n) {
      out[p] = labelled_prob(p, theta);
      return;
    }
    for (std::size_t q = 0; q < v; ++q) {
      p[v] = static_cast<std::int64_t>(q);
      rec(v + 1);
    }
  };
  rec(1);
  return out;
}

template <class K>
double tv_distance(const std::map<K, double>& target, const std::map<K, std::uint64_t>& counts, std::uint64_t R) {
  double tv = 0.0;
  for (const auto& [k, p] : target) {
    auto it = counts.find(k);
    const double q = it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(R);
    tv += std::abs(p - q);
  }
  for (const auto& [k, c] : counts)
    if (!target.count(k)) tv += static_cast<double>(c) / static_cast<double>(R);
  return tv / 2;
}

template <class K>
double tv_two_sample(const std::map<K, std::uint64_t>& a, const std::map<K, std::uint64_t>& b, std::uint64_t R) {
  std::set<K> keys;
  for (auto& [k, c] : a) keys.insert(k);
  for (auto& [k, c] : b) keys.insert(k);
  double tv = 0.0;
  for (auto& k : keys) {
    const double pa = a.count(k) ? static_cast<double>(a.at(k)) : 0.0;
    const double pb = b.count(k) ? static_cast<double>(b.at(k)) : 0.0;
    tv += std::abs(pa - pb) / static_cast<double>(R);
  }
  return tv / 2;
}

// Independent invariant check, not using validate_mass_tree.
bool invariants_hold(const MassTree& t) {
  if (t.nodes.empty() || t.nodes[0].mass != t.root_mass || t.nodes[0].depth != 0) return false;
  for (NodeRef v = 0; v < t.size(); ++v) {
    const auto& nd = t.nodes[v];
    const auto kids = t.children(v);
    if (nd.mass == 1 && !kids.empty()) return false;
    if (nd.mass >= 2) {
      std::uint64_t sum = 0;
      for (std::size_t i = 0; i < kids.size(); ++i) {
        sum += kids[i].mass;
        if (kids[i].parent != v || kids[i].depth != nd.depth + 1) return false;
        if (i > 0 && kids[i].mass > kids[i - 1].mass) return false;
      }
      if (sum != nd.mass - 1) return false;
    }
  }
  return true;
}

// E[C_j] under Ewens(m,θ): (θ/j) m!/(m−j)! Γ(θ+m−j)/Γ(θ+m).
double expected_count(std::uint64_t m, std::uint64_t j, double theta) {
  const auto md = static_cast<double>(m), jd = static_cast<double>(j);
  return theta / jd *
         std::exp(std::lgamma(md + 1) - std::lgamma(md - jd + 1) + std::lgamma(theta + md - jd) - std::lgamma(theta + md));
}

}  // namespace

TEST_CASE("small trees") {
  Rng rng = make_stream(1, 0);
  const auto t1 = sample_fragmentation(1, 2.0, rng);
  CHECK(t1.size() == 1);
  CHECK(t1.nodes[0].mass == 1);
  CHECK(t1.children(0).empty());
  for (int i = 0; i < 50; ++i) {
    const auto t2 = sample_fragmentation(2, 0.7, rng);
    REQUIRE(t2.size() == 2);
    CHECK(t2.children(0).size() == 1);
    CHECK(t2.nodes[1].mass == 1);
    CHECK(t2.nodes[1].depth == 1);
  }
  CHECK_THROWS_AS(sample_fragmentation(0, 2.0, rng), DomainError);
  CHECK_THROWS_AS(sample_fragmentation(5, 0.0, rng), DomainError);
  CHECK_THROWS_AS(sample_fragmentation(5, -1.0, rng), DomainError);
}

TEST_CASE("mass conservation on 10^4 trees up to n = 10^4") {
  Rng rng = make_stream(2, 0);
  const double thetas[] = {0.3, 1.0, 2.0, 7.5};
  for (int i = 0; i < 10'000; ++i) {
    const std::uint64_t n = 1 + uniform_below(rng, 10'000);
    const auto t = sample_fragmentation(n, thetas[i % 4], rng);
    CHECK(t.size() == n);
    CHECK(invariants_hold(t));
    if (i % 100 == 0) CHECK_NOTHROW(validate_mass_tree(t));
  }
}

TEST_CASE("exact class law at theta = 2 is the Plancherel measure") {
  for (std::size_t n = 1; n <= 8; ++n) {
    const auto law = class_law(n, 2.0);
    const auto w = plancherel_weights(n);
    REQUIRE(law.size() == w.size());
    for (const auto& [canon, p] : law) CHECK(std::abs(p - static_cast<double>(w.at(canon))) < 1e-13);
  }
}

TEST_CASE("theta = 2, n = 4: root split {2,1} has probability 1/2") {
  Rng rng = make_stream(3, 0);
  const int R = 1'000'000;
  int hits = 0;
  for (int i = 0; i < R; ++i) {
    const auto t = sample_fragmentation(4, 2.0, rng);
    const auto kids = t.children(0);
    hits += kids.size() == 2 && kids[0].mass == 2 && kids[1].mass == 1;
  }
  const double p = static_cast<double>(hits) / R;
  CHECK(std::abs(p - 0.5) < 4 * std::sqrt(0.25 / R));
}

TEST_CASE("class frequencies match the Plancherel weights (theta = 2)") {
  for (std::size_t n : {4u, 5u, 6u}) {
    std::map<std::string, double> target;
    for (const auto& [canon, w] : plancherel_weights(n)) target[canon] = static_cast<double>(w);
    Rng rng = make_stream(4, n);
    const std::uint64_t R = 1'000'000;
    std::map<std::string, std::uint64_t> counts;
    for (std::uint64_t i = 0; i < R; ++i) ++counts[mass_tree_shape(sample_fragmentation(n, 2.0, rng)).canon];
    CHECK(tv_distance(target, counts, R) < 0.01);
  }
}

TEST_CASE("class frequencies match the exact law for other theta") {
  for (double theta : {0.5, 3.0}) {
    const std::size_t n = 6;
    const auto target = class_law(n, theta);
    double total = 0.0;
    for (auto& [c, p] : target) total += p;
    CHECK(std::abs(total - 1.0) < 1e-12);
    Rng rng = make_stream(5, static_cast<std::uint64_t>(theta * 10));
    const std::uint64_t R = 200'000;
    std::map<std::string, std::uint64_t> counts;
    for (std::uint64_t i = 0; i < R; ++i) ++counts[mass_tree_shape(sample_fragmentation(n, theta, rng)).canon];
    CHECK(tv_distance(target, counts, R) < 0.012);
  }
}

TEST_CASE("large masses use the stick path and keep the invariants") {
  Rng rng = make_stream(6, 0);
  for (double theta : {0.2, 1.0, 30.0}) {
    const auto t = sample_fragmentation(200'000, theta, rng);
    CHECK(t.size() == 200'000);
    CHECK(invariants_hold(t));
  }
}

TEST_CASE("Markov branching: subtree heights match fresh trees (n = 30)") {
  Rng rng = make_stream(7, 0);
  const std::uint64_t R = 1'000'000;
  const double theta = 1.3;
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::uint64_t> sub, fresh;
  std::vector<std::uint64_t> masses;
  masses.reserve(R);
  for (std::uint64_t i = 0; i < R; ++i) {
    const auto t = sample_fragmentation(30, theta, rng);
    const NodeRef c = t.nodes[0].first_child;  // largest root child
    const std::uint64_t a = t.nodes[c].mass;
    std::uint32_t h = 0;
    // the subtree of c occupies a contiguous run in split order; walk it by ancestry
    for (NodeRef v = c; v < t.size(); ++v) {
      NodeRef u = v;
      while (u != kNoNode && u != c && u != 0) u = t.nodes[u].parent;
      if (u == c) h = std::max(h, t.nodes[v].depth - 1);
    }
    ++sub[{a, h}];
    masses.push_back(a);
  }
  Rng rng2 = make_stream(7, 1);
  for (auto a : masses) {
    const auto f = sample_fragmentation(a, theta, rng2);
    std::uint32_t h = 0;
    for (const auto& nd : f.nodes) h = std::max(h, nd.depth);
    ++fresh[{a, h}];
  }
  CHECK(tv_two_sample(sub, fresh, R) < 0.02);
}

TEST_CASE("streaming visits the materialized tree in depth-first order") {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (double theta : {0.4, 2.0}) {
      const std::uint64_t n = 5000;
      Rng a = make_stream(seed, 0), b = make_stream(seed, 0);
      const auto t = sample_fragmentation(n, theta, a);
      std::vector<std::tuple<std::uint64_t, std::uint32_t, std::uint64_t>> expect, got;
      std::vector<NodeRef> stack{0};
      while (!stack.empty()) {
        const NodeRef v = stack.back();
        stack.pop_back();
        const auto& nd = t.nodes[v];
        expect.emplace_back(nd.mass, nd.depth, nd.parent == kNoNode ? 0 : t.nodes[nd.parent].mass);
        const auto kids = t.children(v);
        for (std::size_t i = kids.size(); i-- > 0;) stack.push_back(nd.first_child + static_cast<NodeRef>(i));
      }
      stream_fragmentation(n, theta, b, [&](std::uint64_t m, std::uint32_t d, std::uint64_t pm) {
        got.emplace_back(m, d, pm);
      });
      CHECK(got == expect);
      CHECK(a() == b());  // both consumed the stream identically
    }
  }
}

TEST_CASE("exact decomposition along root-to-node paths") {
  Rng rng = make_stream(8, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const std::uint64_t n = 10'000;
    const auto t = sample_fragmentation(n, 1.7, rng);
    std::vector<double> S(t.size(), 0.0), R(t.size(), 0.0);
    for (NodeRef v = 1; v < t.size(); ++v) {
      const auto& nd = t.nodes[v];
      const auto k = static_cast<double>(t.nodes[nd.parent].mass);
      S[v] = S[nd.parent] - std::log(static_cast<double>(nd.mass) / (k - 1));
      R[v] = R[nd.parent] - std::log(1 - 1 / k);
      CHECK(std::abs(std::log(static_cast<double>(nd.mass)) - (std::log(static_cast<double>(n)) - S[v] - R[v])) < 1e-10);
    }
  }
}

TEST_CASE("mass trees from parent arrays and JSON") {
  // root 0 with children 1 (leaf) and 2 (which has child 3)
  const auto t = mass_tree_from_parents({-1, 0, 0, 2});
  CHECK_NOTHROW(validate_mass_tree(t));
  CHECK(t.root_mass == 4);
  CHECK(t.children(0).size() == 2);
  CHECK(t.children(0)[0].mass == 2);
  CHECK(mass_tree_shape(t) == parse_tree("(()(()))"));
  const auto back = mass_tree_from_json(mass_tree_to_json(t));
  CHECK(mass_tree_shape(back) == mass_tree_shape(t));
  CHECK(mass_tree_parents(back) == mass_tree_parents(t));

  MassTree bad = t;
  bad.nodes[1].mass = 3;
  CHECK_THROWS_AS(validate_mass_tree(bad), StructureError);
  bad = t;
  bad.nodes[2].depth = 5;
  CHECK_THROWS_AS(validate_mass_tree(bad), StructureError);
  CHECK_THROWS_AS(mass_tree_from_json("[]"), StructureError);
  CHECK_THROWS_AS(mass_tree_from_json(R"([{"id":0,"parent":null,"mass":3,"depth":0}])"), StructureError);

  const std::string js = mass_tree_to_json(mass_tree_from_parents({-1}));
  CHECK(js.find("\"parent\":null") != std::string::npos);
}

TEST_CASE("labelled fragmentation") {
  Rng rng = make_stream(9, 0);
  for (int i = 0; i < 20; ++i) {
    const auto t = sample_labelled_fragmentation(2, 1.0, rng);
    REQUIRE(t.size() == 2);
    CHECK(t.labels == std::vector<std::uint32_t>{0, 1});
  }
  // structure: labels form a standard labelling, label = min of the subtree, children ordered
  for (int i = 0; i < 200; ++i) {
    const auto t = sample_labelled_fragmentation(300, 0.8, rng);
    CHECK(invariants_hold(t));
    std::vector<std::uint32_t> minlab(t.labels);
    for (NodeRef v = static_cast<NodeRef>(t.size()); v-- > 1;) {
      const NodeRef p = t.nodes[v].parent;
      minlab[p] = std::min(minlab[p], minlab[v]);
      CHECK(t.labels[p] < t.labels[v]);
    }
    CHECK(minlab == t.labels);
    std::vector<std::uint32_t> sorted = t.labels;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) CHECK(sorted[k] == k);
    for (NodeRef v = 0; v < t.size(); ++v) {
      const auto kids = t.children(v);
      for (std::size_t j = 1; j < kids.size(); ++j) {
        const auto a = t.nodes[v].first_child + j - 1;
        CHECK((kids[j - 1].mass > kids[j].mass ||
               (kids[j - 1].mass == kids[j].mass && t.labels[a] < t.labels[a + 1])));
      }
    }
  }
}

TEST_CASE("labelled law: exact oracle and sampler") {
  const auto law3 = labelled_law(3, 2.0);
  CHECK(std::abs(law3.at({-1, 0, 1}) - 1.0 / 3) < 1e-15);
  for (std::size_t n = 1; n <= 6; ++n) {
    double total = 0.0;
    for (auto& [k, p] : labelled_law(n, 0.7)) total += p;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }

  Rng rng = make_stream(10, 0);
  const std::uint64_t R = 1'000'000;
  std::map<std::vector<std::int64_t>, std::uint64_t> c3;
  for (std::uint64_t i = 0; i < R; ++i) ++c3[labelled_key(sample_labelled_fragmentation(3, 2.0, rng))];
  const double p_path = static_cast<double>(c3[{-1, 0, 1}]) / R;
  CHECK(std::abs(p_path - 1.0 / 3) < 4 * std::sqrt(2.0 / 9 / R));

  const auto law5 = labelled_law(5, 0.7);
  std::map<std::vector<std::int64_t>, std::uint64_t> c5;
  std::map<std::string, std::uint64_t> shapes;
  for (std::uint64_t i = 0; i < R; ++i) {
    const auto t = sample_labelled_fragmentation(5, 0.7, rng);
    ++c5[labelled_key(t)];
    ++shapes[mass_tree_shape(t).canon];
  }
  CHECK(tv_distance(law5, c5, R) < 0.01);
  // forgetting labels gives the unlabelled law
  CHECK(tv_distance(class_law(5, 0.7), shapes, R) < 0.01);
}

TEST_CASE("recursive growth") {
  Rng rng = make_stream(11, 0);
  const auto one = grow_recursive_tree(1, 2.0, rng);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 1);

  for (int rep = 0; rep < 100; ++rep) {
    const auto snaps = grow_recursive_tree(60, 1.5, rng);
    REQUIRE(snaps.size() == 60);
    std::uint32_t prev = 0;
    for (std::size_t k = 0; k < snaps.size(); ++k) {
      const auto& s = snaps[k];
      CHECK(s.size() == k + 1);
      CHECK(invariants_hold(s));
      std::uint32_t h = 0;
      for (const auto& nd : s.nodes) h = std::max(h, nd.depth);
      CHECK(h >= prev);
      prev = h;
      // each snapshot restricts the next one
      if (k + 1 < snaps.size()) {
        auto next = labelled_key(snaps[k + 1]);
        next.pop_back();
        CHECK(next == labelled_key(s));
      }
    }
  }

  const std::uint64_t R = 1'000'000;
  for (std::size_t n : {3u, 4u}) {
    const auto law = labelled_law(n, 2.0);
    std::map<std::vector<std::int64_t>, std::uint64_t> grown, direct;
    Rng a = make_stream(12, n), b = make_stream(13, n);
    for (std::uint64_t i = 0; i < R; ++i) {
      ++grown[grow_recursive_parents(n, 2.0, a)];
      ++direct[labelled_key(sample_labelled_fragmentation(n, 2.0, b))];
    }
    CHECK(tv_distance(law, grown, R) < 0.01);
    CHECK(tv_distance(law, direct, R) < 0.01);
  }
}

TEST_CASE("spine step law") {
  CHECK(spine_step_pmf(2, 2.0, 2.0) == std::vector<double>{1.0});
  const auto p3 = spine_step_pmf(3, 2.0, 2.0);
  REQUIRE(p3.size() == 2);
  CHECK(std::abs(p3[0] - 0.5) < 1e-12);
  CHECK(std::abs(p3[1] - 0.5) < 1e-12);
  CHECK_THROWS_AS(spine_step_pmf(1, 2.0, 2.0), DomainError);
  CHECK_THROWS_AS(spine_step_pmf(5, 0.5, 2.0), DomainError);

  // tilted size-biasing of the Ewens block counts: μ(j) ∝ j^t E[C_j]
  for (double theta : {0.4, 1.0, 2.0, 5.0}) {
    for (double t : {1.0, 1.5, 2.0, 3.7}) {
      for (std::uint64_t k : {3u, 7u, 40u, 500u}) {
        const std::uint64_t m = k - 1;
        std::vector<double> oracle(m);
        double z = 0.0;
        for (std::uint64_t j = 1; j <= m; ++j) {
          oracle[j - 1] = std::pow(static_cast<double>(j), t) * expected_count(m, j, theta);
          z += oracle[j - 1];
        }
        const auto pmf = spine_step_pmf(k, t, theta);
        double total = 0.0, dev = 0.0;
        for (std::uint64_t j = 0; j < m; ++j) {
          total += pmf[j];
          dev = std::max(dev, std::abs(pmf[j] - oracle[j] / z));
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
        CHECK(dev < 1e-12);
        // κ_k(t) = log E Σ (A_i/m)^t
        CHECK(std::abs(kappa_k(k, t, theta) - std::log(z / std::pow(static_cast<double>(m), t))) < 1e-10);
      }
    }
  }
  CHECK(kappa_k(1, 2.0, 2.0) == 0.0);
  CHECK(std::abs(kappa_k(50, 1.0, 2.0)) < 1e-12);
}

TEST_CASE("spine step law approaches Beta(t, theta)") {
  const std::uint64_t k = 10'000;
  const auto pmf = spine_step_pmf(k, 2.0, 2.0);
  const auto m = static_cast<double>(k - 1);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    const double x = static_cast<double>(i + 1) / m;
    m1 += pmf[i] * x;
    m2 += pmf[i] * x * x;
  }
  CHECK(std::abs(m1 - 0.5) < 1e-2);
  CHECK(std::abs(m2 - 0.3) < 1e-2);
}

TEST_CASE("spine step sampler matches the exact pmf") {
  for (auto [k, t, theta] : {std::tuple<std::uint64_t, double, double>{12, 2.0, 1.5}, {200, 3.0, 0.5},
                             {5000, 2.0, 2.0}, {40'000, 4.0, 1.0}}) {
    SpineStepSampler s(t, theta);
    Rng rng = make_stream(14, k);
    const auto pmf = spine_step_pmf(k, t, theta);
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      const auto j = static_cast<double>(i + 1);
      e1 += pmf[i] * j;
      e2 += pmf[i] * j * j;
    }
    const double var = e2 - e1 * e1;
    const int R = 200'000;
    double a1 = 0.0;
    double lo_hits = 0.0;
    // a lower quantile as a second check on the shape
    double cum = 0.0;
    std::uint64_t q = 0;
    while (cum + pmf[q] < 0.25) cum += pmf[q++];
    const std::uint64_t jq = q;  // P(J <= jq) = cum
    for (int r = 0; r < R; ++r) {
      const std::uint64_t j = s.next_mass(k, rng);
      CHECK_UNARY(j >= 1);
      CHECK_UNARY(j <= k - 1);
      a1 += static_cast<double>(j);
      lo_hits += j <= jq;
    }
    CHECK(std::abs(a1 / R - e1) < 4 * std::sqrt(var / R));
    CHECK(std::abs(lo_hits / R - cum) < 4 * std::sqrt(cum * (1 - cum) / R) + 1e-12);
  }
}

TEST_CASE("two-stage tilted offspring agrees with rejection from the untilted law") {
  const std::uint64_t k = 8, m = k - 1;
  const double theta = 1.5, t = 2.5;
  const std::uint64_t R = 300'000;
  using Outcome = std::pair<std::uint64_t, std::vector<std::uint64_t>>;
  std::map<Outcome, std::uint64_t> two_stage, rejection;

  Rng a = make_stream(15, 0);
  SpineStepSampler steps(t, theta);
  for (std::uint64_t i = 0; i < R; ++i) {
    const auto sp = sample_spine(k, 1, steps, a);
    ++two_stage[{sp.path.masses[1], sp.siblings[0]}];
  }
  // tilted law: accept an Ewens draw with probability Σ (A_i/m)^t, then pick child i ∝ A_i^t
  Rng b = make_stream(15, 1);
  std::uint64_t got = 0;
  while (got < R) {
    const auto blocks = crp_table_sizes(m, theta, b);
    double w = 0.0;
    for (auto x : blocks) w += std::pow(static_cast<double>(x) / static_cast<double>(m), t);
    if (uniform01(b) >= w) continue;
    double u = uniform01(b) * w, acc = 0.0;
    std::size_t pick = blocks.size() - 1;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      acc += std::pow(static_cast<double>(blocks[i]) / static_cast<double>(m), t);
      if (u < acc) {
        pick = i;
        break;
      }
    }
    std::vector<std::uint64_t> sib;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      if (i != pick) sib.push_back(blocks[i]);
    std::sort(sib.begin(), sib.end(), std::greater<>());
    ++rejection[{blocks[pick], sib}];
    ++got;
  }
  CHECK(tv_two_sample(two_stage, rejection, R) < 0.015);

  // and both against the exact joint law μ(j) · ESF(siblings; m − j)
  const auto pmf = spine_step_pmf(k, t, theta);
  std::map<Outcome, double> exact;
  for (auto& [o, c] : rejection) {
    const auto& [j, sib] = o;
    exact[o] = pmf[j - 1] * (sib.empty() ? 1.0 : esf(sib, theta));
  }
  double total = 0.0;
  for (auto& [o, p] : exact) total += p;
  CHECK(total > 0.999);
  CHECK(tv_distance(exact, two_stage, R) < 0.01);
  CHECK(tv_distance(exact, rejection, R) < 0.01);
}

TEST_CASE("spine paths") {
  Rng rng = make_stream(16, 0);
  // cemetery from the start
  const auto c = sample_spine(1, 2.0, 3.0, 5, rng);
  CHECK(c.path.masses == std::vector<std::uint64_t>(6, 1));
  CHECK(c.path.S == std::vector<double>(6, 0.0));
  CHECK(c.path.kappa_sum == 0.0);

  for (int rep = 0; rep < 50; ++rep) {
    const auto sp = sample_spine(20'000, 1.2, 2.5, 12, rng);
    const auto& p = sp.path;
    REQUIRE(p.masses.size() == 13);
    REQUIRE(p.displacements.size() == 12);
    double kap = 0.0;
    for (std::size_t l = 1; l <= 12; ++l) {
      const auto k = p.masses[l - 1];
      if (k >= 2) {
        CHECK(std::abs(p.displacements[l - 1] - std::log(static_cast<double>(k - 1) / static_cast<double>(p.masses[l]))) <
              1e-12);
        kap += kappa_k(k, 2.5, 1.2);
        std::uint64_t s = p.masses[l];
        for (auto x : sp.siblings[l - 1]) s += x;
        CHECK(s == k - 1);
        CHECK(std::is_sorted(sp.siblings[l - 1].rbegin(), sp.siblings[l - 1].rend()));
      } else {
        CHECK(p.masses[l] == 1);
        CHECK(p.displacements[l - 1] == 0.0);
        CHECK(sp.siblings[l - 1].empty());
      }
      CHECK(p.S[l] >= p.S[l - 1]);
      CHECK(std::abs(p.S[l] - p.S[l - 1] - p.displacements[l - 1]) < 1e-12);
    }
    CHECK(std::abs(p.kappa_sum - kap) < 1e-9);
  }
  CHECK_THROWS_AS(sample_spine(10, 2.0, 0.5, 3, rng), DomainError);
}

TEST_CASE("t = 1 spine is the size-biased child") {
  const std::uint64_t k = 30, m = k - 1;
  const double theta = 0.8;
  const auto pmf = spine_step_pmf(k, 1.0, theta);
  for (std::uint64_t j = 1; j <= m; ++j)
    CHECK(std::abs(pmf[j - 1] - static_cast<double>(j) * expected_count(m, j, theta) / static_cast<double>(m)) < 1e-12);
}

TEST_CASE("additive martingale: exact small case and t = 1") {
  // n = 3: root splits 2 as {1,1} (prob 2/3 at θ = 2) or {2} (prob 1/3)
  const auto kappa = kappa_table(3, 2.0, 2.0);
  CHECK(std::abs(kappa[3] - std::log(2.0 / 3.0)) < 1e-12);
  const auto split11 = mass_tree_from_parents({-1, 0, 0});
  const auto split2 = mass_tree_from_parents({-1, 0, 1});
  const double z11 = additive_martingale(split11, 2.0, 1, kappa);
  const double z2 = additive_martingale(split2, 2.0, 1, kappa);
  CHECK(std::abs(z11 - 0.75) < 1e-12);
  CHECK(std::abs(z2 - 1.5) < 1e-12);
  CHECK(std::abs(2.0 / 3 * z11 + 1.0 / 3 * z2 - 1.0) < 1e-12);
  CHECK(additive_martingale(split11, 2.0, 0, kappa) == 1.0);
  CHECK_THROWS_AS(additive_martingale(split11, 2.0, 1, std::vector<double>{0.0}), DomainError);

  Rng rng = make_stream(17, 0);
  const auto k1 = kappa_table(2000, 1.0, 1.7);
  for (int rep = 0; rep < 200; ++rep) {
    const auto t = sample_fragmentation(2000, 1.7, rng);
    for (std::uint32_t h : {0u, 1u, 3u, 10u, 40u}) CHECK(std::abs(additive_martingale(t, 1.0, h, k1) - 1.0) < 1e-12);
  }
  Rng rng2 = make_stream(17, 1);
  const auto r = many_to_one_check(40, 2.0, 1.0, 5, 2000, rng2);
  CHECK(r.max_abs_dev_t1 < 1e-12);
  CHECK(std::abs(r.lhs - 1.0) < 1e-12);
}

TEST_CASE("many-to-one: mean of the martingale is one (n = 50, h = 4)") {
  Rng rng = make_stream(18, 0);
  const auto r = many_to_one_check(50, 2.0, 2.0, 4, 20'000, rng);
  CHECK(std::abs(r.lhs - 1.0) < 4 * r.lhs_se);
  CHECK(r.rhs == 1.0);
  CHECK(r.rhs_se == 0.0);
  const double se = std::sqrt(r.count_direct_se * r.count_direct_se + r.count_spine_se * r.count_spine_se);
  CHECK(std::abs(r.count_direct - r.count_spine) < 4 * se);
  CHECK_THROWS_AS(many_to_one_check(50, 2.0, 2.0, 4, 0, rng), DomainError);
}
