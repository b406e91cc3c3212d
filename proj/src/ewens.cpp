#include "fragtree/ewens.hpp"

#include "fragtree/constants.hpp"
#include "fragtree/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>

namespace fragtree {
namespace {

void require_theta(double theta) {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw DomainError("theta must be > 0");
}

// Fenwick tree over table sizes, used once the restaurant has many tables.
class TableIndex {
 public:
  void rebuild(const std::vector<std::uint64_t>& sizes) {
    cap_ = 1;
    while (cap_ < sizes.size() * 2) cap_ <<= 1;
    tree_.assign(cap_ + 1, 0);
    for (std::size_t i = 0; i < sizes.size(); ++i) add(i, sizes[i]);
  }
  std::size_t capacity() const { return cap_; }
  void add(std::size_t i, std::uint64_t delta) {
    for (std::size_t k = i + 1; k <= cap_; k += k & (~k + 1)) tree_[k] += delta;
  }
  // Smallest index whose prefix sum exceeds r.
  std::size_t find(std::uint64_t r) const {
    std::size_t pos = 0;
    for (std::size_t step = cap_; step > 0; step >>= 1) {
      if (pos + step <= cap_ && tree_[pos + step] <= r) {
        pos += step;
        r -= tree_[pos];
      }
    }
    return pos;
  }

 private:
  std::size_t cap_ = 0;
  std::vector<std::uint64_t> tree_;
};

constexpr std::size_t kLinearScanTables = 64;

}  // namespace

std::uint64_t CountVector::count(std::uint64_t j) const {
  auto it = counts.find(j);
  return it == counts.end() ? 0 : it->second;
}

std::uint64_t CountVector::num_blocks() const {
  std::uint64_t b = 0;
  for (auto [j, c] : counts) b += c;
  return b;
}

bool CountVector::feasible() const {
  std::uint64_t total = 0;
  for (auto [j, c] : counts) {
    if (j == 0 || c == 0) return false;
    total += j * c;
  }
  return total == m;
}

std::vector<std::uint64_t> CountVector::block_sizes() const {
  std::vector<std::uint64_t> out;
  for (auto it = counts.rbegin(); it != counts.rend(); ++it)
    out.insert(out.end(), it->second, it->first);
  return out;
}

std::vector<std::uint64_t> CountVector::dense() const {
  std::vector<std::uint64_t> out(m, 0);
  for (auto [j, c] : counts)
    if (j >= 1 && j <= m) out[j - 1] = c;
  return out;
}

CountVector CountVector::from_dense(const std::vector<std::uint64_t>& c) {
  CountVector cv;
  cv.m = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] == 0) continue;
    cv.counts[i + 1] = c[i];
    cv.m += (i + 1) * c[i];
  }
  return cv;
}

CountVector CountVector::from_blocks(const std::vector<std::uint64_t>& sizes) {
  CountVector cv;
  for (auto a : sizes) {
    if (a == 0) throw StructureError("block of size zero");
    ++cv.counts[a];
    cv.m += a;
  }
  return cv;
}

double log_rising_factorial(double theta, std::uint64_t k) {
  if (k == 0) return 0.0;
  return log_gamma(theta + static_cast<double>(k)) - log_gamma(theta);
}

Rational rising_factorial(const Rational& theta, std::uint64_t k) {
  Rational r = 1;
  for (std::uint64_t i = 0; i < k; ++i) r *= theta + Rational(i);
  return r;
}

double ewens_pmf(const CountVector& cv, double theta) {
  require_theta(theta);
  if (!cv.feasible()) throw StructureError("count vector is not a partition of m");
  if (cv.m == 0) return 1.0;
  const double lt = std::log(theta);
  double lp = log_gamma(static_cast<double>(cv.m) + 1.0) - log_rising_factorial(theta, cv.m);
  for (auto [j, c] : cv.counts) {
    const auto cd = static_cast<double>(c);
    lp += cd * (lt - std::log(static_cast<double>(j))) - log_gamma(cd + 1.0);
  }
  return std::exp(lp);
}

Rational ewens_pmf_exact(const CountVector& cv, const RationalParam& theta) {
  if (theta.num <= 0) throw DomainError("theta must be > 0");
  if (!cv.feasible()) throw StructureError("count vector is not a partition of m");
  const Rational th = theta.value();
  Rational p = Rational(factorial(static_cast<unsigned>(cv.m))) / rising_factorial(th, cv.m);
  for (auto [j, c] : cv.counts) {
    Rational term = 1;
    for (std::uint64_t i = 0; i < c; ++i) term *= th / Rational(j);
    p *= term / Rational(factorial(static_cast<unsigned>(c)));
  }
  return p;
}

std::vector<std::uint64_t> crp_table_sizes(std::uint64_t m, double theta, Rng& rng) {
  require_theta(theta);
  std::vector<std::uint64_t> sizes;
  TableIndex index;
  bool indexed = false;
  for (std::uint64_t t = 1; t <= m; ++t) {
    const double seated = static_cast<double>(t - 1);
    if (t == 1 || uniform01(rng) * (theta + seated) < theta) {
      sizes.push_back(1);
      if (indexed) {
        if (sizes.size() > index.capacity()) {
          index.rebuild(sizes);
        } else {
          index.add(sizes.size() - 1, 1);
        }
      } else if (sizes.size() > kLinearScanTables) {
        index.rebuild(sizes);
        indexed = true;
      }
      continue;
    }
    const std::uint64_t r = uniform_below(rng, t - 1);
    std::size_t k = 0;
    if (indexed) {
      k = index.find(r);
      index.add(k, 1);
    } else {
      std::uint64_t acc = sizes[0];
      while (acc <= r) acc += sizes[++k];
    }
    ++sizes[k];
  }
  return sizes;
}

CountVector sample_ewens_crp(std::uint64_t m, double theta, Rng& rng) {
  return CountVector::from_blocks(crp_table_sizes(m, theta, rng));
}

double sample_beta_1_theta(double theta, Rng& rng) {
  return -std::expm1(std::log(uniform01(rng)) / theta);
}

std::vector<std::uint64_t> sample_ewens_blocks(std::uint64_t m, double theta, Rng& rng) {
  if (m <= kCrpMassLimit) return crp_table_sizes(m, theta, rng);
  require_theta(theta);
  // The block of a uniformly chosen element has size 1 + BetaBinomial(rem−1; 1, θ);
  // removing it leaves an Ewens(rem−J, θ) partition.
  std::vector<std::uint64_t> sizes;
  std::uint64_t rem = m;
  while (rem > 0) {
    if (rem <= kCrpMassLimit) {
      auto tail = crp_table_sizes(rem, theta, rng);
      sizes.insert(sizes.end(), tail.begin(), tail.end());
      break;
    }
    const double v = sample_beta_1_theta(theta, rng);
    std::binomial_distribution<std::uint64_t> bin(rem - 1, v);
    const std::uint64_t j = 1 + bin(rng);
    sizes.push_back(j);
    rem -= j;
  }
  return sizes;
}

double mixed_factorial_moment(std::uint64_t m, double theta,
                              const std::vector<std::pair<std::uint64_t, std::uint64_t>>& spec) {
  require_theta(theta);
  std::uint64_t load = 0;
  double lp = 0.0;
  for (auto [j, a] : spec) {
    if (j == 0) throw DomainError("mixed_factorial_moment: block size j must be >= 1");
    if (a == 0) continue;
    load += j * a;
    if (load > m) return 0.0;
    lp += static_cast<double>(a) * (std::log(theta) - std::log(static_cast<double>(j)));
  }
  const auto md = static_cast<double>(m);
  const auto ld = static_cast<double>(load);
  lp += log_gamma(md + 1.0) - log_gamma(md - ld + 1.0) + log_rising_factorial(theta, m - load) -
        log_rising_factorial(theta, m);
  return std::exp(lp);
}

StickWeights sample_gem(double theta, std::size_t trunc, Rng& rng) {
  require_theta(theta);
  if (trunc == 0) throw DomainError("sample_gem: trunc must be >= 1");
  StickWeights sw;
  sw.weights.resize(trunc);
  for (auto& p : sw.weights) {
    const double v = sample_beta_1_theta(theta, rng);
    p = v * sw.residual;
    sw.residual *= 1.0 - v;
  }
  return sw;
}

std::vector<CountVector> enumerate_partitions(std::uint64_t m) {
  if (m > 40) throw BudgetError("enumerate_partitions: m > 40");
  std::vector<CountVector> out;
  std::vector<std::uint64_t> parts;
  std::function<void(std::uint64_t, std::uint64_t)> rec = [&](std::uint64_t rem, std::uint64_t max) {
    if (rem == 0) {
      out.push_back(CountVector::from_blocks(parts));
      return;
    }
    for (std::uint64_t a = std::min(rem, max); a >= 1; --a) {
      parts.push_back(a);
      rec(rem - a, a);
      parts.pop_back();
    }
  };
  rec(m, m);
  return out;
}

}  // namespace fragtree
