#include "fragtree/heights.hpp"

#include "fragtree/constants.hpp"
#include "fragtree/ewens.hpp"
#include "fragtree/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fragtree {
namespace {

void require_theta(double theta) {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw DomainError("theta must be > 0");
}

template <class T>
std::vector<T> exp_impl(const std::vector<T>& g) {
  if (g.empty()) return {};
  if (g[0] != T(0)) throw DomainError("series_exp: constant term must be zero");
  const std::size_t n = g.size();
  std::vector<T> e(n, T(0));
  e[0] = T(1);
  for (std::size_t k = 1; k < n; ++k) {
    T acc(0);
    for (std::size_t i = 1; i <= k; ++i) {
      if (g[i] == T(0)) continue;
      acc += T(i) * g[i] * e[k - i];
    }
    e[k] = acc / T(k);
  }
  return e;
}

}  // namespace

Series series_exp(const Series& g) { return exp_impl(g); }
std::vector<Rational> series_exp(const std::vector<Rational>& g) { return exp_impl(g); }

Series series_mul(const Series& a, const Series& b, std::size_t deg) {
  Series c(deg + 1, 0.0);
  for (std::size_t i = 0; i < a.size() && i <= deg; ++i)
    for (std::size_t j = 0; j < b.size() && i + j <= deg; ++j) c[i + j] += a[i] * b[j];
  return c;
}

double HeightCdfTable::cdf(std::size_t n, std::size_t h) const {
  if (n == 0 || n > N) throw DomainError("height table: n = " + std::to_string(n) + " outside 1.." + std::to_string(N));
  if (h > H) {
    if (rows_computed >= H) throw DomainError("height table: h beyond the computed range");
    h = H;
  }
  return q[n][h];
}

double HeightCdfTable::pmf(std::size_t n, std::size_t h) const {
  return h == 0 ? cdf(n, 0) : cdf(n, h) - cdf(n, h - 1);
}

double HeightCdfTable::mean(std::size_t n) const {
  // E[H] = Σ_{h>=0} P(H > h)
  double m = 0.0;
  for (std::size_t h = 0; h <= H; ++h) m += 1.0 - q[n][h];
  return m;
}

HeightCdfTable exact_height_cdf(std::size_t N, std::size_t H, double theta, const HeightLimits& lim) {
  require_theta(theta);
  if (N == 0) throw DomainError("exact_height_cdf: N must be >= 1");
  if (N > lim.max_n || H > lim.max_h)
    throw BudgetError("exact_height_cdf: N = " + std::to_string(N) + ", H = " + std::to_string(H) +
                      " exceeds the budget (" + std::to_string(lim.max_n) + ", " + std::to_string(lim.max_h) + ")");
  HeightCdfTable tab;
  tab.theta = theta;
  tab.N = N;
  tab.H = H;
  tab.q.assign(N + 1, std::vector<double>(H + 1, 0.0));
  tab.q[1][0] = 1.0;

  // m!/θ^{(m)}
  std::vector<double> norm(N, 1.0);
  for (std::size_t m = 1; m < N; ++m) norm[m] = norm[m - 1] * static_cast<double>(m) / (theta + static_cast<double>(m) - 1.0);

  bool settled = false;
  Series g(N, 0.0);
  for (std::size_t h = 1; h <= H; ++h) {
    if (settled) {
      for (std::size_t n = 1; n <= N; ++n) tab.q[n][h] = tab.q[n][h - 1];
      continue;
    }
    for (std::size_t j = 1; j < N; ++j) g[j] = theta * tab.q[j][h - 1] / static_cast<double>(j);
    const Series e = series_exp(g);
    for (std::size_t m = 0; m < N; ++m) tab.q[m + 1][h] = std::clamp(norm[m] * e[m], 0.0, 1.0);
    tab.rows_computed = h;
    if (1.0 - tab.q[N][h] < lim.stop_tail) settled = true;
  }
  return tab;
}

ExactHeightCdfTable exact_height_cdf(std::size_t N, std::size_t H, const RationalParam& theta) {
  if (theta.num <= 0) throw DomainError("theta must be > 0");
  if (N == 0) throw DomainError("exact_height_cdf: N must be >= 1");
  if (N > 64 || H > 64) throw BudgetError("exact_height_cdf: rational mode is limited to N, H <= 64");
  const Rational th = theta.value();
  ExactHeightCdfTable tab;
  tab.theta = theta;
  tab.N = N;
  tab.H = H;
  tab.q.assign(N + 1, std::vector<Rational>(H + 1, Rational(0)));
  tab.q[1][0] = 1;
  std::vector<Rational> norm(N, Rational(1));
  for (std::size_t m = 1; m < N; ++m) norm[m] = norm[m - 1] * Rational(m) / (th + Rational(m - 1));
  std::vector<Rational> g(N, Rational(0));
  for (std::size_t h = 1; h <= H; ++h) {
    for (std::size_t j = 1; j < N; ++j) g[j] = th * tab.q[j][h - 1] / Rational(j);
    const auto e = series_exp(g);
    for (std::size_t m = 0; m < N; ++m) tab.q[m + 1][h] = norm[m] * e[m];
  }
  return tab;
}

double key_identity_residual(std::size_t h, const HeightCdfTable& table, std::size_t N) {
  if (h == 0) throw DomainError("key_identity_residual: h must be >= 1");
  if (table.N < N + 1) throw DomainError("key_identity_residual: table does not cover n = N + 1");
  const double theta = table.theta;
  // F_h from row h: [z^m] F_h = θ^{(m)}/m! q_{m+1}(h); the right side from row h−1
  Series f(N + 1, 0.0), phi(N + 1, 0.0), one_minus(N + 1, 0.0);
  double w = 1.0;
  for (std::size_t m = 0; m <= N; ++m) {
    if (m > 0) w *= (theta + static_cast<double>(m) - 1.0) / static_cast<double>(m);
    f[m] = w * table.cdf(m + 1, h);
  }
  for (std::size_t j = 1; j <= N; ++j) phi[j] = -theta * (1.0 - table.cdf(j, h - 1)) / static_cast<double>(j);
  one_minus[0] = 1.0;
  for (std::size_t k = 1; k <= N; ++k)
    one_minus[k] = one_minus[k - 1] * (static_cast<double>(k) - 1.0 - theta) / static_cast<double>(k);
  const Series lhs = series_mul(one_minus, f, N);
  const Series rhs = series_exp(phi);
  double worst = 0.0;
  for (std::size_t k = 0; k <= N; ++k) worst = std::max(worst, std::abs(lhs[k] - rhs[k]));
  return worst;
}

double key_identity_residual(std::size_t h, double theta, std::size_t N) {
  HeightLimits lim;
  lim.max_n = std::max(lim.max_n, N);
  lim.max_h = std::max(lim.max_h, h);
  lim.max_n = std::max(lim.max_n, N + 1);
  return key_identity_residual(h, exact_height_cdf(N + 1, h, theta, lim), N);
}

double neg_binomial_pmf(std::uint64_t m, double r, double theta) {
  require_theta(theta);
  if (!(r >= 0.0 && r < 1.0)) throw DomainError("neg_binomial_pmf: r must lie in [0,1)");
  if (r == 0.0) return m == 0 ? 1.0 : 0.0;
  const auto md = static_cast<double>(m);
  return std::exp(theta * std::log1p(-r) + log_rising_factorial(theta, m) - log_gamma(md + 1.0) + md * std::log(r));
}

double neg_binomial_mean(double r, double theta) {
  require_theta(theta);
  if (!(r >= 0.0 && r < 1.0)) throw DomainError("neg_binomial_mean: r must lie in [0,1)");
  return theta * r / (1.0 - r);
}

double neg_binomial_var(double r, double theta) {
  require_theta(theta);
  if (!(r >= 0.0 && r < 1.0)) throw DomainError("neg_binomial_var: r must lie in [0,1)");
  return theta * r / ((1.0 - r) * (1.0 - r));
}

double r_n(std::uint64_t n, double theta) {
  require_theta(theta);
  if (n == 0) throw DomainError("r_n: n must be >= 1");
  const auto m = static_cast<double>(n - 1);
  return m / (m + theta);
}

ThresholdDiagnostic threshold_diagnostic(std::uint64_t n, std::size_t h, double theta,
                                         const HeightCdfTable& table, double tail_tol) {
  require_theta(theta);
  if (h == 0) throw DomainError("threshold_diagnostic: h must be >= 1");
  if (n == 0) throw DomainError("threshold_diagnostic: n must be >= 1");
  ThresholdDiagnostic d;
  d.n = n;
  d.h = h;
  d.r = r_n(n, theta);
  d.J = static_cast<std::size_t>(20 * n);
  if (table.N < d.J + 1)
    throw BudgetError("threshold_diagnostic: coverage error, table has N = " + std::to_string(table.N) +
                      " but needs N >= " + std::to_string(d.J + 1));
  const double r = d.r;
  const auto Jd = static_cast<double>(d.J);
  d.phi_tail_bound = r == 0.0 ? 0.0 : std::exp((Jd + 1.0) * std::log(r)) / ((Jd + 1.0) * (1.0 - r));
  if (d.phi_tail_bound > tail_tol) throw BudgetError("threshold_diagnostic: coverage error, truncation tail too large");
  double rj = 1.0;
  for (std::size_t j = 1; j <= d.J; ++j) {
    rj *= r;
    d.phi += (1.0 - table.cdf(j, h - 1)) * rj / static_cast<double>(j);
  }
  d.poissonized = std::exp(-theta * d.phi);

  double mass = 0.0, below_n1 = 0.0, below_n2 = 0.0;
  for (std::size_t m = 0; m <= d.J; ++m) {
    const double w = neg_binomial_pmf(m, r, theta);
    mass += w;
    d.mixture += w * table.cdf(m + 1, h);
    if (m + 1 <= n) below_n1 += w;      // M <= n−1
    if (m + 2 <= n) below_n2 += w;      // M <= n−2
  }
  d.mixture_tail_bound = std::max(0.0, 1.0 - mass);
  d.q_n = table.cdf(n, h);
  // q_{m+1}(h) is nonincreasing in m
  d.upper = std::min(1.0, (d.mixture + d.mixture_tail_bound) / below_n1);
  const double above = 1.0 - below_n2;  // P(M >= n−1)
  d.lower = std::max(0.0, (d.mixture - below_n2) / above);
  return d;
}

std::uint32_t height(const MassTree& t) {
  std::uint32_t h = 0;
  for (const auto& node : t.nodes) h = std::max(h, node.depth);
  return h;
}

double falling_factorial(std::uint64_t k, unsigned s) {
  if (s > k) return 0.0;
  double f = 1.0;
  for (unsigned i = 0; i < s; ++i) f *= static_cast<double>(k - i);
  return f;
}

std::vector<double> s_mass_profile(const MassTree& t, unsigned s) {
  if (s < 2) throw DomainError("s_mass_profile: s must be >= 2");
  std::vector<double> v(height(t) + 1, 0.0);
  for (const auto& node : t.nodes) v[node.depth] += falling_factorial(node.mass - 1, s);
  return v;
}

std::uint64_t macroscopic_threshold(std::uint64_t n, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0,1)");
  if (n <= 1) return 0;
  return static_cast<std::uint64_t>(std::ceil(std::pow(static_cast<double>(n - 1), 1.0 - delta)));
}

std::uint64_t macroscopic_count(const MassTree& t, double delta) {
  const std::uint64_t thr = macroscopic_threshold(t.root_mass, delta);
  std::uint64_t c = 0;
  for (const auto& child : t.children(0))
    if (child.mass >= thr) ++c;
  return c;
}

TreeStats tree_stats(const MassTree& t, const std::vector<unsigned>& s_values, double delta) {
  TreeStats st;
  st.n = t.root_mass;
  st.height = height(t);
  st.s_values = s_values;
  for (auto s : s_values) st.smass.push_back(s_mass_profile(t, s));
  st.delta = delta;
  st.n0 = macroscopic_count(t, delta);
  return st;
}

TreeStats sample_tree_stats(std::uint64_t n, double theta, Rng& rng, const std::vector<unsigned>& s_values,
                            double delta) {
  for (auto s : s_values)
    if (s < 2) throw DomainError("s must be >= 2");
  TreeStats st;
  st.n = n;
  st.s_values = s_values;
  st.smass.assign(s_values.size(), std::vector<double>(1, 0.0));
  st.delta = delta;
  const std::uint64_t thr = macroscopic_threshold(n, delta);
  stream_fragmentation(n, theta, rng, [&](std::uint64_t mass, std::uint32_t depth, std::uint64_t) {
    st.height = std::max(st.height, depth);
    for (std::size_t i = 0; i < s_values.size(); ++i) {
      auto& prof = st.smass[i];
      if (prof.size() <= depth) prof.resize(depth + 1, 0.0);
      prof[depth] += falling_factorial(mass - 1, s_values[i]);
    }
    if (depth == 1 && mass >= thr) ++st.n0;
  });
  return st;
}

}  // namespace fragtree
