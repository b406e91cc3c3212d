#include "fragtree/montecarlo.hpp"

#include "fragtree/constants.hpp"
#include "fragtree/errors.hpp"
#include "fragtree/fragmentation.hpp"
#include "fragtree/heights.hpp"
#include "fragtree/random.hpp"

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <memory>
#include <random>

namespace fragtree {
namespace {

const std::pair<ExperimentKind, const char*> kKindNames[] = {
    {ExperimentKind::height_ratio, "height_ratio"},
    {ExperimentKind::smass, "smass"},
    {ExperimentKind::macroscopic, "macroscopic"},
    {ExperimentKind::many_to_one, "many_to_one"},
    {ExperimentKind::spine_beta_limit, "spine_beta_limit"},
    {ExperimentKind::barrier, "barrier"},
};

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::nan("");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::uint32_t max_h(const ExperimentParams& p) {
  return p.hs.empty() ? 0 : *std::max_element(p.hs.begin(), p.hs.end());
}

// Read-only data shared by all replicas of one n.
struct Shared {
  std::vector<double> kappa;  // many_to_one
  double a = 0.0;             // barrier
};

// Per-thread scratch. The spine sampler only caches deterministic tables, so
// sharing it between replicas does not change any draw.
struct Workspace {
  std::unique_ptr<SpineStepSampler> spine;
};

std::vector<std::pair<std::string, double>> run_replica(const ExperimentConfig& cfg, std::uint64_t n,
                                                        const Shared& shared, Workspace& ws, Rng& rng) {
  const auto& p = cfg.params;
  std::vector<std::pair<std::string, double>> out;
  switch (cfg.kind) {
    case ExperimentKind::height_ratio: {
      const TreeStats st = sample_tree_stats(n, cfg.theta, rng, {}, 0.5);
      out.emplace_back("height", st.height);
      if (n >= 2) out.emplace_back("height_over_log_n", st.height / std::log(static_cast<double>(n)));
      break;
    }
    case ExperimentKind::smass: {
      const TreeStats st = sample_tree_stats(n, cfg.theta, rng, p.s, 0.5);
      out.emplace_back("height", st.height);
      for (std::size_t i = 0; i < p.s.size(); ++i)
        for (unsigned l = 0; l <= p.levels; ++l) {
          const auto& prof = st.smass[i];
          out.emplace_back("V" + std::to_string(p.s[i]) + "_l" + std::to_string(l), l < prof.size() ? prof[l] : 0.0);
        }
      break;
    }
    case ExperimentKind::macroscopic: {
      const TreeStats st = sample_tree_stats(n, cfg.theta, rng, {}, p.delta);
      out.emplace_back("N0", static_cast<double>(st.n0));
      out.emplace_back("height", st.height);
      break;
    }
    case ExperimentKind::many_to_one: {
      const MassTree tree = sample_fragmentation(n, cfg.theta, rng);
      out.emplace_back("Z_tilde", additive_martingale(tree, p.t, p.h, shared.kappa));
      double c = 0.0;
      for (const auto& node : tree.nodes)
        if (node.depth == p.h && node.mass >= 2) c += 1.0;
      out.emplace_back("count_h", c);
      const SpineSample sp = sample_spine(n, p.h, *ws.spine, rng, {.siblings = false, .kappa = true});
      const double w = std::exp(p.t * sp.path.S.back() + sp.path.kappa_sum);
      out.emplace_back("spine_count_weight", sp.path.masses.back() >= 2 ? w : 0.0);
      break;
    }
    case ExperimentKind::spine_beta_limit: {
      const std::uint64_t j = ws.spine->next_mass(n, rng);
      const double x = static_cast<double>(j) / static_cast<double>(n - 1);
      out.emplace_back("ratio", x);
      out.emplace_back("ratio_sq", x * x);
      break;
    }
    case ExperimentKind::barrier: {
      const std::uint32_t hmax = max_h(p);
      const SpineSample sp = sample_spine(n, hmax, *ws.spine, rng, {.siblings = false, .kappa = false});
      bool below = true;
      std::uint32_t r = 0;
      for (auto h : p.hs) {
        for (; r <= h; ++r) below = below && sp.path.S[r] - shared.a * r <= 0.0;
        const double y = sp.path.S[h] - shared.a * h;
        const bool hit = below && y >= -p.omega - 1.0 && y <= -p.omega;
        out.emplace_back("hit_h" + std::to_string(h), hit ? 1.0 : 0.0);
        out.emplace_back("hit_wide_h" + std::to_string(h), below && y >= -p.omega - 1.0 ? 1.0 : 0.0);
      }
      break;
    }
  }
  return out;
}

Shared make_shared_data(const ExperimentConfig& cfg, std::uint64_t n) {
  Shared s;
  if (cfg.kind == ExperimentKind::many_to_one) s.kappa = kappa_table(n, cfg.params.t, cfg.theta);
  if (cfg.kind == ExperimentKind::barrier) s.a = -brw_exponents(cfg.params.t, cfg.theta).kappa_prime;
  return s;
}

Workspace make_workspace(const ExperimentConfig& cfg) {
  Workspace ws;
  if (cfg.kind == ExperimentKind::many_to_one || cfg.kind == ExperimentKind::spine_beta_limit ||
      cfg.kind == ExperimentKind::barrier)
    ws.spine = std::make_unique<SpineStepSampler>(cfg.params.t, cfg.theta);
  return ws;
}

void summarize(ExperimentResult& res) {
  const auto& cfg = res.config;
  for (std::size_t ni = 0; ni < cfg.ns.size(); ++ni) {
    std::map<std::string, std::vector<double>> values;
    for (std::uint64_t i = 0; i < cfg.reps; ++i)
      for (const auto& [name, v] : res.records[ni * cfg.reps + i].metrics) values[name].push_back(v);
    for (auto& [name, vals] : values) {
      SummaryRow row;
      row.n = cfg.ns[ni];
      row.metric = name;
      row.count = vals.size();
      // sort first so the sums do not depend on completion order
      std::sort(vals.begin(), vals.end());
      double sum = 0.0;
      for (auto v : vals) sum += v;
      row.mean = sum / static_cast<double>(vals.size());
      double ss = 0.0;
      for (auto v : vals) ss += (v - row.mean) * (v - row.mean);
      row.se = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1) / static_cast<double>(vals.size())) : 0.0;
      row.median = quantile(vals, 0.5);
      row.q25 = quantile(vals, 0.25);
      row.q75 = quantile(vals, 0.75);
      res.summary.push_back(std::move(row));
    }
  }
}

ExperimentResult run_impl(const ExperimentConfig& cfg, bool parallel) {
  validate_config(cfg);
  ExperimentResult res;
  res.config = cfg;
  const std::uint64_t jobs = cfg.ns.size() * cfg.reps;
  res.records.resize(jobs);
  std::vector<Shared> shared;
  for (auto n : cfg.ns) shared.push_back(make_shared_data(cfg, n));

  auto job = [&](std::uint64_t idx, Workspace& ws) {
    const std::uint64_t ni = idx / cfg.reps;
    const std::uint64_t n = cfg.ns[ni];
    Rng rng = make_stream(cfg.seed, idx);
    ReplicaRecord& rec = res.records[idx];
    rec.n = n;
    rec.replica = idx % cfg.reps;
    rec.stream_id = idx;
    rec.metrics = run_replica(cfg, n, shared[ni], ws, rng);
  };

  if (!parallel) {
    Workspace ws = make_workspace(cfg);
    for (std::uint64_t idx = 0; idx < jobs; ++idx) job(idx, ws);
  } else {
    std::exception_ptr failure;
#pragma omp parallel
    {
      Workspace ws = make_workspace(cfg);
#pragma omp for schedule(dynamic)
      for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(jobs); ++idx) {
        try {
          job(static_cast<std::uint64_t>(idx), ws);
        } catch (...) {
#pragma omp critical(fragtree_mc_failure)
          if (!failure) failure = std::current_exception();
        }
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  summarize(res);
  return res;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  for (auto [kind, name] : kKindNames)
    if (kind == k) return name;
  throw InternalError("unknown experiment kind");
}

ExperimentKind parse_kind(const std::string& s) {
  for (auto [kind, name] : kKindNames)
    if (s == name) return kind;
  throw DomainError("unknown experiment kind '" + s + "'");
}

ExperimentConfig parse_config(const std::string& json) {
  ExperimentConfig cfg;
  try {
    const auto j = nlohmann::json::parse(json);
    cfg.kind = parse_kind(j.at("kind").get<std::string>());
    cfg.theta = j.at("theta").get<double>();
    cfg.ns = j.at("ns").get<std::vector<std::uint64_t>>();
    cfg.reps = j.at("reps").get<std::uint64_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("params")) {
      const auto& p = j.at("params");
      if (p.contains("s")) {
        if (p.at("s").is_array()) {
          cfg.params.s = p.at("s").get<std::vector<unsigned>>();
        } else {
          cfg.params.s = {p.at("s").get<unsigned>()};
        }
      }
      cfg.params.levels = get_or(p, "levels", cfg.params.levels);
      cfg.params.delta = get_or(p, "delta", cfg.params.delta);
      cfg.params.t = get_or(p, "t", cfg.params.t);
      cfg.params.omega = get_or(p, "omega", cfg.params.omega);
      cfg.params.node_cap = get_or(p, "node_cap", cfg.params.node_cap);
      if (p.contains("h")) {
        if (p.at("h").is_array()) {
          cfg.params.hs = p.at("h").get<std::vector<std::uint32_t>>();
        } else {
          cfg.params.h = p.at("h").get<std::uint32_t>();
        }
      }
      if (p.contains("hs")) cfg.params.hs = p.at("hs").get<std::vector<std::uint32_t>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("invalid experiment config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  const auto& p = cfg.params;
  if (!(cfg.theta > 0.0) || !std::isfinite(cfg.theta)) throw DomainError("config: theta must be > 0");
  if (cfg.ns.empty()) throw DomainError("config: ns must be nonempty");
  if (cfg.reps == 0) throw DomainError("config: reps must be >= 1");
  for (auto n : cfg.ns)
    if (n == 0) throw DomainError("config: every n must be >= 1");
  switch (cfg.kind) {
    case ExperimentKind::smass:
      if (p.s.empty()) throw DomainError("config: smass needs params.s");
      for (auto s : p.s)
        if (s < 2) throw DomainError("config: params.s must be >= 2");
      break;
    case ExperimentKind::macroscopic:
      if (!(p.delta > 0.0 && p.delta < 1.0)) throw DomainError("config: params.delta must lie in (0,1)");
      break;
    case ExperimentKind::many_to_one:
      if (!(p.t >= 1.0)) throw DomainError("config: params.t must be >= 1");
      for (auto n : cfg.ns)
        if (n > kManyToOneMaxN) throw BudgetError("config: many_to_one builds an O(n^2) kappa table; n <= 20000");
      break;
    case ExperimentKind::spine_beta_limit:
      if (!(p.t >= 1.0)) throw DomainError("config: params.t must be >= 1");
      for (auto n : cfg.ns)
        if (n < 2) throw DomainError("config: spine_beta_limit needs n >= 2");
      break;
    case ExperimentKind::barrier: {
      if (!(p.t > 1.0)) throw DomainError("config: barrier needs params.t > 1");
      if (p.hs.empty()) throw DomainError("config: barrier needs params.hs");
      if (!std::is_sorted(p.hs.begin(), p.hs.end()) || p.hs.front() == 0)
        throw DomainError("config: params.hs must be increasing and positive");
      if (!(p.omega >= 0.0)) throw DomainError("config: params.omega must be >= 0");
      const double a = -brw_exponents(p.t, cfg.theta).kappa_prime;
      for (auto n : cfg.ns)
        if (a * max_h(p) > 0.9 * std::log(static_cast<double>(n)))
          throw DomainError("config: slack condition a*h <= 0.9 log n violated for n = " + std::to_string(n));
      break;
    }
    case ExperimentKind::height_ratio:
      break;
  }
  // Tree-sampling kinds visit n nodes per replica.
  if (cfg.kind == ExperimentKind::height_ratio || cfg.kind == ExperimentKind::smass ||
      cfg.kind == ExperimentKind::macroscopic || cfg.kind == ExperimentKind::many_to_one) {
    long double total = 0;
    for (auto n : cfg.ns) total += static_cast<long double>(n) * static_cast<long double>(cfg.reps);
    if (total > static_cast<long double>(p.node_cap))
      throw BudgetError("config: estimated node count exceeds params.node_cap");
  }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_impl(cfg, true); }
ExperimentResult run_experiment_serial(const ExperimentConfig& cfg) { return run_impl(cfg, false); }

std::string results_csv(const ExperimentResult& res) {
  std::string out = "kind,theta,n,replica,metric,value\n";
  const std::string prefix = to_string(res.config.kind) + "," + fmt(res.config.theta) + ",";
  for (const auto& rec : res.records)
    for (const auto& [name, v] : rec.metrics)
      out += prefix + std::to_string(rec.n) + "," + std::to_string(rec.replica) + "," + name + "," + fmt(v) + "\n";
  return out;
}

std::string summary_json(const ExperimentResult& res) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : res.summary)
    arr.push_back({{"n", r.n}, {"metric", r.metric}, {"count", r.count}, {"mean", r.mean}, {"se", r.se},
                   {"median", r.median}, {"q25", r.q25}, {"q75", r.q75}});
  return nlohmann::json{{"kind", to_string(res.config.kind)}, {"theta", res.config.theta}, {"summary", arr}}.dump(2);
}

const SummaryRow& find_summary(const ExperimentResult& res, std::uint64_t n, const std::string& metric) {
  for (const auto& r : res.summary)
    if (r.n == n && r.metric == metric) return r;
  throw DomainError("no summary for metric '" + metric + "' at n = " + std::to_string(n));
}

std::vector<TrendRow> height_ratio_trend(double theta, const std::vector<std::uint64_t>& ns, std::uint64_t reps,
                                         std::uint64_t seed) {
  if (!std::is_sorted(ns.begin(), ns.end())) throw DomainError("height_ratio_trend: ns must be increasing");
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::height_ratio;
  cfg.theta = theta;
  cfg.reps = reps;
  cfg.seed = seed;
  for (auto n : ns)
    if (n >= 2) cfg.ns.push_back(n);
  std::vector<TrendRow> rows;
  if (cfg.ns.empty()) return rows;
  const ExperimentResult res = run_experiment(cfg);
  for (auto n : cfg.ns) {
    const auto& h = find_summary(res, n, "height");
    const auto& r = find_summary(res, n, "height_over_log_n");
    rows.push_back({n, h.median, r.median, r.q75 - r.q25});
  }
  return rows;
}

GammaMixtureCheck gamma_mixture_check(double theta, std::uint64_t n, std::uint64_t reps, std::uint64_t seed) {
  if (!(theta > 0.0)) throw DomainError("gamma_mixture_check: theta must be > 0");
  if (n < 2) throw DomainError("gamma_mixture_check: n must be >= 2");
  if (reps < 2) throw DomainError("gamma_mixture_check: reps must be >= 2");
  GammaMixtureCheck g;
  g.n = n;
  g.theta = theta;
  g.r = r_n(n, theta);
  g.reps = reps;
  const double scale = g.r / (1.0 - g.r);
  const auto nm1 = static_cast<double>(n - 1);
  std::vector<double> x(reps);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(reps); ++i) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(i));
    std::gamma_distribution<double> gam(theta, scale);
    std::poisson_distribution<std::uint64_t> pois(gam(rng));
    x[static_cast<std::size_t>(i)] = static_cast<double>(pois(rng)) / nm1;
  }
  const auto R = static_cast<double>(reps);
  double sum = 0.0;
  for (auto v : x) sum += v;
  g.mean = sum / R;
  double m2 = 0.0, m4 = 0.0;
  for (auto v : x) {
    const double d = (v - g.mean) * (v - g.mean);
    m2 += d;
    m4 += d * d;
  }
  g.var = m2 / (R - 1.0);
  g.mean_se = std::sqrt(g.var / R);
  // large-sample standard error of the sample variance
  g.var_se = std::sqrt(std::max(0.0, m4 / R - (m2 / R) * (m2 / R)) / R);
  g.exact_var = (nm1 + theta) / (theta * nm1);
  g.limit_var = 1.0 / theta;
  return g;
}

BarrierResult barrier_diagnostic(double theta, double t, const std::vector<std::uint32_t>& hs, double omega,
                                 std::uint64_t reps, std::uint64_t seed, std::uint64_t n) {
  if (!(t > 1.0)) throw DomainError("barrier_diagnostic: t must be > 1");
  if (hs.empty()) throw DomainError("barrier_diagnostic: hs must be nonempty");
  BarrierResult br;
  br.theta = theta;
  br.t = t;
  br.omega = omega;
  br.a = -brw_exponents(t, theta).kappa_prime;
  const std::uint32_t hmax = *std::max_element(hs.begin(), hs.end());
  if (n == 0) {
    const double target = std::ceil(std::exp(br.a * hmax / kBarrierSlack));
    if (!(target < 4.0e18)) throw BudgetError("barrier_diagnostic: required root mass overflows 64 bits");
    n = std::max<std::uint64_t>(2, static_cast<std::uint64_t>(target));
  }
  br.n = n;

  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::barrier;
  cfg.theta = theta;
  cfg.ns = {n};
  cfg.reps = reps;
  cfg.seed = seed;
  cfg.params.t = t;
  cfg.params.hs = hs;
  cfg.params.omega = omega;
  const ExperimentResult res = run_experiment(cfg);

  for (auto h : hs) {
    const auto& s = find_summary(res, n, "hit_h" + std::to_string(h));
    const auto& w = find_summary(res, n, "hit_wide_h" + std::to_string(h));
    BarrierRow row{h, s.mean, s.se, w.mean, w.se, -1.0};
    if (h == 1 && n <= 10'000'000) {
      const auto pmf = spine_step_pmf(n, t, theta);
      const double lm = std::log(static_cast<double>(n - 1));
      double p = 0.0;
      for (std::size_t j = 1; j <= pmf.size(); ++j) {
        const double y = lm - std::log(static_cast<double>(j)) - br.a;
        if (y <= 0.0 && y >= -omega - 1.0 && y <= -omega) p += pmf[j - 1];
      }
      row.exact = p;
    }
    br.rows.push_back(row);
  }
  return br;
}

}  // namespace fragtree
