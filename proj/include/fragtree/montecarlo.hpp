#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fragtree {

enum class ExperimentKind { height_ratio, smass, macroscopic, many_to_one, spine_beta_limit, barrier };

std::string to_string(ExperimentKind k);
ExperimentKind parse_kind(const std::string& s);

struct ExperimentParams {
  std::vector<unsigned> s{2};      ///< smass: falling-factorial orders
  unsigned levels = 6;             ///< smass: levels 0..levels reported
  double delta = 0.3;              ///< macroscopic
  double t = 2.0;                  ///< many_to_one, spine_beta_limit, barrier
  std::uint32_t h = 4;             ///< many_to_one
  std::vector<std::uint32_t> hs;   ///< barrier
  double omega = 0.0;              ///< barrier
  std::uint64_t node_cap = 20'000'000'000ULL;  ///< budget on Σ_n n·reps sampled nodes
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::height_ratio;
  double theta = 2.0;
  std::vector<std::uint64_t> ns;
  std::uint64_t reps = 1;
  std::uint64_t seed = 0;
  ExperimentParams params;
};

/// many_to_one builds an O(n^2) table of κ_k(t); larger n is refused.
inline constexpr std::uint64_t kManyToOneMaxN = 20'000;

/// Parses the JSON form {kind, theta, ns, reps, seed, params{...}} and validates it.
ExperimentConfig parse_config(const std::string& json);
/// Throws DomainError on invalid settings, BudgetError if the node estimate exceeds the cap.
void validate_config(const ExperimentConfig& cfg);

struct ReplicaRecord {
  std::uint64_t n = 0;
  std::uint64_t replica = 0;    ///< index within its n
  std::uint64_t stream_id = 0;  ///< index passed to make_stream
  std::vector<std::pair<std::string, double>> metrics;
};

struct SummaryRow {
  std::uint64_t n = 0;
  std::string metric;
  std::uint64_t count = 0;
  double mean = 0.0;
  double se = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ReplicaRecord> records;  ///< ordered by (n index, replica)
  std::vector<SummaryRow> summary;     ///< ordered by n index, then metric name
};

/// Replicas run in parallel (OpenMP); output is independent of the thread count.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
/// Single-threaded reference with identical output.
ExperimentResult run_experiment_serial(const ExperimentConfig& cfg);

/// header kind,theta,n,replica,metric,value; numbers printed with %.17g
std::string results_csv(const ExperimentResult& res);
std::string summary_json(const ExperimentResult& res);

const SummaryRow& find_summary(const ExperimentResult& res, std::uint64_t n, const std::string& metric);

struct TrendRow {
  std::uint64_t n = 0;
  double median_height = 0.0;
  double median_ratio = 0.0;  ///< of H_n / log n
  double iqr_ratio = 0.0;
};

/// Rows for n >= 2 only (log 1 = 0).
std::vector<TrendRow> height_ratio_trend(double theta, const std::vector<std::uint64_t>& ns, std::uint64_t reps,
                                         std::uint64_t seed);

struct GammaMixtureCheck {
  std::uint64_t n = 0;
  double theta = 0.0;
  double r = 0.0;
  std::uint64_t reps = 0;
  double mean = 0.0;       ///< of M_{r_n}/(n−1)
  double mean_se = 0.0;
  double var = 0.0;
  double var_se = 0.0;
  double exact_mean = 1.0;
  double exact_var = 0.0;  ///< (n−1+θ)/(θ(n−1))
  double limit_var = 0.0;  ///< 1/θ
};

/// M ~ NB(θ, r_n) drawn as Poisson(Gamma(θ, r/(1−r))). Requires n >= 2.
GammaMixtureCheck gamma_mixture_check(double theta, std::uint64_t n, std::uint64_t reps, std::uint64_t seed);

struct BarrierRow {
  std::uint32_t h = 0;
  double estimate = 0.0;
  double se = 0.0;
  double wide_estimate = 0.0;  ///< terminal window widened to [−ω−1, 0]
  double wide_se = 0.0;
  double exact = -1.0;  ///< only for h = 1 (negative when unavailable)
};

struct BarrierResult {
  double theta = 0.0;
  double t = 0.0;
  double a = 0.0;  ///< −κ'(t)
  double omega = 0.0;
  std::uint64_t n = 0;
  std::vector<BarrierRow> rows;
};

/// Slack used to choose n: a·h_max <= kBarrierSlack·log n.
inline constexpr double kBarrierSlack = 0.7;

/// Spine walk Y_r = S_r − a r; event Y_r <= 0 for r <= h and Y_h ∈ [−ω−1, −ω].
/// n = 0 picks n = ceil(exp(a h_max / kBarrierSlack)); an explicit n must satisfy a·h <= 0.9 log n.
BarrierResult barrier_diagnostic(double theta, double t, const std::vector<std::uint32_t>& hs, double omega,
                                 std::uint64_t reps, std::uint64_t seed, std::uint64_t n = 0);

}  // namespace fragtree
