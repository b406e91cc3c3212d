#include "fragtree/cli.hpp"

#include "fragtree/bijection.hpp"
#include "fragtree/constants.hpp"
#include "fragtree/errors.hpp"
#include "fragtree/ewens.hpp"
#include "fragtree/fragmentation.hpp"
#include "fragtree/heights.hpp"
#include "fragtree/montecarlo.hpp"
#include "fragtree/trees.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

namespace fragtree {
namespace {

std::string fixed12(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", x);
  return buf;
}

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed, std::ostream& err) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  err << "seed: " << s << "\n";
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot write '" + path + "'");
  f << text;
}

// ---------------------------------------------------------------------------

struct Check {
  std::string name;
  bool ok = false;
  std::string detail;
};

std::vector<Check> run_verify_suite(bool fast, std::uint64_t seed) {
  std::vector<Check> checks;
  auto add = [&](std::string name, bool ok, std::string detail) {
    checks.push_back({std::move(name), ok, std::move(detail)});
  };

  for (std::size_t n = 1; n <= (fast ? 7u : 9u); ++n) {
    const auto [lhs, rhs] = fundamental_identity(n);
    add("fundamental_identity n=" + std::to_string(n), lhs == rhs, lhs.str() + " vs " + rhs.str());
  }

  {
    const HookData h = hook_counts(parse_tree("(()()((()()())))"));
    add("hook_example", h.d == 252 && h.u == 21 && h.aut == 12,
        "d=" + h.d.str() + " aut=" + h.aut.str() + " u=" + h.u.str());
  }

  for (std::size_t n = 1; n <= (fast ? 5u : 6u); ++n) {
    const auto seqs = enumerate_sequences(n);
    std::set<std::vector<std::uint32_t>> images;
    bool ok = true;
    for (const auto& s : seqs) {
      const BilabelledTree bt = sequence_to_bitree(s);
      ok = ok && bitree_to_sequence(bt) == s;
      images.insert(bitree_key(bt));
    }
    const auto [count, unused] = fundamental_identity(n);
    ok = ok && BigInt(images.size()) == count;
    add("bijection_roundtrip n=" + std::to_string(n), ok,
        std::to_string(seqs.size()) + " sequences, " + std::to_string(images.size()) + " distinct trees");
  }

  for (double theta : {1.0, 2.0}) {
    const std::size_t N = fast ? 100 : 200;
    const std::size_t hmax = fast ? 3 : 10;
    HeightLimits lim;
    const HeightCdfTable tab = exact_height_cdf(N + 1, hmax, theta, lim);
    double worst = 0.0;
    for (std::size_t h = 1; h <= hmax; ++h) worst = std::max(worst, key_identity_residual(h, tab, N));
    add("key_identity theta=" + g17(theta), worst < 1e-9, "max residual " + g17(worst));
  }

  {
    const std::uint64_t samples = fast ? 100'000 : 1'000'000;
    const double tol = fast ? 0.015 : 0.005;
    const auto parts = enumerate_partitions(8);
    std::uint64_t stream = 0;
    for (double theta : {0.5, 1.0, 2.0}) {
      Rng rng = make_stream(seed, stream++);
      std::map<CountVector, std::uint64_t> hist;
      for (std::uint64_t i = 0; i < samples; ++i) ++hist[sample_ewens_crp(8, theta, rng)];
      double tv = 0.0;
      for (const auto& cv : parts) {
        auto it = hist.find(cv);
        const double emp = it == hist.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(samples);
        tv += std::abs(emp - ewens_pmf(cv, theta));
      }
      tv *= 0.5;
      add("ewens_tv m=8 theta=" + g17(theta), tv < tol, "TV " + g17(tv) + " (tol " + g17(tol) + ")");
    }
  }

  {
    const HeightConstants hc = height_constants(2.0);
    add("constants theta=2", std::abs(hc.t_star - 2.92069467) < 1e-6 && std::abs(hc.c_star - 1.67380505) < 1e-6,
        "t_star=" + fixed12(hc.t_star) + " c_star=" + fixed12(hc.c_star));
  }
  return checks;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ewens fragmentation trees, Plancherel random trees and their heights", "fragtree"};
  app.require_subcommand(1);

  // sample
  auto* sample = app.add_subcommand("sample", "Sample a fragmentation tree");
  std::uint64_t s_n = 0;
  double s_theta = 0.0;
  std::optional<std::uint64_t> s_seed;
  bool s_labelled = false;
  std::string s_emit = "canon";
  sample->add_option("--n", s_n, "Number of vertices (>= 1)")->required();
  sample->add_option("--theta", s_theta, "Ewens parameter (> 0)")->required();
  sample->add_option("--seed", s_seed, "Random seed");
  sample->add_flag("--labelled", s_labelled, "Use the labelled construction");
  sample->add_option("--emit", s_emit, "Output: canon, json or stats")
      ->check(CLI::IsMember({"canon", "json", "stats"}));

  // exact-dist
  auto* exact = app.add_subcommand("exact-dist", "Exact height distribution table as CSV");
  std::size_t e_nmax = 0, e_hmax = 0;
  double e_theta = 0.0;
  std::string e_out = "-";
  exact->add_option("--n-max", e_nmax, "Largest n")->required();
  exact->add_option("--h-max", e_hmax, "Largest h")->required();
  exact->add_option("--theta", e_theta, "Ewens parameter")->required();
  exact->add_option("--out", e_out, "Output CSV path ('-' for stdout)");

  // constants
  auto* cons = app.add_subcommand("constants", "Height constants t_star, v_star, c_star, c_plus");
  double c_theta = 0.0;
  bool c_json = false;
  cons->add_option("--theta", c_theta, "Ewens parameter")->required();
  cons->add_flag("--json", c_json, "Print a JSON object");

  // verify
  auto* verify = app.add_subcommand("verify", "Run the exact-identity suite");
  bool v_fast = false;
  std::optional<std::uint64_t> v_seed;
  verify->add_flag("--fast", v_fast, "Smaller sizes and sample counts");
  verify->add_option("--seed", v_seed, "Random seed for the sampling checks");

  // bijection
  auto* bij = app.add_subcommand("bijection", "Chord sequence <-> bilabelled tree");
  std::optional<std::string> b_seq, b_invert;
  auto* seq_opt = bij->add_option("--seq", b_seq, "Sequence such as \"0,1;0,1;2,3\"");
  auto* inv_opt = bij->add_option("--invert", b_invert, "Bilabelled tree JSON (or @file)");
  seq_opt->excludes(inv_opt);

  // stats
  auto* stats = app.add_subcommand("stats", "Statistics of a tree given as JSON");
  std::string st_in;
  std::vector<unsigned> st_s{2};
  double st_delta = 0.3;
  stats->add_option("--in", st_in, "Tree JSON file")->required();
  stats->add_option("--s", st_s, "s-mass orders, comma separated")->delimiter(',');
  stats->add_option("--delta", st_delta, "Macroscopic exponent in (0,1)");

  // experiment
  auto* expt = app.add_subcommand("experiment", "Run a Monte Carlo experiment from a JSON config");
  std::string x_config, x_out = "-";
  bool x_serial = false;
  expt->add_option("--config", x_config, "Config JSON file")->required();
  expt->add_option("--out", x_out, "Results CSV path ('-' for stdout)");
  expt->add_flag("--serial", x_serial, "Use the single-threaded reference loop");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (sample->parsed()) {
      if (s_n == 0) throw DomainError("--n must be >= 1");
      if (!(s_theta > 0.0)) throw DomainError("--theta must be > 0");
      Rng rng = make_stream(resolve_seed(s_seed, err), 0);
      const MassTree tree = s_labelled ? sample_labelled_fragmentation(s_n, s_theta, rng)
                                       : sample_fragmentation(s_n, s_theta, rng);
      if (s_emit == "canon") {
        out << mass_tree_shape(tree).canon << "\n";
      } else if (s_emit == "json") {
        out << mass_tree_to_json(tree) << "\n";
      } else {
        const TreeStats st = tree_stats(tree, {2, 3}, 0.3);
        nlohmann::json j{{"n", st.n}, {"height", st.height}, {"N0", st.n0}, {"delta", st.delta},
                         {"root_children", tree.nodes[0].child_count}};
        for (std::size_t i = 0; i < st.s_values.size(); ++i) j["smass"][std::to_string(st.s_values[i])] = st.smass[i];
        out << j.dump() << "\n";
      }
      return kExitOk;
    }

    if (exact->parsed()) {
      if (e_nmax == 0) throw DomainError("--n-max must be >= 1");
      if (!(e_theta > 0.0)) throw DomainError("--theta must be > 0");
      const HeightCdfTable tab = exact_height_cdf(e_nmax, e_hmax, e_theta);
      std::string csv = "n,h,q,p\n";
      for (std::size_t n = 1; n <= e_nmax; ++n)
        for (std::size_t h = 0; h <= e_hmax; ++h) {
          const double q = tab.cdf(n, h);
          csv += std::to_string(n) + "," + std::to_string(h) + "," + g17(q) + "," + g17(1.0 - q) + "\n";
        }
      write_output(e_out, csv, out);
      return kExitOk;
    }

    if (cons->parsed()) {
      if (!(c_theta > 0.0)) throw DomainError("--theta must be > 0");
      const HeightConstants hc = height_constants(c_theta);
      if (c_json) {
        out << nlohmann::json{{"theta", hc.theta}, {"t_star", hc.t_star}, {"v_star", hc.v_star},
                              {"c_star", hc.c_star}, {"c_plus", hc.c_plus}, {"s_plus", hc.s_plus}}
                   .dump()
            << "\n";
      } else {
        out << "t_star=" << fixed12(hc.t_star) << "\n"
            << "v_star=" << fixed12(hc.v_star) << "\n"
            << "c_star=" << fixed12(hc.c_star) << "\n"
            << "c_plus=" << fixed12(hc.c_plus) << "\n"
            << "s_plus=" << hc.s_plus << "\n";
      }
      return kExitOk;
    }

    if (verify->parsed()) {
      const auto checks = run_verify_suite(v_fast, resolve_seed(v_seed, err));
      bool all = true;
      for (const auto& c : checks) {
        out << (c.ok ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        all = all && c.ok;
      }
      return all ? kExitOk : kExitVerifyFailed;
    }

    if (bij->parsed()) {
      if (b_seq) {
        const BilabelledTree bt = sequence_to_bitree(parse_sequence(*b_seq));
        out << bitree_to_text(bt) << bitree_to_json(bt) << "\n";
      } else if (b_invert) {
        const std::string text = !b_invert->empty() && (*b_invert)[0] == '@' ? read_file(b_invert->substr(1)) : *b_invert;
        out << format_sequence(bitree_to_sequence(bitree_from_json(text))) << "\n";
      } else {
        throw DomainError("bijection needs --seq or --invert");
      }
      return kExitOk;
    }

    if (stats->parsed()) {
      const MassTree tree = mass_tree_from_json(read_file(st_in));
      const TreeStats st = tree_stats(tree, st_s, st_delta);
      nlohmann::json j{{"n", st.n}, {"height", st.height}, {"delta", st.delta}, {"N0", st.n0}};
      for (std::size_t i = 0; i < st.s_values.size(); ++i) j["smass"][std::to_string(st.s_values[i])] = st.smass[i];
      out << j.dump() << "\n";
      return kExitOk;
    }

    if (expt->parsed()) {
      const ExperimentConfig cfg = parse_config(read_file(x_config));
      const ExperimentResult res = x_serial ? run_experiment_serial(cfg) : run_experiment(cfg);
      write_output(x_out, results_csv(res), out);
      if (!x_out.empty() && x_out != "-") out << summary_json(res) << "\n";
      return kExitOk;
    }
  } catch (const BudgetError& e) {
    err << "budget exceeded: " << e.what() << "\n";
    return kExitBudget;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace fragtree
