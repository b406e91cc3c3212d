#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fragtree/bijection.hpp"
#include "fragtree/cli.hpp"
#include "fragtree/fragmentation.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace fragtree;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "fragtree");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fragtree_test_" + name)).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("constants") {
  const auto r = run({"constants", "--theta", "2"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("t_star=2.920694") != std::string::npos);
  CHECK(r.out.find("c_star=1.673805") != std::string::npos);

  const auto j = run({"constants", "--theta", "2", "--json"});
  REQUIRE(j.code == kExitOk);
  const auto js = nlohmann::json::parse(j.out);
  CHECK(js.at("c_star").get<double>() == doctest::Approx(1.67380505).epsilon(1e-8));
  CHECK(js.at("v_star").get<double>() == doctest::Approx(0.5974).epsilon(1e-3));

  CHECK(run({"constants", "--theta", "0"}).code == kExitUsage);
  CHECK(run({"constants", "--theta", "2", "--bogus"}).code == kExitUsage);
  CHECK(run({"constants"}).code == kExitUsage);
}

TEST_CASE("help and dispatch") {
  const auto h = run({"--help"});
  CHECK(h.code == kExitOk);
  for (const char* sub : {"sample", "exact-dist", "constants", "verify", "bijection", "stats", "experiment"})
    CHECK(h.out.find(sub) != std::string::npos);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
}

TEST_CASE("sample") {
  CHECK(run({"sample", "--n", "0", "--theta", "2"}).code == kExitUsage);
  CHECK(run({"sample", "--n", "10", "--theta", "-1", "--seed", "1"}).code == kExitUsage);
  CHECK(run({"sample", "--n", "abc", "--theta", "2"}).code == kExitUsage);

  const auto a = run({"sample", "--n", "40", "--theta", "2", "--seed", "9", "--emit", "json"});
  const auto b = run({"sample", "--n", "40", "--theta", "2", "--seed", "9", "--emit", "json"});
  REQUIRE(a.code == kExitOk);
  CHECK(a.out == b.out);
  CHECK(a.err.empty());
  const MassTree t = mass_tree_from_json(a.out);
  CHECK(t.root_mass == 40);
  CHECK(t.nodes.size() == 40);

  // without --seed the generated seed is reported, and reusing it reproduces the tree
  const auto c = run({"sample", "--n", "40", "--theta", "2", "--emit", "canon"});
  REQUIRE(c.code == kExitOk);
  REQUIRE(c.err.rfind("seed: ", 0) == 0);
  const std::string seed = c.err.substr(6, c.err.find('\n') - 6);
  CHECK(run({"sample", "--n", "40", "--theta", "2", "--emit", "canon", "--seed", seed}).out == c.out);

  const auto s = run({"sample", "--n", "200", "--theta", "2", "--seed", "1", "--emit", "stats"});
  REQUIRE(s.code == kExitOk);
  const auto js = nlohmann::json::parse(s.out);
  CHECK(js.at("n").get<int>() == 200);
  CHECK(js.at("height").get<int>() >= 1);

  const auto l = run({"sample", "--n", "12", "--theta", "0.5", "--seed", "3", "--labelled", "--emit", "canon"});
  CHECK(l.code == kExitOk);
  CHECK(l.out.size() == 2 * 12 + 1);
}

TEST_CASE("exact-dist") {
  const auto r = run({"exact-dist", "--n-max", "3", "--h-max", "2", "--theta", "1"});
  REQUIRE(r.code == kExitOk);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "n,h,q,p");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 9);
  CHECK(rows[0] == "1,0,1,0");
  CHECK(rows[3].rfind("2,0,0,", 0) == 0);
  // n = 3, θ = 1: the two children of the root split off w.p. 1/2, so P(H_3 <= 1) = 1/2
  CHECK(rows[7].rfind("3,1,0.5", 0) == 0);

  const std::string path = temp_path("exact.csv");
  CHECK(run({"exact-dist", "--n-max", "5", "--h-max", "4", "--theta", "2", "--out", path}).code == kExitOk);
  CHECK(read_file(path).rfind("n,h,q,p\n", 0) == 0);
  std::filesystem::remove(path);
  CHECK(run({"exact-dist", "--n-max", "0", "--h-max", "4", "--theta", "2"}).code == kExitUsage);
}

TEST_CASE("verify") {
  const auto r = run({"verify", "--fast", "--seed", "5"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("bijection") {
  const auto f = run({"bijection", "--seq", "0,1;0,1;2,3;1,2;2,3;1,6;1,4"});
  REQUIRE(f.code == kExitOk);
  CHECK(f.out.rfind("(0,0)\n", 0) == 0);
  const std::string json = f.out.substr(f.out.find('['));
  const auto g = run({"bijection", "--invert", json});
  REQUIRE(g.code == kExitOk);
  CHECK(g.out == "0,1;0,1;2,3;1,2;2,3;1,6;1,4\n");

  const std::string path = temp_path("bitree.json");
  write_file(path, json);
  CHECK(run({"bijection", "--invert", "@" + path}).out == g.out);
  std::filesystem::remove(path);

  CHECK(run({"bijection", "--seq", "0,2"}).code == kExitUsage);
  CHECK(run({"bijection"}).code == kExitUsage);
  CHECK(run({"bijection", "--invert", "{}"}).code == kExitUsage);
}

TEST_CASE("stats") {
  const std::string path = temp_path("tree.json");
  // root of mass 8 with children 5 and 2; the 5 has children 3 and 1; the 3 has a child 2 with a child 1
  write_file(path, mass_tree_to_json(mass_tree_from_parents({-1, 0, 0, 1, 1, 3, 5, 2})));
  const auto r = run({"stats", "--in", path, "--s", "2,3", "--delta", "0.5"});
  std::filesystem::remove(path);
  REQUIRE(r.code == kExitOk);
  const auto js = nlohmann::json::parse(r.out);
  CHECK(js.at("n").get<int>() == 8);
  CHECK(js.at("height").get<int>() == 4);
  // level 0: (7)_2 = 42; level 1: (4)_2 + (1)_2 = 12
  CHECK(js.at("smass").at("2").at(0).get<double>() == 42.0);
  CHECK(js.at("smass").at("2").at(1).get<double>() == 12.0);
  CHECK(run({"stats", "--in", temp_path("missing.json")}).code == kExitUsage);
}

TEST_CASE("experiment") {
  const std::string cfg = temp_path("cfg.json");
  const std::string out1 = temp_path("r1.csv");
  const std::string out2 = temp_path("r2.csv");
  write_file(cfg, R"({"kind":"height_ratio","theta":2,"ns":[100,1000],"reps":20,"seed":4})");
  const auto a = run({"experiment", "--config", cfg, "--out", out1});
  const auto b = run({"experiment", "--config", cfg, "--out", out2, "--serial"});
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  CHECK(read_file(out1) == read_file(out2));
  CHECK(read_file(out1).rfind("kind,theta,n,replica,metric,value\n", 0) == 0);
  CHECK(nlohmann::json::parse(a.out).at("summary").size() == 4);

  const auto c = run({"experiment", "--config", cfg});
  CHECK(c.out == read_file(out1));

  write_file(cfg, R"({"kind":"height_ratio","theta":2,"ns":[1000000],"reps":100,"seed":4,
                      "params":{"node_cap":1000000}})");
  CHECK(run({"experiment", "--config", cfg}).code == kExitBudget);
  write_file(cfg, R"({"kind":"many_to_one","theta":2,"ns":[30000],"reps":1,"seed":4})");
  CHECK(run({"experiment", "--config", cfg}).code == kExitBudget);
  write_file(cfg, R"({"kind":"height_ratio","theta":2,"ns":[10],"reps":0,"seed":4})");
  CHECK(run({"experiment", "--config", cfg}).code == kExitUsage);
  CHECK(run({"experiment", "--config", temp_path("absent.json")}).code == kExitUsage);

  for (const auto& p : {cfg, out1, out2}) std::filesystem::remove(p);
}
