// Times the serial reference replica loop against the OpenMP one and checks they agree.
#include "fragtree/montecarlo.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

using namespace fragtree;

namespace {

template <class F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void bench(const char* label, const ExperimentConfig& cfg) {
  std::string a, b;
  const double ts = seconds([&] { a = results_csv(run_experiment_serial(cfg)); });
  const double tp = seconds([&] { b = results_csv(run_experiment(cfg)); });
  std::printf("%-18s serial %8.3fs  parallel %8.3fs  speedup %5.2fx  %s\n", label, ts, tp, ts / tp,
              a == b ? "identical" : "MISMATCH");
  if (a != b) std::exit(1);
}

}  // namespace

int main(int argc, char** argv) {
  const double scale = argc > 1 ? std::atof(argv[1]) : 1.0;
  auto reps = [&](double r) { return static_cast<std::uint64_t>(r * scale) + 1; };
  std::printf("threads: %d\n", omp_get_max_threads());

  ExperimentConfig h;
  h.theta = 2.0;
  h.ns = {1000, 100'000};
  h.reps = reps(200);
  h.seed = 1;
  bench("height_ratio", h);

  ExperimentConfig s = h;
  s.kind = ExperimentKind::smass;
  s.params.s = {2, 3};
  bench("smass", s);

  ExperimentConfig m;
  m.kind = ExperimentKind::many_to_one;
  m.theta = 2.0;
  m.ns = {200};
  m.reps = reps(20'000);
  m.seed = 2;
  m.params.t = 2.0;
  m.params.h = 4;
  bench("many_to_one", m);

  ExperimentConfig b;
  b.kind = ExperimentKind::barrier;
  b.theta = 2.0;
  b.ns = {100'000};
  b.reps = reps(100'000);
  b.seed = 3;
  b.params.t = 2.0;
  b.params.hs = {1, 2, 4, 8};
  bench("barrier", b);
  return 0;
}
