#include <benchmark/benchmark.h>

#include "sbridge/families.hpp"
#include "sbridge/fixedpoint.hpp"
#include "sbridge/montecarlo.hpp"
#include "sbridge/recovery.hpp"

using namespace sbridge;

namespace {

BridgeProblem classic(int cells, int steps) {
  Grid g;
  g.dim = 1;
  g.lower = {-8.0, 0};
  g.upper = {8.0, 0};
  g.cells = {cells, 0};
  g.t0 = 0.0;
  g.t1 = 4.0;
  g.num_steps = steps;
  auto grid = make_grid(g);
  const double m0[1] = {-1.0}, m1[1] = {1.0}, c[1] = {0.25};
  return make_problem(1, 1, make_vector_family("zero", 1),
                      make_matrix_family("constant:1", 1, 1),
                      make_matrix_family("constant:1", 1, 1), make_scalar_family("zero", 1),
                      sample_gaussian(grid, {m0, 1}, {c, 1}), sample_gaussian(grid, {m1, 1}, {c, 1}),
                      1.0, grid);
}

}  // namespace

static void BackwardPass(benchmark::State& state) {
  BridgeProblem pr = classic(static_cast<int>(state.range(0)), 100);
  ScalarField terminal(pr.grid, 1.0);
  for (auto _ : state) {
    FactorTrajectory t = backward_phi_linear(terminal, pr, StepScheme{});
    benchmark::DoNotOptimize(t.nodes.back().v.data());
  }
}
BENCHMARK(BackwardPass)->RangeMultiplier(2)->Range(64, 1024)->Unit(benchmark::kMillisecond);

static void LinearSolve(benchmark::State& state) {
  BridgeProblem pr = classic(static_cast<int>(state.range(0)), 100);
  for (auto _ : state) {
    SolveReport rep = sinkhorn_linear(pr, StepScheme{}, SolveOptions{});
    benchmark::DoNotOptimize(rep.iterations);
  }
}
BENCHMARK(LinearSolve)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMillisecond);

static void MonteCarloRun(benchmark::State& state) {
  BridgeProblem pr = classic(128, 100);
  SolveReport rep = sinkhorn_linear(pr, StepScheme{}, SolveOptions{});
  BridgeSolution sol = recover_solution(rep, pr);
  SimulateOptions opt;
  opt.particles = state.range(0);
  for (auto _ : state) {
    const double l1 = crossvalidate(sol, pr, opt);
    benchmark::DoNotOptimize(l1);
  }
}
BENCHMARK(MonteCarloRun)->RangeMultiplier(4)->Range(1000, 64000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
