#include <benchmark/benchmark.h>

#include <cmath>

#include "sbridge/operators.hpp"

using namespace sbridge;

namespace {

std::shared_ptr<const Grid> grid_for(int dim, int cells) {
  Grid g;
  g.dim = dim;
  g.lower = {-4.0, -4.0};
  g.upper = {4.0, 4.0};
  g.cells = {cells, cells};
  g.num_steps = 2;
  return make_grid(g);
}

ScalarField smooth_field(std::shared_ptr<const Grid> g) {
  ScalarField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto x = g->center(i);
    f[i] = std::exp(-0.5 * (x[0] * x[0] + (g->dim > 1 ? x[1] * x[1] : 0.0))) + 0.01;
  }
  return f;
}

MatrixField sigma_for(std::shared_ptr<const Grid> g) {
  MatrixField S(g, g->dim, g->dim);
  for (std::size_t i = 0; i < g->size(); ++i) {
    auto x = g->center(i);
    for (int a = 0; a < g->dim; ++a) S.at(i, a, a) = 1.0 + 0.1 * x[a] * x[a];
  }
  return S;
}

}  // namespace

static void WeightedLaplacian1D(benchmark::State& state) {
  auto g = grid_for(1, static_cast<int>(state.range(0)));
  OperatorWorkspace ws(g);
  ScalarField f = smooth_field(g);
  MatrixField S = sigma_for(g);
  for (auto _ : state) {
    ScalarField L = weighted_laplacian(f, S, ws);
    benchmark::DoNotOptimize(L.v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(WeightedLaplacian1D)->RangeMultiplier(4)->Range(64, 4096);

static void WeightedLaplacian2D(benchmark::State& state) {
  auto g = grid_for(2, static_cast<int>(state.range(0)));
  OperatorWorkspace ws(g);
  ScalarField f = smooth_field(g);
  MatrixField S = sigma_for(g);
  for (auto _ : state) {
    ScalarField L = weighted_laplacian(f, S, ws);
    benchmark::DoNotOptimize(L.v.data());
  }
  state.SetItemsProcessed(state.iterations() * g->size());
}
BENCHMARK(WeightedLaplacian2D)->RangeMultiplier(2)->Range(16, 128);

static void Gradient1D(benchmark::State& state) {
  auto g = grid_for(1, static_cast<int>(state.range(0)));
  OperatorWorkspace ws(g);
  ScalarField f = smooth_field(g);
  for (auto _ : state) {
    VectorField d = gradient(f, ws);
    benchmark::DoNotOptimize(d.v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(Gradient1D)->RangeMultiplier(4)->Range(64, 4096);

static void Score1D(benchmark::State& state) {
  auto g = grid_for(1, static_cast<int>(state.range(0)));
  OperatorWorkspace ws(g);
  ScalarField f = smooth_field(g);
  for (auto _ : state) {
    ScoreResult s = score(f, ws);
    benchmark::DoNotOptimize(s.field.v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(Score1D)->RangeMultiplier(4)->Range(64, 4096);

static void Lemma1Battery2D(benchmark::State& state) {
  auto g = grid_for(2, static_cast<int>(state.range(0)));
  OperatorWorkspace ws(g);
  ScalarField a = smooth_field(g);
  ScalarField b = smooth_field(g);
  MatrixField S = sigma_for(g);
  for (auto _ : state) {
    Lemma1Residual r = lemma1_residual(a, b, S, ws);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(Lemma1Battery2D)->RangeMultiplier(2)->Range(32, 128);

BENCHMARK_MAIN();
