#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "sbridge/families.hpp"
#include "sbridge/recovery.hpp"

using namespace sbridge;

namespace {

std::shared_ptr<const Grid> box1d(double lo, double hi, int cells, int steps, double t1 = 1.0) {
  Grid g;
  g.dim = 1;
  g.lower = {lo, 0};
  g.upper = {hi, 0};
  g.cells = {cells, 0};
  g.t0 = 0.0;
  g.t1 = t1;
  g.num_steps = steps;
  return make_grid(g);
}

ScalarField gauss(std::shared_ptr<const Grid> g, double mean, double var) {
  const double m[1] = {mean}, c[1] = {var};
  return sample_gaussian(g, std::span<const double>(m, 1), std::span<const double>(c, 1));
}

BridgeProblem classic(std::shared_ptr<const Grid> g) {
  return make_problem(1, 1, make_vector_family("zero", 1),
                      make_matrix_family("constant:1", 1, 1),
                      make_matrix_family("constant:1", 1, 1), make_scalar_family("zero", 1),
                      gauss(g, -1.0, 0.25), gauss(g, 1.0, 0.25), 1.0, g);
}

FactorTrajectory const_trajectory(std::shared_ptr<const Grid> g, const ScalarField& f,
                                  FactorTrajectory::Direction dir) {
  FactorTrajectory t;
  t.grid = g;
  t.direction = dir;
  t.nodes.assign(static_cast<std::size_t>(g->num_steps) + 1, f);
  return t;
}

const SolveReport& classic_solution() {
  static const auto cached = [] {
    auto g = box1d(-8.0, 8.0, 128, 100);
    auto pr = classic(g);
    SolveOptions opt;
    opt.tol = 1e-10;
    auto rep = std::make_unique<SolveReport>(sinkhorn_linear(pr, StepScheme{}, opt));
    auto prob = std::make_unique<BridgeProblem>(std::move(pr));
    return std::pair{std::move(rep), std::move(prob)};
  }();
  return *cached.first;
}

const BridgeProblem& classic_problem() {
  static const auto g = box1d(-8.0, 8.0, 128, 100);
  static const BridgeProblem pr = classic(g);
  return pr;
}

}  // namespace

TEST_CASE("recover_density") {
  SUBCASE("unit factors on a unit box give the uniform density") {
    auto g = box1d(0.0, 1.0, 8, 4);
    ScalarField one(g, 1.0);
    auto phi = const_trajectory(g, one, FactorTrajectory::Direction::Backward);
    auto phihat = const_trajectory(g, one, FactorTrajectory::Direction::Forward);
    std::vector<double> defects;
    auto rho = recover_density(phi, phihat, &defects);
    for (const auto& r : rho)
      for (double x : r.v) CHECK(x == 1.0);
    for (double d : defects) CHECK(d <= 1e-14);
  }
  SUBCASE("exp(x) against c exp(-x) collapses to the constant c") {
    auto g = box1d(-2.0, 2.0, 16, 4);
    ScalarField a(g), b(g);
    const double c = 0.37;
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double x = g->center(i)[0];
      a[i] = std::exp(x);
      b[i] = c * std::exp(-x);
    }
    auto rho = recover_density(const_trajectory(g, a, FactorTrajectory::Direction::Backward),
                               const_trajectory(g, b, FactorTrajectory::Direction::Forward));
    for (const auto& r : rho)
      for (double x : r.v) CHECK(x == doctest::Approx(c).epsilon(1e-13));
  }
  SUBCASE("node count mismatch is rejected") {
    auto g = box1d(0.0, 1.0, 8, 4);
    ScalarField one(g, 1.0);
    auto phi = const_trajectory(g, one, FactorTrajectory::Direction::Backward);
    auto phihat = phi;
    phihat.nodes.pop_back();
    CHECK_THROWS_AS(recover_density(phi, phihat), NumericalError);
  }
}

TEST_CASE("recover_control") {
  SUBCASE("constant phi gives zero control") {
    auto g = box1d(-2.0, 2.0, 16, 4);
    auto pr = make_problem(1, 1, make_vector_family("zero", 1),
                           make_matrix_family("constant:3", 1, 1),
                           make_matrix_family("constant:3", 1, 1), make_scalar_family("zero", 1),
                           gauss(g, 0.0, 0.09), gauss(g, 0.0, 0.09), 2.0, g);
    auto phi = const_trajectory(g, ScalarField(g, 5.0), FactorTrajectory::Direction::Backward);
    auto u = recover_control(phi, pr);
    for (const auto& uk : u)
      for (double x : uk.v) CHECK(x == 0.0);
  }
  SUBCASE("lambda=2, g=3, phi=exp(x) gives u = 6") {
    auto g = box1d(-1.0, 1.0, 64, 4);
    auto pr = make_problem(1, 1, make_vector_family("zero", 1),
                           make_matrix_family("constant:3", 1, 1),
                           make_matrix_family("constant:3", 1, 1), make_scalar_family("zero", 1),
                           gauss(g, 0.0, 0.02), gauss(g, 0.0, 0.02), 2.0, g);
    ScalarField e(g);
    for (std::size_t i = 0; i < g->size(); ++i) e[i] = std::exp(g->center(i)[0]);
    auto u = recover_control(const_trajectory(g, e, FactorTrajectory::Direction::Backward), pr);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(u.front().at(i, 0) == doctest::Approx(6.0).epsilon(1e-3));
  }
}

TEST_CASE("recover_value and the transform round-trip") {
  auto g = box1d(-2.0, 2.0, 32, 6);
  SUBCASE("phi = 1 gives S = 0; phi = e with lambda 3 gives 3") {
    auto phi1 = const_trajectory(g, ScalarField(g, 1.0), FactorTrajectory::Direction::Backward);
    auto S = recover_value(phi1, 3.0);
    for (double x : S.front().v) CHECK(x == 0.0);
    auto phie =
        const_trajectory(g, ScalarField(g, std::exp(1.0)), FactorTrajectory::Direction::Backward);
    auto Se = recover_value(phie, 3.0);
    for (double x : Se.front().v) CHECK(x == doctest::Approx(3.0).epsilon(1e-14));
  }
  SUBCASE("(rho, S) -> factors -> (rho, S) is the identity for bounded S") {
    const double lambda = 1.7;
    ScalarField rho = gauss(g, 0.3, 0.2);
    ScalarField S(g);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double x = g->center(i)[0];
      S[i] = 0.4 * std::sin(2.0 * x) - 0.1 * x;
    }
    ScalarField phi(g), phihat(g);
    for (std::size_t i = 0; i < g->size(); ++i) {
      phi[i] = std::exp(S[i] / lambda);
      phihat[i] = rho[i] * std::exp(-S[i] / lambda);
    }
    auto phit = const_trajectory(g, phi, FactorTrajectory::Direction::Backward);
    auto phihatt = const_trajectory(g, phihat, FactorTrajectory::Direction::Forward);
    auto rho_back = recover_density(phit, phihatt);
    auto S_back = recover_value(phit, lambda);
    for (std::size_t i = 0; i < g->size(); ++i) {
      CHECK(rho_back.front()[i] == doctest::Approx(rho[i]).epsilon(1e-13));
      CHECK(S_back.front()[i] == doctest::Approx(S[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("control-channel consistency: u = g^T grad S pointwise") {
  // both sides computed from the same phi via the safeguarded score
  Grid g2;
  g2.dim = 2;
  g2.lower = {-4, -4};
  g2.upper = {4, 4};
  g2.cells = {16, 16};
  g2.t0 = 0.0;
  g2.t1 = 1.0;
  g2.num_steps = 4;
  auto g = make_grid(g2);
  const double m[2] = {0, 0}, c[4] = {0.4, 0, 0, 0.4};
  auto rho = sample_gaussian(g, std::span<const double>(m, 2), std::span<const double>(c, 4));
  const double lambda = 1.3;
  auto pr = make_problem(2, 2, make_vector_family("zero", 2),
                         make_matrix_family("constant:1,0.5,0,2", 2, 2),
                         make_matrix_family("constant:1,0.5,0,2", 2, 2),
                         make_scalar_family("zero", 2), rho, rho, lambda, g);
  ScalarField phi(g);
  for (std::size_t i = 0; i < g->size(); ++i) {
    auto x = g->center(i);
    phi[i] = std::exp(0.2 * x[0] - 0.3 * x[1] + 0.05 * x[0] * x[1]);
  }
  auto traj = const_trajectory(g, phi, FactorTrajectory::Direction::Backward);
  auto u = recover_control(traj, pr);
  CHECK(u.front().comps == 2);

  OperatorWorkspace ws(g, BoundaryMode::ZeroDirichlet);
  ScoreResult s = score(phi, ws);
  const double gm[4] = {1.0, 0.5, 0.0, 2.0};
  for (std::size_t i = 0; i < g->size(); ++i)
    for (int b = 0; b < 2; ++b) {
      const double expect = lambda * (gm[0 * 2 + b] * s.field.at(i, 0) +
                                      gm[1 * 2 + b] * s.field.at(i, 1));
      CHECK(u.front().at(i, b) == expect);  // identical arithmetic path
    }
}

TEST_CASE("residuals vanish on exact stationary data") {
  auto g = box1d(-4.0, 4.0, 32, 10);
  auto pr = make_problem(1, 1, make_vector_family("zero", 1),
                         make_matrix_family("constant:1", 1, 1),
                         make_matrix_family("constant:1", 1, 1), make_scalar_family("zero", 1),
                         ScalarField(g, 1.0 / 8.0), ScalarField(g, 1.0 / 8.0), 1.0, g);
  BridgeSolution sol;
  sol.grid = g;
  sol.regime = Regime::Linear;
  sol.converged = true;
  const int K = g->num_steps;
  for (int k = 0; k <= K; ++k) {
    sol.rho.emplace_back(g, 1.0 / 8.0);
    sol.u.emplace_back(g, 1);
    sol.S.emplace_back(g, 0.0);
    sol.mass_defect.push_back(0.0);
    sol.value_mask.emplace_back(g->size(), 1);
  }
  CHECK(primal_residual(sol, pr) <= 1e-8);
  CHECK(dual_residual(sol, pr) <= 1e-8);
}

TEST_CASE("dual residual: S = x with q = 1/2 balances exactly") {
  auto g = box1d(-4.0, 4.0, 32, 10);
  auto pr = make_problem(1, 1, make_vector_family("zero", 1),
                         make_matrix_family("constant:1", 1, 1),
                         make_matrix_family("constant:0", 1, 1),
                         make_scalar_family("constant:0.5", 1), ScalarField(g, 1.0 / 8.0),
                         ScalarField(g, 1.0 / 8.0), 1.0, g);
  BridgeSolution sol;
  sol.grid = g;
  sol.regime = Regime::Linear;
  const int K = g->num_steps;
  ScalarField S(g);
  for (std::size_t i = 0; i < g->size(); ++i) S[i] = g->center(i)[0];
  for (int k = 0; k <= K; ++k) {
    sol.rho.emplace_back(g, 1.0 / 8.0);
    sol.u.emplace_back(g, 1);
    sol.S.push_back(S);
    sol.mass_defect.push_back(0.0);
    sol.value_mask.emplace_back(g->size(), 1);
  }
  CHECK(dual_residual(sol, pr) <= 1e-12);
}

TEST_CASE("residuals on the converged classical bridge are small and sensitive") {
  const SolveReport& rep = classic_solution();
  const BridgeProblem& pr = classic_problem();
  REQUIRE(rep.converged);
  BridgeSolution sol = recover_solution(rep, pr);

  const double prim = primal_residual(sol, pr);
  const double dual = dual_residual(sol, pr);
  CHECK(prim <= 0.2);
  CHECK(dual <= 2.0);

  // negative control: random positive factors are far from a solution
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dist(0.5, 2.0);
  BridgeSolution junk = sol;
  for (auto& Sk : junk.S)
    for (double& x : Sk.v) x = dist(rng);
  for (auto& rk : junk.rho)
    for (double& x : rk.v) x *= dist(rng);
  CHECK(primal_residual(junk, pr) > 0.1);
  CHECK(dual_residual(junk, pr) > 0.1);
}

TEST_CASE("converged bridge satisfies mass and endpoint factorization") {
  const SolveReport& rep = classic_solution();
  const BridgeProblem& pr = classic_problem();
  BridgeSolution sol = recover_solution(rep, pr);
  for (const auto& r : sol.rho) CHECK(std::abs(integrate(r) - 1.0) <= 1e-6);

  double l1_0 = 0.0, l1_1 = 0.0;
  const double m0 = integrate(sol.rho.front()), m1 = integrate(sol.rho.back());
  for (std::size_t i = 0; i < pr.grid->size(); ++i) {
    l1_0 += std::abs(sol.rho.front()[i] / m0 - pr.rho0[i]);
    l1_1 += std::abs(sol.rho.back()[i] / m1 - pr.rho1[i]);
  }
  CHECK(l1_0 * pr.grid->cell_volume() <= 1e-6);
  CHECK(l1_1 * pr.grid->cell_volume() <= 1e-6);
}

TEST_CASE("objective_value") {
  SUBCASE("zero control and cost give zero") {
    auto g = box1d(-4.0, 4.0, 16, 4);
    auto pr = classic(g);
    BridgeSolution sol;
    sol.grid = g;
    for (int k = 0; k <= g->num_steps; ++k) {
      sol.rho.push_back(gauss(g, 0.0, 0.25));
      sol.u.emplace_back(g, 1);
      sol.S.emplace_back(g, 0.0);
    }
    CHECK(objective_value(sol, pr) == 0.0);
  }
  SUBCASE("u = 2 with unit mass over horizon 1 gives 2") {
    auto g = box1d(0.0, 1.0, 8, 10);
    auto pr = make_problem(1, 1, make_vector_family("zero", 1),
                           make_matrix_family("constant:1", 1, 1),
                           make_matrix_family("constant:1", 1, 1), make_scalar_family("zero", 1),
                           ScalarField(g, 1.0), ScalarField(g, 1.0), 1.0, g);
    BridgeSolution sol;
    sol.grid = g;
    for (int k = 0; k <= g->num_steps; ++k) {
      sol.rho.emplace_back(g, 1.0);
      VectorField u(g, 1);
      for (double& x : u.v) x = 2.0;
      sol.u.push_back(u);
      sol.S.emplace_back(g, 0.0);
    }
    CHECK(objective_value(sol, pr) == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("objective is stable between the last two Sinkhorn iterates") {
    const BridgeProblem& pr = classic_problem();
    SolveOptions opt;
    opt.tol = 1e-10;
    SolveReport full = sinkhorn_linear(pr, StepScheme{}, opt);
    REQUIRE(full.converged);
    SolveOptions opt2 = opt;
    opt2.max_iter = full.iterations - 1;
    SolveReport prev = sinkhorn_linear(pr, StepScheme{}, opt2);
    const double a = objective_value(recover_solution(full, pr), pr);
    const double b = objective_value(recover_solution(prev, pr), pr);
    CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("solution export renormalizes rho and logs the defect") {
  const SolveReport& rep = classic_solution();
  const BridgeProblem& pr = classic_problem();
  BridgeSolution sol = recover_solution(rep, pr);
  auto dir = std::filesystem::temp_directory_path() / "sbridge_recovery_test";
  std::filesystem::create_directories(dir);
  export_solution_csv(dir / "solution.csv", sol);
  write_summary(dir / "summary.txt", sol, rep, pr);
  CHECK(std::filesystem::file_size(dir / "solution.csv") > 0);
  std::ifstream is(dir / "summary.txt");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(text.find("max_node_mass_defect") != std::string::npos);
  CHECK(text.find("objective_value") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("fpk under the recovered control reproduces the target marginal") {
  auto g = box1d(-8.0, 8.0, 256, 200, 4.0);
  auto pr = make_problem(1, 1, make_vector_family("zero", 1),
                         make_matrix_family("constant:1", 1, 1),
                         make_matrix_family("constant:1", 1, 1), make_scalar_family("zero", 1),
                         gauss(g, -1.0, 0.25), gauss(g, 1.0, 0.25), 1.0, g);
  SolveReport rep = sinkhorn_linear(pr, StepScheme{}, SolveOptions{});
  REQUIRE(rep.converged);
  BridgeSolution sol = recover_solution(rep, pr);
  FactorTrajectory rho = fpk_forward(pr.rho0, sol.u, pr, StepScheme{});
  const double mass = integrate(rho.nodes.back());
  double l1 = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i)
    l1 += std::abs(rho.nodes.back()[i] / mass - pr.rho1[i]);
  l1 *= g->cell_volume();
  CHECK(l1 <= 0.05);  // independent forward marching under u_opt, O(h^2) route
}
