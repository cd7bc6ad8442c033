#include <cmath>
#include <random>

#include "doctest.h"
#include "sbridge/families.hpp"
#include "sbridge/operators.hpp"

using namespace sbridge;

namespace {

std::shared_ptr<const Grid> box1d(double lo, double hi, int cells) {
  Grid g;
  g.dim = 1;
  g.lower = {lo, 0};
  g.upper = {hi, 0};
  g.cells = {cells, 0};
  g.num_steps = 10;
  return make_grid(g);
}

std::shared_ptr<const Grid> box2d(double lo, double hi, int cells) {
  Grid g;
  g.dim = 2;
  g.lower = {lo, lo};
  g.upper = {hi, hi};
  g.cells = {cells, cells};
  g.num_steps = 10;
  return make_grid(g);
}

ScalarField from_fn(std::shared_ptr<const Grid> g, double (*fn)(double, double)) {
  ScalarField out(g);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto x = g->center(i);
    out[i] = fn(x[0], g->dim > 1 ? x[1] : 0.0);
  }
  return out;
}

MatrixField identity_sigma(std::shared_ptr<const Grid> g, double scale = 1.0) {
  MatrixField S(g, g->dim, g->dim);
  for (std::size_t i = 0; i < g->size(); ++i)
    for (int a = 0; a < g->dim; ++a) S.at(i, a, a) = scale;
  return S;
}

bool is_interior(const Grid& g, std::size_t i, int margin) {
  for (int a = 0; a < g.dim; ++a) {
    const auto c = static_cast<int>((i / g.stride(a)) % static_cast<std::size_t>(g.cells[a]));
    if (c < margin || c >= g.cells[a] - margin) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("gradient: exact on affine and quadratic fields") {
  auto g = box1d(0.0, 1.0, 64);
  OperatorWorkspace ws(g);

  ScalarField c(g, 4.2);
  VectorField gc = gradient(c, ws);
  for (double x : gc.v) CHECK(x == 0.0);

  ScalarField lin = from_fn(g, [](double x, double) { return 3.0 * x; });
  VectorField gl = gradient(lin, ws);
  for (std::size_t i = 0; i < g->size(); ++i)
    CHECK(gl.at(i, 0) == doctest::Approx(3.0).epsilon(1e-12));

  ScalarField quad = from_fn(g, [](double x, double) { return x * x; });
  VectorField gq = gradient(quad, ws);
  auto centers = cell_centers(*g);
  for (std::size_t i = 0; i < g->size(); ++i)
    CHECK(gq.at(i, 0) == doctest::Approx(2.0 * centers[i][0]).epsilon(1e-10));
}

TEST_CASE("matrix_divergence") {
  SUBCASE("constant field vanishes") {
    auto g = box1d(-1.0, 1.0, 16);
    OperatorWorkspace ws(g);
    MatrixField M = identity_sigma(g, 2.5);
    VectorField d = matrix_divergence(M, ws);
    for (double x : d.v) CHECK(x == 0.0);
  }
  SUBCASE("1D M = x has divergence 1") {
    auto g = box1d(-1.0, 1.0, 16);
    OperatorWorkspace ws(g);
    MatrixField M(g, 1, 1);
    for (std::size_t i = 0; i < g->size(); ++i) M.at(i, 0, 0) = g->center(i)[0];
    VectorField d = matrix_divergence(M, ws);
    for (std::size_t i = 0; i < g->size(); ++i)
      CHECK(d.at(i, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("2D diag(x0, x1) has divergence (1,1)") {
    auto g = box2d(-1.0, 1.0, 8);
    OperatorWorkspace ws(g);
    MatrixField M(g, 2, 2);
    for (std::size_t i = 0; i < g->size(); ++i) {
      auto x = g->center(i);
      M.at(i, 0, 0) = x[0];
      M.at(i, 1, 1) = x[1];
    }
    VectorField d = matrix_divergence(M, ws);
    for (std::size_t i = 0; i < g->size(); ++i) {
      CHECK(d.at(i, 0) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(d.at(i, 1) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("non-square rejected") {
    auto g = box2d(-1.0, 1.0, 8);
    OperatorWorkspace ws(g);
    MatrixField M(g, 2, 1);
    CHECK_THROWS_AS(matrix_divergence(M, ws), NumericalError);
  }
}

TEST_CASE("weighted_laplacian interior values") {
  auto g = box1d(-1.0, 1.0, 64);
  OperatorWorkspace ws(g);

  SUBCASE("Sigma = I, rho = x^2 gives 2") {
    ScalarField rho = from_fn(g, [](double x, double) { return x * x; });
    ScalarField L = weighted_laplacian(rho, identity_sigma(g), ws);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(L[i] == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("rho constant gives 0") {
    ScalarField rho(g, 3.0);
    ScalarField L = weighted_laplacian(rho, identity_sigma(g), ws);
    for (std::size_t i = 1; i + 1 < g->size(); ++i) CHECK(L[i] == doctest::Approx(0.0));
  }
  SUBCASE("Sigma = x^2, rho = 1 gives (x^2)'' = 2") {
    ScalarField rho(g, 1.0);
    MatrixField S(g, 1, 1);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double x = g->center(i)[0];
      S.at(i, 0, 0) = x * x;
    }
    ScalarField L = weighted_laplacian(rho, S, ws);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(L[i] == doctest::Approx(2.0).epsilon(1e-9));
  }
}

TEST_CASE("weighted_laplacian conserves mass under zero-flux") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(0.2, 2.0);
  SUBCASE("1D random fields") {
    auto g = box1d(-2.0, 3.0, 32);
    OperatorWorkspace ws(g, BoundaryMode::ZeroFlux);
    ScalarField rho(g);
    MatrixField S(g, 1, 1);
    for (std::size_t i = 0; i < g->size(); ++i) {
      rho[i] = dist(rng);
      S.at(i, 0, 0) = dist(rng);
    }
    ScalarField L = weighted_laplacian(rho, S, ws);
    double norm = 0.0;
    for (double x : rho.v) norm = std::max(norm, std::abs(x));
    CHECK(std::abs(integrate(L)) <= 1e-12 * norm);
  }
  SUBCASE("2D random fields with mixed terms") {
    auto g = box2d(-1.0, 1.0, 12);
    OperatorWorkspace ws(g, BoundaryMode::ZeroFlux);
    ScalarField rho(g);
    MatrixField S(g, 2, 2);
    for (std::size_t i = 0; i < g->size(); ++i) {
      rho[i] = dist(rng);
      const double a = dist(rng), b = dist(rng), c = 0.3 * dist(rng);
      S.at(i, 0, 0) = a;
      S.at(i, 1, 1) = b;
      S.at(i, 0, 1) = c;
      S.at(i, 1, 0) = c;
    }
    ScalarField L = weighted_laplacian(rho, S, ws);
    double norm = 0.0;
    for (double x : rho.v) norm = std::max(norm, std::abs(x));
    CHECK(std::abs(integrate(L)) <= 1e-12 * norm);
  }
}

TEST_CASE("hessian_contraction") {
  auto g = box1d(-1.0, 1.0, 32);
  OperatorWorkspace ws(g);
  ScalarField quad = from_fn(g, [](double x, double) { return x * x; });

  ScalarField h1 = hessian_contraction(quad, identity_sigma(g), ws);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(h1[i] == doctest::Approx(2.0).epsilon(1e-9));

  ScalarField h2 = hessian_contraction(quad, identity_sigma(g, 2.0), ws);
  for (std::size_t i = 0; i < g->size(); ++i) CHECK(h2[i] == doctest::Approx(4.0).epsilon(1e-9));

  auto g2 = box2d(-1.0, 1.0, 12);
  OperatorWorkspace ws2(g2);
  ScalarField cross = from_fn(g2, [](double x, double y) { return x * y; });
  MatrixField off(g2, 2, 2);
  for (std::size_t i = 0; i < g2->size(); ++i) {
    off.at(i, 0, 1) = 1.0;
    off.at(i, 1, 0) = 1.0;
  }
  ScalarField h3 = hessian_contraction(cross, off, ws2);
  for (std::size_t i = 0; i < g2->size(); ++i)
    if (is_interior(*g2, i, 1)) CHECK(h3[i] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("operators are linear in the scalar-field argument") {
  auto g = box2d(-1.0, 1.0, 10);
  OperatorWorkspace ws(g);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  ScalarField u(g), v(g);
  MatrixField S(g, 2, 2);
  for (std::size_t i = 0; i < g->size(); ++i) {
    u[i] = dist(rng);
    v[i] = dist(rng);
    S.at(i, 0, 0) = 1.0 + 0.5 * dist(rng);
    S.at(i, 1, 1) = 1.0 + 0.5 * dist(rng);
  }
  const double a = 2.25, b = -0.75;
  ScalarField w(g);
  for (std::size_t i = 0; i < g->size(); ++i) w[i] = a * u[i] + b * v[i];

  ScalarField Lw = weighted_laplacian(w, S, ws);
  ScalarField Lu = weighted_laplacian(u, S, ws);
  ScalarField Lv = weighted_laplacian(v, S, ws);
  for (std::size_t i = 0; i < g->size(); ++i)
    CHECK(Lw[i] == doctest::Approx(a * Lu[i] + b * Lv[i]).epsilon(1e-10));

  VectorField Gw = gradient(w, ws);
  VectorField Gu = gradient(u, ws);
  VectorField Gv = gradient(v, ws);
  for (std::size_t i = 0; i < Gw.v.size(); ++i)
    CHECK(Gw.v[i] == doctest::Approx(a * Gu.v[i] + b * Gv.v[i]).epsilon(1e-10));
}

TEST_CASE("lemma1 residual: vanishing and hand-checked cases") {
  SUBCASE("constants make every term vanish") {
    auto g = box1d(-1.0, 1.0, 16);
    OperatorWorkspace ws(g);
    ScalarField alpha(g, 2.0), beta(g, 0.5);
    MatrixField S = identity_sigma(g, 1.7);
    Lemma1Residual r = lemma1_residual(alpha, beta, S, ws);
    CHECK(r.full <= 1e-13);
    CHECK(r.beta_one <= 1e-13);
    CHECK(r.sigma_identity <= 1e-13);
  }
  SUBCASE("alpha = beta = x, Sigma = 1: both sides equal 2") {
    auto g = box1d(-1.0, 1.0, 16);
    OperatorWorkspace ws(g);
    ScalarField x = from_fn(g, [](double x0, double) { return x0; });
    Lemma1Residual r = lemma1_residual(x, x, identity_sigma(g), ws);
    CHECK(r.full <= 1e-11);
  }
}

TEST_CASE("lemma1 residual refines at second order") {
  auto make_case = [](int cells) {
    auto g = box1d(-2.0, 2.0, cells);
    OperatorWorkspace ws(g);
    ScalarField alpha = from_fn(g, [](double x, double) { return std::sin(x); });
    ScalarField beta = from_fn(g, [](double x, double) { return std::cos(x); });
    MatrixField S(g, 1, 1);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double x = g->center(i)[0];
      S.at(i, 0, 0) = 1.0 + 0.25 * x * x;
    }
    return lemma1_residual(alpha, beta, S, ws);
  };
  Lemma1Residual coarse = make_case(64);
  Lemma1Residual fine = make_case(128);
  const double ratio = coarse.full / fine.full;
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
}

TEST_CASE("hessian-of-log identity refines at second order") {
  auto residual_at = [](int cells) {
    auto g = box1d(-2.0, 2.0, cells);
    OperatorWorkspace ws(g);
    ScalarField phi = from_fn(g, [](double x, double) { return std::exp(std::sin(x)); });
    return hessian_log_identity_residual(phi, 1.5, ws);
  };
  const double coarse = residual_at(64);
  const double fine = residual_at(128);
  CHECK(coarse / fine >= 3.0);
  CHECK(coarse / fine <= 5.0);
}

TEST_CASE("score") {
  auto g = box1d(-2.0, 2.0, 64);
  OperatorWorkspace ws(g);

  SUBCASE("constant field has zero score") {
    ScalarField c(g, 2.0);
    ScoreResult s = score(c, ws);
    for (double x : s.field.v) CHECK(x == 0.0);
    CHECK(s.floor_activations == 0);
  }
  SUBCASE("exp(x) has unit log-slope") {
    ScalarField e = from_fn(g, [](double x, double) { return std::exp(x); });
    ScoreResult s = score(e, ws);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(s.field.at(i, 0) == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("gaussian score is -x") {
    ScalarField e = from_fn(g, [](double x, double) { return std::exp(-0.5 * x * x); });
    ScoreResult s = score(e, ws);
    auto centers = cell_centers(*g);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(s.field.at(i, 0) == doctest::Approx(-centers[i][0]).epsilon(2e-3));
  }
  SUBCASE("floor activates on extreme tails and is counted") {
    auto wide = box1d(-30.0, 30.0, 128);
    OperatorWorkspace wws(wide);
    ScalarField e = from_fn(wide, [](double x, double) { return std::exp(-0.5 * x * x); });
    ScoreResult s = score(e, wws);
    CHECK(s.floor_activations > 0);
    for (double x : s.field.v) CHECK(std::isfinite(x));
  }
  SUBCASE("nonpositive input is rejected") {
    ScalarField z(g, 0.0);
    CHECK_THROWS_AS(score(z, ws), NumericalError);
  }
}

namespace {

BridgeProblem mismatch_problem(std::shared_ptr<const Grid> g, double gval, double sval,
                               double lambda) {
  const double m[1] = {0.0}, c[1] = {0.1};
  auto rho = sample_gaussian(g, std::span<const double>(m, 1), std::span<const double>(c, 1));
  return make_problem(1, 1, make_vector_family("zero", 1),
                      make_matrix_family("constant:" + std::to_string(gval), 1, 1),
                      make_matrix_family("constant:" + std::to_string(sval), 1, 1),
                      make_scalar_family("zero", 1), rho, rho, lambda, g);
}

}  // namespace

TEST_CASE("excess drift and reaction") {
  auto g = box1d(-2.0, 2.0, 64);
  OperatorWorkspace ws(g);
  ScalarField expx = from_fn(g, [](double x, double) { return std::exp(x); });
  ScalarField exp2x = from_fn(g, [](double x, double) { return std::exp(2.0 * x); });

  SUBCASE("coincident channels: identically zero, bitwise") {
    auto pr = mismatch_problem(g, 1.0, 1.0, 1.0);
    VectorField fphi = excess_drift(expx, pr, 0.0, ws);
    ScalarField qphi = excess_reaction(expx, pr, 0.0, ws);
    for (double x : fphi.v) CHECK(x == 0.0);
    for (double x : qphi.v) CHECK(x == 0.0);
  }
  SUBCASE("mismatch +1: f_phi = 1 for phi = exp(x)") {
    auto pr = mismatch_problem(g, 1.0, 0.0, 1.0);
    VectorField fphi = excess_drift(expx, pr, 0.0, ws);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(fphi.at(i, 0) == doctest::Approx(1.0).epsilon(1e-3));
    ScalarField qphi = excess_reaction(expx, pr, 0.0, ws);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(qphi[i] == doctest::Approx(0.5).epsilon(2e-3));
  }
  SUBCASE("mismatch -1: f_phi = -1 for phi = exp(x)") {
    auto pr = mismatch_problem(g, 0.0, 1.0, 1.0);
    VectorField fphi = excess_drift(expx, pr, 0.0, ws);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(fphi.at(i, 0) == doctest::Approx(-1.0).epsilon(1e-3));
    ScalarField qphi = excess_reaction(exp2x, pr, 0.0, ws);
    for (std::size_t i = 1; i + 1 < g->size(); ++i)
      CHECK(qphi[i] == doctest::Approx(-2.0).epsilon(2e-2));
  }
}

TEST_CASE("conservative_divergence integrates to zero") {
  auto g = box2d(-1.0, 2.0, 10);
  OperatorWorkspace ws(g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  VectorField w(g, 2);
  for (double& x : w.v) x = dist(rng);
  ScalarField d = conservative_divergence(w, ws);
  CHECK(std::abs(integrate(d)) <= 1e-13);
}

TEST_CASE("weighted_laplacian zero-Dirichlet closure") {
  auto g = box1d(0.0, 1.0, 16);
  OperatorWorkspace ws(g, BoundaryMode::ZeroDirichlet);
  ScalarField one(g, 1.0);
  ScalarField L = weighted_laplacian(one, identity_sigma(g), ws);
  for (std::size_t i = 1; i + 1 < g->size(); ++i) CHECK(L[i] == 0.0);
  // ghost value reflected against a zero wall pulls boundary cells down
  CHECK(L[0] < 0.0);
  CHECK(L[g->size() - 1] < 0.0);
}
