#include <cmath>

#include "doctest.h"
#include "sbridge/families.hpp"
#include "sbridge/problem.hpp"

using namespace sbridge;

namespace {

std::shared_ptr<const Grid> box1d(double lo = -8.0, double hi = 8.0, int cells = 64) {
  Grid g;
  g.dim = 1;
  g.lower = {lo, 0};
  g.upper = {hi, 0};
  g.cells = {cells, 0};
  g.t0 = 0.0;
  g.t1 = 1.0;
  g.num_steps = 10;
  return make_grid(g);
}

ScalarField gauss1d(std::shared_ptr<const Grid> g, double mean, double var) {
  const double m[1] = {mean}, c[1] = {var};
  return sample_gaussian(g, std::span<const double>(m, 1), std::span<const double>(c, 1));
}

BridgeProblem scalar_problem(double gval, double sval, std::optional<double> lambda,
                             std::shared_ptr<const Grid> grid = nullptr) {
  auto g = grid ? grid : box1d();
  return make_problem(
      1, 1, make_vector_family("zero", 1),
      make_matrix_family("constant:" + std::to_string(gval), 1, 1),
      make_matrix_family("constant:" + std::to_string(sval), 1, 1), make_scalar_family("zero", 1),
      gauss1d(g, -1.0, 0.25), gauss1d(g, 1.0, 0.25), lambda, g);
}

}  // namespace

TEST_CASE("build_sigma_tensor forms sigma sigma^T") {
  SUBCASE("scalar sigma = 1") {
    auto pr = scalar_problem(1.0, 1.0, 1.0);
    MatrixField S = build_sigma_tensor(pr, 0.0);
    for (std::size_t i = 0; i < S.grid->size(); ++i) CHECK(S.at(i, 0, 0) == 1.0);
  }
  SUBCASE("diag(1,2) gives diag(1,4)") {
    Grid g2;
    g2.dim = 2;
    g2.lower = {-8, -8};
    g2.upper = {8, 8};
    g2.cells = {24, 24};
    g2.num_steps = 4;
    auto grid = make_grid(g2);
    const double m[2] = {0, 0}, c[4] = {1, 0, 0, 1};
    auto rho = sample_gaussian(grid, std::span<const double>(m, 2), std::span<const double>(c, 4));
    auto pr = make_problem(2, 2, make_vector_family("zero", 2),
                           make_matrix_family("diag:1,1", 2, 2),
                           make_matrix_family("diag:1,2", 2, 2), make_scalar_family("zero", 2),
                           rho, rho, 1.0, grid);
    MatrixField S = build_sigma_tensor(pr, 0.0);
    CHECK(S.at(0, 0, 0) == 1.0);
    CHECK(S.at(0, 1, 1) == 4.0);
    CHECK(S.at(0, 0, 1) == 0.0);
  }
  SUBCASE("rank-one outer product [1;1]") {
    Grid g2;
    g2.dim = 2;
    g2.lower = {-8, -8};
    g2.upper = {8, 8};
    g2.cells = {24, 24};
    g2.num_steps = 4;
    auto grid = make_grid(g2);
    const double m[2] = {0, 0}, c[4] = {1, 0, 0, 1};
    auto rho = sample_gaussian(grid, std::span<const double>(m, 2), std::span<const double>(c, 4));
    auto pr = make_problem(1, 1, make_vector_family("zero", 2),
                           make_matrix_family("constant:1,1", 2, 1),
                           make_matrix_family("constant:1,1", 2, 1), make_scalar_family("zero", 2),
                           rho, rho, 1.0, grid);
    MatrixField S = build_sigma_tensor(pr, 0.0);
    CHECK(S.at(0, 0, 0) == 1.0);
    CHECK(S.at(0, 0, 1) == 1.0);
    CHECK(S.at(0, 1, 0) == 1.0);
    CHECK(S.at(0, 1, 1) == 1.0);
    // rank 1: min eigenvalue 0, within the -1e-12 bound
    ValidationReport rep = validate(pr);
    CHECK(rep.sigma_lower_bound_estimate >= -1e-12);
  }
}

TEST_CASE("validate classifies channel coincidence") {
  SUBCASE("g = sigma = 1, lambda = 1: coincident") {
    auto pr = scalar_problem(1.0, 1.0, 1.0);
    ValidationReport rep = validate(pr);
    CHECK(rep.is_channel_coincident);
    CHECK(rep.channel_mismatch_norm == 0.0);
  }
  SUBCASE("g = 1, sigma = 2, lambda = 1: mismatch 3") {
    auto pr = scalar_problem(1.0, 2.0, 1.0);
    ValidationReport rep = validate(pr);
    CHECK_FALSE(rep.is_channel_coincident);
    CHECK(rep.channel_mismatch_norm == doctest::Approx(3.0).epsilon(1e-14));
  }
  SUBCASE("g = 1, sigma = 2, lambda = 4: coincident again") {
    auto pr = scalar_problem(1.0, 2.0, 4.0);
    ValidationReport rep = validate(pr);
    CHECK(rep.is_channel_coincident);
  }
}

TEST_CASE("validate is deterministic") {
  auto pr = scalar_problem(1.0, 1.5, 2.0);
  ValidationReport a = validate(pr);
  ValidationReport b = validate(pr);
  CHECK(a.sigma_lower_bound_estimate == b.sigma_lower_bound_estimate);
  CHECK(a.channel_mismatch_norm == b.channel_mismatch_norm);
  CHECK(a.is_channel_coincident == b.is_channel_coincident);
  CHECK(a.warnings == b.warnings);
}

TEST_CASE("coincident_lambda") {
  SUBCASE("g = 1, sigma = 2 gives lambda* = 4") {
    auto pr = scalar_problem(1.0, 2.0, 1.0);
    auto star = coincident_lambda(pr);
    REQUIRE(star.has_value());
    CHECK(*star == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("state-dependent sigma has no single lambda") {
    auto g = box1d();
    auto pr = make_problem(
        1, 1, make_vector_family("zero", 1), make_matrix_family("constant:1", 1, 1),
        [](double, std::span<const double> x, std::span<double> out) {
          out[0] = std::sqrt(1.0 + x[0] * x[0]);
        },
        make_scalar_family("zero", 1), gauss1d(g, -1, 0.25), gauss1d(g, 1, 0.25), 1.0, g);
    CHECK_FALSE(coincident_lambda(pr).has_value());
  }
  SUBCASE("rank mismatch g=[1;0] vs sigma=I") {
    Grid g2;
    g2.dim = 2;
    g2.lower = {-8, -8};
    g2.upper = {8, 8};
    g2.cells = {24, 24};
    g2.num_steps = 4;
    auto grid = make_grid(g2);
    const double m[2] = {0, 0}, c[4] = {1, 0, 0, 1};
    auto rho = sample_gaussian(grid, std::span<const double>(m, 2), std::span<const double>(c, 4));
    auto pr = make_problem(1, 2, make_vector_family("zero", 2),
                           make_matrix_family("constant:1,0", 2, 1),
                           make_matrix_family("diag:1,1", 2, 2), make_scalar_family("zero", 2),
                           rho, rho, 1.0, grid);
    CHECK_FALSE(coincident_lambda(pr).has_value());
  }
  SUBCASE("g identically zero") {
    auto pr = scalar_problem(0.0, 1.0, 1.0);
    CHECK_FALSE(coincident_lambda(pr).has_value());
  }
}

TEST_CASE("lambda defaults to the coincident value when it exists") {
  auto pr = scalar_problem(1.0, 2.0, std::nullopt);
  CHECK(pr.lambda == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("endpoint densities are validated for box mass, then renormalized") {
  auto tight = box1d(-2.0, 2.0, 16);
  const double m[1] = {0.0}, c[1] = {1.0};
  auto rho = sample_gaussian(tight, std::span<const double>(m, 1), std::span<const double>(c, 1));
  CHECK_THROWS_AS(make_problem(1, 1, make_vector_family("zero", 1),
                               make_matrix_family("constant:1", 1, 1),
                               make_matrix_family("constant:1", 1, 1),
                               make_scalar_family("zero", 1), rho, rho, 1.0, tight),
                  ConfigError);

  auto pr = scalar_problem(1.0, 1.0, 1.0);
  CHECK(std::abs(integrate(pr.rho0) - 1.0) <= 1e-14);
  CHECK(std::abs(integrate(pr.rho1) - 1.0) <= 1e-14);
}

TEST_CASE("degenerate diffusion warns instead of failing") {
  auto pr = scalar_problem(1.0, 0.0, 1.0);
  ValidationReport rep = validate(pr);
  CHECK(rep.sigma_lower_bound_estimate == 0.0);
  bool warned = false;
  for (const auto& w : rep.warnings)
    if (w.find("c3") != std::string::npos) warned = true;
  CHECK(warned);
}

TEST_CASE("trust_mask covers the requested mass share") {
  auto g = box1d();
  ScalarField rho = gauss1d(g, 0.0, 0.25);
  auto mask = trust_mask(rho, 1e-8);
  double covered = 0.0, total = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    total += rho[i];
    if (mask[i]) covered += rho[i];
  }
  CHECK(covered >= (1.0 - 1e-8) * total);
  // tails excluded
  CHECK(mask[0] == 0);
  CHECK(mask[rho.size() - 1] == 0);
}
