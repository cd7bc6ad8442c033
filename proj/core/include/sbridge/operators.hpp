#pragma once

#include "sbridge/problem.hpp"

namespace sbridge {

/// Boundary closure for the conservative operators. ZeroFlux zeroes the
/// domain-boundary face fluxes (mass-conserving); ZeroDirichlet extrapolates
/// against a zero wall value. Gradients and Hessian contractions always fall
/// back to one-sided second-order stencils at boundary cells.
enum class BoundaryMode { ZeroFlux, ZeroDirichlet };

struct OperatorWorkspace {
  std::shared_ptr<const Grid> grid;
  BoundaryMode mode = BoundaryMode::ZeroFlux;
  std::array<double, kMaxDim> inv_h{};
  std::array<double, kMaxDim> inv_2h{};
  std::array<double, kMaxDim> inv_h2{};

  OperatorWorkspace() = default;
  explicit OperatorWorkspace(std::shared_ptr<const Grid> g,
                             BoundaryMode m = BoundaryMode::ZeroFlux)
      : grid(std::move(g)), mode(m) {
    for (int a = 0; a < grid->dim; ++a) {
      inv_h[a] = 1.0 / grid->h(a);
      inv_2h[a] = 0.5 * inv_h[a];
      inv_h2[a] = inv_h[a] * inv_h[a];
    }
  }
};

/// Central second-order differences; one-sided second-order at boundary cells.
VectorField gradient(const ScalarField& f, const OperatorWorkspace& ws);

/// (div M)_i = sum_j dM_ij/dx_j for a square matrix field.
VectorField matrix_divergence(const MatrixField& M, const OperatorWorkspace& ws);

/// Flux-form divergence of a cell-centered vector field with face values
/// averaged from the adjacent cells and zero flux through the domain
/// boundary. Telescoping makes integrate(result) vanish identically.
ScalarField conservative_divergence(const VectorField& w, const OperatorWorkspace& ws);

/// Weighted Laplacian sum_ij d^2(Sigma_ij f)/dx_i dx_j in conservative form:
/// compact flux stencils for the diagonal pairs, inner central derivative
/// plus face-averaged outer flux for the mixed pairs.
ScalarField weighted_laplacian(const ScalarField& f, const MatrixField& Sigma,
                               const OperatorWorkspace& ws);

/// sum_ij Sigma_ij(x) * d^2 f/dx_i dx_j, mixed partials by successive
/// central differences.
ScalarField hessian_contraction(const ScalarField& f, const MatrixField& Sigma,
                                const OperatorWorkspace& ws);

struct Lemma1Residual {
  double full = 0.0;        // six-term product rule
  double beta_one = 0.0;    // beta == 1 special case
  double sigma_identity = 0.0;  // Sigma == I special case
};

/// Max-norm over interior cells (two-cell margin) of the discrete defect of
/// the weighted-Laplacian product rule and its two special cases.
Lemma1Residual lemma1_residual(const ScalarField& alpha, const ScalarField& beta,
                               const MatrixField& Sigma, const OperatorWorkspace& ws);

/// Max-norm interior defect of Hess(lambda log phi) against
/// -(lambda/phi^2) grad phi grad phi^T + (lambda/phi) Hess phi.
double hessian_log_identity_residual(const ScalarField& phi, double lambda,
                                     const OperatorWorkspace& ws);

struct ScoreResult {
  VectorField field;
  long floor_activations = 0;
  double floor_value = 0.0;
};

/// grad(phi) / max(phi, eps) with eps = 1e-12 * max(phi). Cells where the
/// floor replaced the denominator are counted; callers treat them as
/// untrustworthy in diagnostics.
ScoreResult score(const ScalarField& phi, const OperatorWorkspace& ws);

inline constexpr double kScoreFloorRel = 1e-12;

/// Excess additive drift (lambda g g^T - Sigma) grad log phi.
VectorField excess_drift(const ScalarField& phi, const BridgeProblem& problem, double t,
                         const OperatorWorkspace& ws);

/// Excess reaction rate 1/2 (grad log phi)^T (lambda g g^T - Sigma) grad log phi.
ScalarField excess_reaction(const ScalarField& phi, const BridgeProblem& problem, double t,
                            const OperatorWorkspace& ws);

}  // namespace sbridge
