#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sbridge/grid.hpp"

namespace sbridge {

/// A control-affine bridge instance: steer density rho0 to rho1 over the
/// grid's horizon under dx = (f + g u) dt + sigma dw, minimizing the expected
/// state cost q plus quadratic control effort. lambda scales the log
/// transform between the value function and the backward factor.
struct BridgeProblem {
  int n = 1;  // state dimension, equals grid.dim
  int m = 1;  // input dimension
  int p = 1;  // noise dimension
  VectorFn f;      // (t,x) -> R^n
  MatrixFn g;      // (t,x) -> R^{n x m}
  MatrixFn sigma;  // (t,x) -> R^{n x p}
  ScalarFn q;      // (t,x) -> R
  ScalarField rho0, rho1;  // unit mass on the grid (renormalized at build)
  double lambda = 1.0;
  std::shared_ptr<const Grid> grid;

  // Box mass of the raw densities before renormalization, kept for validation.
  double rho0_box_mass = 1.0;
  double rho1_box_mass = 1.0;
};

struct ValidationReport {
  double sigma_lower_bound_estimate = 0.0;  // empirical c3: min eigenvalue of Sigma on the lattice
  double channel_mismatch_norm = 0.0;       // max Frobenius norm of lambda*g*g^T - Sigma
  bool is_channel_coincident = false;
  std::vector<std::string> warnings;
};

/// Builds a problem from raw (possibly unnormalized) endpoint densities.
/// Errors if either density carries box mass below 1 - 1e-8 or is negative;
/// densities are renormalized to exact unit mass afterwards.
BridgeProblem make_problem(int m, int p, VectorFn f, MatrixFn g, MatrixFn sigma, ScalarFn q,
                           ScalarField rho0_raw, ScalarField rho1_raw,
                           std::optional<double> lambda, std::shared_ptr<const Grid> grid);

/// Per-cell diffusion tensor Sigma = sigma sigma^T at time t.
MatrixField build_sigma_tensor(const BridgeProblem& problem, double t);

/// Per-cell channel mismatch lambda g g^T - Sigma at time t.
MatrixField mismatch_field(const BridgeProblem& problem, double t);

/// Samples coefficients on all cells at 9 uniformly spaced times. A2 is
/// estimated empirically; A1 has no numerical certificate and is recorded as
/// a warning instead.
ValidationReport validate(const BridgeProblem& problem);

/// Least-squares lambda* = <gg^T, Sigma>_F / <gg^T, gg^T>_F over the sampling
/// lattice; returned only if the residual mismatch is negligible.
std::optional<double> coincident_lambda(const BridgeProblem& problem);

/// Trust region for diagnostics: cells covering all but mass_tol of the given
/// density's mass (mirrors the 1e-8 truncation tolerance on the endpoints).
std::vector<std::uint8_t> trust_mask(const ScalarField& rho, double mass_tol);

}  // namespace sbridge
