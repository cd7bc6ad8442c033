#pragma once

#include "sbridge/fixedpoint.hpp"

namespace sbridge {

/// Reconstructed optimal flow. rho holds the raw factor products; the
/// per-node normalization defect is recorded, never silently corrected.
/// Exports renormalize and log the defect.
struct BridgeSolution {
  std::shared_ptr<const Grid> grid;
  std::vector<ScalarField> rho;
  std::vector<VectorField> u;  // m components per cell
  std::vector<ScalarField> S;
  std::vector<double> mass_defect;                    // per node |integrate(rho) - 1|
  std::vector<std::vector<std::uint8_t>> value_mask;  // 1 = phi above the score floor
  Regime regime = Regime::Linear;
  bool converged = false;
};

std::vector<ScalarField> recover_density(const FactorTrajectory& phi_traj,
                                         const FactorTrajectory& phihat_traj,
                                         std::vector<double>* defects = nullptr);

/// u_opt(t,.) = lambda g^T grad log phi(t,.), via the safeguarded score.
std::vector<VectorField> recover_control(const FactorTrajectory& phi_traj,
                                         const BridgeProblem& problem);

/// S = lambda log phi.
std::vector<ScalarField> recover_value(const FactorTrajectory& phi_traj, double lambda);

BridgeSolution recover_solution(const SolveReport& report, const BridgeProblem& problem);

/// Max-norm residual of the primal (controlled FPK) equation over interior
/// cells and interior time nodes, restricted to the per-node trust region
/// (cells carrying all but 1e-8 of the node's mass, above the score floor),
/// normalized by max|rho| / (t1 - t0).
double primal_residual(const BridgeSolution& solution, const BridgeProblem& problem);

/// Analogous residual of the dual (HJB-like) equation on the value function,
/// masked on floor-activated cells, normalized by max|S| / (t1 - t0) over the
/// trust region.
double dual_residual(const BridgeSolution& solution, const BridgeProblem& problem);

/// Trapezoid-in-time, midpoint-in-space quadrature of (q + |u|^2/2) rho with
/// per-node unit-mass normalization of rho.
double objective_value(const BridgeSolution& solution, const BridgeProblem& problem);

/// Per-node CSV: t, coordinates, rho (renormalized), u components, S.
void export_solution_csv(const std::filesystem::path& path, const BridgeSolution& solution);

void write_summary(const std::filesystem::path& path, const BridgeSolution& solution,
                   const SolveReport& report, const BridgeProblem& problem,
                   const std::vector<std::string>& extra_lines = {});

}  // namespace sbridge
