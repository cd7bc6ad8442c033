#pragma once

#include <filesystem>

#include "sbridge/integrators.hpp"

namespace sbridge {

/// Hilbert projective distance log(max_i u_i/v_i) - log(min_i u_i/v_i).
double hilbert_distance(const ScalarField& u, const ScalarField& v);

/// Same, restricted to cells with mask != 0.
double hilbert_distance_masked(const ScalarField& u, const ScalarField& v,
                               const std::vector<std::uint8_t>& mask);

struct IterationRecord {
  int iteration = 0;
  double d_h_phi1 = 0.0;
  double d_h_phihat0 = 0.0;
  double marginal_l1 = 0.0;
  double wall_time_s = 0.0;
};

struct SolveOptions {
  double tol = 1e-8;           // Hilbert distance between successive phi(t1) iterates
  double marginal_tol = 1e-6;  // endpoint L1 double-check
  int max_iter = 0;            // 0 -> default: 500 linear, 200 nonlinear
  double damping = 1.0;        // phi1 <- phi1^(1-g) * (rho1/phihat1)^g
  enum class Guess { Ones, SqrtRho1 } guess = Guess::Ones;
};

enum class Regime { Linear, Nonlinear };

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  Regime regime = Regime::Linear;
  FactorTrajectory phi;     // backward factor, all nodes
  FactorTrajectory phihat;  // forward factor, all nodes
  std::vector<IterationRecord> history;
  std::string failure_reason;  // non-empty if an integrator pass aborted
  StepStats stats;
  double mass_defect_t0 = 0.0;  // |integrate(phihat phi) - 1| at the endpoints
  double mass_defect_t1 = 0.0;
  SolveOptions options;
};

ScalarField initial_guess(const BridgeProblem& problem, SolveOptions::Guess guess);

/// Dynamic Sinkhorn recursion for channel-coincident problems: backward pass,
/// phihat(t0) = rho0/phi(t0), forward pass, phi(t1) = rho1/phihat(t1), until
/// successive phi(t1) iterates stall in the Hilbert metric and the endpoint
/// marginals match. Never throws for non-convergence or integrator failure;
/// the report carries the outcome.
SolveReport sinkhorn_linear(const BridgeProblem& problem, const StepScheme& scheme,
                            const SolveOptions& options);

/// Generalized recursion with the score-dependent excess drift and reaction:
/// the backward pass saves phi(t) at every node and the forward pass freezes
/// those fields. Convergence is observed, not guaranteed; the history records
/// whatever happened.
SolveReport sinkhorn_generalized(const BridgeProblem& problem, const StepScheme& scheme,
                                 const SolveOptions& options);

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<IterationRecord>& history);

}  // namespace sbridge
