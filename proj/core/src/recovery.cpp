#include "sbridge/recovery.hpp"

#include <cmath>
#include <fstream>

namespace sbridge {

namespace {

inline int axis_coord(const Grid& g, std::size_t idx, int a) {
  return static_cast<int>((idx / g.stride(a)) % static_cast<std::size_t>(g.cells[a]));
}

bool interior_cell(const Grid& g, std::size_t i, int margin) {
  for (int a = 0; a < g.dim; ++a) {
    const int c = axis_coord(g, i, a);
    if (c < margin || c >= g.cells[a] - margin) return false;
  }
  return true;
}

/// Per-node residual trust region: mass shell of the node's density
/// intersected with the value mask and a two-cell interior margin.
std::vector<std::uint8_t> residual_mask(const BridgeSolution& sol, int k) {
  const Grid& g = *sol.grid;
  std::vector<std::uint8_t> mask = trust_mask(sol.rho[static_cast<std::size_t>(k)], 1e-8);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!sol.value_mask[static_cast<std::size_t>(k)][i]) mask[i] = 0;
    if (!interior_cell(g, i, 2)) mask[i] = 0;
  }
  return mask;
}

}  // namespace

std::vector<ScalarField> recover_density(const FactorTrajectory& phi_traj,
                                         const FactorTrajectory& phihat_traj,
                                         std::vector<double>* defects) {
  if (phi_traj.nodes.size() != phihat_traj.nodes.size())
    throw NumericalError("recover_density: trajectory node counts differ");
  std::vector<ScalarField> rho;
  rho.reserve(phi_traj.nodes.size());
  if (defects) defects->clear();
  for (std::size_t k = 0; k < phi_traj.nodes.size(); ++k) {
    ScalarField r(phi_traj.grid);
    for (std::size_t i = 0; i < r.size(); ++i)
      r[i] = phi_traj.nodes[k][i] * phihat_traj.nodes[k][i];
    if (defects) defects->push_back(std::abs(integrate(r) - 1.0));
    rho.push_back(std::move(r));
  }
  return rho;
}

std::vector<VectorField> recover_control(const FactorTrajectory& phi_traj,
                                         const BridgeProblem& problem) {
  const Grid& g = *problem.grid;
  OperatorWorkspace ws(problem.grid, BoundaryMode::ZeroDirichlet);
  std::vector<VectorField> out;
  out.reserve(phi_traj.nodes.size());
  std::vector<double> gmat(static_cast<std::size_t>(problem.n) * problem.m);
  for (std::size_t k = 0; k < phi_traj.nodes.size(); ++k) {
    const double t = g.time_node(static_cast<int>(k));
    ScoreResult s = score(phi_traj.nodes[k], ws);
    VectorField u(problem.grid, problem.m);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto x = g.center(i);
      problem.g(t, std::span<const double>(x.data(), problem.n), gmat);
      for (int b = 0; b < problem.m; ++b) {
        double acc = 0.0;
        for (int a = 0; a < problem.n; ++a)
          acc += gmat[static_cast<std::size_t>(a) * problem.m + b] * s.field.at(i, a);
        u.at(i, b) = problem.lambda * acc;
      }
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<ScalarField> recover_value(const FactorTrajectory& phi_traj, double lambda) {
  std::vector<ScalarField> out;
  out.reserve(phi_traj.nodes.size());
  for (const ScalarField& phi : phi_traj.nodes) {
    ScalarField S(phi.grid);
    for (std::size_t i = 0; i < S.size(); ++i) S[i] = lambda * std::log(phi[i]);
    out.push_back(std::move(S));
  }
  return out;
}

BridgeSolution recover_solution(const SolveReport& report, const BridgeProblem& problem) {
  if (report.phi.nodes.empty() || report.phihat.nodes.empty())
    throw NumericalError(
        "recover_solution: report carries no factor trajectories (the first "
        "solver pass failed: " +
        (report.failure_reason.empty() ? std::string("unknown") : report.failure_reason) + ")");
  BridgeSolution sol;
  sol.grid = problem.grid;
  sol.regime = report.regime;
  sol.converged = report.converged;
  sol.rho = recover_density(report.phi, report.phihat, &sol.mass_defect);
  sol.u = recover_control(report.phi, problem);
  sol.S = recover_value(report.phi, problem.lambda);
  sol.value_mask.resize(report.phi.nodes.size());
  for (std::size_t k = 0; k < report.phi.nodes.size(); ++k) {
    const ScalarField& phi = report.phi.nodes[k];
    const double floor = kScoreFloorRel * phi.max();
    sol.value_mask[k].assign(phi.size(), 0);
    for (std::size_t i = 0; i < phi.size(); ++i) sol.value_mask[k][i] = phi[i] >= floor ? 1 : 0;
  }
  return sol;
}

double primal_residual(const BridgeSolution& sol, const BridgeProblem& pr) {
  const Grid& g = *sol.grid;
  const int K = g.num_steps;
  const double dt = g.dt();
  OperatorWorkspace ws(sol.grid, BoundaryMode::ZeroFlux);
  double worst = 0.0, rho_max = 0.0;
  std::vector<double> gmat(static_cast<std::size_t>(pr.n) * pr.m);
  for (const auto& r : sol.rho)
    for (double x : r.v) rho_max = std::max(rho_max, std::abs(x));

  for (int k = 1; k < K; ++k) {
    const double t = g.time_node(k);
    const ScalarField& rho = sol.rho[static_cast<std::size_t>(k)];
    VectorField flow(sol.grid, g.dim);
    VectorField f = sample_vector(pr.f, pr.n, pr.grid, t);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto x = g.center(i);
      pr.g(t, std::span<const double>(x.data(), pr.n), gmat);
      for (int a = 0; a < g.dim; ++a) {
        double gu = 0.0;
        for (int b = 0; b < pr.m; ++b)
          gu += gmat[static_cast<std::size_t>(a) * pr.m + b] *
                sol.u[static_cast<std::size_t>(k)].at(i, b);
        flow.at(i, a) = rho[i] * (f.at(i, a) + gu);
      }
    }
    ScalarField div = conservative_divergence(flow, ws);
    ScalarField lap = weighted_laplacian(rho, build_sigma_tensor(pr, t), ws);
    auto mask = residual_mask(sol, k);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!mask[i]) continue;
      const double drho = (sol.rho[static_cast<std::size_t>(k + 1)][i] -
                           sol.rho[static_cast<std::size_t>(k - 1)][i]) /
                          (2.0 * dt);
      worst = std::max(worst, std::abs(drho + div[i] - 0.5 * lap[i]));
    }
  }
  return rho_max > 0.0 ? worst * (g.t1 - g.t0) / rho_max : worst;
}

double dual_residual(const BridgeSolution& sol, const BridgeProblem& pr) {
  const Grid& g = *sol.grid;
  const int K = g.num_steps;
  const double dt = g.dt();
  OperatorWorkspace ws(sol.grid, BoundaryMode::ZeroDirichlet);
  double worst = 0.0, s_scale = 0.0;
  std::vector<double> gmat(static_cast<std::size_t>(pr.n) * pr.m);

  for (int k = 1; k < K; ++k) {
    const double t = g.time_node(k);
    const ScalarField& S = sol.S[static_cast<std::size_t>(k)];
    VectorField gS = gradient(S, ws);
    ScalarField hS = hessian_contraction(S, build_sigma_tensor(pr, t), ws);
    VectorField f = sample_vector(pr.f, pr.n, pr.grid, t);
    ScalarField q = sample_scalar(pr.q, pr.grid, t);
    auto mask = residual_mask(sol, k);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!mask[i]) continue;
      auto x = g.center(i);
      pr.g(t, std::span<const double>(x.data(), pr.n), gmat);
      // g g^T grad S
      double quad = 0.0, adv = 0.0;
      for (int b = 0; b < pr.m; ++b) {
        double gts = 0.0;
        for (int a = 0; a < pr.n; ++a)
          gts += gmat[static_cast<std::size_t>(a) * pr.m + b] * gS.at(i, a);
        quad += gts * gts;
      }
      for (int a = 0; a < pr.n; ++a) adv += gS.at(i, a) * f.at(i, a);
      const double dS = (sol.S[static_cast<std::size_t>(k + 1)][i] -
                         sol.S[static_cast<std::size_t>(k - 1)][i]) /
                        (2.0 * dt);
      worst = std::max(worst, std::abs(dS + adv + 0.5 * quad + 0.5 * hS[i] - q[i]));
      s_scale = std::max(s_scale, std::abs(S[i]));
    }
  }
  return s_scale > 0.0 ? worst * (g.t1 - g.t0) / s_scale : worst;
}

double objective_value(const BridgeSolution& sol, const BridgeProblem& pr) {
  const Grid& g = *sol.grid;
  const int K = g.num_steps;
  double acc = 0.0;
  for (int k = 0; k <= K; ++k) {
    const double t = g.time_node(k);
    const ScalarField& rho = sol.rho[static_cast<std::size_t>(k)];
    const VectorField& u = sol.u[static_cast<std::size_t>(k)];
    const double mass = integrate(rho);
    if (!(mass > 0.0)) continue;
    ScalarField q = sample_scalar(pr.q, pr.grid, t);
    double node = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double u2 = 0.0;
      for (int b = 0; b < pr.m; ++b) u2 += u.at(i, b) * u.at(i, b);
      node += (q[i] + 0.5 * u2) * rho[i] / mass;
    }
    node *= g.cell_volume();
    acc += node * g.dt() * ((k == 0 || k == K) ? 0.5 : 1.0);
  }
  return acc;
}

void export_solution_csv(const std::filesystem::path& path, const BridgeSolution& sol) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  const Grid& g = *sol.grid;
  os.precision(17);
  os << "t," << (g.dim == 1 ? "x0" : "x0,x1") << ",rho";
  const int m = sol.u.empty() ? 0 : sol.u.front().comps;
  for (int b = 0; b < m; ++b) os << ",u" << b;
  os << ",S\n";
  for (std::size_t k = 0; k < sol.rho.size(); ++k) {
    const double t = g.time_node(static_cast<int>(k));
    const double mass = integrate(sol.rho[k]);
    const double scale = mass > 0.0 ? 1.0 / mass : 1.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto x = g.center(i);
      os << t;
      for (int a = 0; a < g.dim; ++a) os << "," << x[a];
      os << "," << sol.rho[k][i] * scale;
      for (int b = 0; b < m; ++b) os << "," << sol.u[k].at(i, b);
      os << "," << sol.S[k][i] << "\n";
    }
  }
}

void write_summary(const std::filesystem::path& path, const BridgeSolution& sol,
                   const SolveReport& rep, const BridgeProblem& pr,
                   const std::vector<std::string>& extra_lines) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(12);
  os << "sbridge solve summary (format v1)\n";
  os << "regime: " << (rep.regime == Regime::Linear ? "linear" : "nonlinear") << "\n";
  os << "converged: " << (rep.converged ? "true" : "false") << "\n";
  os << "iterations: " << rep.iterations << "\n";
  if (!rep.failure_reason.empty()) os << "failure_reason: " << rep.failure_reason << "\n";
  if (!rep.history.empty()) {
    os << "final_hilbert_distance: " << rep.history.back().d_h_phi1 << "\n";
    os << "final_marginal_l1: " << rep.history.back().marginal_l1 << "\n";
  }
  os << "lambda: " << pr.lambda << "\n";
  os << "mass_defect_t0: " << rep.mass_defect_t0 << "\n";
  os << "mass_defect_t1: " << rep.mass_defect_t1 << "\n";
  double max_defect = 0.0;
  for (double d : sol.mass_defect) max_defect = std::max(max_defect, d);
  os << "max_node_mass_defect: " << max_defect
     << "  (exported rho is renormalized per node; defect logged here)\n";
  os << "primal_residual: " << primal_residual(sol, pr) << "\n";
  os << "dual_residual: " << dual_residual(sol, pr) << "\n";
  os << "objective_value: " << objective_value(sol, pr) << "\n";
  os << "score_floor_activations: " << rep.stats.score_floor_activations << "\n";
  os << "stabilization_clips: " << rep.stats.stabilization_clips << "\n";
  os << "negative_density_clips: " << rep.stats.negative_density_clips << "\n";
  os << "max_substeps: " << rep.stats.max_substeps << "\n";
  for (const auto& line : extra_lines) os << line << "\n";
}

}  // namespace sbridge
