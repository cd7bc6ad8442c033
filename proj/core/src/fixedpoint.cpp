#include "sbridge/fixedpoint.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace sbridge {

namespace {

void check_positive(const ScalarField& f, const char* what) {
  for (double x : f.v)
    if (!(x > 0.0)) throw NumericalError(std::string(what) + ": nonpositive entry");
}

/// rho / max(denom, 1e-12 max denom), counting floor activations.
ScalarField safeguarded_ratio(const ScalarField& rho, const ScalarField& denom,
                              StepStats* stats) {
  const double floor = kScoreFloorRel * denom.max();
  ScalarField out(rho.grid);
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double d = denom[i];
    if (d < floor && stats) ++stats->score_floor_activations;
    out[i] = rho[i] / std::max(d, floor);
  }
  // The ratio of a decaying density by a floored field can underflow below
  // the representable range of later passes; keep it on the positivity floor.
  const double posfloor = kPosFloorRel * out.max();
  for (double& x : out.v)
    if (x < posfloor) {
      x = posfloor;
      if (stats) ++stats->stabilization_clips;
    }
  return out;
}

/// Hilbert distance over cells where both fields sit above their score
/// floors; falls back to the full vector if the trusted sets are disjoint.
double trusted_hilbert(const ScalarField& u, const ScalarField& v) {
  const double fu = kScoreFloorRel * u.max();
  const double fv = kScoreFloorRel * v.max();
  std::vector<std::uint8_t> mask(u.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] >= fu && v[i] >= fv) {
      mask[i] = 1;
      ++count;
    }
  if (count == 0) return hilbert_distance(u, v);
  return hilbert_distance_masked(u, v, mask);
}

/// L1 distance between the unit-mass normalization of `product` and rho.
/// The raw product differs from rho by the scheme's duality defect, reported
/// separately as a mass defect; the marginal measures shape.
double shape_marginal_l1(const ScalarField& product, const ScalarField& rho) {
  const double mass = integrate(product);
  if (!(mass > 0.0)) return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) s += std::abs(product[i] / mass - rho[i]);
  return s * rho.grid->cell_volume();
}

SolveReport run_sinkhorn(const BridgeProblem& pr, const StepScheme& scheme,
                         const SolveOptions& options, Regime regime) {
  const auto t_start = std::chrono::steady_clock::now();
  SolveReport rep;
  rep.regime = regime;
  rep.options = options;
  const bool nonlinear = regime == Regime::Nonlinear;
  const int max_iter = options.max_iter > 0 ? options.max_iter : (nonlinear ? 200 : 500);

  ScalarField phi1 = initial_guess(pr, options.guess);
  ScalarField prev_phihat0;
  SubstepMemory memory;

  for (int it = 0; it < max_iter; ++it) {
    FactorTrajectory phi_traj, phihat_traj;
    ScalarField phihat0;
    try {
      phi_traj = nonlinear
                     ? backward_phi_nonlinear(phi1, pr, scheme, &rep.stats, &memory)
                     : backward_phi_linear(phi1, pr, scheme, &rep.stats);
      phihat0 = safeguarded_ratio(pr.rho0, phi_traj.nodes.front(), &rep.stats);
      phihat_traj = nonlinear
                        ? forward_phihat_nonlinear(phihat0, phi_traj, pr, scheme, &rep.stats,
                                                   &memory)
                        : forward_phihat_linear(phihat0, pr, scheme, &rep.stats);
    } catch (const NumericalError& e) {
      rep.converged = false;
      rep.failure_reason = e.what();
      rep.iterations = it;
      return rep;
    }

    const ScalarField& phihat1 = phihat_traj.nodes.back();
    ScalarField product(pr.grid);
    for (std::size_t i = 0; i < product.size(); ++i) product[i] = phihat1[i] * phi1[i];
    const double marginal = shape_marginal_l1(product, pr.rho1);

    ScalarField raw = safeguarded_ratio(pr.rho1, phihat1, &rep.stats);
    ScalarField next(pr.grid);
    if (options.damping >= 1.0) {
      next = raw;
    } else {
      const double gmm = options.damping;
      for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = std::pow(phi1[i], 1.0 - gmm) * std::pow(raw[i], gmm);
    }
    // Gauge normalization: the recursion is projective, and with nonzero
    // reaction the factor scales would otherwise drift geometrically.
    const double scale = next.max();
    for (double& x : next.v) x /= scale;

    IterationRecord rec;
    rec.iteration = it;
    // The projective gauge is measured over mutually trusted cells: below the
    // score floor the iterates carry no information and can toggle at grid
    // scale without affecting the bridge.
    rec.d_h_phi1 = trusted_hilbert(next, phi1);
    rec.d_h_phihat0 = prev_phihat0.grid ? trusted_hilbert(phihat0, prev_phihat0)
                                        : std::numeric_limits<double>::quiet_NaN();
    rec.marginal_l1 = marginal;
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    rep.history.push_back(rec);

    prev_phihat0 = phihat0;
    phi1 = std::move(next);
    rep.iterations = it + 1;
    rep.phi = std::move(phi_traj);
    rep.phihat = std::move(phihat_traj);

    if (rec.d_h_phi1 <= options.tol && marginal <= options.marginal_tol) {
      rep.converged = true;
      break;
    }
  }

  // Endpoint mass defects of the stored (consistent) factor pair.
  ScalarField p0(pr.grid), p1(pr.grid);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    p0[i] = rep.phihat.nodes.front()[i] * rep.phi.nodes.front()[i];
    p1[i] = rep.phihat.nodes.back()[i] * rep.phi.nodes.back()[i];
  }
  rep.mass_defect_t0 = std::abs(integrate(p0) - 1.0);
  rep.mass_defect_t1 = std::abs(integrate(p1) - 1.0);
  return rep;
}

}  // namespace

double hilbert_distance(const ScalarField& u, const ScalarField& v) {
  check_positive(u, "hilbert_distance");
  check_positive(v, "hilbert_distance");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = std::log(u[i]) - std::log(v[i]);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return hi - lo;
}

double hilbert_distance_masked(const ScalarField& u, const ScalarField& v,
                               const std::vector<std::uint8_t>& mask) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t count = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!mask[i]) continue;
    if (!(u[i] > 0.0) || !(v[i] > 0.0))
      throw NumericalError("hilbert_distance_masked: nonpositive entry inside mask");
    const double r = std::log(u[i]) - std::log(v[i]);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    ++count;
  }
  if (count == 0) throw NumericalError("hilbert_distance_masked: empty mask");
  return hi - lo;
}

ScalarField initial_guess(const BridgeProblem& problem, SolveOptions::Guess guess) {
  if (guess == SolveOptions::Guess::Ones) return ScalarField(problem.grid, 1.0);
  ScalarField out(problem.grid);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(problem.rho1[i]);
  // sqrt of a compactly supported density can vanish; keep strictly positive
  const double floor = kPosFloorRel * std::max(out.max(), 1e-300);
  for (double& x : out.v) x = std::max(x, floor);
  return out;
}

SolveReport sinkhorn_linear(const BridgeProblem& problem, const StepScheme& scheme,
                            const SolveOptions& options) {
  ValidationReport v = validate(problem);
  if (!v.is_channel_coincident)
    throw NumericalError(
        "sinkhorn_linear requires coincident channels (lambda g g^T = Sigma); "
        "use sinkhorn_generalized");
  return run_sinkhorn(problem, scheme, options, Regime::Linear);
}

SolveReport sinkhorn_generalized(const BridgeProblem& problem, const StepScheme& scheme,
                                 const SolveOptions& options) {
  return run_sinkhorn(problem, scheme, options, Regime::Nonlinear);
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<IterationRecord>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "iteration,d_h_phi1,d_h_phihat0,marginal_l1,wall_time_s\n";
  os.precision(17);
  for (const auto& r : history)
    os << r.iteration << "," << r.d_h_phi1 << "," << r.d_h_phihat0 << "," << r.marginal_l1 << ","
       << r.wall_time_s << "\n";
}

}  // namespace sbridge
