#include "sbridge/integrators.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "sbridge/field_io.hpp"

namespace sbridge {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline int axis_coord(const Grid& g, std::size_t idx, int a) {
  return static_cast<int>((idx / g.stride(a)) % static_cast<std::size_t>(g.cells[a]));
}

/// Assembles the forward diffusion operator (1/2) Delta_Sigma in conservative
/// zero-flux form as a sparse matrix acting on cell values. The backward
/// equation uses the exact transpose, which in the interior reduces to the
/// central discretization of (1/2) <Sigma, Hess .>.
SpMat assemble_forward_diffusion(const BridgeProblem& pr, double t) {
  const Grid& g = *pr.grid;
  const std::size_t N = g.size();
  MatrixField Sig = build_sigma_tensor(pr, t);
  std::vector<Triplet> trip;
  trip.reserve(N * (g.dim == 1 ? 3 : 12));

  for (int a = 0; a < g.dim; ++a) {
    const std::size_t s = g.stride(a);
    const int na = g.cells[a];
    const double ih2 = 1.0 / (g.h(a) * g.h(a));
    for (std::size_t k = 0; k < N; ++k) {
      const int c = axis_coord(g, k, a);
      // d2(Sigma_aa rho)/dx_a^2, compact flux form, zero boundary-face flux
      if (c + 1 < na) {
        trip.emplace_back(k, k + s, 0.5 * ih2 * Sig.at(k + s, a, a));
        trip.emplace_back(k, k, -0.5 * ih2 * Sig.at(k, a, a));
      }
      if (c > 0) {
        trip.emplace_back(k, k - s, 0.5 * ih2 * Sig.at(k - s, a, a));
        trip.emplace_back(k, k, -0.5 * ih2 * Sig.at(k, a, a));
      }
    }
  }

  // Mixed pairs: inner central derivative along b of (Sigma_ab rho), outer
  // face-averaged flux along a with zero boundary faces.
  for (int a = 0; a < g.dim; ++a)
    for (int b = 0; b < g.dim; ++b) {
      if (a == b) continue;
      const std::size_t sa = g.stride(a), sb = g.stride(b);
      const int naa = g.cells[a], nbb = g.cells[b];
      const double iha = 1.0 / g.h(a);
      const double i2hb = 0.5 / g.h(b);
      auto inner = [&](std::size_t m, double w, auto&& emit) {
        const int cb = axis_coord(g, m, b);
        if (cb == 0) {
          emit(m, -3.0 * i2hb * w);
          emit(m + sb, 4.0 * i2hb * w);
          emit(m + 2 * sb, -1.0 * i2hb * w);
        } else if (cb == nbb - 1) {
          emit(m, 3.0 * i2hb * w);
          emit(m - sb, -4.0 * i2hb * w);
          emit(m - 2 * sb, 1.0 * i2hb * w);
        } else {
          emit(m + sb, i2hb * w);
          emit(m - sb, -i2hb * w);
        }
      };
      for (std::size_t k = 0; k < N; ++k) {
        const int ca = axis_coord(g, k, a);
        auto emit = [&](std::size_t src, double w) {
          trip.emplace_back(k, src, 0.5 * w * Sig.at(src, a, b));
        };
        if (ca + 1 < naa) {
          inner(k + sa, 0.5 * iha, emit);
          inner(k, 0.5 * iha, emit);
        }
        if (ca > 0) {
          inner(k, -0.5 * iha, emit);
          inner(k - sa, -0.5 * iha, emit);
        }
      }
    }

  SpMat D(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  D.setFromTriplets(trip.begin(), trip.end());
  D.makeCompressed();
  return D;
}

double max_sigma_eig(const BridgeProblem& pr, double t) {
  MatrixField Sig = build_sigma_tensor(pr, t);
  const int n = pr.n;
  double worst = 0.0;
  for (std::size_t i = 0; i < Sig.grid->size(); ++i) {
    if (n == 1) {
      worst = std::max(worst, Sig.at(i, 0, 0));
    } else {
      const double tr = Sig.at(i, 0, 0) + Sig.at(i, 1, 1);
      const double det = Sig.at(i, 0, 0) * Sig.at(i, 1, 1) - Sig.at(i, 0, 1) * Sig.at(i, 1, 0);
      const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
      worst = std::max(worst, tr / 2.0 + disc);
    }
  }
  return worst;
}

bool coefficients_time_constant(const BridgeProblem& pr) {
  const Grid& g = *pr.grid;
  const double times[3] = {g.t0, 0.5 * (g.t0 + g.t1), g.t1};
  auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
    double scale = 1.0;
    for (double x : a) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[i]) > 1e-14 * scale) return false;
    return true;
  };
  auto f0 = sample_vector(pr.f, pr.n, pr.grid, times[0]);
  auto q0 = sample_scalar(pr.q, pr.grid, times[0]);
  auto s0 = build_sigma_tensor(pr, times[0]);
  auto m0 = mismatch_field(pr, times[0]);
  for (int j = 1; j < 3; ++j) {
    if (!close(f0.v, sample_vector(pr.f, pr.n, pr.grid, times[j]).v)) return false;
    if (!close(q0.v, sample_scalar(pr.q, pr.grid, times[j]).v)) return false;
    if (!close(s0.v, build_sigma_tensor(pr, times[j]).v)) return false;
    if (!close(m0.v, mismatch_field(pr, times[j]).v)) return false;
  }
  return true;
}

struct Lu {
  Eigen::SparseLU<SpMat> solver;
  bool ready = false;
};

class Marcher {
 public:
  Marcher(const BridgeProblem& pr, const StepScheme& scheme, bool backward, StepStats* stats)
      : pr_(pr),
        grid_(*pr.grid),
        scheme_(scheme),
        backward_(backward),
        stats_(stats),
        time_constant_(coefficients_time_constant(pr)) {
    set_operator(grid_.t0);
  }

  bool time_constant() const { return time_constant_; }

  void set_operator(double t) {
    if (have_op_ && (time_constant_ || t == op_time_)) return;
    D_ = assemble_forward_diffusion(pr_, t);
    if (backward_) D_ = SpMat(D_.transpose());
    lus_.clear();
    have_op_ = true;
    op_time_ = t;
  }

  void apply_diffusion(const std::vector<double>& u, std::vector<double>& out) {
    Eigen::Map<const Eigen::VectorXd> um(u.data(), static_cast<Eigen::Index>(u.size()));
    Eigen::Map<Eigen::VectorXd> om(out.data(), static_cast<Eigen::Index>(out.size()));
    om = D_ * um;
  }

  /// Solves (I - c D) x = b against the currently set operator.
  void solve_implicit(double c, const std::vector<double>& b, std::vector<double>& x) {
    auto& lu = lus_[c];
    if (!lu.ready) {
      SpMat A(D_.rows(), D_.cols());
      A.setIdentity();
      A -= c * D_;
      lu.solver.compute(A);
      if (lu.solver.info() != Eigen::Success)
        throw NumericalError("implicit diffusion factorization failed");
      lu.ready = true;
    }
    Eigen::Map<const Eigen::VectorXd> bm(b.data(), static_cast<Eigen::Index>(b.size()));
    Eigen::VectorXd sol = lu.solver.solve(bm);
    if (lu.solver.info() != Eigen::Success) throw NumericalError("implicit diffusion solve failed");
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = sol[static_cast<Eigen::Index>(i)];
  }

  double diffusion_cfl_limit(double t) const {
    const double eig = max_sigma_eig(pr_, t);
    double hmin = grid_.h(0);
    for (int a = 1; a < grid_.dim; ++a) hmin = std::min(hmin, grid_.h(a));
    return eig > 0.0 ? scheme_.cfl_safety * hmin * hmin / (2.0 * eig)
                     : std::numeric_limits<double>::infinity();
  }

  void guard_positive(std::vector<double>& u, const char* what) {
    double mx = 0.0, mn = std::numeric_limits<double>::infinity();
    for (double x : u) {
      mx = std::max(mx, std::abs(x));
      mn = std::min(mn, x);
    }
    if (!std::isfinite(mx)) throw NumericalError(std::string(what) + ": non-finite values");
    if (mn < -kNegAbortRel * mx) {
      std::ostringstream os;
      os << what << ": positivity lost (min " << mn << " vs max " << mx << ")";
      throw NumericalError(os.str());
    }
    const double floor = kPosFloorRel * mx;
    for (double& x : u)
      if (x < floor) {
        x = floor;
        if (stats_) ++stats_->stabilization_clips;
      }
  }

  void guard_density(std::vector<double>& u, const char* what) {
    for (double& x : u) {
      if (!std::isfinite(x)) throw NumericalError(std::string(what) + ": non-finite values");
      if (x < 0.0) {
        if (x < -1e-10) {
          std::ostringstream os;
          os << what << ": negative density " << x << " below -1e-10";
          throw NumericalError(os.str());
        }
        x = 0.0;
        if (stats_) ++stats_->negative_density_clips;
      }
    }
  }

  const BridgeProblem& pr_;
  const Grid& grid_;
  StepScheme scheme_;
  bool backward_ = false;
  StepStats* stats_ = nullptr;
  bool time_constant_ = false;
  bool have_op_ = false;
  double op_time_ = 0.0;
  SpMat D_;
  std::map<double, Lu> lus_;
};

/// Explicit-part evaluation: writes E(t, u) into out and returns the max
/// explicit rate (1/time) used for sub-step sizing.
using ExplicitFn = std::function<double(double t, const std::vector<double>& u,
                                        std::vector<double>& out)>;

int needed_substeps(double dt, double rate, double cfl) {
  if (!(rate > 0.0)) return 1;
  const double m = std::ceil(dt * rate / cfl);
  if (m > 4096.0) throw NumericalError("explicit sub-step count exploded (nonlinear stiffness)");
  return std::max(1, static_cast<int>(m));
}

void imex_interval(Marcher& mc, double t_src, double t_tgt, std::vector<double>& u,
                   const ExplicitFn& e_src, const ExplicitFn& e_tgt, int* sticky_m,
                   const char* what, bool density_guard) {
  const double dt = std::abs(t_tgt - t_src);
  std::vector<double> e0(u.size()), e1(u.size()), pred(u.size()), rhs(u.size()), du(u.size());

  double prev_max = 0.0;
  for (double x : u) prev_max = std::max(prev_max, std::abs(x));

  const double rate = e_src(t_src, u, e0);
  int m = needed_substeps(dt, rate, mc.scheme_.cfl_safety);
  if (sticky_m) {
    m = std::max(m, *sticky_m);
    *sticky_m = m;
  }
  if (mc.stats_) mc.stats_->max_substeps = std::max(mc.stats_->max_substeps, m);
  const double ds = dt / m;

  for (int j = 0; j < m; ++j) {
    const double tj = t_src + (t_tgt - t_src) * (static_cast<double>(j) / m);
    const double tj1 = t_src + (t_tgt - t_src) * (static_cast<double>(j + 1) / m);
    if (j > 0) e_src(tj, u, e0);
    mc.set_operator(tj);
    mc.apply_diffusion(u, du);
    mc.set_operator(tj1);
    for (std::size_t i = 0; i < u.size(); ++i) rhs[i] = u[i] + ds * e0[i];
    mc.solve_implicit(ds, rhs, pred);
    e_tgt(tj1, pred, e1);
    for (std::size_t i = 0; i < u.size(); ++i)
      rhs[i] = u[i] + 0.5 * ds * du[i] + 0.5 * ds * (e0[i] + e1[i]);
    mc.solve_implicit(0.5 * ds, rhs, u);
    if (density_guard)
      mc.guard_density(u, what);
    else
      mc.guard_positive(u, what);
  }

  double new_max = 0.0;
  for (double x : u) new_max = std::max(new_max, std::abs(x));
  if (new_max > 1e6 * std::max(prev_max, 1e-300))
    throw NumericalError(std::string(what) + ": divergence detected (growth > 1e6x in one step)");
}

void rk2_interval(Marcher& mc, double t_src, double t_tgt, std::vector<double>& u,
                  const ExplicitFn& e_src, const ExplicitFn& e_tgt, const char* what,
                  bool density_guard) {
  const double dt = std::abs(t_tgt - t_src);
  std::vector<double> e0(u.size()), e1(u.size()), du(u.size()), du1(u.size()), pred(u.size());
  const double rate = e_src(t_src, u, e0);
  if (rate > 0.0 && dt > mc.scheme_.cfl_safety / rate)
    throw NumericalError(std::string(what) +
                         ": advective/reactive CFL violated under explicit-rk2");
  if (dt > mc.diffusion_cfl_limit(t_src))
    throw NumericalError(std::string(what) + ": diffusive CFL violated under explicit-rk2");
  mc.set_operator(t_src);
  mc.apply_diffusion(u, du);
  for (std::size_t i = 0; i < u.size(); ++i) pred[i] = u[i] + dt * (du[i] + e0[i]);
  mc.set_operator(t_tgt);
  e_tgt(t_tgt, pred, e1);
  mc.apply_diffusion(pred, du1);
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] += 0.5 * dt * ((du[i] + e0[i]) + (du1[i] + e1[i]));
  if (density_guard)
    mc.guard_density(u, what);
  else
    mc.guard_positive(u, what);
}

void step_interval(Marcher& mc, double t_src, double t_tgt, std::vector<double>& u,
                   const ExplicitFn& e_src, const ExplicitFn& e_tgt, int* sticky_m,
                   const char* what, bool density_guard = false) {
  if (mc.scheme_.kind == SchemeKind::ImexCn)
    imex_interval(mc, t_src, t_tgt, u, e_src, e_tgt, sticky_m, what, density_guard);
  else
    rk2_interval(mc, t_src, t_tgt, u, e_src, e_tgt, what, density_guard);
}

void check_positive_input(const ScalarField& f, const char* what) {
  for (double x : f.v)
    if (!(x > 0.0)) throw NumericalError(std::string(what) + ": input field must be positive");
}

struct Coeffs {
  VectorField f;
  ScalarField q;
  MatrixField mis;
  double t = std::numeric_limits<double>::quiet_NaN();
};

class CoeffCache {
 public:
  CoeffCache(const BridgeProblem& pr, bool time_constant) : pr_(pr), constant_(time_constant) {}
  const Coeffs& at(double t) {
    if (!have_ || (!constant_ && c_.t != t)) {
      c_.f = sample_vector(pr_.f, pr_.n, pr_.grid, t);
      c_.q = sample_scalar(pr_.q, pr_.grid, t);
      c_.mis = mismatch_field(pr_, t);
      c_.t = t;
      have_ = true;
    }
    return c_;
  }

 private:
  const BridgeProblem& pr_;
  bool constant_;
  bool have_ = false;
  Coeffs c_;
};

void compute_gradient(std::shared_ptr<const Grid> grid, const std::vector<double>& u,
                      std::vector<std::vector<double>>& grad) {
  OperatorWorkspace ws(grid);
  ScalarField tmp(grid);
  tmp.v = u;
  VectorField gv = gradient(tmp, ws);
  const int d = grid->dim;
  grad.assign(d, std::vector<double>(grid->size()));
  for (int a = 0; a < d; ++a)
    for (std::size_t i = 0; i < grid->size(); ++i) grad[a][i] = gv.at(i, a);
}

FactorTrajectory backward_phi_impl(const ScalarField& terminal, const BridgeProblem& pr,
                                   const StepScheme& scheme, StepStats* stats,
                                   SubstepMemory* memory, bool excess_terms) {
  check_positive_input(terminal, "backward_phi");
  const Grid& g = *pr.grid;
  const int K = g.num_steps;
  Marcher mc(pr, scheme, /*backward=*/true, stats);
  CoeffCache coeffs(pr, mc.time_constant());
  if (memory && memory->backward.empty()) memory->backward.assign(K, 1);

  FactorTrajectory traj;
  traj.grid = pr.grid;
  traj.direction = FactorTrajectory::Direction::Backward;
  traj.nodes.assign(static_cast<std::size_t>(K) + 1, ScalarField(pr.grid));
  traj.nodes[K] = terminal;

  std::vector<double> u = terminal.v;
  std::vector<std::vector<double>> grad;

  // E(t, phi) = <grad phi, f + f_phi> - (q/lambda + q_phi) phi. In the linear
  // variant f_phi and q_phi are absent; otherwise they are recomputed from the
  // stage value (explicit, lagged within the stage).
  ExplicitFn eval = [&](double t, const std::vector<double>& state,
                        std::vector<double>& out) -> double {
    const Coeffs& c = coeffs.at(t);
    compute_gradient(pr.grid, state, grad);
    double mx = 0.0;
    for (double x : state) mx = std::max(mx, x);
    const double floor = kScoreFloorRel * mx;
    double rate_adv = 0.0, rate_rxn = 0.0;
    const int n = g.dim;
    for (std::size_t i = 0; i < state.size(); ++i) {
      double adv = 0.0, qphi = 0.0, cell_adv_rate = 0.0;
      if (excess_terms) {
        // Below the score floor the factor carries no usable gradient
        // information; the excess terms are switched off there rather than
        // amplified by the floored denominator.
        const bool trusted = state[i] >= floor;
        if (stats && !trusted) ++stats->score_floor_activations;
        const double denom = trusted ? state[i] : 1.0;
        for (int a = 0; a < n; ++a) {
          double fphi_a = 0.0;
          if (trusted)
            for (int b = 0; b < n; ++b) fphi_a += c.mis.at(i, a, b) * (grad[b][i] / denom);
          const double va = c.f.at(i, a) + fphi_a;
          adv += grad[a][i] * va;
          if (trusted) qphi += (grad[a][i] / denom) * fphi_a;
          cell_adv_rate += std::abs(va) / g.h(a);
        }
        qphi *= 0.5;
      } else {
        for (int a = 0; a < n; ++a) {
          adv += grad[a][i] * c.f.at(i, a);
          cell_adv_rate += std::abs(c.f.at(i, a)) / g.h(a);
        }
      }
      const double rxn = c.q[i] / pr.lambda + qphi;
      out[i] = adv - rxn * state[i];
      rate_adv = std::max(rate_adv, cell_adv_rate);
      rate_rxn = std::max(rate_rxn, std::abs(rxn));
    }
    return std::max(rate_adv, rate_rxn);
  };

  for (int k = K; k > 0; --k) {
    int* sticky = memory ? &memory->backward[static_cast<std::size_t>(k - 1)] : nullptr;
    step_interval(mc, g.time_node(k), g.time_node(k - 1), u, eval, eval, sticky, "backward_phi");
    traj.nodes[k - 1].grid = pr.grid;
    traj.nodes[k - 1].v = u;
  }
  return traj;
}

FactorTrajectory forward_phihat_impl(const ScalarField& initial, const FactorTrajectory* phi_traj,
                                     const BridgeProblem& pr, const StepScheme& scheme,
                                     StepStats* stats, SubstepMemory* memory, bool excess_terms) {
  check_positive_input(initial, "forward_phihat");
  const Grid& g = *pr.grid;
  const int K = g.num_steps;
  if (excess_terms && (!phi_traj || static_cast<int>(phi_traj->nodes.size()) != K + 1))
    throw NumericalError("forward_phihat: phi trajectory node count mismatch");
  Marcher mc(pr, scheme, /*backward=*/false, stats);
  CoeffCache coeffs(pr, mc.time_constant());
  if (memory && memory->forward.empty()) memory->forward.assign(K, 1);

  FactorTrajectory traj;
  traj.grid = pr.grid;
  traj.direction = FactorTrajectory::Direction::Forward;
  traj.nodes.assign(static_cast<std::size_t>(K) + 1, ScalarField(pr.grid));
  traj.nodes[0] = initial;

  std::vector<double> u = initial.v;
  OperatorWorkspace ws(pr.grid, BoundaryMode::ZeroFlux);
  std::vector<std::vector<double>> grad;

  // E(t, phihat) = -div(phihat (f + f_phi)) - (q/lambda + q_phi) phihat with
  // f_phi, q_phi frozen from the saved phi trajectory at the node bracketing
  // the stage.
  auto make_eval = [&](int node) {
    return [&, node](double t, const std::vector<double>& state,
                     std::vector<double>& out) -> double {
      const Coeffs& c = coeffs.at(t);
      const int n = g.dim;
      VectorField flow(pr.grid, n);
      std::vector<double> rxn(state.size());
      double rate_adv = 0.0, rate_rxn = 0.0;
      double floor = 0.0;
      const ScalarField* phi = nullptr;
      if (excess_terms) {
        phi = &phi_traj->nodes[static_cast<std::size_t>(node)];
        compute_gradient(pr.grid, phi->v, grad);
        floor = kScoreFloorRel * phi->max();
      }
      for (std::size_t i = 0; i < state.size(); ++i) {
        double qphi = 0.0, cell_adv_rate = 0.0;
        const bool trusted = excess_terms && (*phi)[i] >= floor;
        if (excess_terms && stats && !trusted) ++stats->score_floor_activations;
        const double denom = trusted ? (*phi)[i] : 1.0;
        for (int a = 0; a < n; ++a) {
          double fphi_a = 0.0;
          if (trusted) {
            for (int b = 0; b < n; ++b) fphi_a += c.mis.at(i, a, b) * (grad[b][i] / denom);
            qphi += (grad[a][i] / denom) * fphi_a;
          }
          const double va = c.f.at(i, a) + fphi_a;
          flow.at(i, a) = state[i] * va;
          cell_adv_rate += std::abs(va) / g.h(a);
        }
        qphi *= 0.5;
        rxn[i] = c.q[i] / pr.lambda + qphi;
        rate_adv = std::max(rate_adv, cell_adv_rate);
        rate_rxn = std::max(rate_rxn, std::abs(rxn[i]));
      }
      ScalarField div = conservative_divergence(flow, ws);
      for (std::size_t i = 0; i < state.size(); ++i) out[i] = -div[i] - rxn[i] * state[i];
      return std::max(rate_adv, rate_rxn);
    };
  };

  for (int k = 0; k < K; ++k) {
    int* sticky = memory ? &memory->forward[static_cast<std::size_t>(k)] : nullptr;
    step_interval(mc, g.time_node(k), g.time_node(k + 1), u, make_eval(k), make_eval(k + 1),
                  sticky, "forward_phihat");
    traj.nodes[k + 1].grid = pr.grid;
    traj.nodes[k + 1].v = u;
  }
  return traj;
}

}  // namespace

FactorTrajectory backward_phi_linear(const ScalarField& terminal, const BridgeProblem& pr,
                                     const StepScheme& scheme, StepStats* stats) {
  return backward_phi_impl(terminal, pr, scheme, stats, nullptr, /*excess_terms=*/false);
}

FactorTrajectory backward_phi_nonlinear(const ScalarField& terminal, const BridgeProblem& pr,
                                        const StepScheme& scheme, StepStats* stats,
                                        SubstepMemory* memory) {
  return backward_phi_impl(terminal, pr, scheme, stats, memory, /*excess_terms=*/true);
}

FactorTrajectory forward_phihat_linear(const ScalarField& initial, const BridgeProblem& pr,
                                       const StepScheme& scheme, StepStats* stats) {
  return forward_phihat_impl(initial, nullptr, pr, scheme, stats, nullptr,
                             /*excess_terms=*/false);
}

FactorTrajectory forward_phihat_nonlinear(const ScalarField& initial,
                                          const FactorTrajectory& phi_traj,
                                          const BridgeProblem& pr, const StepScheme& scheme,
                                          StepStats* stats, SubstepMemory* memory) {
  return forward_phihat_impl(initial, &phi_traj, pr, scheme, stats, memory,
                             /*excess_terms=*/true);
}

FactorTrajectory fpk_forward(const ScalarField& initial, const std::vector<VectorField>& control,
                             const BridgeProblem& pr, const StepScheme& scheme, StepStats* stats) {
  const Grid& g = *pr.grid;
  const int K = g.num_steps;
  if (static_cast<int>(control.size()) != K + 1)
    throw NumericalError("fpk_forward: control node count mismatch");
  for (double x : initial.v)
    if (x < 0.0) throw NumericalError("fpk_forward: initial density must be nonnegative");

  Marcher mc(pr, scheme, /*backward=*/false, stats);
  CoeffCache coeffs(pr, mc.time_constant());
  OperatorWorkspace ws(pr.grid, BoundaryMode::ZeroFlux);

  FactorTrajectory traj;
  traj.grid = pr.grid;
  traj.direction = FactorTrajectory::Direction::Forward;
  traj.nodes.assign(static_cast<std::size_t>(K) + 1, ScalarField(pr.grid));
  traj.nodes[0] = initial;

  std::vector<double> u = initial.v;
  const int n = g.dim, m = pr.m;
  std::vector<double> gmat(static_cast<std::size_t>(n) * m);

  auto make_eval = [&](int node) {
    // E(t, rho) = -div(rho (f + g u_node))
    return [&, node](double t, const std::vector<double>& state,
                     std::vector<double>& out) -> double {
      const Coeffs& c = coeffs.at(t);
      const VectorField& uc = control[static_cast<std::size_t>(node)];
      VectorField flow(pr.grid, n);
      double rate = 0.0;
      for (std::size_t i = 0; i < state.size(); ++i) {
        auto x = g.center(i);
        pr.g(t, std::span<const double>(x.data(), n), gmat);
        double cell_rate = 0.0;
        for (int a = 0; a < n; ++a) {
          double gu = 0.0;
          for (int b = 0; b < m; ++b) gu += gmat[a * m + b] * uc.at(i, b);
          const double va = c.f.at(i, a) + gu;
          flow.at(i, a) = state[i] * va;
          cell_rate += std::abs(va) / g.h(a);
        }
        rate = std::max(rate, cell_rate);
      }
      ScalarField div = conservative_divergence(flow, ws);
      for (std::size_t i = 0; i < state.size(); ++i) out[i] = -div[i];
      return rate;
    };
  };

  for (int k = 0; k < K; ++k) {
    step_interval(mc, g.time_node(k), g.time_node(k + 1), u, make_eval(k), make_eval(k + 1),
                  nullptr, "fpk_forward", /*density_guard=*/true);
    traj.nodes[k + 1].grid = pr.grid;
    traj.nodes[k + 1].v = u;
  }
  return traj;
}

double duality_bracket(const FactorTrajectory& phihat, const FactorTrajectory& phi, int k) {
  const ScalarField& a = phihat.at(k);
  const ScalarField& b = phi.at(k);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * a.grid->cell_volume();
}

void write_trajectory(const std::filesystem::path& dir, const FactorTrajectory& traj) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.csv");
  if (!index) throw IoError("cannot write trajectory index in " + dir.string());
  index << "node,time,file\n";
  const Grid& g = *traj.grid;
  char name[32];
  for (std::size_t k = 0; k < traj.nodes.size(); ++k) {
    std::snprintf(name, sizeof(name), "%05zu.bin", k);
    write_field(dir / name, traj.nodes[k], g.time_node(static_cast<int>(k)));
    index << k << "," << g.time_node(static_cast<int>(k)) << "," << name << "\n";
  }
}

FactorTrajectory read_trajectory(const std::filesystem::path& dir,
                                 std::shared_ptr<const Grid> grid,
                                 FactorTrajectory::Direction direction) {
  FactorTrajectory traj;
  traj.grid = grid;
  traj.direction = direction;
  const int K = grid->num_steps;
  traj.nodes.reserve(static_cast<std::size_t>(K) + 1);
  char name[32];
  for (int k = 0; k <= K; ++k) {
    std::snprintf(name, sizeof(name), "%05d.bin", k);
    traj.nodes.push_back(read_scalar_field(dir / name, grid));
  }
  return traj;
}

}  // namespace sbridge
