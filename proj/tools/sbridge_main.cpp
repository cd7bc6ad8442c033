// sbridge: Schrodinger bridge solver CLI.
// Pipelines: validate -> solve -> recover -> montecarlo, plus the static
// entropic-transport oracle comparison, the discrete-identity battery, and
// plot-ready exports. Exit codes: 0 success, 2 config/validation error,
// 3 solver non-convergence (outputs still written), 4 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sbridge/config.hpp"
#include "sbridge/field_io.hpp"
#include "sbridge/oracle.hpp"
#include "sbridge/operators.hpp"
#include "sbridge/recovery.hpp"
#include "sbridge/version.hpp"

namespace fs = std::filesystem;
using namespace sbridge;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "out";
  long seed = -1;
  int threads = 0;
  bool force_nonlinear = false;
};

Config load_effective(const CommonArgs& args) {
  Config c = args.config_path.empty() ? default_config() : load_config(args.config_path);
  for (const auto& s : args.sets) apply_override(c, s);
  if (args.seed >= 0) c.kv["seed"] = std::to_string(args.seed);
  if (args.threads > 0) c.kv["threads"] = std::to_string(args.threads);
  if (args.force_nonlinear) c.kv["force_nonlinear"] = "true";
  return c;
}

void print_validation(std::ostream& os, const BridgeProblem& pr, const ValidationReport& rep) {
  os << "lambda = " << pr.lambda << "\n";
  os << "sigma_lower_bound_estimate = " << rep.sigma_lower_bound_estimate << "\n";
  os << "channel_mismatch_norm = " << rep.channel_mismatch_norm << "\n";
  os << "is_channel_coincident = " << (rep.is_channel_coincident ? "true" : "false") << "\n";
  for (const auto& w : rep.warnings) os << "warning: " << w << "\n";
}

void write_solve_state(const fs::path& dir, const SolveReport& rep) {
  std::ofstream os(dir / "solve_state");
  os << "converged = " << (rep.converged ? "true" : "false") << "\n";
  os << "iterations = " << rep.iterations << "\n";
  os << "regime = " << (rep.regime == Regime::Linear ? "linear" : "nonlinear") << "\n";
  if (!rep.failure_reason.empty()) os << "failure_reason = " << rep.failure_reason << "\n";
}

int cmd_validate(const CommonArgs& args) {
  Config cfg = load_effective(args);
  BuiltProblem bp = build_from_config(cfg);
  ValidationReport rep = validate(bp.problem);
  print_validation(std::cout, bp.problem, rep);
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    std::ofstream os(fs::path(args.out_dir) / "validation.txt");
    print_validation(os, bp.problem, rep);
  }
  return 0;
}

int cmd_solve(const CommonArgs& args) {
  Config cfg = load_effective(args);
  BuiltProblem bp = build_from_config(cfg);
  ValidationReport vrep = validate(bp.problem);

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  write_config(out / "effective.cfg", cfg);
  {
    std::ofstream os(out / "validation.txt");
    print_validation(os, bp.problem, vrep);
  }

  const bool linear = vrep.is_channel_coincident && !bp.force_nonlinear;
  std::cout << "regime: " << (linear ? "linear" : "nonlinear") << "\n";
  SolveReport rep = linear ? sinkhorn_linear(bp.problem, bp.scheme, bp.solve)
                           : sinkhorn_generalized(bp.problem, bp.scheme, bp.solve);

  write_history_csv(out / "history.csv", rep.history);
  write_solve_state(out, rep);
  if (!rep.phi.nodes.empty()) {
    write_trajectory(out / "phi", rep.phi);
    write_trajectory(out / "phihat", rep.phihat);
    BridgeSolution sol = recover_solution(rep, bp.problem);
    export_solution_csv(out / "solution.csv", sol);
    write_summary(out / "summary.txt", sol, rep, bp.problem);
  } else {
    // the very first pass aborted; record what happened without a solution
    std::ofstream os(out / "summary.txt");
    os << "sbridge solve summary (format v1)\n";
    os << "regime: " << (rep.regime == Regime::Linear ? "linear" : "nonlinear") << "\n";
    os << "converged: false\n";
    os << "iterations: 0\n";
    os << "failure_reason: " << rep.failure_reason << "\n";
  }

  std::cout << "converged: " << (rep.converged ? "true" : "false")
            << "  iterations: " << rep.iterations << "\n";
  if (!rep.history.empty())
    std::cout << "final d_H: " << rep.history.back().d_h_phi1
              << "  marginal L1: " << rep.history.back().marginal_l1 << "\n";
  if (!rep.failure_reason.empty()) std::cout << "failure: " << rep.failure_reason << "\n";
  std::cout << "outputs written to " << out.string() << "\n";
  return rep.converged ? 0 : 3;
}

/// Rebuilds the problem and the solve report context from an out directory.
struct Restored {
  BuiltProblem bp;
  SolveReport rep;
};

Restored restore(const fs::path& out) {
  if (!fs::exists(out / "effective.cfg"))
    throw ConfigError("missing " + (out / "effective.cfg").string() + "; run solve first");
  Config cfg = load_config(out / "effective.cfg");
  Restored r{build_from_config(cfg), SolveReport{}};
  r.rep.phi = read_trajectory(out / "phi", r.bp.problem.grid,
                              FactorTrajectory::Direction::Backward);
  r.rep.phihat = read_trajectory(out / "phihat", r.bp.problem.grid,
                                 FactorTrajectory::Direction::Forward);
  if (fs::exists(out / "solve_state")) {
    std::ifstream is(out / "solve_state");
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, line.find(' '));
      std::string value = line.substr(eq + 1);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      if (key == "converged") r.rep.converged = value == "true";
      if (key == "iterations") r.rep.iterations = std::stoi(value);
      if (key == "regime")
        r.rep.regime = value == "linear" ? Regime::Linear : Regime::Nonlinear;
      if (key == "failure_reason") r.rep.failure_reason = value;
    }
  }
  return r;
}

int cmd_recover(const CommonArgs& args) {
  const fs::path out(args.out_dir);
  Restored r = restore(out);
  BridgeSolution sol = recover_solution(r.rep, r.bp.problem);
  export_solution_csv(out / "solution.csv", sol);
  write_summary(out / "summary.txt", sol, r.rep, r.bp.problem);
  std::cout << "solution rebuilt from factor dumps in " << out.string() << "\n";
  return 0;
}

int cmd_montecarlo(const CommonArgs& args) {
  const fs::path out(args.out_dir);
  Restored r = restore(out);
  Config cfg = load_config(out / "effective.cfg");
  for (const auto& s : args.sets) apply_override(cfg, s);
  if (args.seed >= 0) cfg.kv["seed"] = std::to_string(args.seed);
  if (args.threads > 0) cfg.kv["threads"] = std::to_string(args.threads);
  BuiltProblem bp = build_from_config(cfg);

  BridgeSolution sol = recover_solution(r.rep, bp.problem);
  std::vector<double> per;
  std::vector<SdeEnsemble> ensembles;
  const double l1 = crossvalidate(sol, bp.problem, bp.mc, &per, &ensembles);

  const Grid& g = *bp.problem.grid;
  const int K = g.num_steps;
  const int nodes[3] = {0, K / 2, K};
  std::ofstream mc(out / "mc.csv");
  mc << "checkpoint,time,l1\n";
  mc.precision(17);
  for (int c = 0; c < 3; ++c) mc << nodes[c] << "," << g.time_node(nodes[c]) << "," << per[c] << "\n";
  for (std::size_t c = 0; c < ensembles.size(); ++c) {
    char name[48];
    std::snprintf(name, sizeof(name), "ensemble_%05d.csv", nodes[c]);
    export_ensemble_csv(out / name, ensembles[c], g.dim);
  }

  std::ofstream sum(out / "summary.txt", std::ios::app);
  sum.precision(12);
  sum << "mc_particles: " << bp.mc.particles << "\n";
  sum << "mc_seed: " << bp.mc.seed << "\n";
  sum << "mc_l1_t0: " << per[0] << "\n";
  sum << "mc_l1_mid: " << per[1] << "\n";
  sum << "mc_l1_t1: " << per[2] << "\n";
  sum << "mc_l1_max: " << l1 << "\n";

  std::cout << "crossvalidate L1 (t0, mid, t1): " << per[0] << " " << per[1] << " " << per[2]
            << "\n";
  return 0;
}

int cmd_oracle_compare(const CommonArgs& args) {
  const fs::path out(args.out_dir);
  Restored r = restore(out);
  const BridgeProblem& pr = r.bp.problem;
  const Grid& g = *pr.grid;
  if (g.dim != 1) throw ConfigError("oracle-compare: 1D problems only");

  // eligibility: f == 0, q == 0, sigma constant over the sampling lattice
  auto f0 = sample_vector(pr.f, 1, pr.grid, g.t0);
  auto q0 = sample_scalar(pr.q, pr.grid, g.t0);
  for (double x : f0.v)
    if (x != 0.0) throw ConfigError("oracle-compare: requires zero drift");
  for (double x : q0.v)
    if (x != 0.0) throw ConfigError("oracle-compare: requires zero state cost");
  MatrixField Sig = build_sigma_tensor(pr, g.t0);
  const double s2 = Sig.at(0, 0, 0);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::abs(Sig.at(i, 0, 0) - s2) > 1e-14 * std::max(1.0, s2))
      throw ConfigError("oracle-compare: requires constant sigma");

  DenseMatrix K = heat_kernel_matrix(g, s2 * (g.t1 - g.t0));
  std::vector<double> a(g.size()), b(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    a[i] = pr.rho0[i] * g.cell_volume();
    b[i] = pr.rho1[i] * g.cell_volume();
  }
  SinkhornScaling s = static_sinkhorn(K, a, b, 1e-12, 20000);
  EndpointFactors ef = bridge_from_static(s.u, s.v, pr.grid);

  // trust region: endpoint mass shell minus score-floored cells
  ScalarField mix(pr.grid);
  for (std::size_t i = 0; i < g.size(); ++i) mix[i] = 0.5 * (pr.rho0[i] + pr.rho1[i]);
  auto mask = trust_mask(mix, 1e-8);
  const ScalarField& phi1 = r.rep.phi.nodes.back();
  const ScalarField& phihat0 = r.rep.phihat.nodes.front();
  const double fl1 = kScoreFloorRel * phi1.max();
  const double fl0 = kScoreFloorRel * phihat0.max();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (phi1[i] < fl1 || phihat0[i] < fl0) mask[i] = 0;

  const double gap1 = hilbert_distance_masked(phi1, ef.phi1, mask);
  const double gap0 = hilbert_distance_masked(phihat0, ef.phihat0, mask);
  std::cout << "static oracle iterations: " << s.iterations << "\n";
  std::cout << "projective gap phi(t1): " << gap1 << "\n";
  std::cout << "projective gap phihat(t0): " << gap0 << "\n";

  std::ofstream sum(out / "summary.txt", std::ios::app);
  sum.precision(12);
  sum << "oracle_gap_phi1: " << gap1 << "\n";
  sum << "oracle_gap_phihat0: " << gap0 << "\n";
  return 0;
}

int cmd_identities() {
  std::cout << "discrete product-rule and log-Hessian identity battery\n";
  std::cout << "case                         cells      full    beta=1   Sigma=I   hesslog\n";
  const int sizes[3] = {64, 128, 256};
  for (int ci = 0; ci < 5; ++ci) {
    double prev[4] = {0, 0, 0, 0};
    for (int si = 0; si < 3; ++si) {
      Grid g;
      const bool two_d = ci >= 3;
      g.dim = two_d ? 2 : 1;
      g.cells = {sizes[si], sizes[si]};
      g.lower = {-2.0, -2.0};
      g.upper = {2.0, 2.0};
      g.num_steps = 2;
      auto grid = make_grid(g);
      OperatorWorkspace ws(grid);
      ScalarField alpha(grid), beta(grid), phi(grid);
      MatrixField Sig(grid, g.dim, g.dim);
      for (std::size_t i = 0; i < grid->size(); ++i) {
        auto x = grid->center(i);
        const double r2 = x[0] * x[0] + (two_d ? x[1] * x[1] : 0.0);
        switch (ci) {
          case 0:  // polynomial
            alpha[i] = 1.0 + x[0] + 0.5 * x[0] * x[0] * x[0];
            beta[i] = 2.0 - x[0] * x[0];
            Sig.at(i, 0, 0) = 1.0 + 0.25 * x[0] * x[0];
            break;
          case 1:  // trigonometric
            alpha[i] = std::sin(x[0]);
            beta[i] = std::cos(x[0]);
            Sig.at(i, 0, 0) = 1.0 + 0.25 * x[0] * x[0];
            break;
          case 2:  // gaussian
            alpha[i] = std::exp(-0.5 * r2);
            beta[i] = 1.0 + 0.1 * std::sin(2.0 * x[0]);
            Sig.at(i, 0, 0) = 2.0 + std::cos(x[0]);
            break;
          case 3:  // 2D trig with off-diagonal Sigma
            alpha[i] = std::sin(x[0]) * std::cos(x[1]);
            beta[i] = 1.0 + 0.2 * x[0] * x[1];
            Sig.at(i, 0, 0) = 2.0 + 0.3 * std::sin(x[0]);
            Sig.at(i, 1, 1) = 2.0 + 0.3 * std::cos(x[1]);
            Sig.at(i, 0, 1) = 0.4 * std::cos(x[0] + x[1]);
            Sig.at(i, 1, 0) = Sig.at(i, 0, 1);
            break;
          default:  // 2D gaussian
            alpha[i] = std::exp(-0.5 * r2);
            beta[i] = std::exp(0.2 * x[0] - 0.1 * x[1]);
            Sig.at(i, 0, 0) = 1.5 + 0.25 * x[0] * x[0];
            Sig.at(i, 1, 1) = 1.0 + 0.25 * x[1] * x[1];
            Sig.at(i, 0, 1) = 0.2 * x[0] * x[1];
            Sig.at(i, 1, 0) = Sig.at(i, 0, 1);
            break;
        }
        phi[i] = std::exp(0.3 * std::sin(x[0]) + (two_d ? 0.2 * std::cos(x[1]) : 0.0));
      }
      Lemma1Residual res = lemma1_residual(alpha, beta, Sig, ws);
      const double hl = hessian_log_identity_residual(phi, 1.5, ws);
      std::printf("triple %d (%s)              %4d  %9.2e %9.2e %9.2e %9.2e", ci,
                  two_d ? "2D" : "1D", sizes[si], res.full, res.beta_one, res.sigma_identity, hl);
      if (si > 0)
        std::printf("   ratios %.2f %.2f %.2f %.2f", prev[0] / res.full,
                    prev[1] / std::max(res.beta_one, 1e-300),
                    prev[2] / std::max(res.sigma_identity, 1e-300),
                    prev[3] / std::max(hl, 1e-300));
      std::printf("\n");
      prev[0] = res.full;
      prev[1] = res.beta_one;
      prev[2] = res.sigma_identity;
      prev[3] = hl;
    }
  }
  return 0;
}

int cmd_emit_plots(const CommonArgs& args) {
  const fs::path out(args.out_dir);
  std::vector<std::string> missing;
  for (const char* f : {"solution.csv", "history.csv", "effective.cfg"})
    if (!fs::exists(out / f)) missing.push_back(f);
  if (!missing.empty()) {
    std::ostringstream os;
    os << "emit-plots: missing artifacts in " << out.string() << ":";
    for (const auto& m : missing) os << " " << m;
    throw ConfigError(os.str());
  }

  Config cfg = load_config(out / "effective.cfg");
  BuiltProblem bp = build_from_config(cfg);
  const Grid& g = *bp.problem.grid;

  // density waterfall + control field + endpoint slices from solution.csv
  std::ifstream sol(out / "solution.csv");
  std::string header;
  std::getline(sol, header);
  std::ofstream wf(out / "density_waterfall.csv");
  std::ofstream ctl(out / "control_field.csv");
  std::ofstream ends(out / "endpoint_densities.csv");
  wf << "t,x0,rho\n";
  ctl << "t,x0,u0\n";
  ends << "x0,rho_t0,rho_t1\n";
  const int coord_cols = g.dim;
  std::vector<std::vector<double>> first_block, last_block;
  std::string line;
  const double t1 = g.t1;
  while (std::getline(sol, line)) {
    std::istringstream is(line);
    std::vector<double> cols;
    std::string item;
    while (std::getline(is, item, ',')) cols.push_back(std::stod(item));
    const double t = cols[0];
    wf << t << "," << cols[1] << "," << cols[static_cast<std::size_t>(1 + coord_cols)] << "\n";
    ctl << t << "," << cols[1] << "," << cols[static_cast<std::size_t>(2 + coord_cols)] << "\n";
    if (t == g.t0) first_block.push_back(cols);
    if (t == t1) last_block.push_back(cols);
  }
  ends.precision(17);
  for (std::size_t i = 0; i < first_block.size(); ++i)
    ends << first_block[i][1] << "," << first_block[i][static_cast<std::size_t>(1 + coord_cols)]
         << "," << last_block[i][static_cast<std::size_t>(1 + coord_cols)] << "\n";

  // convergence history without the wall-time column (byte-stable re-runs)
  std::ifstream hist(out / "history.csv");
  std::ofstream histp(out / "convergence_history.csv");
  std::getline(hist, line);
  histp << "iteration,d_h_phi1,marginal_l1\n";
  while (std::getline(hist, line)) {
    std::istringstream is(line);
    std::string it, dh, dh0, marg;
    std::getline(is, it, ',');
    std::getline(is, dh, ',');
    std::getline(is, dh0, ',');
    std::getline(is, marg, ',');
    histp << it << "," << dh << "," << marg << "\n";
  }

  auto script = [&](const char* name, const char* body) {
    std::ofstream gp(out / name);
    gp << "set datafile separator ','\n" << body;
  };
  script("density_waterfall.gp",
         "set xlabel 'x'; set ylabel 't'\n"
         "set title 'optimal density flow'\n"
         "splot 'density_waterfall.csv' every ::1 using 2:1:3 with points palette notitle\n");
  script("control_field.gp",
         "set xlabel 'x'; set ylabel 't'\n"
         "set title 'feedback control'\n"
         "splot 'control_field.csv' every ::1 using 2:1:3 with points palette notitle\n");
  script("convergence_history.gp",
         "set logscale y; set xlabel 'iteration'\n"
         "plot 'convergence_history.csv' every ::1 using 1:2 with linespoints title 'd_H', \\\n"
         "     'convergence_history.csv' every ::1 using 1:3 with linespoints title 'marginal L1'\n");
  script("endpoint_densities.gp",
         "set xlabel 'x'\n"
         "plot 'endpoint_densities.csv' every ::1 using 1:2 with lines title 'rho(t0)', \\\n"
         "     'endpoint_densities.csv' every ::1 using 1:3 with lines title 'rho(t1)'\n");
  std::cout << "plot data and gnuplot scripts written to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sbridge: control-affine Schrodinger bridge solver"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) sub->add_option("--config", args.config_path, "problem config file");
    sub->add_option("--set", args.sets, "override config entries (key=value)");
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed, "override RNG seed");
    sub->add_option("--threads", args.threads, "cap data parallelism");
    return sub;
  };

  auto* validate_cmd = add_common(app.add_subcommand("validate", "check a problem config"), true);
  auto* solve_cmd = add_common(app.add_subcommand("solve", "run the bridge solver"), true);
  solve_cmd->add_flag("--force-nonlinear", args.force_nonlinear,
                      "use the generalized recursion even for coincident channels");
  auto* recover_cmd =
      add_common(app.add_subcommand("recover", "rebuild outputs from factor dumps"), false);
  auto* mc_cmd = add_common(
      app.add_subcommand("montecarlo", "sample-path crossvalidation of a solve"), false);
  auto* oracle_cmd = add_common(
      app.add_subcommand("oracle-compare", "compare against the static transport oracle"), false);
  auto* ident_cmd = app.add_subcommand("identities", "discrete identity refinement battery");
  auto* plots_cmd = add_common(app.add_subcommand("emit-plots", "write plot-ready data"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (validate_cmd->parsed()) return cmd_validate(args);
    if (solve_cmd->parsed()) return cmd_solve(args);
    if (recover_cmd->parsed()) return cmd_recover(args);
    if (mc_cmd->parsed()) return cmd_montecarlo(args);
    if (oracle_cmd->parsed()) return cmd_oracle_compare(args);
    if (ident_cmd->parsed()) return cmd_identities();
    if (plots_cmd->parsed()) return cmd_emit_plots(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
