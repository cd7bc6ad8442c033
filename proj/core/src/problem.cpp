#include "sbridge/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sbridge {

namespace {

constexpr int kValidationTimes = 9;

/// Smallest eigenvalue of a symmetric 1x1 or 2x2 matrix (row-major).
double min_eig_sym(const double* a, int n) {
  if (n == 1) return a[0];
  const double tr = a[0] + a[3];
  const double det = a[0] * a[3] - a[1] * a[2];
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return tr / 2.0 - disc;
}

double frobenius(const double* a, int count) {
  double s = 0.0;
  for (int i = 0; i < count; ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

}  // namespace

BridgeProblem make_problem(int m, int p, VectorFn f, MatrixFn g, MatrixFn sigma, ScalarFn q,
                           ScalarField rho0_raw, ScalarField rho1_raw,
                           std::optional<double> lambda, std::shared_ptr<const Grid> grid) {
  if (m < 1 || p < 1) throw ConfigError("problem: m and p must be >= 1");
  BridgeProblem pr;
  pr.n = grid->dim;
  pr.m = m;
  pr.p = p;
  pr.f = std::move(f);
  pr.g = std::move(g);
  pr.sigma = std::move(sigma);
  pr.q = std::move(q);
  pr.grid = grid;

  auto normalize = [&](ScalarField& rho, const char* name) -> double {
    double mass = 0.0;
    for (double x : rho.v) {
      if (x < 0.0) throw ConfigError(std::string(name) + ": negative density value");
      mass += x;
    }
    mass *= grid->cell_volume();
    if (mass < 1.0 - 1e-8)
      throw ConfigError(std::string(name) + ": box mass " + std::to_string(mass) +
                        " is below 1 - 1e-8; enlarge the domain");
    for (double& x : rho.v) x /= mass;
    return mass;
  };
  pr.rho0 = std::move(rho0_raw);
  pr.rho1 = std::move(rho1_raw);
  pr.rho0_box_mass = normalize(pr.rho0, "rho0");
  pr.rho1_box_mass = normalize(pr.rho1, "rho1");

  if (lambda) {
    if (*lambda <= 0.0) throw ConfigError("problem: lambda must be positive");
    pr.lambda = *lambda;
  } else {
    pr.lambda = 1.0;  // provisional; replaced below once coefficients are set
    if (auto star = coincident_lambda(pr)) {
      pr.lambda = *star;
    } else {
      // Trace-average scale: a defensible default in the nonlinear regime.
      double num = 0.0, den = 0.0;
      const Grid& gr = *grid;
      std::vector<double> gg(gr.dim * pr.m), ss(gr.dim * pr.p);
      for (int j = 0; j < kValidationTimes; ++j) {
        const double t = gr.t0 + j * (gr.t1 - gr.t0) / (kValidationTimes - 1);
        for (std::size_t i = 0; i < gr.size(); ++i) {
          auto x = gr.center(i);
          std::span<const double> xs(x.data(), gr.dim);
          pr.g(t, xs, gg);
          pr.sigma(t, xs, ss);
          for (int r = 0; r < gr.dim; ++r) {
            double tgg = 0.0, tss = 0.0;
            for (int c = 0; c < pr.m; ++c) tgg += gg[r * pr.m + c] * gg[r * pr.m + c];
            for (int c = 0; c < pr.p; ++c) tss += ss[r * pr.p + c] * ss[r * pr.p + c];
            den += tgg;
            num += tss;
          }
        }
      }
      pr.lambda = den > 0.0 ? num / den : 1.0;
      if (pr.lambda <= 0.0) pr.lambda = 1.0;
    }
  }
  return pr;
}

MatrixField build_sigma_tensor(const BridgeProblem& problem, double t) {
  const Grid& gr = *problem.grid;
  const int n = problem.n, p = problem.p;
  MatrixField out(problem.grid, n, n);
  std::vector<double> s(n * p);
  for (std::size_t i = 0; i < gr.size(); ++i) {
    auto x = gr.center(i);
    problem.sigma(t, std::span<const double>(x.data(), n), s);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        double acc = 0.0;
        for (int k = 0; k < p; ++k) acc += s[r * p + k] * s[c * p + k];
        out.at(i, r, c) = acc;
      }
  }
  for (double x : out.v)
    if (!std::isfinite(x)) throw NumericalError("sigma produced non-finite values");
  return out;
}

MatrixField mismatch_field(const BridgeProblem& problem, double t) {
  const Grid& gr = *problem.grid;
  const int n = problem.n, m = problem.m;
  MatrixField out = build_sigma_tensor(problem, t);
  std::vector<double> g(n * m);
  for (std::size_t i = 0; i < gr.size(); ++i) {
    auto x = gr.center(i);
    problem.g(t, std::span<const double>(x.data(), n), g);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        double acc = 0.0;
        for (int k = 0; k < m; ++k) acc += g[r * m + k] * g[c * m + k];
        out.at(i, r, c) = problem.lambda * acc - out.at(i, r, c);
      }
  }
  return out;
}

ValidationReport validate(const BridgeProblem& problem) {
  const Grid& gr = *problem.grid;
  ValidationReport rep;
  rep.sigma_lower_bound_estimate = std::numeric_limits<double>::infinity();
  double max_sigma_fro = 0.0;
  const int n = problem.n;
  for (int j = 0; j < kValidationTimes; ++j) {
    const double t = gr.t0 + j * (gr.t1 - gr.t0) / (kValidationTimes - 1);
    MatrixField Sig = build_sigma_tensor(problem, t);
    MatrixField mis = mismatch_field(problem, t);
    sample_vector(problem.f, n, problem.grid, t);  // finiteness check
    sample_scalar(problem.q, problem.grid, t);
    for (std::size_t i = 0; i < gr.size(); ++i) {
      const double eig = min_eig_sym(&Sig.v[i * n * n], n);
      rep.sigma_lower_bound_estimate = std::min(rep.sigma_lower_bound_estimate, eig);
      if (eig < -1e-10)
        throw NumericalError("Sigma has eigenvalue " + std::to_string(eig) +
                             " < -1e-10; sigma callable is not a valid noise matrix");
      max_sigma_fro = std::max(max_sigma_fro, frobenius(&Sig.v[i * n * n], n * n));
      rep.channel_mismatch_norm =
          std::max(rep.channel_mismatch_norm, frobenius(&mis.v[i * n * n], n * n));
    }
  }
  rep.is_channel_coincident = rep.channel_mismatch_norm <= 1e-12 * std::max(max_sigma_fro, 1e-300);
  if (rep.sigma_lower_bound_estimate <= 0.0)
    rep.warnings.push_back(
        "empirical diffusion lower bound c3 <= 0 on the sampling lattice; "
        "the diffusion may be degenerate");
  if (problem.rho0_box_mass < 1.0 - 1e-8 || problem.rho1_box_mass < 1.0 - 1e-8)
    throw ConfigError("endpoint density mass inside the box is below 1 - 1e-8");
  rep.warnings.push_back(
      "A1 (Lipschitz/linear growth) is not certified numerically; "
      "finite sampling cannot bound c1, c2");
  return rep;
}

std::optional<double> coincident_lambda(const BridgeProblem& problem) {
  const Grid& gr = *problem.grid;
  const int n = problem.n, m = problem.m;
  double num = 0.0, den = 0.0;
  std::vector<double> g(n * m), gg(n * n);
  for (int j = 0; j < kValidationTimes; ++j) {
    const double t = gr.t0 + j * (gr.t1 - gr.t0) / (kValidationTimes - 1);
    MatrixField Sig = build_sigma_tensor(problem, t);
    for (std::size_t i = 0; i < gr.size(); ++i) {
      auto x = gr.center(i);
      problem.g(t, std::span<const double>(x.data(), n), g);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          double acc = 0.0;
          for (int k = 0; k < m; ++k) acc += g[r * m + k] * g[c * m + k];
          gg[r * n + c] = acc;
        }
      for (int k = 0; k < n * n; ++k) {
        num += gg[k] * Sig.v[i * n * n + k];
        den += gg[k] * gg[k];
      }
    }
  }
  if (den <= 0.0) return std::nullopt;  // g identically zero
  const double star = num / den;
  if (star <= 0.0) return std::nullopt;

  // Residual check with lambda*.
  double max_fro = 0.0, max_res = 0.0;
  std::vector<double> gv(n * m);
  for (int j = 0; j < kValidationTimes; ++j) {
    const double t = gr.t0 + j * (gr.t1 - gr.t0) / (kValidationTimes - 1);
    MatrixField Sig = build_sigma_tensor(problem, t);
    for (std::size_t i = 0; i < gr.size(); ++i) {
      auto x = gr.center(i);
      problem.g(t, std::span<const double>(x.data(), n), gv);
      double res = 0.0;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          double acc = 0.0;
          for (int k = 0; k < m; ++k) acc += gv[r * m + k] * gv[c * m + k];
          const double d = star * acc - Sig.at(i, r, c);
          res += d * d;
        }
      max_res = std::max(max_res, std::sqrt(res));
      max_fro = std::max(max_fro, frobenius(&Sig.v[i * n * n], n * n));
    }
  }
  if (max_res <= 1e-10 * std::max(max_fro, 1e-300)) return star;
  return std::nullopt;
}

std::vector<std::uint8_t> trust_mask(const ScalarField& rho, double mass_tol) {
  const std::size_t n = rho.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rho[a] > rho[b]; });
  double total = 0.0;
  for (double x : rho.v) total += x;
  std::vector<std::uint8_t> mask(n, 0);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mask[order[k]] = 1;
    acc += rho[order[k]];
    if (acc >= (1.0 - mass_tol) * total) break;
  }
  return mask;
}

}  // namespace sbridge
