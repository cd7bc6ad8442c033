#include "sbridge/operators.hpp"

#include <cmath>

namespace sbridge {

namespace {

// Decodes the coordinate of cell idx along axis a.
inline int axis_coord(const Grid& g, std::size_t idx, int a) {
  return static_cast<int>((idx / g.stride(a)) % static_cast<std::size_t>(g.cells[a]));
}

/// out[i] = d src/dx_a: central interior, one-sided second order at walls.
void axis_derivative(const Grid& g, const OperatorWorkspace& ws, const double* src, int a,
                     double* out) {
  const std::size_t s = g.stride(a);
  const int na = g.cells[a];
  const double i2h = ws.inv_2h[a];
  // Difference form keeps the stencils exactly zero on constant fields.
  for (std::size_t i = 0; i < g.size(); ++i) {
    const int c = axis_coord(g, i, a);
    if (c == 0)
      out[i] = (3.0 * (src[i + s] - src[i]) + (src[i + s] - src[i + 2 * s])) * i2h;
    else if (c == na - 1)
      out[i] = (3.0 * (src[i] - src[i - s]) + (src[i - 2 * s] - src[i - s])) * i2h;
    else
      out[i] = (src[i + s] - src[i - s]) * i2h;
  }
}

/// out[i] = d2 src/dx_a^2: central interior, one-sided second order at walls.
void axis_second_derivative(const Grid& g, const OperatorWorkspace& ws, const double* src, int a,
                            double* out) {
  const std::size_t s = g.stride(a);
  const int na = g.cells[a];
  const double ih2 = ws.inv_h2[a];
  for (std::size_t i = 0; i < g.size(); ++i) {
    const int c = axis_coord(g, i, a);
    if (c == 0)
      out[i] = (2.0 * (src[i] - src[i + s]) - 3.0 * (src[i + s] - src[i + 2 * s]) +
                (src[i + 2 * s] - src[i + 3 * s])) *
               ih2;
    else if (c == na - 1)
      out[i] = (2.0 * (src[i] - src[i - s]) - 3.0 * (src[i - s] - src[i - 2 * s]) +
                (src[i - 2 * s] - src[i - 3 * s])) *
               ih2;
    else
      out[i] = ((src[i + s] - src[i]) - (src[i] - src[i - s])) * ih2;
  }
}

/// out[i] += d2 src/dx_a^2 in compact flux form. Boundary faces carry zero
/// flux (ZeroFlux) or a ghost reflected against a zero wall value
/// (ZeroDirichlet).
void add_flux_second(const Grid& g, const OperatorWorkspace& ws, const double* src, int a,
                     double* out) {
  const std::size_t s = g.stride(a);
  const int na = g.cells[a];
  const double ih2 = ws.inv_h2[a];
  const bool dirichlet = ws.mode == BoundaryMode::ZeroDirichlet;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const int c = axis_coord(g, i, a);
    const double up = (c == na - 1) ? (dirichlet ? -2.0 * src[i] : 0.0) : src[i + s] - src[i];
    const double dn = (c == 0) ? (dirichlet ? 2.0 * src[i] : 0.0) : src[i] - src[i - s];
    out[i] += (up - dn) * ih2;
  }
}

/// out[i] += d w/dx_a in flux form with face-averaged values and zero
/// boundary-face flux.
void add_flux_first(const Grid& g, const OperatorWorkspace& ws, const double* w, int a,
                    double* out) {
  const std::size_t s = g.stride(a);
  const int na = g.cells[a];
  const double ih = ws.inv_h[a];
  for (std::size_t i = 0; i < g.size(); ++i) {
    const int c = axis_coord(g, i, a);
    const double up = (c == na - 1) ? 0.0 : 0.5 * (w[i + s] + w[i]);
    const double dn = (c == 0) ? 0.0 : 0.5 * (w[i] + w[i - s]);
    out[i] += (up - dn) * ih;
  }
}

/// d2 src/dx_i dx_j, one field's worth; successive central differences for
/// mixed pairs.
void hessian_entry(const Grid& g, const OperatorWorkspace& ws, const double* src, int i, int j,
                   std::vector<double>& scratch, double* out) {
  if (i == j) {
    axis_second_derivative(g, ws, src, i, out);
  } else {
    scratch.resize(g.size());
    axis_derivative(g, ws, src, j, scratch.data());
    axis_derivative(g, ws, scratch.data(), i, out);
  }
}

void extract_matrix_component(const MatrixField& M, int r, int c, std::vector<double>& out) {
  const std::size_t n = M.grid->size();
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = M.at(i, r, c);
}

double interior_max_abs(const Grid& g, const double* r, int margin) {
  double m = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    bool interior = true;
    for (int a = 0; a < g.dim; ++a) {
      const int c = axis_coord(g, i, a);
      if (c < margin || c >= g.cells[a] - margin) interior = false;
    }
    if (interior) m = std::max(m, std::abs(r[i]));
  }
  return m;
}

}  // namespace

VectorField gradient(const ScalarField& f, const OperatorWorkspace& ws) {
  const Grid& g = *ws.grid;
  VectorField out(ws.grid, g.dim);
  std::vector<double> tmp(g.size());
  for (int a = 0; a < g.dim; ++a) {
    axis_derivative(g, ws, f.v.data(), a, tmp.data());
    for (std::size_t i = 0; i < g.size(); ++i) out.at(i, a) = tmp[i];
  }
  return out;
}

VectorField matrix_divergence(const MatrixField& M, const OperatorWorkspace& ws) {
  if (M.rows != M.cols) throw NumericalError("matrix_divergence requires a square matrix field");
  const Grid& g = *ws.grid;
  VectorField out(ws.grid, M.rows);
  std::vector<double> comp, tmp(g.size());
  for (int r = 0; r < M.rows; ++r)
    for (int c = 0; c < M.cols; ++c) {
      extract_matrix_component(M, r, c, comp);
      axis_derivative(g, ws, comp.data(), c, tmp.data());
      for (std::size_t i = 0; i < g.size(); ++i) out.at(i, r) += tmp[i];
    }
  return out;
}

ScalarField conservative_divergence(const VectorField& w, const OperatorWorkspace& ws) {
  const Grid& g = *ws.grid;
  if (w.comps != g.dim)
    throw NumericalError("conservative_divergence: component count must equal grid dim");
  ScalarField out(ws.grid);
  std::vector<double> comp(g.size());
  for (int a = 0; a < g.dim; ++a) {
    for (std::size_t i = 0; i < g.size(); ++i) comp[i] = w.at(i, a);
    add_flux_first(g, ws, comp.data(), a, out.v.data());
  }
  return out;
}

ScalarField weighted_laplacian(const ScalarField& f, const MatrixField& Sigma,
                               const OperatorWorkspace& ws) {
  const Grid& g = *ws.grid;
  if (Sigma.rows != g.dim || Sigma.cols != g.dim)
    throw NumericalError("weighted_laplacian: Sigma must be dim x dim");
  ScalarField out(ws.grid);
  std::vector<double> P(g.size()), inner(g.size());
  for (int i = 0; i < g.dim; ++i)
    for (int j = 0; j < g.dim; ++j) {
      for (std::size_t k = 0; k < g.size(); ++k) P[k] = Sigma.at(k, i, j) * f[k];
      if (i == j) {
        add_flux_second(g, ws, P.data(), i, out.v.data());
      } else {
        axis_derivative(g, ws, P.data(), j, inner.data());
        add_flux_first(g, ws, inner.data(), i, out.v.data());
      }
    }
  return out;
}

ScalarField hessian_contraction(const ScalarField& f, const MatrixField& Sigma,
                                const OperatorWorkspace& ws) {
  const Grid& g = *ws.grid;
  if (Sigma.rows != g.dim || Sigma.cols != g.dim)
    throw NumericalError("hessian_contraction: Sigma must be dim x dim");
  ScalarField out(ws.grid);
  std::vector<double> d2(g.size()), scratch;
  for (int i = 0; i < g.dim; ++i)
    for (int j = 0; j < g.dim; ++j) {
      hessian_entry(g, ws, f.v.data(), i, j, scratch, d2.data());
      for (std::size_t k = 0; k < g.size(); ++k) out[k] += Sigma.at(k, i, j) * d2[k];
    }
  return out;
}

Lemma1Residual lemma1_residual(const ScalarField& alpha, const ScalarField& beta,
                               const MatrixField& Sigma, const OperatorWorkspace& ws) {
  const Grid& g = *ws.grid;
  const std::size_t N = g.size();
  Lemma1Residual res;

  VectorField ga = gradient(alpha, ws);
  VectorField gb = gradient(beta, ws);
  VectorField divS = matrix_divergence(Sigma, ws);

  // <Hess, Sigma> = sum_ij d2 Sigma_ij / dx_i dx_j
  std::vector<double> hessS(N, 0.0), comp, d2(N), scratch;
  for (int i = 0; i < g.dim; ++i)
    for (int j = 0; j < g.dim; ++j) {
      extract_matrix_component(Sigma, i, j, comp);
      hessian_entry(g, ws, comp.data(), i, j, scratch, d2.data());
      for (std::size_t k = 0; k < N; ++k) hessS[k] += d2[k];
    }

  ScalarField prod(ws.grid);
  for (std::size_t k = 0; k < N; ++k) prod[k] = alpha[k] * beta[k];

  ScalarField lhs = weighted_laplacian(prod, Sigma, ws);
  ScalarField ha = hessian_contraction(alpha, Sigma, ws);
  ScalarField hb = hessian_contraction(beta, Sigma, ws);

  std::vector<double> r(N);
  for (std::size_t k = 0; k < N; ++k) {
    double dot_da_gb = 0.0, dot_da_ga = 0.0, quad = 0.0;
    for (int a = 0; a < g.dim; ++a) {
      dot_da_gb += divS.at(k, a) * gb.at(k, a);
      dot_da_ga += divS.at(k, a) * ga.at(k, a);
      for (int b = 0; b < g.dim; ++b) quad += ga.at(k, a) * Sigma.at(k, a, b) * gb.at(k, b);
    }
    const double rhs = alpha[k] * hb[k] + beta[k] * ha[k] + 2.0 * alpha[k] * dot_da_gb +
                       2.0 * beta[k] * dot_da_ga + alpha[k] * beta[k] * hessS[k] + 2.0 * quad;
    r[k] = lhs[k] - rhs;
  }
  res.full = interior_max_abs(g, r.data(), 2);

  // beta == 1: Delta_Sigma alpha = alpha <Hess,Sigma> + <Sigma,Hess alpha> + 2<div Sigma, grad alpha>
  ScalarField lhs1 = weighted_laplacian(alpha, Sigma, ws);
  for (std::size_t k = 0; k < N; ++k) {
    double dot = 0.0;
    for (int a = 0; a < g.dim; ++a) dot += divS.at(k, a) * ga.at(k, a);
    r[k] = lhs1[k] - (alpha[k] * hessS[k] + ha[k] + 2.0 * dot);
  }
  res.beta_one = interior_max_abs(g, r.data(), 2);

  // Sigma == I: Delta(alpha beta) = alpha Lap beta + beta Lap alpha + 2 <grad alpha, grad beta>
  MatrixField eye(ws.grid, g.dim, g.dim);
  for (std::size_t k = 0; k < N; ++k)
    for (int a = 0; a < g.dim; ++a) eye.at(k, a, a) = 1.0;
  ScalarField lhsI = weighted_laplacian(prod, eye, ws);
  ScalarField la = hessian_contraction(alpha, eye, ws);
  ScalarField lb = hessian_contraction(beta, eye, ws);
  for (std::size_t k = 0; k < N; ++k) {
    double dot = 0.0;
    for (int a = 0; a < g.dim; ++a) dot += ga.at(k, a) * gb.at(k, a);
    r[k] = lhsI[k] - (alpha[k] * lb[k] + beta[k] * la[k] + 2.0 * dot);
  }
  res.sigma_identity = interior_max_abs(g, r.data(), 2);
  return res;
}

double hessian_log_identity_residual(const ScalarField& phi, double lambda,
                                     const OperatorWorkspace& ws) {
  const Grid& g = *ws.grid;
  const std::size_t N = g.size();
  for (double x : phi.v)
    if (!(x > 0.0)) throw NumericalError("hessian_log_identity_residual: phi must be positive");

  std::vector<double> logphi(N);
  for (std::size_t k = 0; k < N; ++k) logphi[k] = std::log(phi[k]);
  VectorField gphi = gradient(phi, ws);

  std::vector<double> hlog(N), hphi(N), scratch, r(N, 0.0);
  double worst = 0.0;
  for (int i = 0; i < g.dim; ++i)
    for (int j = 0; j < g.dim; ++j) {
      hessian_entry(g, ws, logphi.data(), i, j, scratch, hlog.data());
      hessian_entry(g, ws, phi.v.data(), i, j, scratch, hphi.data());
      for (std::size_t k = 0; k < N; ++k) {
        const double lhs = lambda * hlog[k];
        const double rhs = -lambda / (phi[k] * phi[k]) * gphi.at(k, i) * gphi.at(k, j) +
                           lambda / phi[k] * hphi[k];
        r[k] = lhs - rhs;
      }
      worst = std::max(worst, interior_max_abs(g, r.data(), 2));
    }
  return worst;
}

ScoreResult score(const ScalarField& phi, const OperatorWorkspace& ws) {
  for (double x : phi.v)
    if (!(x > 0.0)) throw NumericalError("score: phi must be strictly positive");
  ScoreResult out;
  out.floor_value = kScoreFloorRel * phi.max();
  out.field = gradient(phi, ws);
  const int d = out.field.comps;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double denom = std::max(phi[i], out.floor_value);
    if (phi[i] < out.floor_value) ++out.floor_activations;
    for (int a = 0; a < d; ++a) out.field.at(i, a) /= denom;
  }
  return out;
}

VectorField excess_drift(const ScalarField& phi, const BridgeProblem& problem, double t,
                         const OperatorWorkspace& ws) {
  MatrixField mis = mismatch_field(problem, t);
  ScoreResult s = score(phi, ws);
  const Grid& g = *ws.grid;
  VectorField out(ws.grid, g.dim);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int a = 0; a < g.dim; ++a) {
      double acc = 0.0;
      for (int b = 0; b < g.dim; ++b) acc += mis.at(i, a, b) * s.field.at(i, b);
      out.at(i, a) = acc;
    }
  return out;
}

ScalarField excess_reaction(const ScalarField& phi, const BridgeProblem& problem, double t,
                            const OperatorWorkspace& ws) {
  MatrixField mis = mismatch_field(problem, t);
  ScoreResult s = score(phi, ws);
  const Grid& g = *ws.grid;
  ScalarField out(ws.grid);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double acc = 0.0;
    for (int a = 0; a < g.dim; ++a)
      for (int b = 0; b < g.dim; ++b) acc += s.field.at(i, a) * mis.at(i, a, b) * s.field.at(i, b);
    out[i] = 0.5 * acc;
  }
  return out;
}

}  // namespace sbridge
