#include "sbridge/oracle.hpp"

#include <cmath>
#include <numbers>

namespace sbridge {

namespace {

void matvec(const DenseMatrix& K, const std::vector<double>& x, std::vector<double>& y,
            bool transpose) {
  y.assign(transpose ? K.cols : K.rows, 0.0);
  if (!transpose) {
    for (std::size_t i = 0; i < K.rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < K.cols; ++j) acc += K.at(i, j) * x[j];
      y[i] = acc;
    }
  } else {
    for (std::size_t i = 0; i < K.rows; ++i)
      for (std::size_t j = 0; j < K.cols; ++j) y[j] += K.at(i, j) * x[i];
  }
}

double hilbert_vec(const std::vector<double>& u, const std::vector<double>& v) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = std::log(u[i] / v[i]);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return hi - lo;
}

}  // namespace

SinkhornScaling static_sinkhorn(const DenseMatrix& K, std::span<const double> a,
                                std::span<const double> b, double tol, int max_iter) {
  for (double x : K.a)
    if (!(x > 0.0)) throw NumericalError("static_sinkhorn: kernel must be entrywise positive");
  for (double x : a)
    if (!(x > 0.0)) throw NumericalError("static_sinkhorn: marginal a must be positive");
  for (double x : b)
    if (!(x > 0.0)) throw NumericalError("static_sinkhorn: marginal b must be positive");

  SinkhornScaling s;
  s.u.assign(K.rows, 1.0);
  s.v.assign(K.cols, 1.0);
  std::vector<double> tmp, prev_u;
  for (int it = 0; it < max_iter; ++it) {
    prev_u = s.u;
    matvec(K, s.v, tmp, false);
    for (std::size_t i = 0; i < K.rows; ++i) s.u[i] = a[i] / tmp[i];
    matvec(K, s.u, tmp, true);
    for (std::size_t j = 0; j < K.cols; ++j) s.v[j] = b[j] / tmp[j];
    s.iterations = it + 1;
    if (it > 0) s.dh_history.push_back(hilbert_vec(s.u, prev_u));

    // marginal error of diag(u) K diag(v)
    matvec(K, s.v, tmp, false);
    double err = 0.0;
    for (std::size_t i = 0; i < K.rows; ++i) err += std::abs(s.u[i] * tmp[i] - a[i]);
    matvec(K, s.u, tmp, true);
    for (std::size_t j = 0; j < K.cols; ++j) err += std::abs(s.v[j] * tmp[j] - b[j]);
    if (err <= tol) {
      s.converged = true;
      break;
    }
  }
  return s;
}

DenseMatrix heat_kernel_matrix(const Grid& grid, double T) {
  if (grid.dim != 1) throw ConfigError("heat_kernel_matrix: 1D grids only");
  if (!(T > 0.0)) throw ConfigError("heat_kernel_matrix: T must be positive");
  const std::size_t n = grid.size();
  const double h = grid.h(0);
  const double norm = h / std::sqrt(2.0 * std::numbers::pi * T);
  DenseMatrix K(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = grid.lower[0] + (static_cast<double>(i) + 0.5) * h;
    for (std::size_t j = 0; j < n; ++j) {
      const double xj = grid.lower[0] + (static_cast<double>(j) + 0.5) * h;
      K.at(i, j) = norm * std::exp(-(xi - xj) * (xi - xj) / (2.0 * T));
    }
  }
  return K;
}

EndpointFactors bridge_from_static(std::span<const double> u, std::span<const double> v,
                                   std::shared_ptr<const Grid> grid) {
  if (u.size() != grid->size() || v.size() != grid->size())
    throw NumericalError("bridge_from_static: size mismatch");
  EndpointFactors out;
  out.phihat0 = ScalarField(grid);
  out.phi1 = ScalarField(grid);
  const double w = grid->cell_volume();
  for (std::size_t i = 0; i < grid->size(); ++i) {
    out.phihat0[i] = u[i] / w;
    out.phi1[i] = v[i];
  }
  return out;
}

}  // namespace sbridge
