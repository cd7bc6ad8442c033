#pragma once

#include "sbridge/grid.hpp"

namespace sbridge {

/// Dense row-major matrix, just enough for the reference solvers.
struct DenseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

struct SinkhornScaling {
  std::vector<double> u, v;
  int iterations = 0;
  bool converged = false;
  std::vector<double> dh_history;  // Hilbert distance between successive u iterates
};

/// Alternating matrix scaling u <- a/(Kv), v <- b/(K^T u) until diag(u) K
/// diag(v) has row sums a and column sums b within tol (L1).
SinkhornScaling static_sinkhorn(const DenseMatrix& K, std::span<const double> a,
                                std::span<const double> b, double tol, int max_iter = 10000);

/// 1D Gaussian transition matrix K_ij = N(x_i - x_j; T) * h; the static
/// entropic-transport kernel of the drift-free unit-noise bridge.
DenseMatrix heat_kernel_matrix(const Grid& grid, double T);

struct EndpointFactors {
  ScalarField phihat0;  // ~ u / quadrature weight
  ScalarField phi1;     // ~ v
};

/// Maps a converged static scaling to the dynamic solver's endpoint factors,
/// defined up to the shared projective gauge.
EndpointFactors bridge_from_static(std::span<const double> u, std::span<const double> v,
                                   std::shared_ptr<const Grid> grid);

}  // namespace sbridge
