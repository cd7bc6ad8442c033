#pragma once

#include <string>

#include "sbridge/grid.hpp"

namespace sbridge {

/// Named analytic coefficient families selectable from config files.
/// Specs are "name" or "name:params" with comma-separated numbers:
///   vector:  zero | constant:v1,..,vn | linear:a11,..,ann   (drift A*x)
///   matrix:  zero | constant:m11,..   (row-major) | diag:d1,..
///   scalar:  zero | constant:c | quadratic:w1,..,wn         (sum_i w_i x_i^2)
///   density: gaussian:mean1,..;cov row-major | table:path.bin | uniform
/// Table specs load a binary field dump and interpolate nothing: the dump
/// grid must match the problem grid exactly.
VectorFn make_vector_family(const std::string& spec, int n);
MatrixFn make_matrix_family(const std::string& spec, int rows, int cols);
ScalarFn make_scalar_family(const std::string& spec, int n);
ScalarField make_density(const std::string& spec, std::shared_ptr<const Grid> grid);

/// Gaussian density sampler used by tests and the density registry.
ScalarField sample_gaussian(std::shared_ptr<const Grid> grid, std::span<const double> mean,
                            std::span<const double> cov_row_major);

}  // namespace sbridge
