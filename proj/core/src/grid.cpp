#include "sbridge/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sbridge {

std::shared_ptr<const Grid> make_grid(const Grid& g) {
  if (g.dim < 1 || g.dim > kMaxDim)
    throw ConfigError("grid: dim must be 1 or 2, got " + std::to_string(g.dim));
  for (int a = 0; a < g.dim; ++a) {
    if (g.cells[a] < 8)
      throw ConfigError("grid: axis " + std::to_string(a) + " needs >= 8 cells, got " +
                        std::to_string(g.cells[a]));
    if (!(g.upper[a] > g.lower[a]))
      throw ConfigError("grid: axis " + std::to_string(a) + " has non-positive extent");
  }
  if (!(g.t1 > g.t0)) throw ConfigError("grid: t1 must exceed t0");
  if (g.num_steps < 2) throw ConfigError("grid: num_steps must be >= 2");
  return std::make_shared<const Grid>(g);
}

double ScalarField::max() const { return *std::max_element(v.begin(), v.end()); }
double ScalarField::min() const { return *std::min_element(v.begin(), v.end()); }

std::vector<std::array<double, kMaxDim>> cell_centers(const Grid& grid) {
  std::vector<std::array<double, kMaxDim>> out(grid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grid.center(i);
  return out;
}

double integrate(const ScalarField& f) {
  double s = 0.0;
  for (double x : f.v) s += x;
  return s * f.grid->cell_volume();
}

namespace {

[[noreturn]] void bad_sample(const Grid& grid, std::size_t cell) {
  auto x = grid.center(cell);
  std::ostringstream os;
  os << "sampling produced a non-finite value at cell " << cell << " (";
  for (int a = 0; a < grid.dim; ++a) os << (a ? ", " : "") << x[a];
  os << ")";
  throw NumericalError(os.str());
}

}  // namespace

ScalarField sample_scalar(const ScalarFn& fn, std::shared_ptr<const Grid> grid, double t) {
  ScalarField out(grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto x = grid->center(i);
    out[i] = fn(t, std::span<const double>(x.data(), grid->dim));
    if (!std::isfinite(out[i])) bad_sample(*grid, i);
  }
  return out;
}

VectorField sample_vector(const VectorFn& fn, int comps, std::shared_ptr<const Grid> grid,
                          double t) {
  VectorField out(grid, comps);
  for (std::size_t i = 0; i < grid->size(); ++i) {
    auto x = grid->center(i);
    fn(t, std::span<const double>(x.data(), grid->dim),
       std::span<double>(&out.v[i * comps], comps));
  }
  for (std::size_t k = 0; k < out.v.size(); ++k)
    if (!std::isfinite(out.v[k])) bad_sample(*grid, k / comps);
  return out;
}

MatrixField sample_matrix(const MatrixFn& fn, int rows, int cols, std::shared_ptr<const Grid> grid,
                          double t) {
  MatrixField out(grid, rows, cols);
  const int rc = rows * cols;
  for (std::size_t i = 0; i < grid->size(); ++i) {
    auto x = grid->center(i);
    fn(t, std::span<const double>(x.data(), grid->dim), std::span<double>(&out.v[i * rc], rc));
  }
  for (std::size_t k = 0; k < out.v.size(); ++k)
    if (!std::isfinite(out.v[k])) bad_sample(*grid, k / rc);
  return out;
}

}  // namespace sbridge
