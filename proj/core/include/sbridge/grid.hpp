#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sbridge/errors.hpp"

namespace sbridge {

inline constexpr int kMaxDim = 2;

/// Uniform rectangular grid over a box [lower, upper]^dim with a uniform
/// partition of the time horizon [t0, t1]. Cells are ordered row-major
/// (axis 0 slowest). Field values live at cell centers.
struct Grid {
  int dim = 1;
  std::array<double, kMaxDim> lower{};
  std::array<double, kMaxDim> upper{};
  std::array<int, kMaxDim> cells{};
  double t0 = 0.0;
  double t1 = 1.0;
  int num_steps = 2;

  double h(int axis) const { return (upper[axis] - lower[axis]) / cells[axis]; }
  double dt() const { return (t1 - t0) / num_steps; }
  double time_node(int k) const { return t0 + k * dt(); }

  std::size_t size() const {
    std::size_t n = 1;
    for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(cells[a]);
    return n;
  }

  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim; ++a) v *= h(a);
    return v;
  }

  std::size_t index(std::array<int, kMaxDim> c) const {
    std::size_t idx = static_cast<std::size_t>(c[0]);
    for (int a = 1; a < dim; ++a) idx = idx * cells[a] + c[a];
    return idx;
  }

  std::array<int, kMaxDim> coords(std::size_t idx) const {
    std::array<int, kMaxDim> c{};
    for (int a = dim - 1; a >= 0; --a) {
      c[a] = static_cast<int>(idx % cells[a]);
      idx /= cells[a];
    }
    return c;
  }

  std::array<double, kMaxDim> center(std::size_t idx) const {
    auto c = coords(idx);
    std::array<double, kMaxDim> x{};
    for (int a = 0; a < dim; ++a) x[a] = lower[a] + (c[a] + 0.5) * h(a);
    return x;
  }

  /// Stride of axis a in the row-major cell index.
  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int a = dim - 1; a > axis; --a) s *= cells[a];
    return s;
  }

  bool same_layout(const Grid& o) const {
    if (dim != o.dim || num_steps != o.num_steps || t0 != o.t0 || t1 != o.t1) return false;
    for (int a = 0; a < dim; ++a)
      if (cells[a] != o.cells[a] || lower[a] != o.lower[a] || upper[a] != o.upper[a]) return false;
    return true;
  }
};

/// Validates invariants and returns a shared immutable grid.
std::shared_ptr<const Grid> make_grid(const Grid& g);

struct ScalarField {
  std::shared_ptr<const Grid> grid;
  std::vector<double> v;

  ScalarField() = default;
  explicit ScalarField(std::shared_ptr<const Grid> g, double init = 0.0)
      : grid(std::move(g)), v(grid->size(), init) {}

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
  std::size_t size() const { return v.size(); }
  double max() const;
  double min() const;
};

struct VectorField {
  std::shared_ptr<const Grid> grid;
  int comps = 0;
  std::vector<double> v;  // cell-major: v[cell*comps + c]

  VectorField() = default;
  VectorField(std::shared_ptr<const Grid> g, int k)
      : grid(std::move(g)), comps(k), v(grid->size() * k, 0.0) {}

  double& at(std::size_t cell, int c) { return v[cell * comps + c]; }
  double at(std::size_t cell, int c) const { return v[cell * comps + c]; }
};

struct MatrixField {
  std::shared_ptr<const Grid> grid;
  int rows = 0, cols = 0;
  std::vector<double> v;  // cell-major, row-major per cell

  MatrixField() = default;
  MatrixField(std::shared_ptr<const Grid> g, int r, int c)
      : grid(std::move(g)), rows(r), cols(c), v(grid->size() * r * c, 0.0) {}

  double& at(std::size_t cell, int r, int c) { return v[(cell * rows + r) * cols + c]; }
  double at(std::size_t cell, int r, int c) const { return v[(cell * rows + r) * cols + c]; }
};

/// Coefficient callables. Outputs are written into caller-provided spans to
/// keep per-cell sampling allocation-free.
using ScalarFn = std::function<double(double t, std::span<const double> x)>;
using VectorFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using MatrixFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

std::vector<std::array<double, kMaxDim>> cell_centers(const Grid& grid);

/// Midpoint quadrature: sum of values times cell volume.
double integrate(const ScalarField& f);

ScalarField sample_scalar(const ScalarFn& fn, std::shared_ptr<const Grid> grid, double t);
VectorField sample_vector(const VectorFn& fn, int comps, std::shared_ptr<const Grid> grid, double t);
MatrixField sample_matrix(const MatrixFn& fn, int rows, int cols, std::shared_ptr<const Grid> grid,
                          double t);

}  // namespace sbridge
