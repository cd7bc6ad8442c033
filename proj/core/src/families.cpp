#include "sbridge/families.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sbridge/field_io.hpp"

namespace sbridge {

namespace {

struct Spec {
  std::string name;
  std::vector<double> params;
  std::string raw_tail;  // everything after ':' unparsed (for table paths)
};

Spec parse_spec(const std::string& s) {
  Spec out;
  const auto colon = s.find(':');
  out.name = s.substr(0, colon);
  if (colon == std::string::npos) return out;
  out.raw_tail = s.substr(colon + 1);
  std::string tail = out.raw_tail;
  for (char& c : tail)
    if (c == ';') c = ',';
  std::istringstream is(tail);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      out.params.push_back(std::stod(item));
    } catch (const std::exception&) {
      return out;  // non-numeric params (e.g. a path); keep raw_tail only
    }
  }
  return out;
}

[[noreturn]] void bad_spec(const std::string& spec, const std::string& why) {
  throw ConfigError("coefficient spec '" + spec + "': " + why);
}

void expect_params(const Spec& sp, const std::string& spec, std::size_t count) {
  if (sp.params.size() != count)
    bad_spec(spec, "expected " + std::to_string(count) + " parameters, got " +
                       std::to_string(sp.params.size()));
}

/// Time-constant grid-sampled coefficient: a loaded dump evaluated by cell
/// lookup. The solver only ever samples coefficients at cell centers, so the
/// lookup reproduces the stored values exactly on the matching grid.
struct TableCoefficient {
  std::shared_ptr<const Grid> grid;
  std::shared_ptr<const std::vector<double>> values;
  int comps = 1;

  std::size_t cell_of(std::span<const double> x) const {
    std::array<int, kMaxDim> c{};
    for (int a = 0; a < grid->dim; ++a) {
      const double s = (x[a] - grid->lower[a]) / grid->h(a);
      c[a] = std::clamp(static_cast<int>(s), 0, grid->cells[a] - 1);
    }
    return grid->index(c);
  }

  void fetch(std::span<const double> x, std::span<double> out) const {
    const std::size_t base = cell_of(x) * static_cast<std::size_t>(comps);
    for (int k = 0; k < comps; ++k) out[k] = (*values)[base + k];
  }
};

TableCoefficient load_table(const std::string& spec, const std::string& path, int kind, int rows,
                            int cols) {
  LoadedField lf = read_field(path);
  if (lf.kind != kind || lf.rows != rows || lf.cols != cols)
    bad_spec(spec, "dump shape does not match the requested coefficient");
  TableCoefficient t;
  t.grid = lf.grid;
  t.comps = rows * cols;
  t.values = std::make_shared<std::vector<double>>(std::move(lf.values));
  return t;
}

}  // namespace

VectorFn make_vector_family(const std::string& spec, int n) {
  Spec sp = parse_spec(spec);
  if (sp.name == "zero") {
    return [n](double, std::span<const double>, std::span<double> out) {
      for (int i = 0; i < n; ++i) out[i] = 0.0;
    };
  }
  if (sp.name == "constant") {
    expect_params(sp, spec, static_cast<std::size_t>(n));
    return [v = sp.params, n](double, std::span<const double>, std::span<double> out) {
      for (int i = 0; i < n; ++i) out[i] = v[i];
    };
  }
  if (sp.name == "linear") {
    expect_params(sp, spec, static_cast<std::size_t>(n) * n);
    return [a = sp.params, n](double, std::span<const double> x, std::span<double> out) {
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += a[i * n + j] * x[j];
        out[i] = acc;
      }
    };
  }
  if (sp.name == "table") {
    if (sp.raw_tail.empty()) bad_spec(spec, "table requires a path");
    TableCoefficient t = load_table(spec, sp.raw_tail, 1, n, 1);
    return [t](double, std::span<const double> x, std::span<double> out) { t.fetch(x, out); };
  }
  bad_spec(spec, "unknown vector family '" + sp.name + "'");
}

MatrixFn make_matrix_family(const std::string& spec, int rows, int cols) {
  Spec sp = parse_spec(spec);
  const int rc = rows * cols;
  if (sp.name == "zero") {
    return [rc](double, std::span<const double>, std::span<double> out) {
      for (int i = 0; i < rc; ++i) out[i] = 0.0;
    };
  }
  if (sp.name == "constant") {
    expect_params(sp, spec, static_cast<std::size_t>(rc));
    return [v = sp.params, rc](double, std::span<const double>, std::span<double> out) {
      for (int i = 0; i < rc; ++i) out[i] = v[i];
    };
  }
  if (sp.name == "diag") {
    expect_params(sp, spec, static_cast<std::size_t>(std::min(rows, cols)));
    return [d = sp.params, rows, cols](double, std::span<const double>, std::span<double> out) {
      for (int i = 0; i < rows * cols; ++i) out[i] = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) out[i * cols + i] = d[i];
    };
  }
  if (sp.name == "table") {
    if (sp.raw_tail.empty()) bad_spec(spec, "table requires a path");
    TableCoefficient t = load_table(spec, sp.raw_tail, 2, rows, cols);
    return [t](double, std::span<const double> x, std::span<double> out) { t.fetch(x, out); };
  }
  bad_spec(spec, "unknown matrix family '" + sp.name + "'");
}

ScalarFn make_scalar_family(const std::string& spec, int n) {
  Spec sp = parse_spec(spec);
  if (sp.name == "zero") {
    return [](double, std::span<const double>) { return 0.0; };
  }
  if (sp.name == "constant") {
    expect_params(sp, spec, 1);
    return [c = sp.params[0]](double, std::span<const double>) { return c; };
  }
  if (sp.name == "quadratic") {
    expect_params(sp, spec, static_cast<std::size_t>(n));
    return [w = sp.params, n](double, std::span<const double> x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += w[i] * x[i] * x[i];
      return acc;
    };
  }
  if (sp.name == "table") {
    if (sp.raw_tail.empty()) bad_spec(spec, "table requires a path");
    TableCoefficient t = load_table(spec, sp.raw_tail, 0, 1, 1);
    return [t](double, std::span<const double> x) {
      double out[1];
      t.fetch(x, {out, 1});
      return out[0];
    };
  }
  bad_spec(spec, "unknown scalar family '" + sp.name + "'");
}

ScalarField sample_gaussian(std::shared_ptr<const Grid> grid, std::span<const double> mean,
                            std::span<const double> cov) {
  const int n = grid->dim;
  double det, inv[4];
  if (n == 1) {
    det = cov[0];
    if (det <= 0.0) throw ConfigError("gaussian: variance must be positive");
    inv[0] = 1.0 / det;
  } else {
    det = cov[0] * cov[3] - cov[1] * cov[2];
    if (det <= 0.0 || cov[0] <= 0.0) throw ConfigError("gaussian: covariance not positive definite");
    inv[0] = cov[3] / det;
    inv[1] = -cov[1] / det;
    inv[2] = -cov[2] / det;
    inv[3] = cov[0] / det;
  }
  const double norm =
      std::pow(2.0 * std::numbers::pi, -0.5 * n) / std::sqrt(det);
  ScalarField out(grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto x = grid->center(i);
    double q = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) q += (x[a] - mean[a]) * inv[a * n + b] * (x[b] - mean[b]);
    out[i] = norm * std::exp(-0.5 * q);
  }
  return out;
}

ScalarField make_density(const std::string& spec, std::shared_ptr<const Grid> grid) {
  Spec sp = parse_spec(spec);
  const int n = grid->dim;
  if (sp.name == "uniform") {
    ScalarField out(grid, 1.0);
    const double vol = grid->cell_volume() * static_cast<double>(grid->size());
    for (double& x : out.v) x = 1.0 / vol;
    return out;
  }
  if (sp.name == "gaussian") {
    const std::size_t want = static_cast<std::size_t>(n) + static_cast<std::size_t>(n) * n;
    expect_params(sp, spec, want);
    return sample_gaussian(grid, std::span<const double>(sp.params.data(), n),
                           std::span<const double>(sp.params.data() + n, n * n));
  }
  if (sp.name == "table") {
    if (sp.raw_tail.empty()) bad_spec(spec, "table requires a path");
    return read_scalar_field(sp.raw_tail, grid);
  }
  bad_spec(spec, "unknown density family '" + sp.name + "'");
}

}  // namespace sbridge
