#include "sbridge/montecarlo.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

namespace sbridge {

namespace {

/// Sampler from a grid density: per-cell cumulative masses, cell-uniform
/// placement within the chosen cell. In 2D the first axis is drawn from the
/// marginal and the second from the conditional within that slice.
class DensitySampler {
 public:
  DensitySampler(const ScalarField& rho, const Grid& g) : g_(g) {
    if (g.dim == 1) {
      cdf_.assign(rho.v.begin(), rho.v.end());
      accumulate(cdf_);
    } else {
      const int n0 = g.cells[0], n1 = g.cells[1];
      marginal_.assign(n0, 0.0);
      cond_.assign(static_cast<std::size_t>(n0) * n1, 0.0);
      for (int i = 0; i < n0; ++i) {
        for (int j = 0; j < n1; ++j)
          cond_[static_cast<std::size_t>(i) * n1 + j] =
              rho[static_cast<std::size_t>(i) * n1 + j];
        for (int j = 0; j < n1; ++j) marginal_[i] += cond_[static_cast<std::size_t>(i) * n1 + j];
        accumulate_range(cond_, static_cast<std::size_t>(i) * n1, n1);
      }
      accumulate(marginal_);
    }
  }

  void draw(SplitMix64& rng, double* x) const {
    if (g_.dim == 1) {
      const int c = pick(cdf_, 0, static_cast<int>(cdf_.size()), rng.uniform());
      x[0] = g_.lower[0] + (c + rng.uniform()) * g_.h(0);
    } else {
      const int n1 = g_.cells[1];
      const int i = pick(marginal_, 0, static_cast<int>(marginal_.size()), rng.uniform());
      const int j = pick(cond_, i * n1, n1, rng.uniform());
      x[0] = g_.lower[0] + (i + rng.uniform()) * g_.h(0);
      x[1] = g_.lower[1] + (j - i * n1 + rng.uniform()) * g_.h(1);
    }
  }

 private:
  static void accumulate(std::vector<double>& v) { accumulate_range(v, 0, static_cast<int>(v.size())); }
  static void accumulate_range(std::vector<double>& v, std::size_t off, int count) {
    double acc = 0.0;
    for (int k = 0; k < count; ++k) {
      acc += v[off + k];
      v[off + k] = acc;
    }
    if (acc > 0.0)
      for (int k = 0; k < count; ++k) v[off + k] /= acc;
  }
  static int pick(const std::vector<double>& cdf, int off, int count, double u) {
    int lo = 0, hi = count - 1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (cdf[static_cast<std::size_t>(off) + mid] < u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return off + lo;
  }

  const Grid& g_;
  std::vector<double> cdf_;       // 1D
  std::vector<double> marginal_;  // 2D axis-0
  std::vector<double> cond_;      // 2D per-slice axis-1
};

/// Bilinear (per-axis linear) interpolation of a cell-centered vector field,
/// clamped to the cell-center hull.
void interp_control(const VectorField& u, const Grid& g, const double* x, double* out) {
  const int m = u.comps;
  double w[kMaxDim][2];
  int c0[kMaxDim];
  for (int a = 0; a < g.dim; ++a) {
    const double s = (x[a] - g.lower[a]) / g.h(a) - 0.5;
    const double sc = std::clamp(s, 0.0, static_cast<double>(g.cells[a] - 1));
    const int i0 = std::min(static_cast<int>(sc), g.cells[a] - 2);
    c0[a] = std::max(i0, 0);
    const double f = std::clamp(sc - c0[a], 0.0, 1.0);
    w[a][0] = 1.0 - f;
    w[a][1] = f;
  }
  for (int b = 0; b < m; ++b) out[b] = 0.0;
  if (g.dim == 1) {
    for (int da = 0; da < 2; ++da) {
      const std::size_t cell = static_cast<std::size_t>(c0[0] + da);
      for (int b = 0; b < m; ++b) out[b] += w[0][da] * u.at(cell, b);
    }
  } else {
    for (int da = 0; da < 2; ++da)
      for (int db = 0; db < 2; ++db) {
        const std::size_t cell =
            static_cast<std::size_t>(c0[0] + da) * g.cells[1] + (c0[1] + db);
        const double wt = w[0][da] * w[1][db];
        for (int b = 0; b < m; ++b) out[b] += wt * u.at(cell, b);
      }
  }
}

long reflect_into_box(const Grid& g, double* x) {
  long count = 0;
  for (int a = 0; a < g.dim; ++a) {
    const double lo = g.lower[a], hi = g.upper[a], width = hi - lo;
    while (x[a] < lo || x[a] > hi) {
      if (x[a] < lo) x[a] = 2.0 * lo - x[a];
      if (x[a] > hi) x[a] = 2.0 * hi - x[a];
      ++count;
      if (count > 64) {  // pathological step length; park on the boundary
        x[a] = std::clamp(x[a], lo, hi);
        break;
      }
    }
    (void)width;
  }
  return count;
}

}  // namespace

std::vector<SdeEnsemble> simulate(const BridgeProblem& pr,
                                  const std::vector<VectorField>& control,
                                  const std::vector<int>& checkpoint_nodes,
                                  const SimulateOptions& opt) {
  const Grid& g = *pr.grid;
  const int K = g.num_steps;
  if (static_cast<int>(control.size()) != K + 1)
    throw NumericalError("simulate: control node count mismatch");
  if (opt.particles < 1) throw ConfigError("simulate: particles must be >= 1");
  if (opt.substeps < 1) throw ConfigError("simulate: substeps must be >= 1");

  DensitySampler sampler(pr.rho0, g);
  const int n = pr.n, m = pr.m, p = pr.p;
  const double dt = g.dt();
  const double ds = dt / opt.substeps;
  const double sqrt_ds = std::sqrt(ds);

  std::vector<SdeEnsemble> out(checkpoint_nodes.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c].particle_count = opt.particles;
    out[c].seed = opt.seed;
    out[c].time_index = checkpoint_nodes[c];
    out[c].states.assign(static_cast<std::size_t>(opt.particles) * n, 0.0);
  }

  const int threads = std::max(1, opt.threads);
  std::vector<long> reflections(threads, 0);
  std::vector<std::exception_ptr> failures(threads);

  auto worker_body = [&](int tid, long begin, long end) {
    std::vector<double> x(n), fx(n), gx(static_cast<std::size_t>(n) * m),
        sx(static_cast<std::size_t>(n) * p), uc(m), xi(p);
    long refl = 0;
    for (long part = begin; part < end; ++part) {
      SplitMix64 rng = particle_stream(opt.seed, static_cast<std::uint64_t>(part));
      sampler.draw(rng, x.data());
      std::size_t next_cp = 0;
      for (std::size_t c = 0; c < checkpoint_nodes.size(); ++c)
        if (checkpoint_nodes[c] == 0) {
          for (int a = 0; a < n; ++a)
            out[c].states[static_cast<std::size_t>(part) * n + a] = x[a];
          next_cp = c + 1;
        }
      for (int k = 0; k < K; ++k) {
        const double tk = g.time_node(k);
        for (int j = 0; j < opt.substeps; ++j) {
          const double t = tk + j * ds;
          std::span<const double> xs(x.data(), n);
          pr.f(t, xs, fx);
          pr.g(t, xs, gx);
          pr.sigma(t, xs, sx);
          interp_control(control[static_cast<std::size_t>(k)], g, x.data(), uc.data());
          for (int a = 0; a < p; ++a) xi[a] = rng.normal();
          for (int a = 0; a < n; ++a) {
            double drift = fx[a];
            for (int b = 0; b < m; ++b) drift += gx[static_cast<std::size_t>(a) * m + b] * uc[b];
            double noise = 0.0;
            for (int b = 0; b < p; ++b) noise += sx[static_cast<std::size_t>(a) * p + b] * xi[b];
            x[a] += drift * ds + noise * sqrt_ds;
            if (!std::isfinite(x[a])) throw NumericalError("simulate: non-finite particle state");
          }
          refl += reflect_into_box(g, x.data());
        }
        for (std::size_t c = next_cp; c < checkpoint_nodes.size(); ++c) {
          if (checkpoint_nodes[c] == k + 1) {
            for (int a = 0; a < n; ++a)
              out[c].states[static_cast<std::size_t>(part) * n + a] = x[a];
            next_cp = c + 1;
          }
        }
      }
    }
    reflections[tid] += refl;
  };
  auto worker = [&](int tid, long begin, long end) {
    try {
      worker_body(tid, begin, end);
    } catch (...) {
      failures[static_cast<std::size_t>(tid)] = std::current_exception();
    }
  };

  if (threads == 1) {
    worker(0, 0, opt.particles);
  } else {
    std::vector<std::thread> pool;
    const long chunk = (opt.particles + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const long begin = t * chunk;
      const long end = std::min<long>(opt.particles, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(worker, t, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);

  long total_refl = 0;
  for (long r : reflections) total_refl += r;
  for (auto& e : out) e.reflections = total_refl;
  return out;
}

ScalarField empirical_density(const SdeEnsemble& ensemble, std::shared_ptr<const Grid> grid) {
  const Grid& g = *grid;
  const int n = g.dim;
  std::vector<std::uint64_t> counts(g.size(), 0);
  for (long part = 0; part < ensemble.particle_count; ++part) {
    std::array<int, kMaxDim> c{};
    for (int a = 0; a < n; ++a) {
      const double s = (ensemble.states[static_cast<std::size_t>(part) * n + a] - g.lower[a]) /
                       g.h(a);
      c[a] = std::clamp(static_cast<int>(s), 0, g.cells[a] - 1);
    }
    ++counts[g.index(c)];
  }
  ScalarField out(grid);
  const double norm =
      1.0 / (static_cast<double>(ensemble.particle_count) * g.cell_volume());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<double>(counts[i]) * norm;
  return out;
}

double crossvalidate(const BridgeSolution& sol, const BridgeProblem& pr,
                     const SimulateOptions& opt, std::vector<double>* per_checkpoint,
                     std::vector<SdeEnsemble>* out_ensembles) {
  const Grid& g = *pr.grid;
  const int K = g.num_steps;
  const std::vector<int> checkpoints = {0, K / 2, K};
  auto ensembles = simulate(pr, sol.u, checkpoints, opt);
  double worst = 0.0;
  if (per_checkpoint) per_checkpoint->clear();
  for (std::size_t c = 0; c < ensembles.size(); ++c) {
    ScalarField emp = empirical_density(ensembles[c], pr.grid);
    const ScalarField& rho = sol.rho[static_cast<std::size_t>(checkpoints[c])];
    const double mass = integrate(rho);
    double l1 = 0.0;
    for (std::size_t i = 0; i < emp.size(); ++i)
      l1 += std::abs(emp[i] - rho[i] / mass);
    l1 *= g.cell_volume();
    if (per_checkpoint) per_checkpoint->push_back(l1);
    worst = std::max(worst, l1);
  }
  if (out_ensembles) *out_ensembles = std::move(ensembles);
  return worst;
}

void export_ensemble_csv(const std::filesystem::path& path, const SdeEnsemble& ensemble,
                         int dim) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(17);
  os << (dim == 1 ? "x0" : "x0,x1") << "\n";
  for (long p = 0; p < ensemble.particle_count; ++p) {
    for (int a = 0; a < dim; ++a)
      os << (a ? "," : "") << ensemble.states[static_cast<std::size_t>(p) * dim + a];
    os << "\n";
  }
}

}  // namespace sbridge
