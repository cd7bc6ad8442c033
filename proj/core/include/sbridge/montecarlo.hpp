#pragma once

#include <cmath>
#include <cstdint>

#include "sbridge/recovery.hpp"

namespace sbridge {

/// splitmix64: the per-particle noise stream. Each particle owns stream
/// state hash(seed, particle index), so results are independent of thread
/// count and iteration order.
struct SplitMix64 {
  std::uint64_t state;
  explicit SplitMix64(std::uint64_t s) : state(s) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() {  // in (0,1)
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }
  /// Box-Muller pair; call normal() for one draw at a time.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline SplitMix64 particle_stream(std::uint64_t seed, std::uint64_t particle) {
  SplitMix64 mix(seed ^ (0x632be59bd9b4e019ULL * (particle + 1)));
  mix.next();
  return mix;
}

struct SdeEnsemble {
  long particle_count = 0;
  std::uint64_t seed = 0;
  int time_index = 0;
  std::vector<double> states;  // particle-major, n coords each
  long reflections = 0;        // boundary exits folded back into the box
};

struct SimulateOptions {
  long particles = 100000;
  std::uint64_t seed = 0;
  int substeps = 1;
  int threads = 1;
};

/// Euler-Maruyama under a per-node feedback control (bilinear in space,
/// piecewise constant in time), reflecting at the box boundary. Particles
/// start i.i.d. from rho0 by inverse-CDF (1D) or axis-conditional (2D)
/// sampling. Returns ensembles at the requested checkpoint nodes.
std::vector<SdeEnsemble> simulate(const BridgeProblem& problem,
                                  const std::vector<VectorField>& control,
                                  const std::vector<int>& checkpoint_nodes,
                                  const SimulateOptions& options);

/// Histogram on the grid cells, normalized to unit mass.
ScalarField empirical_density(const SdeEnsemble& ensemble, std::shared_ptr<const Grid> grid);

/// Simulates under the recovered control and returns the max over checkpoints
/// {t0, midpoint, t1} of the L1 distance between the empirical density and
/// the (renormalized) rho_opt. Per-checkpoint values optionally returned.
double crossvalidate(const BridgeSolution& solution, const BridgeProblem& problem,
                     const SimulateOptions& options,
                     std::vector<double>* per_checkpoint = nullptr,
                     std::vector<SdeEnsemble>* ensembles = nullptr);

/// One particle per row, coordinate columns.
void export_ensemble_csv(const std::filesystem::path& path, const SdeEnsemble& ensemble, int dim);

}  // namespace sbridge
