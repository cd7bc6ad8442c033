#pragma once

#include <filesystem>

#include "sbridge/operators.hpp"

namespace sbridge {

enum class SchemeKind { ImexCn, ExplicitRk2 };

/// imex-cn: Crank-Nicolson on the diffusion term (backward-Euler predictor,
/// trapezoidal corrector), explicit second-order advection/reaction. The
/// explicit part is sub-divided within each node interval until its sub-step
/// satisfies ds <= cfl_safety * min(h/max|v|, 1/max|reaction|).
/// explicit-rk2: Heun on everything; violating either the advective or the
/// diffusive CFL bound is an error rather than a silent sub-division.
struct StepScheme {
  SchemeKind kind = SchemeKind::ImexCn;
  double cfl_safety = 0.5;
};

struct FactorTrajectory {
  enum class Direction { Forward, Backward };
  std::shared_ptr<const Grid> grid;
  Direction direction = Direction::Forward;
  std::vector<ScalarField> nodes;  // num_steps + 1 fields, index 0 <-> t0

  const ScalarField& at(int k) const { return nodes[static_cast<std::size_t>(k)]; }
};

struct StepStats {
  long stabilization_clips = 0;    // values raised to the positivity floor
  long score_floor_activations = 0;
  long negative_density_clips = 0;
  int max_substeps = 1;
  void merge(const StepStats& o) {
    stabilization_clips += o.stabilization_clips;
    score_floor_activations += o.score_floor_activations;
    negative_density_clips += o.negative_density_clips;
    max_substeps = std::max(max_substeps, o.max_substeps);
  }
};

/// Grow-only per-interval explicit sub-step counts. Sharing one memory across
/// repeated passes pins the discrete map, so outer fixed-point iterations see
/// a stationary scheme instead of one that flickers with the CFL estimate.
struct SubstepMemory {
  std::vector<int> backward, forward;
};

/// Values below kPosFloorRel * max are raised to the floor (counted): deep
/// factor tails fall below solver rounding noise, where sign is meaningless.
/// Dips below kNegAbortRel * max signal a real instability and abort.
inline constexpr double kPosFloorRel = 1e-30;
inline constexpr double kNegAbortRel = 1e-3;

FactorTrajectory backward_phi_linear(const ScalarField& terminal, const BridgeProblem& problem,
                                     const StepScheme& scheme, StepStats* stats = nullptr);

FactorTrajectory backward_phi_nonlinear(const ScalarField& terminal, const BridgeProblem& problem,
                                        const StepScheme& scheme, StepStats* stats = nullptr,
                                        SubstepMemory* memory = nullptr);

FactorTrajectory forward_phihat_linear(const ScalarField& initial, const BridgeProblem& problem,
                                       const StepScheme& scheme, StepStats* stats = nullptr);

FactorTrajectory forward_phihat_nonlinear(const ScalarField& initial,
                                          const FactorTrajectory& phi_traj,
                                          const BridgeProblem& problem, const StepScheme& scheme,
                                          StepStats* stats = nullptr,
                                          SubstepMemory* memory = nullptr);

/// Controlled Fokker-Planck-Kolmogorov marching of a density under the given
/// per-node feedback control (m components per cell).
FactorTrajectory fpk_forward(const ScalarField& initial, const std::vector<VectorField>& control,
                             const BridgeProblem& problem, const StepScheme& scheme,
                             StepStats* stats = nullptr);

/// Discrete duality pairing integrate(phihat(t_k) * phi(t_k)).
double duality_bracket(const FactorTrajectory& phihat, const FactorTrajectory& phi, int k);

void write_trajectory(const std::filesystem::path& dir, const FactorTrajectory& traj);
FactorTrajectory read_trajectory(const std::filesystem::path& dir,
                                 std::shared_ptr<const Grid> grid,
                                 FactorTrajectory::Direction direction);

}  // namespace sbridge
