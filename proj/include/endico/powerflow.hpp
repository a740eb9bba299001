#pragma once

#include <map>
#include <utility>

#include "endico/network.hpp"

namespace endico {

/// Voltage dropped to or below zero during a sweep; the operating point is
/// outside the solvable region.
class VoltageCollapse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Branch-flow state of the whole feeder. Flow and current maps are keyed by
/// the downstream bus id of the line (each non-root bus has exactly one).
struct PowerFlowSolution {
  std::map<int, double> v_sq;                        // bus id -> squared voltage
  std::map<int, std::pair<double, double>> flows;    // to-bus id -> (P, Q) sending end
  std::map<int, double> l_sq;                        // to-bus id -> squared current
  double residual = 0.0;  // max violation over all four equation families
  bool converged = false;
  int iterations = 0;
};

struct SweepOptions {
  double tol = 1e-10;
  int max_iter = 200;
  double damping = 1.0;  // 1.0 = undamped; try 0.5 on non-convergence
};

/// Backward/forward sweep solution of the branch flow equations at a fixed
/// reactive dispatch. The root voltage is held at the model's root v_init.
/// Currents use the sending-end convention l = (P^2 + Q^2) / v_parent, the
/// same approximation the per-node subproblem constrains, so the two can be
/// cross-validated without a modeling gap.
///
/// Buses absent from q_dispatch dispatch q_D = 0. Non-convergence is reported
/// through `converged` / `residual`, never silently.
PowerFlowSolution sweep_solve(const FeederModel& model,
                              const std::map<int, double>& q_dispatch = {},
                              const SweepOptions& opts = {});

/// Max absolute violation of the four branch-flow equation families at an
/// arbitrary candidate solution. Pure; throws on missing bus/line entries.
double residual_of(const FeederModel& model, const PowerFlowSolution& sol,
                   const std::map<int, double>& q_dispatch = {});

}  // namespace endico
