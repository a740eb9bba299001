#pragma once

#include <map>
#include <utility>

#include "endico/almcore.hpp"
#include "endico/network.hpp"
#include "endico/subproblem.hpp"

namespace endico {

/// Whole-network optimum used to measure the distributed optimality gap.
struct CentralSolution {
  std::map<int, double> dispatch;  // DER bus -> q_D
  std::map<int, double> v_sq;      // every bus
  std::map<int, std::pair<double, double>> flows;  // to-bus id -> (P, Q)
  std::map<int, double> l_sq;
  double objective = 0.0;
  SolveReport report;
};

struct CentralOptions {
  int var_cap = 400;  // validation baseline, not a scale play
  AlmOptions alm;
};

/// Stack all per-line variables and DER dispatches into one problem with the
/// branch-flow equalities at every bus (current equation against the
/// instantaneous upstream voltage) and every box constraint, then solve from
/// a sweep-initialized start.
CentralSolution solve_central(const FeederModel& model, ObjectiveKind kind,
                              const CentralOptions& opts = {});

}  // namespace endico
