#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "endico/network.hpp"
#include "endico/subproblem.hpp"

namespace endico {

struct RunResult;  // coordinator.hpp

/// Outcome of one sufficient-condition check. `margin` is the signed slack of
/// the inequality; `strict` records whether the condition requires > 0 or
/// >= 0. A failed condition means "not certified", never "divergent": all of
/// these are sufficient conditions only.
struct ConditionResult {
  std::string name;
  bool holds = false;
  double margin = 0.0;
  bool strict = false;
  std::map<std::string, double> inputs;
};

/// Per-round certificate bundle; theorem-2 summaries exist only when a
/// two-round window was available.
struct CertificateReport {
  int round = 0;
  std::map<int, std::vector<ConditionResult>> per_node;
  bool theorem1_all = false;
  std::optional<bool> theorem2_all;
};

/// Single-round sufficient condition: v_i - 4 P r - 4 Q x > 0 (strict),
/// evaluated with the parent voltage the node actually optimized against.
ConditionResult check_theorem1(const NodeState& state, double v_parent_prev,
                               const Line& line);

/// Two-round window over a parent/middle/child chain {i, j, k}: everything
/// the twelve printed inequalities and the delta voltage test consume.
struct Theorem2Snapshot {
  double v_i_prev = 0.0;  // v_i at t-1
  double v_j_prev = 0.0;  // v_j at t-1
  double p_ij_t = 0.0;
  double p_ij_t1 = 0.0;   // P_ij at t+1
  double q_ij_t = 0.0;
  double p_jk_t = 0.0;
  Line line_ij;
  Line line_jk;
  double v_j_t = 0.0;
  double v_j_t1 = 0.0;    // v_j at t+1
  double eps_v = 1e-6;
};

/// The twelve over-time inequalities (>= 0 semantics) plus the
/// "delta_equals_one" voltage test; thirteen results in printed order.
std::vector<ConditionResult> check_theorem2(const Theorem2Snapshot& snap);

/// Sequential line-network schedule result.
struct Theorem3Schedule {
  bool applicable = false;     // model is a line network and run usable
  bool schedule_found = false;
  std::vector<int> subsystem_head;  // bus id opening each subsystem {i, i+1, i+2}
  std::vector<int> earliest_round;  // earliest certified round per subsystem
  std::vector<int> schedule;        // chosen rounds, strictly advancing
  std::string note;
};

/// Scan a recorded run for rounds t_i certifying subsystems {i, i+1, i+2} in
/// root-to-leaf order with t_{i+1} >= t_i + 1. Not-applicable (never a silent
/// pass) on non-line topologies.
Theorem3Schedule check_theorem3_schedule(const RunResult& result,
                                         const FeederModel& model,
                                         double eps_v = 1e-6);

/// Voltage bracket (1/delta) v_prev <= v_now <= delta v_prev; the margin is
/// the smaller slack of the two delta-scaled bounds.
ConditionResult check_delta_condition(double v_now, double v_prev, double delta);

}  // namespace endico
