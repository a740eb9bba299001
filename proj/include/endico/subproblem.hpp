#pragma once

#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "endico/almcore.hpp"
#include "endico/network.hpp"

namespace endico {

/// Local variable vector of a node, ordered [P_ij, Q_ij, v_j, l_ij, q_Dj].
struct NodeState {
  double p_flow = 0.0;
  double q_flow = 0.0;
  double v_sq = 0.0;
  double l_sq = 0.0;
  double q_der = 0.0;

  Eigen::Matrix<double, 5, 1> to_vector() const;
  static NodeState from_vector(const Eigen::Matrix<double, 5, 1>& z);

  bool operator==(const NodeState&) const = default;
};

enum class ObjectiveKind { loss, voltage_deviation };

/// Frozen boundary view a node optimizes against in one round: the parent
/// voltage from the previous round and the summed child flows from the
/// previous round.
struct SubproblemContext {
  double v_parent_prev = 1.0;
  double child_p_sum = 0.0;
  double child_q_sum = 0.0;
  Line line;
  Bus bus;
  double v_min_sq = 0.95 * 0.95;
  double v_max_sq = 1.05 * 1.05;
  ObjectiveKind objective = ObjectiveKind::loss;
  double v_ref_sq = 1.0;  // used by the voltage-deviation objective
};

/// The 5-variable node problem: equalities are the two power balances, the
/// voltage drop, and the (lagged-voltage) current equation; inequalities are
/// the voltage band, the DER reactive box, and the thermal limit, in that
/// order. Objective: r*l (loss) or (v - v_ref)^2.
NlpProblem build_p1(const SubproblemContext& ctx);

/// Objective value of the context at a state.
double objective_value(const SubproblemContext& ctx, const NodeState& s);

/// Solve the node problem from a warm start; q_der is clamped onto the DER
/// box on return. Solver non-convergence is reported, not thrown.
std::pair<NodeState, SolveReport> solve_node(const SubproblemContext& ctx,
                                             const NodeState& warm_start,
                                             const AlmOptions& opts = {});

/// Resolve {P, Q, l} from the two balances and the current equation at a
/// fixed reactive output, then v from the drop equation; damped fixed point.
/// nullopt when the iteration diverges (operation far outside normal loading).
std::optional<NodeState> resolve_at_q(const SubproblemContext& ctx, double q_der);

struct BruteForceResult {
  bool feasible = false;  // false: no grid sample satisfied the bounds
  double q_best = 0.0;
  NodeState state_best;
  double objective = 0.0;
};

/// Independent 1-D oracle for solve_node: sweep q over `grid` uniform samples
/// of the DER interval, resolve the remaining variables per sample, discard
/// samples violating the voltage band or thermal limit, return the feasible
/// minimizer.
BruteForceResult brute_force_qd(const SubproblemContext& ctx, int grid);

/// The explicit scaled Hessian M' of the node augmented Lagrangian,
/// transcribed entry by entry; d_j is the current-equation multiplier.
/// Positivity of its five leading minors is the single-round convergence
/// certificate.
Eigen::Matrix<double, 5, 5> build_m_prime(const NodeState& z, double v_parent_prev,
                                          const Line& line, double d_j, double c);

}  // namespace endico
