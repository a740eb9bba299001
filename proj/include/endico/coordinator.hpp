#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "endico/certificates.hpp"
#include "endico/network.hpp"
#include "endico/subproblem.hpp"

namespace endico {

/// One neighbor-to-neighbor payload: parents send voltages down, children
/// send flows up. Nothing else ever crosses an edge.
struct BoundaryMessage {
  enum class Kind { voltage_down, flow_up };
  Kind kind = Kind::voltage_down;
  int from = 0;
  int to = 0;
  double v_sq = 0.0;   // voltage_down payload
  double p = 0.0;      // flow_up payload
  double q = 0.0;
  int round = 0;
};

struct RoundTrace {
  int round = 0;
  double residual_max = 0.0;
  double objective = 0.0;
  std::map<int, NodeState> node_states;       // every bus, root included
  std::map<int, double> delta;                // delta variant only
  std::optional<CertificateReport> certificates;
};

enum class Variant { plain, delta };

struct RunOptions {
  double tol = 1e-3;
  int max_rounds = 200;
  Variant variant = Variant::plain;
  double delta0 = 1.5;       // initial convergence parameter, > 1
  double eps_v = 1e-6;       // voltage-equality test of the delta update
  ObjectiveKind objective = ObjectiveKind::loss;
  bool record_certificates = false;
  AlmOptions alm;
};

struct RunResult {
  bool converged = false;
  int rounds = 0;
  std::map<int, NodeState> final_states;
  std::vector<RoundTrace> traces;             // rounds 1..rounds
  std::map<int, double> dispatch;             // DER bus -> q_D
  std::map<int, NodeState> initial_states;    // flat-start voltages, sweep flows
  ObjectiveKind objective = ObjectiveKind::loss;
  bool aborted = false;
  std::string error;
};

/// The distributed protocol: synchronous rounds in which every controllable
/// node re-solves its local problem against the previous round's boundary
/// messages and uncontrolled nodes relay, until no shared boundary quantity
/// moves by more than tol (the delta variant also waits for every per-node
/// stop flag). Deterministic for fixed inputs.
RunResult run_endico(const FeederModel& model, const RunOptions& opts = {});

struct DeltaDecision {
  bool stop = false;
  double delta_next = 1.0;
};

/// Per-node convergence-parameter update: stop once the voltage is unchanged
/// within eps_v, halve delta toward 1 while the voltage bracket holds, expand
/// it otherwise.
DeltaDecision delta_update(double delta_t, double v_now, double v_prev, double eps_v);

/// Max absolute change over all shared boundary quantities between two
/// consecutive rounds (voltages sent downstream, flows sent upstream).
double residual(const RoundTrace& trace_t, const RoundTrace& trace_prev,
                const FeederModel& model);

/// First round after which each bus's voltage never again moves by more than
/// eps. Buses still moving at the final round are omitted.
std::map<int, int> convergence_round_per_node(const RunResult& result, double eps);

/// Network total of the configured objective over a full state map:
/// sum of r*l over lines, or the summed squared voltage deviation over
/// controllable buses.
double network_objective(const FeederModel& model,
                         const std::map<int, NodeState>& states,
                         ObjectiveKind kind);

}  // namespace endico
