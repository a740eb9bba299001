#include "endico/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "endico/powerflow.hpp"

namespace endico {

namespace {

SubproblemContext make_context(const FeederModel& model, int bus_id,
                               double v_parent_prev, double child_p, double child_q,
                               const RunOptions& opts) {
  SubproblemContext ctx;
  ctx.v_parent_prev = v_parent_prev;
  ctx.child_p_sum = child_p;
  ctx.child_q_sum = child_q;
  ctx.line = *model.line_to(bus_id);
  ctx.bus = model.bus(bus_id);
  ctx.v_min_sq = model.v_min_sq();
  ctx.v_max_sq = model.v_max_sq();
  ctx.objective = opts.objective;
  ctx.v_ref_sq = model.v_ref_sq();
  return ctx;
}

}  // namespace

DeltaDecision delta_update(double delta_t, double v_now, double v_prev, double eps_v) {
  if (delta_t < 1.0 || v_prev <= 0.0)
    throw std::invalid_argument("delta_update: delta >= 1 and v_prev > 0 required");
  if (std::abs(v_now - v_prev) <= eps_v) return {true, delta_t};
  if (v_prev / delta_t <= v_now && v_now <= delta_t * v_prev)
    return {false, 1.0 + (delta_t - 1.0) / 2.0};
  return {false, 2.0 * delta_t - 1.0};
}

double residual(const RoundTrace& trace_t, const RoundTrace& trace_prev,
                const FeederModel& model) {
  double worst = 0.0;
  for (const Bus& b : model.buses()) {
    const auto now = trace_t.node_states.find(b.id);
    const auto prev = trace_prev.node_states.find(b.id);
    if (now == trace_t.node_states.end() || prev == trace_prev.node_states.end())
      throw std::invalid_argument("residual: mismatched bus sets");
    if (!model.children_of(b.id).empty())  // voltage shared downstream
      worst = std::max(worst, std::abs(now->second.v_sq - prev->second.v_sq));
    if (b.id != model.root()) {  // flows shared upstream
      worst = std::max(worst, std::abs(now->second.p_flow - prev->second.p_flow));
      worst = std::max(worst, std::abs(now->second.q_flow - prev->second.q_flow));
    }
  }
  return worst;
}

double network_objective(const FeederModel& model,
                         const std::map<int, NodeState>& states, ObjectiveKind kind) {
  double total = 0.0;
  if (kind == ObjectiveKind::loss) {
    for (const Line& l : model.lines()) total += l.r * states.at(l.to_bus).l_sq;
  } else {
    for (int id : model.der_buses()) {
      const double d = states.at(id).v_sq - model.v_ref_sq();
      total += d * d;
    }
  }
  return total;
}

RunResult run_endico(const FeederModel& model, const RunOptions& opts) {
  if (opts.tol <= 0.0) throw std::invalid_argument("run_endico: tol must be positive");
  if (opts.max_rounds < 1) throw std::invalid_argument("run_endico: max_rounds >= 1");
  if (opts.variant == Variant::delta && opts.delta0 <= 1.0)
    throw std::invalid_argument("run_endico: delta0 must exceed 1");

  RunResult res;
  res.objective = opts.objective;

  // Flat-start voltages; flows from one zero-dispatch sweep so round-1
  // subproblems see power-flow-consistent child sums.
  const PowerFlowSolution sweep0 = sweep_solve(model);
  std::map<int, NodeState> state;
  for (const Bus& b : model.buses()) {
    NodeState ns;
    ns.v_sq = b.v_init_sq();
    if (b.id != model.root()) {
      ns.p_flow = sweep0.flows.at(b.id).first;
      ns.q_flow = sweep0.flows.at(b.id).second;
      ns.l_sq = sweep0.l_sq.at(b.id);
    }
    state[b.id] = ns;
  }
  res.initial_states = state;

  std::map<int, double> delta;
  std::map<int, bool> settled;
  for (const Bus& b : model.buses())
    if (b.id != model.root()) {
      delta[b.id] = opts.delta0;
      settled[b.id] = false;
    }

  for (int round = 1; round <= opts.max_rounds; ++round) {
    // Freeze round t-1 into boundary messages; solves read only these.
    std::map<int, std::vector<BoundaryMessage>> inbox;
    for (const Bus& b : model.buses()) {
      if (b.id != model.root()) {
        const NodeState& s = state.at(b.id);
        inbox[*b.parent].push_back({BoundaryMessage::Kind::flow_up, b.id, *b.parent,
                                    0.0, s.p_flow, s.q_flow, round - 1});
      }
      for (int k : model.children_of(b.id))
        inbox[k].push_back({BoundaryMessage::Kind::voltage_down, b.id, k,
                            state.at(b.id).v_sq, 0.0, 0.0, round - 1});
    }

    std::map<int, NodeState> next = state;
    for (const Bus& b : model.buses()) {
      if (b.id == model.root()) continue;
      double v_parent = 0.0, child_p = 0.0, child_q = 0.0;
      for (const BoundaryMessage& msg : inbox[b.id]) {
        if (msg.kind == BoundaryMessage::Kind::voltage_down)
          v_parent = msg.v_sq;
        else {
          child_p += msg.p;
          child_q += msg.q;
        }
      }
      const SubproblemContext ctx =
          make_context(model, b.id, v_parent, child_p, child_q, opts);

      if (b.der) {
        auto [ns, rep] = solve_node(ctx, state.at(b.id), opts.alm);
        if (!rep.converged) {
          // One retry from the sweep-consistent zero-dispatch state.
          const auto restart = resolve_at_q(ctx, 0.0);
          if (restart) {
            auto [ns2, rep2] = solve_node(ctx, *restart, opts.alm);
            ns = ns2;
            rep = rep2;
          }
          if (!rep.converged) {
            res.aborted = true;
            res.error = "node solve failed at bus " + std::to_string(b.id) +
                        " in round " + std::to_string(round);
            res.final_states = state;
            res.rounds = round - 1;
            return res;
          }
        }
        next[b.id] = ns;
      } else {
        const auto ns = resolve_at_q(ctx, 0.0);
        if (!ns) {
          res.aborted = true;
          res.error = "pass-through update diverged at bus " + std::to_string(b.id) +
                      " in round " + std::to_string(round);
          res.final_states = state;
          res.rounds = round - 1;
          return res;
        }
        next[b.id] = *ns;
      }
    }

    RoundTrace trace;
    trace.round = round;
    trace.node_states = next;
    {
      RoundTrace prev_tr;
      prev_tr.node_states = state;
      trace.residual_max = residual(trace, prev_tr, model);
    }
    trace.objective = network_objective(model, next, opts.objective);

    std::map<int, double> delta_entering;
    if (opts.variant == Variant::delta) {
      for (const Bus& b : model.buses()) {
        if (b.id == model.root()) continue;
        delta_entering[b.id] = settled[b.id] ? 1.0 : delta[b.id];
        if (!settled[b.id]) {
          const DeltaDecision d = delta_update(delta[b.id], next.at(b.id).v_sq,
                                               state.at(b.id).v_sq, opts.eps_v);
          if (d.stop)
            settled[b.id] = true;
          else
            delta[b.id] = d.delta_next;
        }
        // Record the post-step-8 value; a stopped node is certified converged,
        // which is exactly the delta = 1 state.
        trace.delta[b.id] = settled[b.id] ? 1.0 : delta[b.id];
      }
    }

    if (opts.record_certificates) {
      CertificateReport cert;
      cert.round = round;
      cert.theorem1_all = true;
      for (const Bus& b : model.buses()) {
        if (b.id == model.root()) continue;
        double v_parent = state.at(*b.parent).v_sq;
        std::vector<ConditionResult> conds;
        conds.push_back(check_theorem1(next.at(b.id), v_parent, *model.line_to(b.id)));
        cert.theorem1_all = cert.theorem1_all && conds.back().holds;
        if (opts.variant == Variant::delta)
          conds.push_back(check_delta_condition(next.at(b.id).v_sq,
                                                state.at(b.id).v_sq,
                                                delta_entering.at(b.id)));
        cert.per_node[b.id] = std::move(conds);
      }
      trace.certificates = std::move(cert);
    }

    state = std::move(next);
    res.traces.push_back(std::move(trace));
    res.rounds = round;

    // The delta variant additionally waits for every per-node stop flag, so a
    // finished run always carries fully contracted delta sequences.
    bool all_settled = true;
    if (opts.variant == Variant::delta)
      for (const auto& [id, flag] : settled) all_settled = all_settled && flag;
    if (res.traces.back().residual_max < opts.tol && all_settled) {
      res.converged = true;
      break;
    }
  }

  res.final_states = state;
  for (int id : model.der_buses()) res.dispatch[id] = state.at(id).q_der;
  return res;
}

std::map<int, int> convergence_round_per_node(const RunResult& result, double eps) {
  if (result.traces.size() < 2)
    throw std::invalid_argument("convergence_round_per_node: need >= 2 traces");
  std::map<int, int> out;
  for (const auto& [id, init] : result.initial_states) {
    int last_move = 0;
    double prev = init.v_sq;
    for (const RoundTrace& tr : result.traces) {
      const double v = tr.node_states.at(id).v_sq;
      if (std::abs(v - prev) > eps) last_move = tr.round;
      prev = v;
    }
    if (last_move == result.traces.back().round && !result.converged)
      continue;  // still moving when the run ended
    out[id] = last_move;
  }
  return out;
}

}  // namespace endico
