#include "endico/certificates.hpp"

#include <algorithm>
#include <cmath>

#include "endico/coordinator.hpp"

namespace endico {

ConditionResult check_theorem1(const NodeState& state, double v_parent_prev,
                               const Line& line) {
  ConditionResult out;
  out.name = "theorem1_main";
  out.strict = true;
  out.margin = v_parent_prev - 4.0 * state.p_flow * line.r - 4.0 * state.q_flow * line.x;
  out.holds = out.margin > 0.0;
  out.inputs = {{"v_i_prev", v_parent_prev},
                {"p_ij", state.p_flow},
                {"q_ij", state.q_flow},
                {"r_ij", line.r},
                {"x_ij", line.x}};
  return out;
}

std::vector<ConditionResult> check_theorem2(const Theorem2Snapshot& s) {
  const double r_ij = s.line_ij.r, x_ij = s.line_ij.x, r_jk = s.line_jk.r;
  const double vmi = s.v_i_prev, vmj = s.v_j_prev;
  const double pt = s.p_ij_t, pa = s.p_ij_t1, qt = s.q_ij_t, pjk = s.p_jk_t;

  const std::pair<const char*, double> printed[12] = {
      {"thm2_01_x_minus_r", x_ij - r_ij},
      {"thm2_02_vv_4Pa_r_vj_4Pjk_rjk_vi",
       vmi * vmj - 4 * pa * r_ij * vmj - 4 * pjk * r_jk * vmi},
      {"thm2_03_vv_4Pt_r_vj_4Pjk_rjk_vi",
       vmi * vmj - 4 * pt * r_ij * vmj - 4 * pjk * r_jk * vmi},
      {"thm2_04_vi_4Pa_r_4Pt_r", vmi - 4 * pa * r_ij - 4 * pt * r_ij},
      {"thm2_05_vi_4Pa_r_2Pt_r_2Pt_x",
       vmi - 4 * pa * r_ij - 2 * pt * r_ij - 2 * pt * x_ij},
      {"thm2_06_vi_4Pt_r_4Pt_x", vmi - 4 * pt * r_ij - 4 * pt * x_ij},
      {"thm2_07_vi_Pa_r_Pjk_rjk", vmi - pa * r_ij - pjk * r_jk},
      {"thm2_08_vv_4Pjk_rjk_vi_2Pt_r_vj_2Pt_x_vj",
       vmi * vmj - 4 * pjk * r_jk * vmi - 2 * pt * r_ij * vmj - 2 * pt * x_ij * vmj},
      {"thm2_09_vj3_4Pa_r_vi_vj_2Pjk_rjk_vi_4Pa_r",
       vmj * vmj * vmj - 4 * pa * r_ij * vmi * vmj - 2 * pjk * r_jk * vmi -
           4 * pa * r_ij},
      {"thm2_10_vi_8Pt_r", vmi - 8 * pt * r_ij},
      {"thm2_11_vi_8Qt_x", vmi - 8 * qt * x_ij},
      {"thm2_12_vi_8Pjk_rjk", vmi - 8 * pjk * r_jk},
  };

  std::vector<ConditionResult> out;
  out.reserve(13);
  const std::map<std::string, double> inputs = {
      {"v_i_prev", vmi},  {"v_j_prev", vmj}, {"p_ij_t", pt},  {"p_ij_t1", pa},
      {"q_ij_t", qt},     {"p_jk_t", pjk},   {"r_ij", r_ij},  {"x_ij", x_ij},
      {"r_jk", r_jk}};
  for (const auto& [name, margin] : printed) {
    ConditionResult c;
    c.name = name;
    c.strict = false;
    c.margin = margin;
    c.holds = margin >= 0.0;
    c.inputs = inputs;
    out.push_back(std::move(c));
  }

  ConditionResult d;
  d.name = "delta_equals_one";
  d.strict = false;
  d.margin = s.eps_v - std::abs(s.v_j_t1 - s.v_j_t);
  d.holds = d.margin >= 0.0;
  d.inputs = {{"v_j_t", s.v_j_t}, {"v_j_t1", s.v_j_t1}, {"eps_v", s.eps_v}};
  out.push_back(std::move(d));
  return out;
}

ConditionResult check_delta_condition(double v_now, double v_prev, double delta) {
  if (delta < 1.0 || v_prev <= 0.0)
    throw std::invalid_argument("check_delta_condition: delta >= 1 and v_prev > 0");
  ConditionResult out;
  out.name = "delta_condition";
  out.strict = false;
  // Slacks of the bracket scaled by delta: both equal (delta - 1) v_prev at
  // v_now == v_prev, and 0 when delta == 1 there.
  const double lower_slack = delta * v_now - v_prev;
  const double upper_slack = delta * v_prev - v_now;
  out.margin = std::min(lower_slack, upper_slack);
  out.holds = out.margin >= 0.0;
  out.inputs = {{"v_now", v_now}, {"v_prev", v_prev}, {"delta", delta}};
  return out;
}

namespace {

// Voltage / flow lookups over the recorded run; round 0 is the initial state.
const NodeState& state_at(const RunResult& res, int round, int bus) {
  if (round == 0) return res.initial_states.at(bus);
  return res.traces.at(static_cast<std::size_t>(round - 1)).node_states.at(bus);
}

}  // namespace

Theorem3Schedule check_theorem3_schedule(const RunResult& result,
                                         const FeederModel& model, double eps_v) {
  Theorem3Schedule out;
  if (!model.is_line_network()) {
    out.note = "not applicable: feeder is not a line network";
    return out;
  }
  if (result.traces.size() < 2) {
    out.note = "not applicable: run too short";
    return out;
  }

  std::vector<int> path;
  int cur = model.root();
  path.push_back(cur);
  while (!model.children_of(cur).empty()) {
    cur = model.children_of(cur).front();
    path.push_back(cur);
  }
  const int n = static_cast<int>(path.size());
  if (n < 3) {
    out.note = "not applicable: fewer than 3 buses";
    return out;
  }
  out.applicable = true;

  const int last_round = result.traces.back().round;
  auto subsystem_certified = [&](int i, int t) {
    const int bi = path[static_cast<std::size_t>(i)];
    const int bj = path[static_cast<std::size_t>(i + 1)];
    const int bk = path[static_cast<std::size_t>(i + 2)];
    Theorem2Snapshot snap;
    snap.v_i_prev = state_at(result, t - 1, bi).v_sq;
    snap.v_j_prev = state_at(result, t - 1, bj).v_sq;
    snap.p_ij_t = state_at(result, t, bj).p_flow;
    snap.p_ij_t1 = state_at(result, t + 1, bj).p_flow;
    snap.q_ij_t = state_at(result, t, bj).q_flow;
    snap.p_jk_t = state_at(result, t, bk).p_flow;
    snap.line_ij = *model.line_to(bj);
    snap.line_jk = *model.line_to(bk);
    snap.v_j_t = state_at(result, t, bj).v_sq;
    snap.v_j_t1 = state_at(result, t + 1, bj).v_sq;
    snap.eps_v = eps_v;
    const auto conds = check_theorem2(snap);
    return std::all_of(conds.begin(), conds.end(),
                       [](const ConditionResult& c) { return c.holds; });
  };

  for (int i = 0; i + 2 < n; ++i) {
    int earliest = -1;
    for (int t = 1; t + 1 <= last_round; ++t) {
      if (subsystem_certified(i, t)) {
        earliest = t;
        break;
      }
    }
    out.subsystem_head.push_back(path[static_cast<std::size_t>(i)]);
    out.earliest_round.push_back(earliest);
  }

  // Greedy schedule advancing at least one round per subsystem down the line.
  out.schedule_found = result.converged;
  int t_prev = 0;
  for (int i = 0; i + 2 < n; ++i) {
    int chosen = -1;
    if (out.earliest_round[static_cast<std::size_t>(i)] >= 0) {
      const int start =
          std::max(out.earliest_round[static_cast<std::size_t>(i)], t_prev + 1);
      for (int t = start; t + 1 <= last_round; ++t) {
        if (subsystem_certified(i, t)) {
          chosen = t;
          break;
        }
      }
    }
    out.schedule.push_back(chosen);
    if (chosen < 0)
      out.schedule_found = false;
    else
      t_prev = chosen;
  }
  if (!out.schedule_found && out.note.empty())
    out.note = result.converged ? "no sequential schedule certified"
                                : "run did not converge";
  return out;
}

}  // namespace endico
