#include "endico/powerflow.hpp"

#include <algorithm>
#include <cmath>

namespace endico {

namespace {

double dispatch_at(const std::map<int, double>& q_dispatch, int id) {
  auto it = q_dispatch.find(id);
  return it == q_dispatch.end() ? 0.0 : it->second;
}

}  // namespace

PowerFlowSolution sweep_solve(const FeederModel& model,
                              const std::map<int, double>& q_dispatch,
                              const SweepOptions& opts) {
  for (const auto& [id, q] : q_dispatch) {
    const Bus& b = model.bus(id);
    if (!b.der) throw ValidationError("dispatch at bus without DER: " + std::to_string(id));
    const double qm = b.der->q_max();
    if (q < -qm - 1e-12 || q > qm + 1e-12)
      throw ValidationError("dispatch outside DER capability at bus " + std::to_string(id));
  }

  PowerFlowSolution sol;
  for (const Bus& b : model.buses()) sol.v_sq[b.id] = b.v_init_sq();
  sol.v_sq[model.root()] = model.bus(model.root()).v_init_sq();
  for (const Line& l : model.lines()) {
    sol.flows[l.to_bus] = {0.0, 0.0};
    sol.l_sq[l.to_bus] = 0.0;
  }

  const auto& order = model.bfs_order();

  for (int it = 0; it < opts.max_iter; ++it) {
    double change = 0.0;

    // Backward: accumulate flows leaf -> root with the current l estimates.
    for (auto rit = order.rbegin(); rit != order.rend(); ++rit) {
      const int j = *rit;
      if (j == model.root()) continue;
      const Bus& b = model.bus(j);
      const Line& ln = *model.line_to(j);
      double p = b.p_load - (b.der ? b.der->p_out : 0.0) + ln.r * sol.l_sq[j];
      double q = b.q_load - dispatch_at(q_dispatch, j) + ln.x * sol.l_sq[j];
      for (int k : model.children_of(j)) {
        p += sol.flows[k].first;
        q += sol.flows[k].second;
      }
      change = std::max({change, std::abs(p - sol.flows[j].first),
                         std::abs(q - sol.flows[j].second)});
      sol.flows[j] = {p, q};
    }

    // Forward: update voltages root -> leaf, then currents from the new v.
    for (int j : order) {
      if (j == model.root()) continue;
      const Line& ln = *model.line_to(j);
      const double vi = sol.v_sq[*model.bus(j).parent];
      const auto [p, q] = sol.flows[j];
      const double v =
          vi - 2.0 * (ln.r * p + ln.x * q) + (ln.r * ln.r + ln.x * ln.x) * sol.l_sq[j];
      if (v <= 0.0 || vi <= 0.0)
        throw VoltageCollapse("voltage collapse at bus " + std::to_string(j));
      change = std::max(change, std::abs(v - sol.v_sq[j]));
      sol.v_sq[j] = v;

      const double l_new = (p * p + q * q) / vi;
      const double l = (1.0 - opts.damping) * sol.l_sq[j] + opts.damping * l_new;
      change = std::max(change, std::abs(l - sol.l_sq[j]));
      sol.l_sq[j] = l;
    }

    sol.iterations = it + 1;
    if (change < opts.tol * opts.damping) {
      sol.converged = true;
      break;
    }
  }

  sol.residual = residual_of(model, sol, q_dispatch);
  if (sol.residual > opts.tol) sol.converged = false;
  return sol;
}

double residual_of(const FeederModel& model, const PowerFlowSolution& sol,
                   const std::map<int, double>& q_dispatch) {
  double worst = 0.0;
  for (const Bus& b : model.buses()) {
    if (b.id == model.root()) continue;
    if (!sol.v_sq.count(b.id) || !sol.flows.count(b.id) || !sol.l_sq.count(b.id))
      throw std::invalid_argument("solution missing entries for bus " +
                                  std::to_string(b.id));
    const Line& ln = *model.line_to(b.id);
    const auto [p, q] = sol.flows.at(b.id);
    const double l = sol.l_sq.at(b.id);
    const double vi = sol.v_sq.at(*b.parent);
    const double vj = sol.v_sq.at(b.id);

    double child_p = 0.0, child_q = 0.0;
    for (int k : model.children_of(b.id)) {
      child_p += sol.flows.at(k).first;
      child_q += sol.flows.at(k).second;
    }

    const double e1 =
        p - ln.r * l - b.p_load + (b.der ? b.der->p_out : 0.0) - child_p;
    const double e2 =
        q - ln.x * l - b.q_load + dispatch_at(q_dispatch, b.id) - child_q;
    const double e3 =
        vj - vi + 2.0 * (ln.r * p + ln.x * q) - (ln.r * ln.r + ln.x * ln.x) * l;
    const double e4 = vi * l - (p * p + q * q);
    worst = std::max({worst, std::abs(e1), std::abs(e2), std::abs(e3), std::abs(e4)});
  }
  return worst;
}

}  // namespace endico
