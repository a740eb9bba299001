#include "endico/central.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "endico/powerflow.hpp"

namespace endico {

namespace {

// Variable layout: per non-root bus (ascending id) the block
// [P, Q, v, l] of its upstream line, then one q_D per DER bus (ascending id).
struct Layout {
  std::vector<int> non_root;        // ascending ids
  std::map<int, int> block;         // bus id -> block start
  std::map<int, int> q_index;       // DER bus id -> variable index
  int dim = 0;
};

Layout make_layout(const FeederModel& model) {
  Layout lay;
  for (const Bus& b : model.buses())
    if (b.id != model.root()) lay.non_root.push_back(b.id);
  std::sort(lay.non_root.begin(), lay.non_root.end());
  int next = 0;
  for (int id : lay.non_root) {
    lay.block[id] = next;
    next += 4;
  }
  for (int id : model.der_buses()) {
    lay.q_index[id] = next;
    ++next;
  }
  lay.dim = next;
  return lay;
}

FunctionEval linear_eval(double constant, const Eigen::VectorXd& coeffs,
                         const Eigen::VectorXd& z) {
  FunctionEval e;
  e.value = constant + coeffs.dot(z);
  e.grad = coeffs;
  e.hess = Eigen::MatrixXd::Zero(z.size(), z.size());
  return e;
}

}  // namespace

CentralSolution solve_central(const FeederModel& model, ObjectiveKind kind,
                              const CentralOptions& opts) {
  const Layout lay = make_layout(model);
  if (lay.dim > opts.var_cap)
    throw std::invalid_argument("solve_central: variable count " +
                                std::to_string(lay.dim) + " exceeds cap " +
                                std::to_string(opts.var_cap));

  const int root = model.root();
  const double v_root = model.bus(root).v_init_sq();
  const int dim = lay.dim;

  NlpProblem p;
  p.dim = dim;

  if (kind == ObjectiveKind::loss) {
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(dim);
    for (int id : lay.non_root) cost(lay.block.at(id) + 3) = model.line_to(id)->r;
    p.objective = [cost](const Eigen::VectorXd& z) { return linear_eval(0.0, cost, z); };
  } else {
    std::vector<int> v_idx;
    for (int id : model.der_buses()) v_idx.push_back(lay.block.at(id) + 2);
    const double v_ref = model.v_ref_sq();
    p.objective = [v_idx, v_ref, dim](const Eigen::VectorXd& z) {
      FunctionEval e;
      e.value = 0.0;
      e.grad = Eigen::VectorXd::Zero(dim);
      e.hess = Eigen::MatrixXd::Zero(dim, dim);
      for (int vi : v_idx) {
        const double d = z(vi) - v_ref;
        e.value += d * d;
        e.grad(vi) += 2.0 * d;
        e.hess(vi, vi) += 2.0;
      }
      return e;
    };
  }

  for (int id : lay.non_root) {
    const Bus& bus = model.bus(id);
    const Line& line = *model.line_to(id);
    const int blk = lay.block.at(id);
    const int parent = *bus.parent;
    const bool parent_is_root = parent == root;
    const int parent_v = parent_is_root ? -1 : lay.block.at(parent) + 2;
    const double r = line.r, x = line.x, z2 = line.r * line.r + line.x * line.x;
    const double p_const = -(bus.p_load - (bus.der ? bus.der->p_out : 0.0));
    const double q_const = -bus.q_load;
    const std::vector<int> kids = model.children_of(id);
    const int q_var = bus.der && lay.q_index.count(id) ? lay.q_index.at(id) : -1;

    // Active power balance: P - r l - p_L + p_D - sum P_child = 0.
    {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
      c(blk + 0) = 1.0;
      c(blk + 3) = -r;
      for (int k : kids) c(lay.block.at(k) + 0) -= 1.0;
      p.eq_constraints.push_back(
          [c, p_const](const Eigen::VectorXd& z) { return linear_eval(p_const, c, z); });
    }
    // Reactive power balance with the dispatch variable.
    {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
      c(blk + 1) = 1.0;
      c(blk + 3) = -x;
      if (q_var >= 0) c(q_var) = 1.0;
      for (int k : kids) c(lay.block.at(k) + 1) -= 1.0;
      p.eq_constraints.push_back(
          [c, q_const](const Eigen::VectorXd& z) { return linear_eval(q_const, c, z); });
    }
    // Voltage drop; the root voltage is a constant.
    {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
      c(blk + 0) = 2.0 * r;
      c(blk + 1) = 2.0 * x;
      c(blk + 2) = 1.0;
      c(blk + 3) = -z2;
      double constant = 0.0;
      if (parent_is_root)
        constant = -v_root;
      else
        c(parent_v) = -1.0;
      p.eq_constraints.push_back([c, constant](const Eigen::VectorXd& z) {
        return linear_eval(constant, c, z);
      });
    }
    // Current equation with the instantaneous upstream voltage:
    // P^2 + Q^2 - v_i l = 0 (bilinear when the parent is not the root).
    {
      const int ip = blk + 0, iq = blk + 1, il = blk + 3;
      const int iv = parent_v;
      const double vr = v_root;
      const bool pr = parent_is_root;
      p.eq_constraints.push_back([ip, iq, il, iv, vr, pr, dim](const Eigen::VectorXd& z) {
        FunctionEval e;
        const double vi = pr ? vr : z(iv);
        e.value = z(ip) * z(ip) + z(iq) * z(iq) - vi * z(il);
        e.grad = Eigen::VectorXd::Zero(dim);
        e.grad(ip) = 2.0 * z(ip);
        e.grad(iq) = 2.0 * z(iq);
        e.grad(il) = -vi;
        e.hess = Eigen::MatrixXd::Zero(dim, dim);
        e.hess(ip, ip) = 2.0;
        e.hess(iq, iq) = 2.0;
        if (!pr) {
          e.hess(il, iv) = -1.0;
          e.hess(iv, il) = -1.0;
          e.grad(iv) = -z(il);
        }
        return e;
      });
    }

    // Boxes: voltage band, thermal limit, reactive capability.
    auto bound = [dim](int var, double sign, double limit) {
      return [var, sign, limit, dim](const Eigen::VectorXd& z) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
        g(var) = sign;
        return linear_eval(-sign * limit, g, z);
      };
    };
    p.ineq_constraints.push_back(bound(blk + 2, -1.0, model.v_min_sq()));
    p.ineq_constraints.push_back(bound(blk + 2, +1.0, model.v_max_sq()));
    p.ineq_constraints.push_back(bound(blk + 3, +1.0, line.i_rated * line.i_rated));
    if (q_var >= 0) {
      const double q_cap = bus.der->q_max();
      p.ineq_constraints.push_back(bound(q_var, -1.0, -q_cap));
      p.ineq_constraints.push_back(bound(q_var, +1.0, q_cap));
    }
  }

  // Sweep-initialized start at zero dispatch.
  const PowerFlowSolution sweep = sweep_solve(model);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(dim);
  for (int id : lay.non_root) {
    const int blk = lay.block.at(id);
    start(blk + 0) = sweep.flows.at(id).first;
    start(blk + 1) = sweep.flows.at(id).second;
    start(blk + 2) = sweep.v_sq.at(id);
    start(blk + 3) = sweep.l_sq.at(id);
  }

  CentralSolution sol;
  sol.report = alm_solve(p, start, opts.alm);

  const Eigen::VectorXd& z = sol.report.z_star;
  sol.v_sq[root] = v_root;
  for (int id : lay.non_root) {
    const int blk = lay.block.at(id);
    sol.flows[id] = {z(blk + 0), z(blk + 1)};
    sol.v_sq[id] = z(blk + 2);
    sol.l_sq[id] = z(blk + 3);
  }
  for (const auto& [id, qi] : lay.q_index) {
    const double q_cap = model.bus(id).der->q_max();
    sol.dispatch[id] = std::clamp(z(qi), -q_cap, q_cap);
  }
  sol.objective = p.objective(z).value;
  return sol;
}

}  // namespace endico
