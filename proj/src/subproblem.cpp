#include "endico/subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace endico {

Eigen::Matrix<double, 5, 1> NodeState::to_vector() const {
  Eigen::Matrix<double, 5, 1> z;
  z << p_flow, q_flow, v_sq, l_sq, q_der;
  return z;
}

NodeState NodeState::from_vector(const Eigen::Matrix<double, 5, 1>& z) {
  return NodeState{z(0), z(1), z(2), z(3), z(4)};
}

namespace {

constexpr int kP = 0, kQ = 1, kV = 2, kL = 3, kQd = 4;

FunctionEval linear_fn(double constant, const Eigen::VectorXd& coeffs,
                       const Eigen::VectorXd& z) {
  FunctionEval e;
  e.value = constant + coeffs.dot(z);
  e.grad = coeffs;
  e.hess = Eigen::MatrixXd::Zero(z.size(), z.size());
  return e;
}

}  // namespace

NlpProblem build_p1(const SubproblemContext& ctx) {
  if (!ctx.bus.der)
    throw std::invalid_argument("build_p1: bus " + std::to_string(ctx.bus.id) +
                                " has no DER");
  if (ctx.v_min_sq > ctx.v_max_sq)
    throw std::invalid_argument("build_p1: infeasible voltage box");
  if (ctx.v_parent_prev <= 0.0)
    throw std::invalid_argument("build_p1: nonpositive parent voltage");

  const double r = ctx.line.r, x = ctx.line.x;
  const double vi = ctx.v_parent_prev;
  const double q_cap = ctx.bus.der->q_max();
  const double i_sq = ctx.line.i_rated * ctx.line.i_rated;
  const double p_net = ctx.bus.p_load - ctx.bus.der->p_out + ctx.child_p_sum;
  const double q_net = ctx.bus.q_load + ctx.child_q_sum;

  NlpProblem p;
  p.dim = 5;

  if (ctx.objective == ObjectiveKind::loss) {
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(5);
    cost(kL) = r;
    p.objective = [cost](const Eigen::VectorXd& z) { return linear_fn(0.0, cost, z); };
  } else {
    const double v_ref = ctx.v_ref_sq;
    p.objective = [v_ref](const Eigen::VectorXd& z) {
      FunctionEval e;
      const double d = z(kV) - v_ref;
      e.value = d * d;
      e.grad = Eigen::VectorXd::Zero(5);
      e.grad(kV) = 2.0 * d;
      e.hess = Eigen::MatrixXd::Zero(5, 5);
      e.hess(kV, kV) = 2.0;
      return e;
    };
  }

  // Active and reactive power balance with the child flows frozen.
  Eigen::VectorXd a1 = Eigen::VectorXd::Zero(5);
  a1(kP) = 1.0;
  a1(kL) = -r;
  p.eq_constraints.push_back(
      [a1, p_net](const Eigen::VectorXd& z) { return linear_fn(-p_net, a1, z); });

  Eigen::VectorXd a2 = Eigen::VectorXd::Zero(5);
  a2(kQ) = 1.0;
  a2(kL) = -x;
  a2(kQd) = 1.0;
  p.eq_constraints.push_back(
      [a2, q_net](const Eigen::VectorXd& z) { return linear_fn(-q_net, a2, z); });

  // Voltage drop from the frozen parent voltage.
  Eigen::VectorXd a3 = Eigen::VectorXd::Zero(5);
  a3(kP) = 2.0 * r;
  a3(kQ) = 2.0 * x;
  a3(kV) = 1.0;
  a3(kL) = -(r * r + x * x);
  p.eq_constraints.push_back(
      [a3, vi](const Eigen::VectorXd& z) { return linear_fn(-vi, a3, z); });

  // Current equation against the lagged parent voltage, written in the
  // polynomial form P^2 + Q^2 - v_i l whose multiplier is d_j.
  p.eq_constraints.push_back([vi](const Eigen::VectorXd& z) {
    FunctionEval e;
    e.value = z(kP) * z(kP) + z(kQ) * z(kQ) - vi * z(kL);
    e.grad = Eigen::VectorXd::Zero(5);
    e.grad(kP) = 2.0 * z(kP);
    e.grad(kQ) = 2.0 * z(kQ);
    e.grad(kL) = -vi;
    e.hess = Eigen::MatrixXd::Zero(5, 5);
    e.hess(kP, kP) = 2.0;
    e.hess(kQ, kQ) = 2.0;
    return e;
  });

  // Inequalities: voltage band, reactive box, thermal limit.
  auto bound = [](int var, double sign, double limit) {
    return [var, sign, limit](const Eigen::VectorXd& z) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(5);
      g(var) = sign;
      return linear_fn(-sign * limit, g, z);
    };
  };
  p.ineq_constraints.push_back(bound(kV, -1.0, ctx.v_min_sq));   // v_min^2 - v <= 0
  p.ineq_constraints.push_back(bound(kV, +1.0, ctx.v_max_sq));   // v - v_max^2 <= 0
  p.ineq_constraints.push_back(bound(kQd, -1.0, -q_cap));        // -q_cap - q <= 0
  p.ineq_constraints.push_back(bound(kQd, +1.0, q_cap));         // q - q_cap <= 0
  p.ineq_constraints.push_back(bound(kL, +1.0, i_sq));           // l - I^2 <= 0
  return p;
}

double objective_value(const SubproblemContext& ctx, const NodeState& s) {
  if (ctx.objective == ObjectiveKind::loss) return ctx.line.r * s.l_sq;
  const double d = s.v_sq - ctx.v_ref_sq;
  return d * d;
}

std::pair<NodeState, SolveReport> solve_node(const SubproblemContext& ctx,
                                             const NodeState& warm_start,
                                             const AlmOptions& opts) {
  const NlpProblem p = build_p1(ctx);
  SolveReport rep = alm_solve(p, warm_start.to_vector(), opts);
  NodeState out = NodeState::from_vector(rep.z_star);
  const double q_cap = ctx.bus.der->q_max();
  out.q_der = std::clamp(out.q_der, -q_cap, q_cap);
  return {out, rep};
}

std::optional<NodeState> resolve_at_q(const SubproblemContext& ctx, double q_der) {
  const double r = ctx.line.r, x = ctx.line.x, vi = ctx.v_parent_prev;
  const double p_net = ctx.bus.p_load - (ctx.bus.der ? ctx.bus.der->p_out : 0.0) +
                       ctx.child_p_sum;
  const double q_net = ctx.bus.q_load - q_der + ctx.child_q_sum;

  // Damped fixed point on l; divergent samples are treated as infeasible.
  const double damping = 0.5, tol = 1e-12;
  double l = 0.0;
  double p = p_net, q = q_net;
  bool settled = false;
  for (int it = 0; it < 500; ++it) {
    p = p_net + r * l;
    q = q_net + x * l;
    const double l_new = (p * p + q * q) / vi;
    if (!std::isfinite(l_new) || l_new > 1e6) return std::nullopt;
    if (std::abs(l_new - l) < tol) {
      l = l_new;
      settled = true;
      break;
    }
    l = (1.0 - damping) * l + damping * l_new;
  }
  if (!settled) return std::nullopt;
  p = p_net + r * l;
  q = q_net + x * l;
  const double v = vi - 2.0 * (r * p + x * q) + (r * r + x * x) * l;
  return NodeState{p, q, v, l, q_der};
}

BruteForceResult brute_force_qd(const SubproblemContext& ctx, int grid) {
  if (grid < 2) throw std::invalid_argument("brute_force_qd: grid must be >= 2");
  if (!ctx.bus.der) throw std::invalid_argument("brute_force_qd: bus has no DER");

  const double q_cap = ctx.bus.der->q_max();
  const double i_sq = ctx.line.i_rated * ctx.line.i_rated;
  const int samples = q_cap == 0.0 ? 1 : grid;

  BruteForceResult best;
  for (int i = 0; i < samples; ++i) {
    const double q = q_cap == 0.0
                         ? 0.0
                         : -q_cap + 2.0 * q_cap * static_cast<double>(i) /
                                        static_cast<double>(grid - 1);
    const auto state = resolve_at_q(ctx, q);
    if (!state) continue;
    if (state->v_sq < ctx.v_min_sq || state->v_sq > ctx.v_max_sq) continue;
    if (state->l_sq > i_sq) continue;
    const double obj = objective_value(ctx, *state);
    if (!best.feasible || obj < best.objective) {
      best.feasible = true;
      best.q_best = q;
      best.state_best = *state;
      best.objective = obj;
    }
  }
  return best;
}

Eigen::Matrix<double, 5, 5> build_m_prime(const NodeState& z, double v_parent_prev,
                                          const Line& line, double d_j, double c) {
  if (c <= 0.0 || d_j <= 0.0)
    throw std::invalid_argument("build_m_prime: c and d_j must be positive");
  const double r = line.r, x = line.x;
  const double P = z.p_flow, Q = z.q_flow, vi = v_parent_prev;
  const double z2 = r * r + x * x;

  Eigen::Matrix<double, 5, 5> m;
  m(0, 0) = 4 * r * r + 4 * P * P + 1 + 2 * d_j / c;
  m(0, 1) = 4 * r * x + 4 * P * Q;
  m(0, 2) = 2 * r;
  m(0, 3) = -r - 2 * r * z2 - 2 * P * vi;
  m(0, 4) = 0;
  m(1, 1) = 4 * x * x + 4 * Q * Q + 1 + 2 * d_j / c;
  m(1, 2) = 2 * x;
  m(1, 3) = -x - 2 * x * z2 - 2 * Q * vi;
  m(1, 4) = 1;
  m(2, 2) = 1;
  m(2, 3) = -z2;
  m(2, 4) = 0;
  m(3, 3) = z2 + z2 * z2 + vi * vi;
  m(3, 4) = -x;
  m(4, 4) = 1;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

}  // namespace endico
