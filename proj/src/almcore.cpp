#include "endico/almcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace endico {

namespace {

// Exact entrywise symmetry: (h_ij + h_ji)/2 == (h_ji + h_ij)/2 bitwise.
void symmetrize(Eigen::MatrixXd& h) {
  Eigen::MatrixXd t = h.transpose();
  h = 0.5 * (h + t);
}

void check_finite(const FunctionEval& e, const char* what) {
  if (!std::isfinite(e.value) || !e.grad.allFinite() || !e.hess.allFinite())
    throw std::domain_error(std::string("NaN/Inf from user callable: ") + what);
}

struct Pieces {
  FunctionEval f;
  std::vector<FunctionEval> eq;
  std::vector<FunctionEval> ineq;
};

Pieces evaluate_all(const NlpProblem& p, const Eigen::VectorXd& z) {
  Pieces out;
  out.f = p.objective(z);
  check_finite(out.f, "objective");
  out.eq.reserve(p.eq_constraints.size());
  for (const auto& fn : p.eq_constraints) {
    out.eq.push_back(fn(z));
    check_finite(out.eq.back(), "equality constraint");
  }
  out.ineq.reserve(p.ineq_constraints.size());
  for (const auto& fn : p.ineq_constraints) {
    out.ineq.push_back(fn(z));
    check_finite(out.ineq.back(), "inequality constraint");
  }
  return out;
}

// L_c over z with slacks eliminated: inactive inequality terms vanish.
LagrangianEval eval_eliminated(const NlpProblem& p, const Eigen::VectorXd& z,
                               const Eigen::VectorXd& lambda,
                               const Eigen::VectorXd& mu, double c) {
  const Pieces ev = evaluate_all(p, z);
  LagrangianEval out;
  out.value = ev.f.value;
  out.grad_z = ev.f.grad;
  out.hess_z = ev.f.hess;
  for (std::size_t i = 0; i < ev.eq.size(); ++i) {
    const auto& a = ev.eq[i];
    const double w = lambda(static_cast<Eigen::Index>(i)) + c * a.value;
    out.value += lambda(static_cast<Eigen::Index>(i)) * a.value + 0.5 * c * a.value * a.value;
    out.grad_z += w * a.grad;
    out.hess_z += w * a.hess + c * (a.grad * a.grad.transpose());
  }
  for (std::size_t i = 0; i < ev.ineq.size(); ++i) {
    const auto& b = ev.ineq[i];
    const double mu_i = mu(static_cast<Eigen::Index>(i));
    const double t = mu_i + c * b.value;
    out.value += (std::max(0.0, t) * std::max(0.0, t) - mu_i * mu_i) / (2.0 * c);
    if (t > 0.0) {
      out.grad_z += t * b.grad;
      out.hess_z += t * b.hess + c * (b.grad * b.grad.transpose());
    }
  }
  symmetrize(out.hess_z);
  return out;
}

double value_eliminated(const NlpProblem& p, const Eigen::VectorXd& z,
                        const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu,
                        double c) {
  double value = p.objective(z).value;
  if (!std::isfinite(value)) return value;
  for (std::size_t i = 0; i < p.eq_constraints.size(); ++i) {
    const double a = p.eq_constraints[i](z).value;
    value += lambda(static_cast<Eigen::Index>(i)) * a + 0.5 * c * a * a;
  }
  for (std::size_t i = 0; i < p.ineq_constraints.size(); ++i) {
    const double b = p.ineq_constraints[i](z).value;
    const double mu_i = mu(static_cast<Eigen::Index>(i));
    const double t = std::max(0.0, mu_i + c * b);
    value += (t * t - mu_i * mu_i) / (2.0 * c);
  }
  return value;
}

void project_into_box(const NlpProblem& p, Eigen::VectorXd& z) {
  if (!p.bounds) return;
  z = z.cwiseMax(p.bounds->first).cwiseMin(p.bounds->second);
}

}  // namespace

KktResiduals kkt_residuals(const NlpProblem& p, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu) {
  const Pieces ev = evaluate_all(p, z);
  KktResiduals out;
  Eigen::VectorXd grad = ev.f.grad;
  for (std::size_t i = 0; i < ev.eq.size(); ++i) {
    grad += lambda(static_cast<Eigen::Index>(i)) * ev.eq[i].grad;
    out.feasibility = std::max(out.feasibility, std::abs(ev.eq[i].value));
  }
  for (std::size_t i = 0; i < ev.ineq.size(); ++i) {
    const double mu_i = mu(static_cast<Eigen::Index>(i));
    grad += mu_i * ev.ineq[i].grad;
    out.feasibility = std::max(out.feasibility, std::max(0.0, ev.ineq[i].value));
    out.complementarity =
        std::max(out.complementarity, std::abs(mu_i * ev.ineq[i].value));
  }
  out.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  return out;
}

SolveReport alm_solve(const NlpProblem& p, const Eigen::VectorXd& start,
                      const AlmOptions& opts) {
  if (p.dim <= 0 || !p.objective) throw std::invalid_argument("alm_solve: empty problem");
  if (start.size() != p.dim)
    throw std::invalid_argument("alm_solve: start dimension mismatch");
  if (!(opts.kkt_tol > 0 && opts.c0 > 0 && opts.c_growth > 1 && opts.max_outer > 0 &&
        opts.max_inner > 0))
    throw std::invalid_argument("alm_solve: options must be positive");

  const auto n_eq = static_cast<Eigen::Index>(p.eq_constraints.size());
  const auto n_in = static_cast<Eigen::Index>(p.ineq_constraints.size());

  SolveReport rep;
  Eigen::VectorXd z = start;
  project_into_box(p, z);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n_eq);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n_in);
  double c = opts.c0;
  double prev_feas = std::numeric_limits<double>::infinity();

  const double inner_tol = 0.1 * opts.kkt_tol;

  for (int outer = 1; outer <= opts.max_outer; ++outer) {
    // Inner loop: damped Newton with Armijo backtracking on the eliminated L_c.
    for (int inner = 0; inner < opts.max_inner; ++inner) {
      const LagrangianEval le = eval_eliminated(p, z, lambda, mu, c);
      const double gnorm = le.grad_z.cwiseAbs().maxCoeff();
      if (gnorm <= inner_tol) break;

      Eigen::VectorXd step;
      bool have_newton = false;
      double tau = 0.0;
      for (int attempt = 0; attempt < 12; ++attempt) {
        Eigen::MatrixXd h = le.hess_z;
        if (tau > 0.0) h.diagonal().array() += tau;
        Eigen::LLT<Eigen::MatrixXd> llt(h);
        if (llt.info() == Eigen::Success) {
          step = llt.solve(-le.grad_z);
          if (step.allFinite() && le.grad_z.dot(step) < 0.0) {
            have_newton = true;
            break;
          }
        }
        tau = (tau == 0.0) ? 1e-8 : tau * 10.0;
      }
      if (!have_newton) {
        step = -le.grad_z;  // steepest descent fallback
        rep.hessian_fallback = true;
      }

      const double slope = le.grad_z.dot(step);
      double alpha = 1.0;
      Eigen::VectorXd z_try;
      bool accepted = false;
      for (int ls = 0; ls < 45; ++ls) {
        z_try = z + alpha * step;
        project_into_box(p, z_try);
        const double v_try = value_eliminated(p, z_try, lambda, mu, c);
        if (std::isfinite(v_try) && v_try <= le.value + 1e-4 * alpha * slope) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;  // stalled; let the outer loop react
      z = z_try;
    }

    // First-order multiplier updates (projection keeps mu >= 0).
    for (Eigen::Index i = 0; i < n_eq; ++i)
      lambda(i) += c * p.eq_constraints[static_cast<std::size_t>(i)](z).value;
    for (Eigen::Index i = 0; i < n_in; ++i)
      mu(i) = std::max(
          0.0, mu(i) + c * p.ineq_constraints[static_cast<std::size_t>(i)](z).value);

    const KktResiduals res = kkt_residuals(p, z, lambda, mu);
    rep.iterations = outer;
    rep.kkt_stationarity = res.stationarity;
    rep.kkt_feasibility = res.feasibility;
    rep.kkt_complementarity = res.complementarity;
    if (res.stationarity <= opts.kkt_tol && res.feasibility <= opts.kkt_tol &&
        res.complementarity <= opts.kkt_tol) {
      rep.converged = true;
      break;
    }
    if (res.feasibility > 0.25 * prev_feas && res.feasibility > opts.kkt_tol)
      c = std::min(c * opts.c_growth, 1e12);
    prev_feas = res.feasibility;
  }

  rep.z_star = z;
  rep.lambda_star = lambda;
  rep.mu_star = mu;
  rep.phi_star = Eigen::VectorXd::Zero(n_in);
  for (Eigen::Index i = 0; i < n_in; ++i) {
    const double b = p.ineq_constraints[static_cast<std::size_t>(i)](z).value;
    rep.phi_star(i) = std::sqrt(std::max(0.0, -b - mu(i) / c));
  }
  rep.c_final = c;
  return rep;
}

LagrangianEval eval_augmented_lagrangian(const NlpProblem& p, const AlmState& state) {
  const auto n_eq = static_cast<Eigen::Index>(p.eq_constraints.size());
  const auto n_in = static_cast<Eigen::Index>(p.ineq_constraints.size());
  if (state.z.size() != p.dim || state.lambda.size() != n_eq ||
      state.mu.size() != n_in)
    throw std::invalid_argument("eval_augmented_lagrangian: dimension mismatch");
  if (state.c <= 0.0) throw std::invalid_argument("penalty c must be positive");

  if (state.phi.size() == 0)
    return eval_eliminated(p, state.z, state.lambda, state.mu, state.c);
  if (state.phi.size() != n_in)
    throw std::invalid_argument("eval_augmented_lagrangian: phi dimension mismatch");

  // Explicit-slack form: phi is held fixed while differentiating in z.
  const Pieces ev = evaluate_all(p, state.z);
  LagrangianEval out;
  out.value = ev.f.value;
  out.grad_z = ev.f.grad;
  out.hess_z = ev.f.hess;
  for (Eigen::Index i = 0; i < n_eq; ++i) {
    const auto& a = ev.eq[static_cast<std::size_t>(i)];
    const double w = state.lambda(i) + state.c * a.value;
    out.value += state.lambda(i) * a.value + 0.5 * state.c * a.value * a.value;
    out.grad_z += w * a.grad;
    out.hess_z += w * a.hess + state.c * (a.grad * a.grad.transpose());
  }
  for (Eigen::Index i = 0; i < n_in; ++i) {
    const auto& b = ev.ineq[static_cast<std::size_t>(i)];
    const double s = b.value + state.phi(i) * state.phi(i);
    const double w = state.mu(i) + state.c * s;
    out.value += state.mu(i) * s + 0.5 * state.c * s * s;
    out.grad_z += w * b.grad;
    out.hess_z += w * b.hess + state.c * (b.grad * b.grad.transpose());
  }
  symmetrize(out.hess_z);
  return out;
}

std::vector<double> leading_minors(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("leading_minors: non-square");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index k = 1; k <= m.rows(); ++k)
    out.push_back(Eigen::PartialPivLU<Eigen::MatrixXd>(m.topLeftCorner(k, k)).determinant());
  return out;
}

}  // namespace endico
