#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace endico {

/// Value, gradient and Hessian of a twice-differentiable scalar function.
struct FunctionEval {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

using SmoothFn = std::function<FunctionEval(const Eigen::VectorXd&)>;

/// Small smooth NLP:  min f(z)  s.t.  A_p(z) = 0,  B_r(z) <= 0.
/// The optional box is a safeguard region for the inner iterates; minima are
/// expected strictly inside it.
struct NlpProblem {
  int dim = 0;
  SmoothFn objective;
  std::vector<SmoothFn> eq_constraints;
  std::vector<SmoothFn> ineq_constraints;
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> bounds;
};

/// Primal/dual/penalty state of the augmented Lagrangian
///   L_c(z, phi, lambda, mu) = f + lambda'A + (c/2)|A|^2
///                             + mu'(B + phi^2) + (c/2)|B + phi^2|^2.
/// When `phi` is empty the slacks are eliminated analytically,
/// phi_r^2 = max(0, -B_r - mu_r/c), which is the form the inner solver
/// minimizes over z.
struct AlmState {
  Eigen::VectorXd z;
  Eigen::VectorXd phi;     // slack values; may be empty (eliminated)
  Eigen::VectorXd lambda;  // equality multipliers
  Eigen::VectorXd mu;      // inequality multipliers, >= 0
  double c = 10.0;         // penalty parameter, > 0
};

struct AlmOptions {
  double kkt_tol = 1e-8;
  double c0 = 10.0;
  double c_growth = 10.0;
  int max_outer = 30;
  int max_inner = 50;
};

struct SolveReport {
  Eigen::VectorXd z_star;
  Eigen::VectorXd lambda_star;
  Eigen::VectorXd mu_star;
  Eigen::VectorXd phi_star;      // slack values at the solution
  double kkt_stationarity = 0.0;   // ||grad_z L||_inf at (z*, lambda*, mu*)
  double kkt_feasibility = 0.0;    // max constraint violation
  double kkt_complementarity = 0.0;  // max |mu_r * B_r|
  int iterations = 0;              // outer iterations
  bool converged = false;
  bool hessian_fallback = false;   // a gradient step replaced a failed factorization
  double c_final = 0.0;
};

/// Method of multipliers: damped-Newton inner minimization of L_c over z with
/// analytic slack elimination, then the standard first-order multiplier
/// updates  lambda += c A(z),  mu = max(0, mu + c B(z)).  The penalty grows by
/// c_growth whenever feasibility stalls. Non-convergence is reported, not
/// thrown; NaN/Inf from user callables throws.
SolveReport alm_solve(const NlpProblem& problem, const Eigen::VectorXd& start,
                      const AlmOptions& opts = {});

struct LagrangianEval {
  double value = 0.0;
  Eigen::VectorXd grad_z;
  Eigen::MatrixXd hess_z;
};

/// L_c and its z-derivatives at the given state. With constraints satisfied
/// exactly the gradient reduces to grad f + lambda' grad A + mu' grad B.
LagrangianEval eval_augmented_lagrangian(const NlpProblem& problem,
                                         const AlmState& state);

struct KktResiduals {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

/// The three KKT residuals of `problem` at a primal/dual candidate.
KktResiduals kkt_residuals(const NlpProblem& problem, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu);

/// Determinants of the k-by-k upper-left blocks, k = 1..n, via pivoted LU.
std::vector<double> leading_minors(const Eigen::MatrixXd& m);

}  // namespace endico
