#pragma once

#include <string>
#include <vector>

// Dense bounded-variable linear programming, sized for per-period economic
// dispatch (hundreds of variables, ~100 rows). Two-phase primal simplex on a
// full tableau; artificial columns are kept through phase 2 so row duals can
// be read off the final reduced costs.
//
// Problem form:
//   minimize    c'x
//   subject to  A_eq x  = b_eq
//               A_ineq x <= b_ineq
//               lo <= x <= up      (entries may be +/-infinity)
//
// Dual/stationarity convention at an optimum:
//   c + A_ineq' mu - A_eq' lambda - z_lo + z_up = 0,  mu, z_lo, z_up >= 0
// so a binding <= row in a minimization has mu >= 0 and the balance-style
// equality dual lambda prices the right-hand side directly.

namespace bidlab::lp {

struct LpProblem {
  int n = 0;  // variables
  std::vector<double> c;
  std::vector<std::vector<double>> a_eq;    // each row has n entries
  std::vector<double> b_eq;
  std::vector<std::vector<double>> a_ineq;  // each row has n entries
  std::vector<double> b_ineq;
  std::vector<double> lo;  // -inf allowed
  std::vector<double> up;  // +inf allowed

  // Throws std::invalid_argument on inconsistent dimensions or lo > up.
  void validate() const;
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

const char* to_string(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::iteration_limit;
  std::vector<double> x;
  double objective = 0.0;
  std::vector<double> eq_dual;    // lambda, one per equality row, free sign
  std::vector<double> ineq_dual;  // mu >= 0, one per inequality row
  std::vector<double> lo_dual;    // z_lo >= 0, one per variable
  std::vector<double> up_dual;    // z_up >= 0, one per variable
  int iterations = 0;
};

// Solves the problem. Infeasibility and unboundedness are reported through
// status, never as exceptions. tol is the feasibility/optimality tolerance
// of the pivoting (1e-9 default suits the dispatch-scale numbers here).
LpSolution solve(const LpProblem& p, double tol = 1e-9);

struct KktReport {
  bool ok = false;
  double primal_eq_residual = 0.0;    // max |A_eq x - b_eq|
  double primal_ineq_residual = 0.0;  // max (A_ineq x - b_ineq)+ and bound violation
  double stationarity_residual = 0.0; // max | c + A'mu - A'lambda - z_lo + z_up |
  double complementarity_residual = 0.0;
  double duality_gap = 0.0;           // |primal obj - dual obj| / (1 + |primal obj|)
  double dual_sign_violation = 0.0;   // most negative mu / z entry, as a magnitude
  std::string violation;              // empty when ok
};

// Independent recomputation of the optimality certificate. Requires
// solution.status == optimal (throws std::invalid_argument otherwise).
KktReport verify_kkt(const LpProblem& p, const LpSolution& s, double tol = 1e-6);

// Plain-text tabular dump (objective, rows, bounds) for triage.
std::string dump(const LpProblem& p);

}  // namespace bidlab::lp
