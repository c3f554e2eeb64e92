#include "bidlab/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bidlab::lp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Column layout of the working tableau: [structural | ineq slacks | one
// artificial per row]. The artificial block starts as the (signed) identity
// basis, so through both phases column j of B^-1 lives in artificial j's
// tableau column and row duals fall out of its reduced cost.
struct Tableau {
  int m = 0;       // rows (equalities first, then inequalities)
  int n = 0;       // structural variables
  int me = 0;      // equality rows
  int ncols = 0;   // n + (m - me) + m
  std::vector<std::vector<double>> t;  // m x ncols
  std::vector<double> cost;            // reduced-cost row, ncols
  std::vector<double> lo, up, va;      // per column
  std::vector<double> sign;            // artificial row signs
  std::vector<int> basic;              // row -> column
  std::vector<int> row_of;             // column -> row or -1
};

int art_col(const Tableau& tb, int row) { return tb.n + (tb.m - tb.me) + row; }

// Rebuilds the reduced-cost row for the given objective over columns.
void rebuild_cost(Tableau& tb, const std::vector<double>& obj) {
  tb.cost = obj;
  for (int i = 0; i < tb.m; ++i) {
    double cb = obj[tb.basic[i]];
    if (cb == 0.0) continue;
    for (int j = 0; j < tb.ncols; ++j) tb.cost[j] -= cb * tb.t[i][j];
  }
}

enum class PivotOut { step, optimal, unbounded, iterations };

// One phase of bounded-variable primal simplex on the tableau. Dantzig
// pricing with a Bland fallback after a run of degenerate steps.
PivotOut run_simplex(Tableau& tb, double tol, int max_iter, int& iters) {
  int degenerate_run = 0;
  bool bland = false;
  while (true) {
    if (iters++ > max_iter) return PivotOut::iterations;

    // Entering column.
    int q = -1, dir = 0;
    double best = tol;
    for (int j = 0; j < tb.ncols; ++j) {
      if (tb.row_of[j] >= 0 || tb.lo[j] == tb.up[j]) continue;
      double d = tb.cost[j];
      int cand_dir = 0;
      bool at_lo = tb.va[j] == tb.lo[j];
      bool at_up = tb.va[j] == tb.up[j];
      if ((at_lo || (!at_lo && !at_up)) && d < -best) cand_dir = 1;
      if ((at_up || (!at_lo && !at_up)) && d > best && cand_dir == 0) cand_dir = -1;
      if (cand_dir == 0) continue;
      if (bland) { q = j; dir = cand_dir; break; }
      q = j; dir = cand_dir; best = std::fabs(d);
    }
    if (q < 0) return PivotOut::optimal;

    // Ratio test: smallest step that parks the entering variable on its own
    // far bound or drives some basic variable to one of its bounds.
    double step = kInf;
    int leave_row = -1;
    double leave_to = 0.0;  // bound value the leaving variable lands on
    if (dir > 0 && tb.up[q] < kInf) step = tb.up[q] - tb.va[q];
    if (dir < 0 && tb.lo[q] > -kInf) step = tb.va[q] - tb.lo[q];
    for (int i = 0; i < tb.m; ++i) {
      double alpha = tb.t[i][q] * dir;
      if (std::fabs(alpha) <= tol) continue;
      int k = tb.basic[i];
      double room, bound;
      if (alpha > 0) {  // basic value decreases toward its lower bound
        if (tb.lo[k] == -kInf) continue;
        room = (tb.va[k] - tb.lo[k]) / alpha;
        bound = tb.lo[k];
      } else {  // increases toward its upper bound
        if (tb.up[k] == kInf) continue;
        room = (tb.va[k] - tb.up[k]) / alpha;
        bound = tb.up[k];
      }
      if (room < step - tol ||
          (room < step + tol && leave_row >= 0 &&
           (bland ? k < tb.basic[leave_row]
                  : std::fabs(tb.t[i][q]) > std::fabs(tb.t[leave_row][q])))) {
        step = std::max(0.0, room);
        leave_row = i;
        leave_to = bound;
      }
    }
    if (step == kInf) return PivotOut::unbounded;

    degenerate_run = step <= tol ? degenerate_run + 1 : 0;
    if (degenerate_run > 64) bland = true;
    if (degenerate_run == 0) bland = false;

    // Move values along the edge.
    if (step > 0.0) {
      for (int i = 0; i < tb.m; ++i) tb.va[tb.basic[i]] -= step * tb.t[i][q] * dir;
      tb.va[q] += step * dir;
    }
    if (leave_row < 0) continue;  // bound flip, basis unchanged

    int k = tb.basic[leave_row];
    tb.va[k] = leave_to;  // kill residual roundoff on the leaving variable
    tb.basic[leave_row] = q;
    tb.row_of[k] = -1;
    tb.row_of[q] = leave_row;

    double piv = tb.t[leave_row][q];
    for (int j = 0; j < tb.ncols; ++j) tb.t[leave_row][j] /= piv;
    for (int i = 0; i < tb.m; ++i) {
      if (i == leave_row) continue;
      double f = tb.t[i][q];
      if (f == 0.0) continue;
      for (int j = 0; j < tb.ncols; ++j) tb.t[i][j] -= f * tb.t[leave_row][j];
      tb.t[i][q] = 0.0;
    }
    double f = tb.cost[q];
    if (f != 0.0) {
      for (int j = 0; j < tb.ncols; ++j) tb.cost[j] -= f * tb.t[leave_row][j];
      tb.cost[q] = 0.0;
    }
  }
}

}  // namespace

void LpProblem::validate() const {
  auto bad = [](const char* msg) { throw std::invalid_argument(msg); };
  if (n < 0) bad("lp: negative variable count");
  if ((int)c.size() != n || (int)lo.size() != n || (int)up.size() != n)
    bad("lp: objective/bounds size mismatch");
  if (a_eq.size() != b_eq.size() || a_ineq.size() != b_ineq.size())
    bad("lp: constraint matrix/rhs size mismatch");
  for (const auto& r : a_eq)
    if ((int)r.size() != n) bad("lp: equality row width mismatch");
  for (const auto& r : a_ineq)
    if ((int)r.size() != n) bad("lp: inequality row width mismatch");
  for (int j = 0; j < n; ++j) {
    if (std::isnan(lo[j]) || std::isnan(up[j]) || std::isnan(c[j]))
      bad("lp: NaN in problem data");
    if (lo[j] > up[j]) bad("lp: lower bound above upper bound");
  }
}

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    default: return "iteration_limit";
  }
}

LpSolution solve(const LpProblem& p, double tol) {
  p.validate();
  int me = (int)p.a_eq.size();
  int mi = (int)p.a_ineq.size();

  Tableau tb;
  tb.m = me + mi;
  tb.n = p.n;
  tb.me = me;
  tb.ncols = p.n + mi + tb.m;
  tb.t.assign(tb.m, std::vector<double>(tb.ncols, 0.0));
  tb.lo.assign(tb.ncols, 0.0);
  tb.up.assign(tb.ncols, kInf);
  tb.va.assign(tb.ncols, 0.0);
  tb.basic.resize(tb.m);
  tb.row_of.assign(tb.ncols, -1);
  tb.sign.assign(tb.m, 1.0);

  for (int j = 0; j < p.n; ++j) {
    tb.lo[j] = p.lo[j];
    tb.up[j] = p.up[j];
    if (p.lo[j] > -kInf && (p.up[j] == kInf || std::fabs(p.lo[j]) <= std::fabs(p.up[j])))
      tb.va[j] = p.lo[j];
    else if (p.up[j] < kInf)
      tb.va[j] = p.up[j];
    else
      tb.va[j] = 0.0;  // free variable rests at zero
  }

  double b_scale = 1.0;
  std::vector<double> resid(tb.m);
  for (int i = 0; i < tb.m; ++i) {
    const std::vector<double>& row = i < me ? p.a_eq[i] : p.a_ineq[i - me];
    double b = i < me ? p.b_eq[i] : p.b_ineq[i - me];
    b_scale = std::max(b_scale, std::fabs(b));
    double r = b;
    for (int j = 0; j < p.n; ++j) {
      tb.t[i][j] = row[j];
      r -= row[j] * tb.va[j];
    }
    if (i >= me) {
      int sc = p.n + (i - me);
      tb.t[i][sc] = 1.0;
      // Slack starts nonbasic at 0; an artificial still carries the residual.
    }
    resid[i] = r;
  }
  for (int i = 0; i < tb.m; ++i) {
    int ac = art_col(tb, i);
    tb.sign[i] = resid[i] < 0 ? -1.0 : 1.0;
    tb.t[i][ac] = tb.sign[i];
    tb.va[ac] = std::fabs(resid[i]);
    tb.basic[i] = ac;
    tb.row_of[ac] = i;
    if (tb.sign[i] < 0)
      for (int j = 0; j < tb.ncols; ++j) tb.t[i][j] = -tb.t[i][j];
  }

  LpSolution sol;
  int max_iter = 200 * (tb.m + tb.ncols) + 1000;

  // Phase 1: minimize the artificial mass.
  std::vector<double> obj1(tb.ncols, 0.0);
  for (int i = 0; i < tb.m; ++i) obj1[art_col(tb, i)] = 1.0;
  rebuild_cost(tb, obj1);
  PivotOut out = run_simplex(tb, tol, max_iter, sol.iterations);
  if (out == PivotOut::iterations) { sol.status = LpStatus::iteration_limit; return sol; }
  double infeas = 0.0;
  for (int i = 0; i < tb.m; ++i) infeas += tb.va[art_col(tb, i)];
  if (infeas > 1e3 * tol * b_scale) { sol.status = LpStatus::infeasible; return sol; }

  // Phase 2: artificials are pinned at zero (they may linger basic at zero in
  // redundant rows, which is harmless).
  for (int i = 0; i < tb.m; ++i) {
    int ac = art_col(tb, i);
    tb.lo[ac] = tb.up[ac] = 0.0;
    tb.va[ac] = 0.0;
  }
  std::vector<double> obj2(tb.ncols, 0.0);
  for (int j = 0; j < p.n; ++j) obj2[j] = p.c[j];
  rebuild_cost(tb, obj2);
  out = run_simplex(tb, tol, max_iter, sol.iterations);
  if (out == PivotOut::iterations) { sol.status = LpStatus::iteration_limit; return sol; }
  if (out == PivotOut::unbounded) { sol.status = LpStatus::unbounded; return sol; }

  sol.status = LpStatus::optimal;
  sol.x.assign(tb.va.begin(), tb.va.begin() + p.n);
  sol.objective = 0.0;
  for (int j = 0; j < p.n; ++j) sol.objective += p.c[j] * sol.x[j];

  // Row dual y_i = -sign_i * reduced_cost(artificial_i); lambda = y on
  // equality rows and mu = -y on <= rows (mu >= 0 up to pivot noise).
  sol.eq_dual.resize(me);
  sol.ineq_dual.resize(mi);
  for (int i = 0; i < tb.m; ++i) {
    double y = -tb.sign[i] * tb.cost[art_col(tb, i)];
    if (i < me)
      sol.eq_dual[i] = y;
    else
      sol.ineq_dual[i - me] = std::max(0.0, -y);
  }
  sol.lo_dual.assign(p.n, 0.0);
  sol.up_dual.assign(p.n, 0.0);
  for (int j = 0; j < p.n; ++j) {
    if (tb.row_of[j] >= 0) continue;
    double d = tb.cost[j];
    if (d > 0 && p.lo[j] > -kInf) sol.lo_dual[j] = d;
    if (d < 0 && p.up[j] < kInf) sol.up_dual[j] = -d;
  }
  return sol;
}

KktReport verify_kkt(const LpProblem& p, const LpSolution& s, double tol) {
  p.validate();
  if (s.status != LpStatus::optimal)
    throw std::invalid_argument("verify_kkt: solution is not optimal");
  KktReport rep;
  int me = (int)p.a_eq.size();
  int mi = (int)p.a_ineq.size();

  for (int i = 0; i < me; ++i) {
    double r = -p.b_eq[i];
    for (int j = 0; j < p.n; ++j) r += p.a_eq[i][j] * s.x[j];
    rep.primal_eq_residual = std::max(rep.primal_eq_residual, std::fabs(r));
  }
  std::vector<double> slack(mi);
  for (int i = 0; i < mi; ++i) {
    double ax = 0.0;
    for (int j = 0; j < p.n; ++j) ax += p.a_ineq[i][j] * s.x[j];
    slack[i] = p.b_ineq[i] - ax;
    rep.primal_ineq_residual = std::max(rep.primal_ineq_residual, -slack[i]);
  }
  for (int j = 0; j < p.n; ++j) {
    rep.primal_ineq_residual = std::max(rep.primal_ineq_residual, p.lo[j] - s.x[j]);
    rep.primal_ineq_residual = std::max(rep.primal_ineq_residual, s.x[j] - p.up[j]);
  }
  rep.primal_ineq_residual = std::max(0.0, rep.primal_ineq_residual);

  double scale = 1.0;
  for (int j = 0; j < p.n; ++j) scale = std::max(scale, std::fabs(p.c[j]));
  for (int j = 0; j < p.n; ++j) {
    double g = p.c[j] - s.lo_dual[j] + s.up_dual[j];
    for (int i = 0; i < me; ++i) g -= p.a_eq[i][j] * s.eq_dual[i];
    for (int i = 0; i < mi; ++i) g += p.a_ineq[i][j] * s.ineq_dual[i];
    rep.stationarity_residual = std::max(rep.stationarity_residual, std::fabs(g) / scale);
  }

  for (int i = 0; i < mi; ++i) {
    rep.dual_sign_violation = std::max(rep.dual_sign_violation, -s.ineq_dual[i]);
    rep.complementarity_residual = std::max(
        rep.complementarity_residual,
        std::fabs(s.ineq_dual[i] * slack[i]) / (scale * std::max(1.0, std::fabs(p.b_ineq[i]))));
  }
  for (int j = 0; j < p.n; ++j) {
    rep.dual_sign_violation =
        std::max({rep.dual_sign_violation, -s.lo_dual[j], -s.up_dual[j]});
    double span = std::max(1.0, std::fabs(s.x[j]));
    if (p.lo[j] > -kInf)
      rep.complementarity_residual =
          std::max(rep.complementarity_residual,
                   std::fabs(s.lo_dual[j] * (s.x[j] - p.lo[j])) / (scale * span));
    if (p.up[j] < kInf)
      rep.complementarity_residual =
          std::max(rep.complementarity_residual,
                   std::fabs(s.up_dual[j] * (p.up[j] - s.x[j])) / (scale * span));
  }

  double dual_obj = 0.0;
  for (int i = 0; i < me; ++i) dual_obj += p.b_eq[i] * s.eq_dual[i];
  for (int i = 0; i < mi; ++i) dual_obj -= p.b_ineq[i] * s.ineq_dual[i];
  for (int j = 0; j < p.n; ++j) {
    if (s.lo_dual[j] != 0.0) dual_obj += p.lo[j] * s.lo_dual[j];
    if (s.up_dual[j] != 0.0) dual_obj -= p.up[j] * s.up_dual[j];
  }
  rep.duality_gap = std::fabs(s.objective - dual_obj) / (1.0 + std::fabs(s.objective));

  if (rep.primal_eq_residual > tol) rep.violation = "equality feasibility";
  else if (rep.primal_ineq_residual > tol) rep.violation = "inequality/bound feasibility";
  else if (rep.stationarity_residual > tol) rep.violation = "stationarity";
  else if (rep.dual_sign_violation > tol) rep.violation = "dual sign";
  else if (rep.complementarity_residual > tol) rep.violation = "complementarity";
  else if (rep.duality_gap > tol) rep.violation = "duality gap";
  rep.ok = rep.violation.empty();
  return rep;
}

std::string dump(const LpProblem& p) {
  std::ostringstream os;
  os << "minimize";
  for (int j = 0; j < p.n; ++j) os << ' ' << p.c[j];
  os << "\n";
  for (size_t i = 0; i < p.a_eq.size(); ++i) {
    os << "eq  ";
    for (double v : p.a_eq[i]) os << ' ' << v;
    os << "  = " << p.b_eq[i] << "\n";
  }
  for (size_t i = 0; i < p.a_ineq.size(); ++i) {
    os << "le  ";
    for (double v : p.a_ineq[i]) os << ' ' << v;
    os << " <= " << p.b_ineq[i] << "\n";
  }
  os << "lo  ";
  for (double v : p.lo) os << ' ' << v;
  os << "\nup  ";
  for (double v : p.up) os << ' ' << v;
  os << "\n";
  return os.str();
}

}  // namespace bidlab::lp
