// Per-period best-response oracles against a fixed opponent ladder under
// uniform-price clearing. optimal_profit enumerates the candidate optima
// (one per opponent price level); brute_force_best_response grid-searches
// single-block bids through the same clearing rules as a cross-check.
#pragma once

#include <vector>

#include "bidlab/single_market.hpp"

namespace bidlab::oracle {

struct OracleResult {
  bool feasible = false;
  double pi_star = 0.0;  // -inf when infeasible
  double p_star = 0.0;   // one of the ladder prices when feasible
  double q_star = 0.0;   // residual demand at that level, > 0 when feasible
  int level = -1;        // ladder index of the optimum, -1 when infeasible
};

// Candidate enumeration: for each ladder level j with cumulative cheaper
// opponent quantity cum_j, the agent can serve the residual q_j = D - cum_j at
// price p_j. A level is skipped when the residual is nonpositive, exceeds
// q_max, or when even full competitive output at p_j cannot cover demand
// (cum_j + q_mc(p_j) < D, which would force dispatch above marginal cost
// recovery). If every level is skipped the period is infeasible and pi_star
// is -infinity.
OracleResult optimal_profit(double demand, const market::OpponentLadder& ladder,
                            const market::CostModel& cost, double q_max);

// Repeated single-block clearing against a fixed ladder; bitwise-equivalent
// to market::clear with a one-segment agent curve, but allocation-free.
class BestResponseEvaluator {
 public:
  BestResponseEvaluator(const market::OpponentLadder& ladder, const market::CostModel& cost,
                        double price_cap);

  market::ClearingOutcome outcome(double price, double quantity, double demand) const;
  double profit(double price, double quantity, double demand) const {
    return outcome(price, quantity, demand).profit;
  }

 private:
  const market::OpponentLadder& ladder_;
  const market::CostModel& cost_;
  double price_cap_;
  std::vector<double> cum_;  // cum_[j] = opponent quantity strictly below level j
};

struct BestResponse {
  double profit = 0.0;
  double price = 0.0;
  double quantity = 0.0;
};

// Exhaustive search over single-block bids (price, quantity) on a uniform
// grid, evaluated through the clearing engine. The price grid spans [0,
// max ladder price + price_step]; bidding above the ladder only dispatches
// when the ladder alone cannot cover demand, which the price-cap candidates
// handle. Besides the grid, targeted candidates are always evaluated: prices
// just below each ladder level, residual-demand and competitive-output
// quantities, and full-capacity bids at the cap. Ties prefer the last
// maximizer, so among equal-profit grid points the highest (price, quantity)
// is reported.
BestResponse brute_force_best_response(double demand, const market::OpponentLadder& ladder,
                                       const market::CostModel& cost, double q_max,
                                       double price_cap, double price_step, double q_step);

// (pi_star - pi_rl) / |pi_star|; requires pi_star finite and nonzero.
double optimality_gap(double pi_rl, double pi_star);

}  // namespace bidlab::oracle
