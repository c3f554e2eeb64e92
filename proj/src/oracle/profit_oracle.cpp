#include "bidlab/profit_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bidlab::oracle {

OracleResult optimal_profit(double demand, const market::OpponentLadder& ladder,
                            const market::CostModel& cost, double q_max) {
  if (!(demand >= 0.0)) throw std::invalid_argument("optimal_profit: demand must be nonnegative");
  OracleResult best;
  best.pi_star = -std::numeric_limits<double>::infinity();
  double cum = 0.0;
  for (size_t j = 0; j < ladder.prices.size(); ++j) {
    double p_j = ladder.prices[j];
    double q_j = demand - cum;
    bool coverable = cum + cost.q_mc(p_j) >= demand;
    if (coverable && q_j > 0.0 && q_j <= q_max) {
      double profit = p_j * q_j - cost.cost(q_j);
      if (profit > best.pi_star) {
        best.feasible = true;
        best.pi_star = profit;
        best.p_star = p_j;
        best.q_star = q_j;
        best.level = static_cast<int>(j);
      }
    }
    cum += ladder.widths[j];
  }
  return best;
}

BestResponseEvaluator::BestResponseEvaluator(const market::OpponentLadder& ladder,
                                             const market::CostModel& cost, double price_cap)
    : ladder_(ladder), cost_(cost), price_cap_(price_cap) {
  if (ladder.widths.size() != ladder.prices.size())
    throw std::invalid_argument("BestResponseEvaluator: ladder size mismatch");
  if (!std::is_sorted(ladder.prices.begin(), ladder.prices.end()))
    throw std::invalid_argument("BestResponseEvaluator: ladder prices must be sorted");
  cum_.resize(ladder.prices.size() + 1);
  cum_[0] = 0.0;
  for (size_t j = 0; j < ladder.widths.size(); ++j) cum_[j + 1] = cum_[j] + ladder.widths[j];
}

market::ClearingOutcome BestResponseEvaluator::outcome(double price, double quantity,
                                                       double demand) const {
  market::ClearingOutcome out;
  const size_t m = ladder_.prices.size();
  if (demand == 0.0) {
    out.price = m > 0 ? std::min(ladder_.prices.front(), price) : price;
    out.profit = -cost_.cost(0.0);
    return out;
  }
  // Opponent blocks at price <= agent's dispatch ahead of the agent.
  size_t pos = std::upper_bound(ladder_.prices.begin(), ladder_.prices.end(), price) -
               ladder_.prices.begin();
  double ahead = cum_[pos];
  if (demand <= ahead) {
    // Agent never reached; marginal block is the one where demand lands.
    size_t j = std::lower_bound(cum_.begin() + 1, cum_.end(), demand) - (cum_.begin() + 1);
    out.opponent_q = demand;
    out.price = ladder_.prices[j];
    out.profit = -cost_.cost(0.0);
    return out;
  }
  double take = std::min(quantity, demand - ahead);
  out.agent_q = take;
  out.opponent_q = ahead;
  double remaining = demand - ahead - take;
  if (remaining <= 0.0) {
    // Agent (or, if it took nothing, the block just before it) is marginal.
    out.price = take > 0.0 ? price : (pos > 0 ? ladder_.prices[pos - 1] : price);
  } else {
    size_t j = pos;
    while (j < m && remaining > 0.0) {
      double w = std::min(ladder_.widths[j], remaining);
      out.opponent_q += w;
      remaining -= w;
      if (w > 0.0) out.price = ladder_.prices[j];
      ++j;
    }
    if (remaining > 0.0) {
      out.unserved = true;
      out.price = price_cap_;
    }
  }
  out.profit = out.price * out.agent_q - cost_.cost(out.agent_q);
  return out;
}

BestResponse brute_force_best_response(double demand, const market::OpponentLadder& ladder,
                                       const market::CostModel& cost, double q_max,
                                       double price_cap, double price_step, double q_step) {
  if (!(price_step > 0.0) || !(q_step > 0.0))
    throw std::invalid_argument("brute_force_best_response: grid steps must be positive");
  BestResponseEvaluator eval(ladder, cost, price_cap);

  BestResponse best;
  best.profit = -std::numeric_limits<double>::infinity();
  auto consider = [&](double p, double q) {
    if (p < 0.0 || q < 0.0 || q > q_max) return;
    double profit = eval.profit(p, q, demand);
    if (profit >= best.profit) best = {profit, p, q};
  };

  double p_hi = (ladder.prices.empty() ? 0.0 : ladder.prices.back()) + price_step;
  long np = static_cast<long>(std::floor(p_hi / price_step));
  long nq = static_cast<long>(std::floor(q_max / q_step));
  for (long ip = 0; ip <= np; ++ip) {
    double p = ip * price_step;
    for (long iq = 0; iq <= nq; ++iq) consider(p, iq * q_step);
  }

  // Targeted candidates: optima sit exactly at residual demand served just
  // below a ladder price, or at competitive output against a marginal
  // opponent block; the uniform grid straddles but rarely hits them.
  std::vector<double> q_cands = {demand, q_max};
  double cum = 0.0;
  for (size_t j = 0; j < ladder.prices.size(); ++j) {
    double p_j = ladder.prices[j];
    q_cands.push_back(demand - cum);
    q_cands.push_back(cost.q_mc(p_j));
    for (double q : q_cands) {
      consider(p_j, q);
      consider(std::max(0.0, p_j - 1e-12), q);
    }
    cum += ladder.widths[j];
  }
  if (demand > cum)  // ladder alone cannot serve: price-cap bids dispatch
    for (double q : q_cands) consider(price_cap, q);

  return best;
}

double optimality_gap(double pi_rl, double pi_star) {
  if (!std::isfinite(pi_star) || pi_star == 0.0)
    throw std::domain_error("optimality_gap: pi_star must be finite and nonzero");
  return (pi_star - pi_rl) / std::abs(pi_star);
}

}  // namespace bidlab::oracle
