// Single-agent uniform-price auction: sinusoidal stochastic demand, a fixed
// opponent price ladder, and a strategic agent with a tabulated marginal-cost
// model. One episode is one day of T settlement periods.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bidlab/bid_curve.hpp"
#include "bidlab/param_maps.hpp"

namespace bidlab::market {

// Diurnal demand: mean_level + amplitude * sin(2*pi*t/t_count + phase), plus
// Gaussian noise, clipped to [clip_lo, clip_hi]. Defaults give trough 200 at
// t=0, mean 500 at t=24, peak 800 at t=48.
struct DemandProcess {
  int t_count = 96;
  double mean_level = 500.0;
  double amplitude = 300.0;
  double phase = -1.5707963267948966;  // -pi/2
  double noise_std = 25.0;
  double clip_lo = 0.0;
  double clip_hi = 1000.0;

  double mean_at(int t) const;
  double sample(int t, std::mt19937_64& rng) const;
};

// Marginal cost mc(q) = a + b*(q/q_max)^gamma tabulated on a uniform grid and
// interpolated linearly; cost() integrates the interpolant exactly (cumulative
// trapezoid on the nodes), so mc, cost, and q_mc are mutually consistent:
// cost' == mc everywhere and q_mc(mc(q)) == q. Exact for gamma = 1.
class CostModel {
 public:
  CostModel(double a, double b, double gamma, double q_max, int grid_points = 101);

  double mc(double q) const;    // piecewise-linear marginal cost, q in [0, q_max]
  double cost(double q) const;  // integral of mc from 0 to q
  double q_mc(double p) const;  // sup{q : mc(q) <= p}, clamped to [0, q_max]

  double a() const { return a_; }
  double b() const { return b_; }
  double gamma() const { return gamma_; }
  double q_max() const { return q_max_; }
  const std::vector<double>& mc_nodes() const { return mc_nodes_; }
  const std::vector<double>& cost_nodes() const { return cost_nodes_; }

 private:
  int segment_of(double q) const;

  double a_ = 0, b_ = 0, gamma_ = 1, q_max_ = 1, dq_ = 1;
  std::vector<double> mc_nodes_;
  std::vector<double> cost_nodes_;
};

// Non-strategic competitor bidding fixed price-quantity blocks, already sorted
// by price ascending.
struct OpponentLadder {
  std::vector<double> widths;  // MW per block
  std::vector<double> prices;  // $/MWh per block, nondecreasing

  // Ten 100 MW blocks at 20, 25, ..., 65.
  static OpponentLadder standard();
  double total_quantity() const;
};

struct ClearingOutcome {
  double price = 0.0;       // uniform clearing price
  double agent_q = 0.0;     // agent dispatch
  double opponent_q = 0.0;  // opponent dispatch
  double profit = 0.0;      // price * agent_q - cost(agent_q)
  bool unserved = false;    // demand exceeded total offered quantity
};

// Merit-order clearing. Offers are sorted by price; at equal prices opponent
// blocks dispatch before agent segments. The marginal segment (even if
// partially dispatched) sets the price. Zero demand clears at the lowest
// offered price with no dispatch. If demand exceeds the total offered
// quantity, everything dispatches, price = price_cap, and unserved is set.
ClearingOutcome clear(const bids::StepBidCurve& agent, const OpponentLadder& opponents,
                      double demand, const CostModel& cost, double price_cap);

struct SingleMarketConfig {
  DemandProcess demand;
  OpponentLadder ladder = OpponentLadder::standard();
  int segments = 10;  // K: agent curve segments, action dim = 2K
  double q_max = 1000.0;
  double price_cap = 1000.0;
  double cost_a = 20.0;
  double cost_b = 300.0;
  int cost_grid_points = 101;
  // gamma ~ U(gamma_lo, gamma_hi) drawn once per environment from the master
  // seed; the draw is part of the run artifact.
  double gamma_lo = 1.0;
  double gamma_hi = 2.0;
  maps::HMode mode = maps::HMode::dpmp;
  maps::DpmpConfig map_cfg;  // q_max/p_max here mirror the market bounds
};

// One environment step as seen by a learner. The submitted curve and raw
// market quantities are surfaced so callers can trace and audit.
struct EnvStep {
  std::vector<double> obs;  // observation after the step (empty when done)
  double reward = 0.0;      // profit * reward_scale
  bool done = false;
  int t = 0;            // period that was just cleared
  double demand = 0.0;  // realized demand for that period
  ClearingOutcome outcome;
  bids::StepBidCurve curve;  // curve the action mapped to
};

// Episodic environment. Observation is (sin(2*pi*t/T), cos(2*pi*t/T),
// prev_demand / clip_hi); previous demand starts each episode at the process
// mean level. Actions are points of (0,1)^{2K}, split [u_q | u_p], mapped to a
// curve by the configured h mode; components outside (0,1) raise
// std::domain_error (no silent clipping).
class SingleAgentMarketEnv {
 public:
  SingleAgentMarketEnv(const SingleMarketConfig& cfg, std::uint64_t master_seed,
                       double reward_scale = 1e-3);

  int obs_dim() const { return 3; }
  int act_dim() const { return 2 * cfg_.segments; }
  int horizon() const { return cfg_.demand.t_count; }
  double gamma() const { return gamma_; }
  double reward_scale() const { return reward_scale_; }
  const CostModel& cost() const { return cost_; }
  const SingleMarketConfig& config() const { return cfg_; }

  // Starts a new episode; demand noise continues the master stream.
  std::vector<double> reset();
  // Starts a new episode with a dedicated demand stream (common random
  // numbers across policies being compared).
  std::vector<double> reset_with_seed(std::uint64_t demand_seed);

  EnvStep step(const std::vector<double>& action);

 private:
  std::vector<double> observation() const;

  SingleMarketConfig cfg_;
  CostModel cost_;
  double gamma_ = 1.0;
  double reward_scale_ = 1e-3;
  std::mt19937_64 rng_;
  int t_ = 0;
  bool episode_open_ = false;
  double prev_demand_ = 0.0;
};

}  // namespace bidlab::market
