// Network-constrained multi-agent market on the IEEE 39-bus case: DC shift
// factors, a priority-list commitment heuristic, per-period economic dispatch
// as a penalized LP, and locational marginal prices from the dispatch duals.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bidlab/bid_curve.hpp"
#include "bidlab/param_maps.hpp"
#include "bidlab/single_market.hpp"

namespace bidlab::net {

struct Branch {
  int from = 0;  // 1-based bus ids as in the case file
  int to = 0;
  double x = 0.0;       // reactance, > 0
  double f_max = 0.0;   // thermal limit, MW
  double penalty = 0.0; // relaxation penalty, currency/MWh
};

struct Generator {
  std::string id;
  int bus = 0;
  double a = 0.0;  // marginal-cost intercept
  double b = 0.0;  // marginal-cost span: mc(cap) = a + b
  double capacity = 0.0;
  double ramp = 0.0;
  double startup_cost = 0.0;
  double fixed_cost = 0.0;
};

struct LoadPoint {
  int bus = 0;
  double base = 0.0;  // MW at shape 1.0
};

struct NetworkCase {
  std::string name;
  int buses = 0;
  int slack_bus = 0;  // 1-based
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<LoadPoint> loads;

  double total_capacity() const;
  double total_base_load() const;
  // Throws std::invalid_argument on structural problems (bad bus ids,
  // nonpositive reactance, disconnected graph).
  void validate() const;

  static NetworkCase from_json(const std::string& text);
  static NetworkCase load_file(const std::string& path);
};

// Dense DC shift factors: row per branch, column per bus, slack column zero.
// flows = SF * (bus injections), for injections summing to zero.
struct ShiftFactorMatrix {
  int slack_bus = 0;
  std::vector<std::vector<double>> rows;  // branches x buses

  // Flow on every branch for a full 1-based bus injection vector.
  std::vector<double> flows(const std::vector<double>& injection) const;
};

// Throws std::invalid_argument if the reduced susceptance matrix is singular
// (disconnected case).
ShiftFactorMatrix build_shift_factors(const NetworkCase& cs);

// Priority-list commitment: units ascend by a-coefficient and join until
// committed capacity reaches margin * max_t demand_totals[t]. Same unit set
// every period; startup flags mark 0->1 edges with a cold start at t=0.
struct CommitSchedule {
  std::vector<std::vector<int>> u;  // period x unit, 0/1
  std::vector<std::vector<int>> y;  // period x unit, startup flags
  std::vector<int> committed;       // unit indexes, priority order
};

CommitSchedule commit(const NetworkCase& cs, const std::vector<double>& demand_totals,
                      double margin = 1.1);

struct DispatchResult {
  std::vector<double> g;                   // per generator, MW
  std::vector<std::vector<double>> g_seg;  // per generator x segment
  std::vector<double> flows;               // per branch, MW
  std::vector<double> s_plus, s_minus;     // per branch relaxation, MW
  double shortfall = 0.0;                  // unserved balance, MW
  double lambda_e = 0.0;                   // balance dual
  std::vector<double> lambda_c;            // per bus congestion component
  std::vector<double> lmp;                 // lambda_e + lambda_c, per bus
  std::vector<double> mu_plus, mu_minus;   // per branch flow duals
  std::vector<double> profit;              // lmp(bus_i) * g_i - cost_i(g_i)
  double objective = 0.0;
  int lp_iterations = 0;
};

// One period of economic dispatch for the committed units. bids and costs are
// parallel to cs.generators; loads_t is parallel to cs.loads; prev_dispatch
// feeds the ramp constraints (pass zeros to disable at the first period,
// since ramp >= capacity makes them vacuous from zero). A shortfall variable
// priced above every relaxation penalty keeps the LP feasible even when the
// committed fleet cannot cover the load.
// Throws std::runtime_error if the LP fails to reach an optimum.
DispatchResult sced(const NetworkCase& cs, const ShiftFactorMatrix& sf,
                    const std::vector<bids::StepBidCurve>& curves,
                    const std::vector<market::CostModel>& costs,
                    const std::vector<double>& loads_t,
                    const std::vector<int>& committed_t,
                    const std::vector<double>& prev_dispatch);

struct NetworkEnvConfig {
  int t_count = 96;
  double peak_fraction = 0.8;   // peak system load relative to total capacity
  double shape_amplitude = 0.3; // diurnal shape 1 + amp*sin(2*pi*t/T + phase)
  double phase = -1.5707963267948966;
  double load_noise_frac = 0.01;  // per-bus lognormal-free Gaussian factor
  double price_cap = 150.0;
  double commit_margin = 1.1;
  double gamma_lo = 1.0, gamma_hi = 2.0;  // per-generator cost curvature
  // Per-agent bid map; q_max/p_max are replaced by (capacity_i, price_cap).
  // k_scale 0.3 keeps ten cumulative price increments inside the responsive
  // part of the saturation curve at p_max 150.
  maps::DpmpConfig map_cfg{.k_scale = 0.3};
  double reward_scale = 1e-4;
};

struct NetworkStep {
  std::vector<std::vector<double>> obs;  // per agent
  std::vector<double> reward;            // per agent, scaled profit
  bool done = false;
  int t = 0;
  DispatchResult dispatch;
};

// Ten-agent episode loop. Each period every agent maps its action through the
// configured post-processing into a 10-segment curve capped at (capacity,
// price_cap); commitment is decided once per episode from the realized load
// profile. Observations are (sin, cos of period angle, previous total load /
// total capacity).
class MultiAgentNetworkEnv {
 public:
  MultiAgentNetworkEnv(NetworkCase cs, const NetworkEnvConfig& cfg,
                       std::uint64_t master_seed);

  int agents() const { return static_cast<int>(case_.generators.size()); }
  int obs_dim() const { return 3; }
  int act_dim() const { return 20; }  // 10 quantity + 10 price coordinates
  int horizon() const { return cfg_.t_count; }
  const NetworkCase& network_case() const { return case_; }
  const ShiftFactorMatrix& shift_factors() const { return sf_; }
  const market::CostModel& cost(int agent) const { return costs_[agent]; }
  double cost_gamma(int agent) const { return gammas_[agent]; }
  const CommitSchedule& schedule() const { return sched_; }
  maps::DpmpConfig agent_map_config(int agent) const;

  // Draws a fresh load profile (t x loads), commits, returns initial
  // observations.
  std::vector<std::vector<double>> reset();
  std::vector<std::vector<double>> reset_with_seed(std::uint64_t load_seed);

  // actions: one 20-vector per agent, unit-box coordinates.
  NetworkStep step(const std::vector<std::vector<double>>& actions);

  // Mid-episode access for diagnostics; loads are the realized profile.
  const std::vector<std::vector<double>>& load_profile() const { return loads_; }

 private:
  std::vector<double> obs_at(int t) const;

  NetworkCase case_;
  NetworkEnvConfig cfg_;
  ShiftFactorMatrix sf_;
  std::vector<double> gammas_;
  std::vector<market::CostModel> costs_;
  std::mt19937_64 rng_;
  double load_scale_ = 1.0;

  std::vector<std::vector<double>> loads_;  // t x load points
  CommitSchedule sched_;
  std::vector<double> prev_dispatch_;
  int t_ = 0;
  bool episode_open_ = false;
};

}  // namespace bidlab::net
