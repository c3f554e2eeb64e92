#include "bidlab/single_market.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bidlab::market {

double DemandProcess::mean_at(int t) const {
  const double two_pi = 6.283185307179586476925287;
  return mean_level + amplitude * std::sin(two_pi * t / t_count + phase);
}

double DemandProcess::sample(int t, std::mt19937_64& rng) const {
  std::normal_distribution<double> noise(0.0, noise_std);
  double d = mean_at(t) + noise(rng);
  return std::clamp(d, clip_lo, clip_hi);
}

CostModel::CostModel(double a, double b, double gamma, double q_max, int grid_points)
    : a_(a), b_(b), gamma_(gamma), q_max_(q_max) {
  if (!(q_max > 0) || grid_points < 2) throw std::invalid_argument("CostModel: bad grid");
  if (!(b >= 0) || !(gamma >= 1)) throw std::invalid_argument("CostModel: bad coefficients");
  const int n = grid_points;
  dq_ = q_max_ / (n - 1);
  mc_nodes_.resize(n);
  cost_nodes_.resize(n);
  for (int i = 0; i < n; ++i) {
    double frac = static_cast<double>(i) / (n - 1);
    mc_nodes_[i] = a_ + b_ * std::pow(frac, gamma_);
  }
  cost_nodes_[0] = 0.0;
  for (int i = 1; i < n; ++i)
    cost_nodes_[i] = cost_nodes_[i - 1] + 0.5 * (mc_nodes_[i - 1] + mc_nodes_[i]) * dq_;
}

int CostModel::segment_of(double q) const {
  int k = static_cast<int>(q / dq_);
  return std::clamp(k, 0, static_cast<int>(mc_nodes_.size()) - 2);
}

double CostModel::mc(double q) const {
  if (!(q >= 0.0) || q > q_max_) throw std::domain_error("CostModel::mc: q outside [0, q_max]");
  int k = segment_of(q);
  double theta = (q - k * dq_) / dq_;
  return mc_nodes_[k] + theta * (mc_nodes_[k + 1] - mc_nodes_[k]);
}

double CostModel::cost(double q) const {
  if (!(q >= 0.0) || q > q_max_) throw std::domain_error("CostModel::cost: q outside [0, q_max]");
  int k = segment_of(q);
  double left = k * dq_;
  return cost_nodes_[k] + 0.5 * (mc_nodes_[k] + mc(q)) * (q - left);
}

double CostModel::q_mc(double p) const {
  if (p < mc_nodes_.front()) return 0.0;
  if (p >= mc_nodes_.back()) return q_max_;
  // mc nodes are strictly increasing for b > 0; find mc[k] <= p < mc[k+1].
  auto it = std::upper_bound(mc_nodes_.begin(), mc_nodes_.end(), p);
  int k = static_cast<int>(it - mc_nodes_.begin()) - 1;
  double span = mc_nodes_[k + 1] - mc_nodes_[k];
  if (span <= 0.0) return (k + 1) * dq_;  // flat segment: take its upper end
  return k * dq_ + dq_ * (p - mc_nodes_[k]) / span;
}

OpponentLadder OpponentLadder::standard() {
  OpponentLadder l;
  l.widths.assign(10, 100.0);
  l.prices = {20, 25, 30, 35, 40, 45, 50, 55, 60, 65};
  return l;
}

double OpponentLadder::total_quantity() const {
  double s = 0;
  for (double w : widths) s += w;
  return s;
}

namespace {

struct Offer {
  double price;
  double width;
  bool agent;
  int index;  // position within the owner's own list, for stable ties
};

}  // namespace

ClearingOutcome clear(const bids::StepBidCurve& agent, const OpponentLadder& opponents,
                      double demand, const CostModel& cost, double price_cap) {
  if (!(demand >= 0.0)) throw std::invalid_argument("clear: demand must be nonnegative");
  if (opponents.widths.size() != opponents.prices.size())
    throw std::invalid_argument("clear: ladder widths/prices size mismatch");
  if (!bids::validate(agent).closed)
    throw std::invalid_argument("clear: agent curve not feasible");

  std::vector<Offer> book;
  book.reserve(opponents.widths.size() + agent.segments());
  for (size_t j = 0; j < opponents.widths.size(); ++j)
    book.push_back({opponents.prices[j], opponents.widths[j], false, static_cast<int>(j)});
  for (int i = 0; i < agent.segments(); ++i) {
    double w = agent.breakpoints[i + 1] - agent.breakpoints[i];
    book.push_back({agent.prices[i], w, true, i});
  }
  // Price ascending; at ties opponents dispatch first, then original order.
  std::stable_sort(book.begin(), book.end(), [](const Offer& a, const Offer& b) {
    if (a.price != b.price) return a.price < b.price;
    if (a.agent != b.agent) return !a.agent;
    return a.index < b.index;
  });

  ClearingOutcome out;
  if (demand == 0.0) {
    double lowest = book.empty() ? 0.0 : book.front().price;
    out.price = lowest;
    out.profit = -cost.cost(0.0);
    return out;
  }

  double remaining = demand;
  double last_price = book.empty() ? price_cap : book.front().price;
  for (const Offer& o : book) {
    double take = std::min(o.width, remaining);
    if (take > 0.0) {
      last_price = o.price;
      if (o.agent)
        out.agent_q += take;
      else
        out.opponent_q += take;
      remaining -= take;
    }
    if (remaining <= 0.0) break;
  }
  if (remaining > 0.0) {
    out.unserved = true;
    out.price = price_cap;
  } else {
    out.price = last_price;
  }
  out.profit = out.price * out.agent_q - cost.cost(out.agent_q);
  return out;
}

SingleAgentMarketEnv::SingleAgentMarketEnv(const SingleMarketConfig& cfg,
                                           std::uint64_t master_seed, double reward_scale)
    : cfg_(cfg),
      cost_(cfg.cost_a, cfg.cost_b, 1.0, cfg.q_max, cfg.cost_grid_points),
      reward_scale_(reward_scale),
      rng_(master_seed) {
  if (cfg_.segments < 1) throw std::invalid_argument("SingleAgentMarketEnv: segments < 1");
  std::uniform_real_distribution<double> g(cfg_.gamma_lo, cfg_.gamma_hi);
  gamma_ = g(rng_);
  cost_ = CostModel(cfg_.cost_a, cfg_.cost_b, gamma_, cfg_.q_max, cfg_.cost_grid_points);
}

std::vector<double> SingleAgentMarketEnv::observation() const {
  const double two_pi = 6.283185307179586476925287;
  double ang = two_pi * t_ / cfg_.demand.t_count;
  return {std::sin(ang), std::cos(ang), prev_demand_ / cfg_.demand.clip_hi};
}

std::vector<double> SingleAgentMarketEnv::reset() {
  t_ = 0;
  prev_demand_ = cfg_.demand.mean_level;
  episode_open_ = true;
  return observation();
}

std::vector<double> SingleAgentMarketEnv::reset_with_seed(std::uint64_t demand_seed) {
  rng_.seed(demand_seed);
  return reset();
}

EnvStep SingleAgentMarketEnv::step(const std::vector<double>& action) {
  if (!episode_open_) throw std::logic_error("SingleAgentMarketEnv::step: call reset() first");
  if (static_cast<int>(action.size()) != act_dim())
    throw std::invalid_argument("SingleAgentMarketEnv::step: wrong action size");

  maps::UnitBoxAction u;
  u.u_q.assign(action.begin(), action.begin() + cfg_.segments);
  u.u_p.assign(action.begin() + cfg_.segments, action.end());

  EnvStep s;
  s.curve = maps::h_mode(cfg_.mode, u, cfg_.map_cfg);
  s.t = t_;
  s.demand = cfg_.demand.sample(t_, rng_);
  s.outcome = clear(s.curve, cfg_.ladder, s.demand, cost_, cfg_.price_cap);
  s.reward = s.outcome.profit * reward_scale_;

  prev_demand_ = s.demand;
  ++t_;
  s.done = (t_ >= cfg_.demand.t_count);
  if (s.done)
    episode_open_ = false;
  else
    s.obs = observation();
  return s;
}

}  // namespace bidlab::market
