// Empirical adequacy checks for trained bidding agents: optimality-gap
// trajectory statistics for single-agent runs, and a best-response
// exploitability assessment for a frozen multi-agent profile on the network
// market. The assessment retrains one seat at a time against frozen
// opponents and compares payoffs on a common batch of demand draws, so the
// deviation gain is measured under identical randomness.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bidlab/learn.hpp"
#include "bidlab/network_market.hpp"

namespace bidlab::validity {

struct GapStatistics {
  double steady_state_mean = 0.0;  // raw-gap mean over the final tenth
  double steady_state_std = 0.0;   // population std over the same window
  int episode_to_10pct = -1;       // first 1-based episode whose trailing
  int episode_to_5pct = -1;        //   10-episode mean is <= the threshold; -1 if never
  double best_ma_gap = 0.0;        // lowest trailing 10-episode mean anywhere
  double compliance_rate_last10 = 0.0;  // fraction of final-tenth raw gaps <= 0.10
};

// gaps holds one optimality gap per episode as a fraction (0.1 == 10%).
// Fewer than 20 episodes or any non-finite entry is a data error
// (std::invalid_argument).
GapStatistics gap_statistics(const std::vector<double>& gaps);
nlohmann::json to_json(const GapStatistics& s);

struct AgentAssessment {
  int agent = 0;                  // 1-based seat index in fleet order
  double baseline_profit = 0.0;   // mean episode profit under the frozen profile
  double br_profit = 0.0;         // same seat after best-response retraining
  double delta = 0.0;             // max(0, br_profit - baseline_profit)
  double rel = 0.0;               // delta / baseline_profit
  double pct = 0.0;               // 100 * rel
  double br_profile_total = 0.0;  // system-wide mean profit with this seat deviating
  bool diverged = false;          // every restart diverged; excluded from epsilon
};

struct ExploitabilityReport {
  std::vector<AgentAssessment> agents;
  double baseline_total_profit = 0.0;
  double mean_baseline_profit = 0.0;
  double epsilon_hat = 0.0;      // max delta over non-diverged seats
  double epsilon_hat_pct = 0.0;  // max pct over non-diverged seats
  double threshold_pct = 2.0;    // epsilon-Nash acceptance threshold
  bool pass = false;             // epsilon_hat_pct <= threshold_pct
};
nlohmann::json to_json(const ExploitabilityReport& r);

// Assembles a report from already-measured payoffs; the three vectors are
// parallel, one entry per assessed seat labeled 1..n in order.
ExploitabilityReport assemble_exploitability(const std::vector<double>& baseline,
                                             const std::vector<double>& best_response,
                                             double baseline_total_profit,
                                             const std::vector<double>& br_profile_totals,
                                             double threshold_pct = 2.0);

// Exposes one seat of the shared multi-agent env as a single-agent
// RolloutEnv: the live seat plays the caller's action, every opponent plays
// its frozen policy deterministically. Resets draw fresh load profiles from
// the shared env's master stream. live_agent is the 0-based env seat.
class FrozenOpponentEnv : public learn::RolloutEnv {
 public:
  FrozenOpponentEnv(net::MultiAgentNetworkEnv& env, int live_agent,
                    const std::vector<learn::GaussianPolicy>& policies,
                    const std::vector<std::vector<double>>& params);

  int obs_dim() const override { return env_.obs_dim(); }
  int act_dim() const override { return env_.act_dim(); }
  std::vector<double> reset() override;
  learn::StepOut step(const std::vector<double>& action) override;

 private:
  net::MultiAgentNetworkEnv& env_;
  int live_;
  const std::vector<learn::GaussianPolicy>& policies_;
  const std::vector<std::vector<double>>& params_;
  std::vector<std::vector<double>> obs_;
};

struct ProfileEvaluation {
  std::vector<double> agent_mean;  // per-seat mean episode profit, currency units
  double total_mean = 0.0;         // mean system episode profit
};

// Deterministic play of the whole profile on each demand seed; profits come
// from the dispatch (unscaled), so results match settlement currency.
ProfileEvaluation evaluate_profile(net::MultiAgentNetworkEnv& env,
                                   const std::vector<learn::GaussianPolicy>& policies,
                                   const std::vector<std::vector<double>>& params,
                                   const std::vector<std::uint64_t>& demand_seeds);

struct JointTrainResult {
  std::vector<learn::GaussianPolicy> policies;
  std::vector<std::vector<double>> actor_params;
  std::vector<std::vector<double>> critic_params;
  std::vector<int> critic_dims;
};

// episode (1-based), per-seat scaled reward sums
using JointEpisodeCallback = std::function<void(int, const std::vector<double>&)>;

// Simultaneous policy-gradient training of every seat: shared rollouts, one
// PPO (or A2C when cfg.algo == "a2c") update per seat on its own
// transitions, mirroring the single-agent trainer's schedules and update
// order. Deterministic given the seed.
JointTrainResult train_joint(net::MultiAgentNetworkEnv& env, const learn::TrainConfig& cfg,
                             std::uint64_t seed, const JointEpisodeCallback& on_episode = {});

struct BestResponse {
  learn::GaussianPolicy policy;
  std::vector<double> actor_params;
  double eval_mean = 0.0;              // live seat's payoff under the winning restart
  ProfileEvaluation eval;              // full deviated-profile evaluation, same restart
  std::vector<double> restart_evals;   // one entry per non-diverged restart
  int restarts_diverged = 0;
  bool diverged = false;               // every restart diverged
};

// Retrains one seat (0-based) against frozen opponents n_restarts times from
// different initializations and keeps the restart with the highest mean
// payoff on eval_seeds. Diverged restarts are dropped; if all diverge the
// result is flagged instead of thrown.
BestResponse best_response_train(net::MultiAgentNetworkEnv& env, int agent,
                                 const std::vector<learn::GaussianPolicy>& policies,
                                 const std::vector<std::vector<double>>& params,
                                 const learn::TrainConfig& cfg, int n_restarts,
                                 const std::vector<std::uint64_t>& eval_seeds,
                                 std::uint64_t seed);

struct ExploitabilityConfig {
  learn::TrainConfig learner;               // best-response training settings
  int n_restarts = 3;
  std::vector<std::uint64_t> demand_seeds;  // common evaluation batch
  std::vector<int> agents;                  // 1-based seats to assess; empty = all
  double threshold_pct = 2.0;
};

// Freezes the profile, measures baseline payoffs on the common seeds, then
// best-responds seat by seat and measures the deviated profiles on the same
// seeds. Seats whose restarts all diverge are reported with the flag set and
// excluded from the epsilon maxima.
ExploitabilityReport exploitability_assess(net::MultiAgentNetworkEnv& env,
                                           const std::vector<learn::GaussianPolicy>& policies,
                                           const std::vector<std::vector<double>>& params,
                                           const ExploitabilityConfig& cfg,
                                           std::uint64_t seed);

}  // namespace bidlab::validity
