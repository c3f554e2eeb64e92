#include "bidlab/validity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace bidlab::validity {

namespace {

constexpr int kMaWindow = 10;

double mean_of(const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += v[i];
  return s / n;
}

struct Transition {
  std::vector<double> obs;
  std::vector<double> y;
  double reward = 0.0;
  double value = 0.0;
  double logp = 0.0;
  bool done = false;
};

void compute_gae(const std::vector<Transition>& buf, double gamma, double lambda,
                 std::vector<double>& adv, std::vector<double>& ret) {
  adv.resize(buf.size());
  ret.resize(buf.size());
  double next_adv = 0.0, next_value = 0.0;
  for (int i = static_cast<int>(buf.size()) - 1; i >= 0; --i) {
    if (buf[i].done) {
      next_adv = 0.0;
      next_value = 0.0;
    }
    const double delta = buf[i].reward + gamma * next_value - buf[i].value;
    next_adv = delta + gamma * lambda * next_adv;
    adv[i] = next_adv;
    ret[i] = adv[i] + buf[i].value;
    next_value = buf[i].value;
  }
}

void normalize(std::vector<double>& v) {
  if (v.empty()) return;
  const double mean = mean_of(v.data(), static_cast<int>(v.size()));
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / v.size());
  for (double& x : v) x = (x - mean) / (sd + 1e-8);
}

std::vector<int> critic_dims_for(int in_dim, const std::vector<int>& hidden) {
  std::vector<int> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return dims;
}

AgentAssessment make_row(int label, double base, double br, double br_total) {
  AgentAssessment r;
  r.agent = label;
  r.baseline_profit = base;
  r.br_profit = br;
  r.delta = std::max(0.0, br - base);
  if (r.delta == 0.0)
    r.rel = 0.0;
  else
    r.rel = base > 0.0 ? r.delta / base : std::numeric_limits<double>::quiet_NaN();
  r.pct = 100.0 * r.rel;
  r.br_profile_total = br_total;
  return r;
}

void require_profile(const net::MultiAgentNetworkEnv& env,
                     const std::vector<learn::GaussianPolicy>& policies,
                     const std::vector<std::vector<double>>& params) {
  const int n = env.agents();
  if (static_cast<int>(policies.size()) != n || static_cast<int>(params.size()) != n)
    throw std::invalid_argument("profile needs one policy and parameter vector per seat");
}

}  // namespace

GapStatistics gap_statistics(const std::vector<double>& gaps) {
  const int n = static_cast<int>(gaps.size());
  if (n < 2 * kMaWindow)
    throw std::invalid_argument("gap series needs at least 20 episodes");
  for (double g : gaps)
    if (!std::isfinite(g)) throw std::invalid_argument("gap series contains non-finite entries");

  GapStatistics s;
  s.best_ma_gap = std::numeric_limits<double>::infinity();
  double window = 0.0;
  for (int i = 0; i < n; ++i) {
    window += gaps[i];
    if (i >= kMaWindow) window -= gaps[i - kMaWindow];
    if (i + 1 < kMaWindow) continue;
    const double ma = window / kMaWindow;
    s.best_ma_gap = std::min(s.best_ma_gap, ma);
    if (s.episode_to_10pct < 0 && ma <= 0.10) s.episode_to_10pct = i + 1;
    if (s.episode_to_5pct < 0 && ma <= 0.05) s.episode_to_5pct = i + 1;
  }

  const int tail = n / 10;
  const double* last = gaps.data() + (n - tail);
  s.steady_state_mean = mean_of(last, tail);
  double var = 0.0;
  int within = 0;
  for (int i = 0; i < tail; ++i) {
    var += (last[i] - s.steady_state_mean) * (last[i] - s.steady_state_mean);
    if (last[i] <= 0.10) ++within;
  }
  s.steady_state_std = std::sqrt(var / tail);
  s.compliance_rate_last10 = static_cast<double>(within) / tail;
  return s;
}

nlohmann::json to_json(const GapStatistics& s) {
  nlohmann::json j{{"steady_state_mean", s.steady_state_mean},
                   {"steady_state_std", s.steady_state_std},
                   {"best_ma_gap", s.best_ma_gap},
                   {"compliance_rate_last10", s.compliance_rate_last10}};
  if (s.episode_to_10pct >= 0) j["episode_to_10pct"] = s.episode_to_10pct;
  if (s.episode_to_5pct >= 0) j["episode_to_5pct"] = s.episode_to_5pct;
  return j;
}

nlohmann::json to_json(const ExploitabilityReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& a : r.agents) {
    rows.push_back({{"agent", a.agent},
                    {"baseline_profit", a.baseline_profit},
                    {"br_profit", a.br_profit},
                    {"delta", a.delta},
                    {"rel", a.rel},
                    {"pct", a.pct},
                    {"br_profile_total", a.br_profile_total},
                    {"diverged", a.diverged}});
  }
  return {{"agents", std::move(rows)},
          {"baseline_total_profit", r.baseline_total_profit},
          {"mean_baseline_profit", r.mean_baseline_profit},
          {"epsilon_hat", r.epsilon_hat},
          {"epsilon_hat_pct", r.epsilon_hat_pct},
          {"threshold_pct", r.threshold_pct},
          {"pass", r.pass}};
}

ExploitabilityReport assemble_exploitability(const std::vector<double>& baseline,
                                             const std::vector<double>& best_response,
                                             double baseline_total_profit,
                                             const std::vector<double>& br_profile_totals,
                                             double threshold_pct) {
  const std::size_t n = baseline.size();
  if (best_response.size() != n || br_profile_totals.size() != n || n == 0)
    throw std::invalid_argument("assemble_exploitability: ragged or empty payoff vectors");
  ExploitabilityReport rep;
  rep.threshold_pct = threshold_pct;
  rep.baseline_total_profit = baseline_total_profit;
  rep.mean_baseline_profit = mean_of(baseline.data(), static_cast<int>(n));
  for (std::size_t i = 0; i < n; ++i) {
    rep.agents.push_back(make_row(static_cast<int>(i) + 1, baseline[i], best_response[i],
                                  br_profile_totals[i]));
    rep.epsilon_hat = std::max(rep.epsilon_hat, rep.agents.back().delta);
    rep.epsilon_hat_pct = std::max(rep.epsilon_hat_pct, rep.agents.back().pct);
  }
  rep.pass = rep.epsilon_hat_pct <= rep.threshold_pct;
  return rep;
}

FrozenOpponentEnv::FrozenOpponentEnv(net::MultiAgentNetworkEnv& env, int live_agent,
                                     const std::vector<learn::GaussianPolicy>& policies,
                                     const std::vector<std::vector<double>>& params)
    : env_(env), live_(live_agent), policies_(policies), params_(params) {
  require_profile(env, policies, params);
  if (live_agent < 0 || live_agent >= env.agents())
    throw std::invalid_argument("live agent outside the seat range");
}

std::vector<double> FrozenOpponentEnv::reset() {
  obs_ = env_.reset();
  return obs_[live_];
}

learn::StepOut FrozenOpponentEnv::step(const std::vector<double>& action) {
  std::vector<std::vector<double>> actions(env_.agents());
  for (int j = 0; j < env_.agents(); ++j)
    actions[j] =
        j == live_ ? action : policies_[j].act_deterministic(params_[j], obs_[j]);
  auto out = env_.step(actions);
  learn::StepOut so;
  so.reward = out.reward[live_];
  so.done = out.done;
  if (!out.done) {
    obs_ = std::move(out.obs);
    so.obs = obs_[live_];
  }
  return so;
}

ProfileEvaluation evaluate_profile(net::MultiAgentNetworkEnv& env,
                                   const std::vector<learn::GaussianPolicy>& policies,
                                   const std::vector<std::vector<double>>& params,
                                   const std::vector<std::uint64_t>& demand_seeds) {
  require_profile(env, policies, params);
  if (demand_seeds.empty())
    throw std::invalid_argument("evaluate_profile needs at least one demand seed");
  const int n = env.agents();
  ProfileEvaluation ev;
  ev.agent_mean.assign(n, 0.0);
  for (std::uint64_t seed : demand_seeds) {
    auto obs = env.reset_with_seed(seed);
    for (int t = 0; t < env.horizon(); ++t) {
      std::vector<std::vector<double>> actions(n);
      for (int i = 0; i < n; ++i)
        actions[i] = policies[i].act_deterministic(params[i], obs[i]);
      auto out = env.step(actions);
      for (int i = 0; i < n; ++i) ev.agent_mean[i] += out.dispatch.profit[i];
      if (!out.done) obs = std::move(out.obs);
    }
  }
  const double episodes = static_cast<double>(demand_seeds.size());
  for (double& v : ev.agent_mean) v /= episodes;
  ev.total_mean = std::accumulate(ev.agent_mean.begin(), ev.agent_mean.end(), 0.0);
  return ev;
}

JointTrainResult train_joint(net::MultiAgentNetworkEnv& env, const learn::TrainConfig& cfg,
                             std::uint64_t seed, const JointEpisodeCallback& on_episode) {
  if (cfg.algo != "ppo" && cfg.algo != "a2c")
    throw std::invalid_argument("train_joint supports ppo or a2c");
  const bool clipped = cfg.algo == "ppo";
  const int epochs = clipped ? cfg.epochs : 1;
  const double clip = clipped ? cfg.clip_ratio : 0.0;
  const int n = env.agents();

  std::mt19937_64 rng(seed);
  const auto cdims = critic_dims_for(env.obs_dim(), cfg.hidden);
  std::vector<learn::GaussianPolicy> actors;
  std::vector<learn::Mlp> critics;
  std::vector<learn::Adam> aopts, copts;
  std::vector<std::vector<double>> aparams(n), cparams(n);
  for (int i = 0; i < n; ++i) {
    actors.emplace_back(env.obs_dim(), env.act_dim(), cfg.hidden);
    aparams[i] = actors[i].init(rng, cfg.init_log_std);
    critics.emplace_back(cdims);
    cparams[i] = critics[i].init(rng);
    aopts.emplace_back(static_cast<int>(aparams[i].size()), cfg.lr_actor);
    copts.emplace_back(static_cast<int>(cparams[i].size()), cfg.lr_critic);
  }

  learn::Mlp::Workspace ws;
  std::vector<std::vector<Transition>> buf(n);
  std::vector<double> adv, ret, grad;

  int done_episodes = 0;
  while (done_episodes < cfg.episodes) {
    const int want = std::min(cfg.rollout_episodes, cfg.episodes - done_episodes);
    for (auto& b : buf) b.clear();
    for (int e = 0; e < want; ++e) {
      auto obs = env.reset();
      std::vector<double> reward_sum(n, 0.0);
      bool done = false;
      while (!done) {
        std::vector<std::vector<double>> actions(n);
        std::vector<std::vector<double>> ys(n);
        std::vector<double> values(n), logps(n);
        for (int i = 0; i < n; ++i) {
          auto s = actors[i].sample(aparams[i], obs[i], rng);
          critics[i].forward(cparams[i], obs[i].data(), ws);
          values[i] = critics[i].output(ws)[0];
          logps[i] = s.log_prob;
          actions[i] = std::move(s.u);
          ys[i] = std::move(s.y);
        }
        auto out = env.step(actions);
        for (int i = 0; i < n; ++i) {
          buf[i].push_back(
              {obs[i], std::move(ys[i]), out.reward[i], values[i], logps[i], out.done});
          reward_sum[i] += out.reward[i];
        }
        done = out.done;
        if (!done) obs = std::move(out.obs);
      }
      ++done_episodes;
      if (on_episode) on_episode(done_episodes, reward_sum);
    }

    const double sched =
        cfg.episodes > 0 ? static_cast<double>(done_episodes) / cfg.episodes : 1.0;
    const double lr_scale = 1.0 + (cfg.lr_final_frac - 1.0) * sched;
    const double ent_coef =
        cfg.entropy_coef * (1.0 + (cfg.entropy_final_frac - 1.0) * sched);
    const double ls_ceil =
        std::isnan(cfg.log_std_anneal_to)
            ? 2.0
            : cfg.init_log_std + (cfg.log_std_anneal_to - cfg.init_log_std) * sched;

    for (int i = 0; i < n; ++i) {
      aopts[i].set_lr(cfg.lr_actor * lr_scale);
      copts[i].set_lr(cfg.lr_critic * lr_scale);
      compute_gae(buf[i], cfg.gamma, cfg.gae_lambda, adv, ret);
      normalize(adv);

      std::vector<std::size_t> order(buf[i].size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.minibatch)) {
          const std::size_t stop =
              std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
          learn::SurrogateBatch mb;
          for (std::size_t k = start; k < stop; ++k) {
            const Transition& tr = buf[i][order[k]];
            mb.obs.push_back(tr.obs);
            mb.y.push_back(tr.y);
            mb.adv.push_back(adv[order[k]]);
            mb.logp_old.push_back(tr.logp);
          }
          grad.assign(aparams[i].size(), 0.0);
          const double loss = learn::ppo_surrogate(actors[i], aparams[i], mb, clip, ent_coef, &grad);
          if (!std::isfinite(loss)) throw learn::DivergenceError("non-finite policy loss");
          learn::clip_grad_norm(grad, cfg.max_grad_norm);
          aopts[i].step(aparams[i], grad);
          actors[i].clamp_log_std(aparams[i], ls_ceil);

          grad.assign(cparams[i].size(), 0.0);
          double vloss = 0.0;
          for (std::size_t k = start; k < stop; ++k) {
            const Transition& tr = buf[i][order[k]];
            critics[i].forward(cparams[i], tr.obs.data(), ws);
            const double diff = critics[i].output(ws)[0] - ret[order[k]];
            vloss += 0.5 * diff * diff;
            const double dout = cfg.value_coef * diff / static_cast<double>(stop - start);
            critics[i].backward(cparams[i], ws, &dout, grad);
          }
          if (!std::isfinite(vloss)) throw learn::DivergenceError("non-finite value loss");
          learn::clip_grad_norm(grad, cfg.max_grad_norm);
          copts[i].step(cparams[i], grad);
        }
      }
      for (double x : aparams[i])
        if (!std::isfinite(x)) throw learn::DivergenceError("non-finite actor parameters");
      for (double x : cparams[i])
        if (!std::isfinite(x)) throw learn::DivergenceError("non-finite critic parameters");
    }
  }

  JointTrainResult res{std::move(actors), std::move(aparams), std::move(cparams), cdims};
  return res;
}

BestResponse best_response_train(net::MultiAgentNetworkEnv& env, int agent,
                                 const std::vector<learn::GaussianPolicy>& policies,
                                 const std::vector<std::vector<double>>& params,
                                 const learn::TrainConfig& cfg, int n_restarts,
                                 const std::vector<std::uint64_t>& eval_seeds,
                                 std::uint64_t seed) {
  require_profile(env, policies, params);
  if (agent < 0 || agent >= env.agents())
    throw std::invalid_argument("best_response_train: agent outside the seat range");
  if (n_restarts < 1) throw std::invalid_argument("best_response_train needs n_restarts >= 1");
  if (eval_seeds.empty())
    throw std::invalid_argument("best_response_train needs evaluation seeds");

  BestResponse best{learn::GaussianPolicy(env.obs_dim(), env.act_dim(), cfg.hidden),
                    {},
                    std::numeric_limits<double>::quiet_NaN(),
                    {},
                    {},
                    0,
                    false};
  for (int r = 0; r < n_restarts; ++r) {
    const std::uint64_t restart_seed = seed ^ (0x9e3779b97f4a7c15ULL * (r + 1));
    try {
      FrozenOpponentEnv fenv(env, agent, policies, params);
      auto result = learn::train(fenv, cfg, restart_seed);
      auto dev_policies = policies;
      auto dev_params = params;
      dev_policies[agent] = result.policy;
      dev_params[agent] = result.actor_params;
      auto eval = evaluate_profile(env, dev_policies, dev_params, eval_seeds);
      const double payoff = eval.agent_mean[agent];
      best.restart_evals.push_back(payoff);
      if (best.actor_params.empty() || payoff > best.eval_mean) {
        best.eval_mean = payoff;
        best.eval = std::move(eval);
        best.policy = std::move(result.policy);
        best.actor_params = std::move(result.actor_params);
      }
    } catch (const learn::DivergenceError&) {
      ++best.restarts_diverged;
    }
  }
  best.diverged = best.actor_params.empty();
  return best;
}

ExploitabilityReport exploitability_assess(net::MultiAgentNetworkEnv& env,
                                           const std::vector<learn::GaussianPolicy>& policies,
                                           const std::vector<std::vector<double>>& params,
                                           const ExploitabilityConfig& cfg,
                                           std::uint64_t seed) {
  require_profile(env, policies, params);
  if (cfg.demand_seeds.empty())
    throw std::invalid_argument("exploitability assessment needs common demand seeds");
  if (cfg.n_restarts < 1)
    throw std::invalid_argument("exploitability assessment needs n_restarts >= 1");
  const int n = env.agents();
  std::vector<int> labels = cfg.agents;
  if (labels.empty())
    for (int i = 1; i <= n; ++i) labels.push_back(i);
  for (int label : labels)
    if (label < 1 || label > n)
      throw std::invalid_argument("assessed seat labels must lie in [1, agents]");

  ExploitabilityReport rep;
  rep.threshold_pct = cfg.threshold_pct;
  const auto base = evaluate_profile(env, policies, params, cfg.demand_seeds);
  rep.baseline_total_profit = base.total_mean;
  rep.mean_baseline_profit = mean_of(base.agent_mean.data(), n);

  for (int label : labels) {
    const int i = label - 1;
    const auto br = best_response_train(env, i, policies, params, cfg.learner, cfg.n_restarts,
                                        cfg.demand_seeds, seed + 1000003ULL * label);
    AgentAssessment row;
    if (br.diverged) {
      row = make_row(label, base.agent_mean[i], base.agent_mean[i], base.total_mean);
      row.diverged = true;
    } else {
      row = make_row(label, base.agent_mean[i], br.eval.agent_mean[i], br.eval.total_mean);
      rep.epsilon_hat = std::max(rep.epsilon_hat, row.delta);
      rep.epsilon_hat_pct = std::max(rep.epsilon_hat_pct, row.pct);
    }
    rep.agents.push_back(std::move(row));
  }
  rep.pass = rep.epsilon_hat_pct <= rep.threshold_pct;
  return rep;
}

}  // namespace bidlab::validity
