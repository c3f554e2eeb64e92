#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bidlab/kernels.hpp"
#include "bidlab/learn.hpp"

namespace bidlab::learn {

namespace {

constexpr double kEdgeEps = 1e-6;

void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw DivergenceError(std::string("non-finite values in ") + what);
}

std::vector<int> critic_dims(int in_dim, const std::vector<int>& hidden) {
  std::vector<int> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return dims;
}

double mlp_scalar(const Mlp& net, const std::vector<double>& params,
                  const std::vector<double>& x, Mlp::Workspace& ws) {
  net.forward(params, x.data(), ws);
  return net.output(ws)[0];
}

struct Transition {
  std::vector<double> obs;
  std::vector<double> y;
  double reward = 0.0;
  double value = 0.0;
  double logp = 0.0;
  bool done = false;
};

// Generalized advantage estimation over a buffer of whole episodes (done
// flags mark boundaries; terminal states bootstrap to zero).
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
    double delta = buf[i].reward + gamma * next_value - buf[i].value;
    next_adv = delta + gamma * lambda * next_adv;
    adv[i] = next_adv;
    ret[i] = adv[i] + buf[i].value;
    next_value = buf[i].value;
  }
}

void normalize(std::vector<double>& v) {
  if (v.empty()) return;
  double mean = kernels::sum(v.data(), v.size()) / v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  double sd = std::sqrt(var / v.size());
  for (double& x : v) x = (x - mean) / (sd + 1e-8);
}

TrainResult train_pg(RolloutEnv& env, const TrainConfig& cfg, std::uint64_t seed,
                     const EpisodeCallback& on_episode, bool clipped) {
  std::mt19937_64 rng(seed);
  GaussianPolicy actor(env.obs_dim(), env.act_dim(), cfg.hidden);
  std::vector<double> aparams = actor.init(rng, cfg.init_log_std);
  Mlp critic(critic_dims(env.obs_dim(), cfg.hidden));
  std::vector<double> cparams = critic.init(rng);
  Adam aopt(static_cast<int>(aparams.size()), cfg.lr_actor);
  Adam copt(static_cast<int>(cparams.size()), cfg.lr_critic);

  const int epochs = clipped ? cfg.epochs : 1;
  const double clip = clipped ? cfg.clip_ratio : 0.0;

  TrainResult result{actor, {}, {}, critic.dims(), {}};
  Mlp::Workspace ws;
  std::vector<Transition> buf;
  std::vector<double> adv, ret, agrad, cgrad;

  int done_episodes = 0;
  while (done_episodes < cfg.episodes) {
    int want = std::min(cfg.rollout_episodes, cfg.episodes - done_episodes);
    buf.clear();
    for (int e = 0; e < want; ++e) {
      std::vector<double> obs = env.reset();
      double reward_sum = 0.0;
      bool done = false;
      while (!done) {
        auto s = actor.sample(aparams, obs, rng);
        double v = mlp_scalar(critic, cparams, obs, ws);
        StepOut out = env.step(s.u);
        buf.push_back({obs, std::move(s.y), out.reward, v, s.log_prob, out.done});
        reward_sum += out.reward;
        done = out.done;
        if (!done) obs = std::move(out.obs);
      }
      ++done_episodes;
      result.episodes.push_back({done_episodes, reward_sum});
      if (on_episode) on_episode(result.episodes.back());
    }

    compute_gae(buf, cfg.gamma, cfg.gae_lambda, adv, ret);
    normalize(adv);

    double sched = cfg.episodes > 0 ? static_cast<double>(done_episodes) / cfg.episodes : 1.0;
    double lr_scale = 1.0 + (cfg.lr_final_frac - 1.0) * sched;
    double ent_coef = cfg.entropy_coef * (1.0 + (cfg.entropy_final_frac - 1.0) * sched);
    double ls_ceil = std::isnan(cfg.log_std_anneal_to)
                         ? 2.0
                         : cfg.init_log_std +
                               (cfg.log_std_anneal_to - cfg.init_log_std) * sched;
    aopt.set_lr(cfg.lr_actor * lr_scale);
    copt.set_lr(cfg.lr_critic * lr_scale);

    std::vector<size_t> order(buf.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t start = 0; start < order.size(); start += cfg.minibatch) {
        size_t stop = std::min(order.size(), start + cfg.minibatch);
        SurrogateBatch mb;
        for (size_t k = start; k < stop; ++k) {
          const Transition& tr = buf[order[k]];
          mb.obs.push_back(tr.obs);
          mb.y.push_back(tr.y);
          mb.adv.push_back(adv[order[k]]);
          mb.logp_old.push_back(tr.logp);
        }
        agrad.assign(aparams.size(), 0.0);
        double loss = ppo_surrogate(actor, aparams, mb, clip, ent_coef, &agrad);
        if (!std::isfinite(loss)) throw DivergenceError("non-finite policy loss");
        clip_grad_norm(agrad, cfg.max_grad_norm);
        aopt.step(aparams, agrad);
        actor.clamp_log_std(aparams, ls_ceil);

        cgrad.assign(cparams.size(), 0.0);
        double vloss = 0.0;
        for (size_t k = start; k < stop; ++k) {
          const Transition& tr = buf[order[k]];
          double v = mlp_scalar(critic, cparams, tr.obs, ws);
          double diff = v - ret[order[k]];
          vloss += 0.5 * diff * diff;
          double dout = cfg.value_coef * diff / static_cast<double>(stop - start);
          critic.backward(cparams, ws, &dout, cgrad);
        }
        if (!std::isfinite(vloss)) throw DivergenceError("non-finite value loss");
        clip_grad_norm(cgrad, cfg.max_grad_norm);
        copt.step(cparams, cgrad);
      }
    }
    require_finite(aparams, "actor parameters");
    require_finite(cparams, "critic parameters");
  }

  result.actor_params = std::move(aparams);
  result.critic_params = std::move(cparams);
  return result;
}

TrainResult train_ddpg(RolloutEnv& env, const TrainConfig& cfg, std::uint64_t seed,
                       const EpisodeCallback& on_episode) {
  std::mt19937_64 rng(seed);
  GaussianPolicy actor(env.obs_dim(), env.act_dim(), cfg.hidden);
  std::vector<double> aparams = actor.init(rng, cfg.init_log_std);
  Mlp qnet(critic_dims(env.obs_dim() + env.act_dim(), cfg.hidden));
  std::vector<double> qparams = qnet.init(rng);
  std::vector<double> aparams_t = aparams, qparams_t = qparams;  // targets
  Adam aopt(static_cast<int>(aparams.size()), cfg.lr_actor);
  Adam qopt(static_cast<int>(qparams.size()), cfg.lr_critic);

  struct Replay {
    std::vector<double> obs, act, next_obs;
    double reward = 0.0;
    bool done = false;
  };
  std::vector<Replay> replay;
  replay.reserve(std::min(cfg.replay_capacity, cfg.episodes * 4096));
  size_t replay_head = 0;

  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> ubox(kEdgeEps, 1.0 - kEdgeEps);
  Mlp::Workspace ws, ws2;

  auto squash = [](double y) {
    double u = y >= 0.0 ? 1.0 / (1.0 + std::exp(-y)) : std::exp(y) / (1.0 + std::exp(y));
    return std::clamp(u, kEdgeEps, 1.0 - kEdgeEps);
  };
  auto policy_action = [&](const std::vector<double>& params, const std::vector<double>& obs,
                           std::vector<double>& u) {
    actor.net().forward(params, obs.data(), ws2);
    const std::vector<double>& mu = actor.net().output(ws2);
    u.resize(mu.size());
    for (size_t i = 0; i < mu.size(); ++i) u[i] = squash(mu[i]);
  };
  auto q_value = [&](const std::vector<double>& params, const std::vector<double>& obs,
                     const std::vector<double>& act, Mlp::Workspace& w) {
    std::vector<double> in(obs);
    in.insert(in.end(), act.begin(), act.end());
    qnet.forward(params, in.data(), w);
    return qnet.output(w)[0];
  };

  TrainResult result{actor, {}, {}, qnet.dims(), {}};
  long total_steps = 0;
  std::vector<double> qgrad, qscratch, agrad, u, u_next;
  std::vector<size_t> batch_idx;

  for (int episode = 0; episode < cfg.episodes; ++episode) {
    double frac = cfg.episodes > 1 ? static_cast<double>(episode) / (cfg.episodes - 1) : 1.0;
    double noise_std = cfg.noise_std_init + frac * (cfg.noise_std_final - cfg.noise_std_init);
    double lr_scale = 1.0 + (cfg.lr_final_frac - 1.0) * frac;
    aopt.set_lr(cfg.lr_actor * lr_scale);
    qopt.set_lr(cfg.lr_critic * lr_scale);

    std::vector<double> obs = env.reset();
    double reward_sum = 0.0;
    bool done = false;
    while (!done) {
      if (total_steps < cfg.warmup_steps) {
        u.resize(env.act_dim());
        for (double& x : u) x = ubox(rng);
      } else {
        actor.net().forward(aparams, obs.data(), ws2);
        const std::vector<double>& mu = actor.net().output(ws2);
        u.resize(mu.size());
        for (size_t i = 0; i < mu.size(); ++i) u[i] = squash(mu[i] + noise_std * n01(rng));
      }
      StepOut out = env.step(u);
      reward_sum += out.reward;

      Replay r{obs, u, out.done ? std::vector<double>(env.obs_dim(), 0.0) : out.obs, out.reward,
               out.done};
      if (static_cast<int>(replay.size()) < cfg.replay_capacity) {
        replay.push_back(std::move(r));
      } else {
        replay[replay_head] = std::move(r);
        replay_head = (replay_head + 1) % replay.size();
      }
      ++total_steps;
      done = out.done;
      if (!done) obs = std::move(out.obs);

      if (total_steps >= cfg.warmup_steps && total_steps % cfg.update_every == 0 &&
          static_cast<int>(replay.size()) >= cfg.batch_size) {
        std::uniform_int_distribution<size_t> pick(0, replay.size() - 1);
        batch_idx.resize(cfg.batch_size);
        for (size_t& ix : batch_idx) ix = pick(rng);

        // Critic: one-step TD targets from the target networks.
        qgrad.assign(qparams.size(), 0.0);
        for (size_t ix : batch_idx) {
          const Replay& tr = replay[ix];
          double target = tr.reward;
          if (!tr.done) {
            policy_action(aparams_t, tr.next_obs, u_next);
            target += cfg.gamma * q_value(qparams_t, tr.next_obs, u_next, ws);
          }
          double q = q_value(qparams, tr.obs, tr.act, ws);
          double dout = (q - target) / cfg.batch_size;
          if (!std::isfinite(dout)) throw DivergenceError("non-finite critic TD error");
          qnet.backward(qparams, ws, &dout, qgrad);
        }
        clip_grad_norm(qgrad, cfg.max_grad_norm);
        qopt.step(qparams, qgrad);

        // Actor: ascend Q(s, squash(mu(s))) through the frozen critic.
        agrad.assign(aparams.size(), 0.0);
        qscratch.assign(qparams.size(), 0.0);  // critic grads discarded here
        std::vector<double> din(env.obs_dim() + env.act_dim());
        for (size_t ix : batch_idx) {
          const Replay& tr = replay[ix];
          actor.net().forward(aparams, tr.obs.data(), ws2);
          const std::vector<double>& mu = actor.net().output(ws2);
          std::vector<double> a(mu.size());
          for (size_t i = 0; i < mu.size(); ++i) a[i] = squash(mu[i]);
          q_value(qparams, tr.obs, a, ws);
          double dout = -1.0 / cfg.batch_size;  // maximize mean Q
          qnet.backward(qparams, ws, &dout, qscratch, din.data());
          // chain through the logistic squash into the mean head
          std::vector<double> dmu(mu.size());
          for (size_t i = 0; i < mu.size(); ++i)
            dmu[i] = din[env.obs_dim() + i] * a[i] * (1.0 - a[i]);
          actor.net().backward(aparams, ws2, dmu.data(), agrad);
        }
        clip_grad_norm(agrad, cfg.max_grad_norm);
        aopt.step(aparams, agrad);

        // Polyak averaging of the targets.
        for (size_t i = 0; i < qparams.size(); ++i)
          qparams_t[i] += cfg.tau * (qparams[i] - qparams_t[i]);
        for (size_t i = 0; i < aparams.size(); ++i)
          aparams_t[i] += cfg.tau * (aparams[i] - aparams_t[i]);
      }
    }
    result.episodes.push_back({episode + 1, reward_sum});
    if (on_episode) on_episode(result.episodes.back());
    require_finite(aparams, "actor parameters");
    require_finite(qparams, "critic parameters");
  }

  result.actor_params = std::move(aparams);
  result.critic_params = std::move(qparams);
  return result;
}

}  // namespace

double ppo_surrogate(const GaussianPolicy& policy, const std::vector<double>& params,
                     const SurrogateBatch& batch, double clip_ratio, double entropy_coef,
                     std::vector<double>* grad) {
  const size_t n = batch.obs.size();
  if (batch.y.size() != n || batch.adv.size() != n || batch.logp_old.size() != n)
    throw std::invalid_argument("ppo_surrogate: ragged batch");
  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double lp = policy.log_prob(params, batch.obs[i], batch.y[i]);
    double a = batch.adv[i];
    double coef;  // dL_i / d lp
    if (clip_ratio > 0.0) {
      double lr = std::clamp(lp - batch.logp_old[i], -50.0, 50.0);
      bool lr_clamped = std::abs(lp - batch.logp_old[i]) > 50.0;
      double ratio = std::exp(lr);
      double unclipped = ratio * a;
      double clipped = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * a;
      loss += -std::min(unclipped, clipped) / n;
      bool use_unclipped = unclipped <= clipped;
      coef = (use_unclipped && !lr_clamped) ? -ratio * a / n : 0.0;
    } else {
      loss += -lp * a / n;
      coef = -a / n;
    }
    if (grad && coef != 0.0) policy.log_prob_backward(params, batch.obs[i], batch.y[i], coef, *grad);
  }
  loss -= entropy_coef * policy.entropy(params);
  if (grad) policy.entropy_backward(params, -entropy_coef, *grad);
  return loss;
}

TrainResult train(RolloutEnv& env, const TrainConfig& cfg, std::uint64_t seed,
                  const EpisodeCallback& on_episode) {
  if (cfg.algo == "ppo") return train_pg(env, cfg, seed, on_episode, true);
  if (cfg.algo == "a2c") return train_pg(env, cfg, seed, on_episode, false);
  if (cfg.algo == "ddpg") return train_ddpg(env, cfg, seed, on_episode);
  throw std::invalid_argument("train: unknown algorithm '" + cfg.algo + "'");
}

}  // namespace bidlab::learn
