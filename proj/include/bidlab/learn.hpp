// Small dense-network policy-gradient stack: flat-parameter MLPs with manual
// backprop on the vector kernels, Adam, a squashed-Gaussian policy over the
// open unit box, and single-threaded PPO / A2C / DDPG trainers driving any
// episodic environment through the RolloutEnv interface. Everything is
// deterministic given the seed.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bidlab::learn {

// Fully connected network, tanh hidden activations, linear output. All
// parameters live in one caller-owned flat vector laid out per layer as
// row-major W then b, so optimizers and finite differencing can treat the
// model as a plain R^n point.
class Mlp {
 public:
  explicit Mlp(std::vector<int> dims);

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  int param_count() const { return param_count_; }
  const std::vector<int>& dims() const { return dims_; }

  // Xavier-uniform init; final-layer weights additionally scaled by
  // out_gain (small values keep initial outputs near zero).
  std::vector<double> init(std::mt19937_64& rng, double out_gain = 1.0) const;

  // Per-layer activations cached by forward for use in backward.
  struct Workspace {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output
  };

  void forward(const std::vector<double>& params, const double* x, Workspace& ws) const;
  const std::vector<double>& output(const Workspace& ws) const { return ws.acts.back(); }

  // Backprop of dL/d(output) into dL/d(params) (accumulated, not assigned)
  // and optionally dL/d(input). Requires the workspace of the matching
  // forward call.
  void backward(const std::vector<double>& params, const Workspace& ws, const double* dout,
                std::vector<double>& dparams, double* dinput = nullptr) const;

 private:
  std::vector<int> dims_;
  std::vector<int> w_off_, b_off_;  // per-layer offsets into the flat vector
  int param_count_ = 0;
};

// Adam with bias correction. lr == 0 leaves parameters bitwise unchanged.
class Adam {
 public:
  Adam(int n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grad);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

// Scales grad in place so its global L2 norm is at most max_norm; returns the
// pre-clip norm. max_norm <= 0 disables clipping.
double clip_grad_norm(std::vector<double>& grad, double max_norm);

// Diagonal Gaussian in an unbounded pre-squash space, pushed through an
// elementwise logistic onto (0,1)^act_dim. The mean comes from an MLP; one
// state-independent log-std vector (clamped to [-5, 2]) is appended to the
// flat parameter vector after the MLP weights. log_prob corrects for the
// squash exactly, so densities integrate to one over the unit box.
class GaussianPolicy {
 public:
  GaussianPolicy(int obs_dim, int act_dim, const std::vector<int>& hidden);

  int obs_dim() const { return net_.in_dim(); }
  int act_dim() const { return net_.out_dim(); }
  int param_count() const { return net_.param_count() + act_dim(); }
  const Mlp& net() const { return net_; }

  std::vector<double> init(std::mt19937_64& rng, double init_log_std) const;
  // Clamps the log_std block into [-5, min(ceil, 2)]; the default ceiling is
  // the static upper bound.
  void clamp_log_std(std::vector<double>& params, double ceil = 2.0) const;

  struct Sample {
    std::vector<double> u;  // squashed action in (0,1)^A, clamped 1e-6 away from the edges
    std::vector<double> y;  // pre-squash draw; stored for later log_prob/grad
    double log_prob = 0.0;
  };

  Sample sample(const std::vector<double>& params, const std::vector<double>& obs,
                std::mt19937_64& rng) const;
  std::vector<double> act_deterministic(const std::vector<double>& params,
                                        const std::vector<double>& obs) const;

  // log pi(u|obs) for the action whose pre-squash value is y.
  double log_prob(const std::vector<double>& params, const std::vector<double>& obs,
                  const std::vector<double>& y) const;
  // Same, recovering y = logit(u); u must be inside the open box.
  double log_prob_u(const std::vector<double>& params, const std::vector<double>& obs,
                    const std::vector<double>& u) const;

  // Accumulates coef * d log pi(y|obs) / d params into dparams.
  void log_prob_backward(const std::vector<double>& params, const std::vector<double>& obs,
                         const std::vector<double>& y, double coef,
                         std::vector<double>& dparams) const;

  // Pre-squash Gaussian entropy (analytic) and its gradient contribution.
  double entropy(const std::vector<double>& params) const;
  void entropy_backward(const std::vector<double>& params, double coef,
                        std::vector<double>& dparams) const;

  nlohmann::json to_json(const std::vector<double>& params) const;
  static GaussianPolicy from_json(const nlohmann::json& j, std::vector<double>& params_out);

 private:
  Mlp net_;
};

// Minimal episodic environment contract used by the trainers.
struct StepOut {
  std::vector<double> obs;  // ignored when done
  double reward = 0.0;
  bool done = false;
};

class RolloutEnv {
 public:
  virtual ~RolloutEnv() = default;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual std::vector<double> reset() = 0;
  virtual StepOut step(const std::vector<double>& action) = 0;
};

struct TrainConfig {
  std::string algo = "ppo";  // ppo | a2c | ddpg
  int episodes = 1000;
  std::vector<int> hidden = {64, 64};
  double gamma = 0.99;
  double lr_actor = 3e-4;
  double lr_critic = 1e-3;
  double max_grad_norm = 0.5;
  double init_log_std = -0.7;

  // Linear schedules over the episode budget: value at episode e is
  // base * (1 + (final_frac - 1) * e / episodes). 1.0 keeps them constant.
  double lr_final_frac = 1.0;
  double entropy_final_frac = 1.0;

  // Exploration-width ceiling for PPO/A2C, annealed linearly from
  // init_log_std to this value over the episode budget. The learned log_std
  // may sink below the ceiling on its own; the ceiling only caps it from
  // above. NaN disables the schedule (ceiling stays at the static clamp max).
  double log_std_anneal_to = std::numeric_limits<double>::quiet_NaN();

  // PPO / A2C
  int rollout_episodes = 10;  // episodes gathered per update
  int epochs = 4;             // gradient passes per rollout (A2C forces 1)
  int minibatch = 256;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;  // unused by A2C
  double entropy_coef = 1e-3;
  double value_coef = 0.5;

  // DDPG
  int replay_capacity = 100000;
  int batch_size = 128;
  double tau = 0.005;
  double noise_std_init = 0.6;
  double noise_std_final = 0.05;
  int warmup_steps = 2000;  // uniform-random actions before learning starts
  int update_every = 2;     // environment steps per gradient update
};

// Raised when losses, gradients, or parameters stop being finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpisodeStats {
  int episode = 0;       // 1-based
  double reward_sum = 0; // scaled rewards as seen by the learner
};

struct TrainResult {
  GaussianPolicy policy;       // actor (DDPG uses log_std slots for noise bookkeeping)
  std::vector<double> actor_params;
  std::vector<double> critic_params;
  std::vector<int> critic_dims;
  std::vector<EpisodeStats> episodes;
};

using EpisodeCallback = std::function<void(const EpisodeStats&)>;

// Dispatches on cfg.algo. The callback fires after every finished episode,
// including evaluation-free training episodes; it may be empty.
TrainResult train(RolloutEnv& env, const TrainConfig& cfg, std::uint64_t seed,
                  const EpisodeCallback& on_episode = {});

// Fixed batch for the clipped-surrogate objective; one row per transition.
struct SurrogateBatch {
  std::vector<std::vector<double>> obs;
  std::vector<std::vector<double>> y;  // pre-squash actions as sampled
  std::vector<double> adv;             // normalized advantages
  std::vector<double> logp_old;        // log-probs at collection time
};

// Mean clipped policy loss minus entropy_coef * entropy:
//   L = -mean_i min(r_i * A_i, clamp(r_i, 1 +- clip) * A_i) - c_H * H(params)
// with r_i = exp(logp(params) - logp_old), log-ratio clamped to [-50, 50] so
// the loss stays finite (the clamp zeroes the gradient where active).
// clip_ratio <= 0 selects the unclipped policy-gradient loss -mean(logp * A).
// If grad is non-null the gradient is accumulated into it.
double ppo_surrogate(const GaussianPolicy& policy, const std::vector<double>& params,
                     const SurrogateBatch& batch, double clip_ratio, double entropy_coef,
                     std::vector<double>* grad);

// Max relative error between analytic_grad and central finite differences of
// loss at params, over n_coords randomly chosen coordinates.
struct GradCheckResult {
  double max_rel_err = 0.0;
  int coords_checked = 0;
};
GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& loss,
                           const std::vector<double>& params,
                           const std::vector<double>& analytic_grad, int n_coords, double h,
                           std::mt19937_64& rng);

}  // namespace bidlab::learn
