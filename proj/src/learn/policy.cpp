#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bidlab/learn.hpp"

namespace bidlab::learn {

namespace {

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
constexpr double kEdgeEps = 1e-6;  // keeps executed actions strictly inside (0,1)
constexpr double kHalfLog2Pi = 0.91893853320467274178;

double softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double logistic(double y) {
  if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
  double e = std::exp(y);
  return e / (1.0 + e);
}

std::vector<int> full_dims(int obs_dim, int act_dim, const std::vector<int>& hidden) {
  std::vector<int> dims;
  dims.push_back(obs_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(act_dim);
  return dims;
}

}  // namespace

GaussianPolicy::GaussianPolicy(int obs_dim, int act_dim, const std::vector<int>& hidden)
    : net_(full_dims(obs_dim, act_dim, hidden)) {}

std::vector<double> GaussianPolicy::init(std::mt19937_64& rng, double init_log_std) const {
  // Small output gain keeps the initial mean near the box center.
  std::vector<double> p = net_.init(rng, 0.01);
  p.resize(param_count(), std::clamp(init_log_std, kLogStdMin, kLogStdMax));
  return p;
}

void GaussianPolicy::clamp_log_std(std::vector<double>& params, double ceil) const {
  double hi = std::min(ceil, kLogStdMax);
  for (int i = 0; i < act_dim(); ++i) {
    double& v = params[net_.param_count() + i];
    v = std::clamp(v, kLogStdMin, std::max(kLogStdMin, hi));
  }
}

GaussianPolicy::Sample GaussianPolicy::sample(const std::vector<double>& params,
                                              const std::vector<double>& obs,
                                              std::mt19937_64& rng) const {
  Mlp::Workspace ws;
  net_.forward(params, obs.data(), ws);
  const std::vector<double>& mu = net_.output(ws);
  for (double m : mu)
    if (!std::isfinite(m)) throw DivergenceError("non-finite policy mean");
  std::normal_distribution<double> n01(0.0, 1.0);

  Sample s;
  s.u.resize(act_dim());
  s.y.resize(act_dim());
  for (int i = 0; i < act_dim(); ++i) {
    double log_std = params[net_.param_count() + i];
    double sigma = std::exp(log_std);
    double z = n01(rng);
    double y = mu[i] + sigma * z;
    s.y[i] = y;
    s.u[i] = std::clamp(logistic(y), kEdgeEps, 1.0 - kEdgeEps);
    s.log_prob += -0.5 * z * z - log_std - kHalfLog2Pi + softplus(y) + softplus(-y);
  }
  return s;
}

std::vector<double> GaussianPolicy::act_deterministic(const std::vector<double>& params,
                                                      const std::vector<double>& obs) const {
  Mlp::Workspace ws;
  net_.forward(params, obs.data(), ws);
  const std::vector<double>& mu = net_.output(ws);
  std::vector<double> u(act_dim());
  for (int i = 0; i < act_dim(); ++i)
    u[i] = std::clamp(logistic(mu[i]), kEdgeEps, 1.0 - kEdgeEps);
  return u;
}

double GaussianPolicy::log_prob(const std::vector<double>& params, const std::vector<double>& obs,
                                const std::vector<double>& y) const {
  Mlp::Workspace ws;
  net_.forward(params, obs.data(), ws);
  const std::vector<double>& mu = net_.output(ws);
  double lp = 0.0;
  for (int i = 0; i < act_dim(); ++i) {
    double log_std = params[net_.param_count() + i];
    double z = (y[i] - mu[i]) * std::exp(-log_std);
    lp += -0.5 * z * z - log_std - kHalfLog2Pi + softplus(y[i]) + softplus(-y[i]);
  }
  return lp;
}

double GaussianPolicy::log_prob_u(const std::vector<double>& params,
                                  const std::vector<double>& obs,
                                  const std::vector<double>& u) const {
  std::vector<double> y(act_dim());
  for (int i = 0; i < act_dim(); ++i) {
    if (!(u[i] > 0.0) || !(u[i] < 1.0))
      throw std::domain_error("GaussianPolicy::log_prob_u: action outside the open unit box");
    y[i] = std::log(u[i]) - std::log1p(-u[i]);
  }
  return log_prob(params, obs, y);
}

void GaussianPolicy::log_prob_backward(const std::vector<double>& params,
                                       const std::vector<double>& obs,
                                       const std::vector<double>& y, double coef,
                                       std::vector<double>& dparams) const {
  Mlp::Workspace ws;
  net_.forward(params, obs.data(), ws);
  const std::vector<double>& mu = net_.output(ws);
  std::vector<double> dmu(act_dim());
  for (int i = 0; i < act_dim(); ++i) {
    double log_std = params[net_.param_count() + i];
    double z = (y[i] - mu[i]) * std::exp(-log_std);
    dmu[i] = coef * z * std::exp(-log_std);             // d lp / d mu = z / sigma
    dparams[net_.param_count() + i] += coef * (z * z - 1.0);  // d lp / d log_std
  }
  net_.backward(params, ws, dmu.data(), dparams);
}

double GaussianPolicy::entropy(const std::vector<double>& params) const {
  double h = act_dim() * (0.5 + kHalfLog2Pi);
  for (int i = 0; i < act_dim(); ++i) h += params[net_.param_count() + i];
  return h;
}

void GaussianPolicy::entropy_backward(const std::vector<double>& params, double coef,
                                      std::vector<double>& dparams) const {
  (void)params;
  for (int i = 0; i < act_dim(); ++i) dparams[net_.param_count() + i] += coef;
}

nlohmann::json GaussianPolicy::to_json(const std::vector<double>& params) const {
  std::vector<int> hidden(net_.dims().begin() + 1, net_.dims().end() - 1);
  return nlohmann::json{{"obs_dim", obs_dim()},
                        {"act_dim", act_dim()},
                        {"hidden", hidden},
                        {"params", params}};
}

GaussianPolicy GaussianPolicy::from_json(const nlohmann::json& j,
                                         std::vector<double>& params_out) {
  GaussianPolicy p(j.at("obs_dim").get<int>(), j.at("act_dim").get<int>(),
                   j.at("hidden").get<std::vector<int>>());
  params_out = j.at("params").get<std::vector<double>>();
  if (static_cast<int>(params_out.size()) != p.param_count())
    throw std::invalid_argument("GaussianPolicy::from_json: parameter count mismatch");
  return p;
}

}  // namespace bidlab::learn
