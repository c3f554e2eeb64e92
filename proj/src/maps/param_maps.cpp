#include "bidlab/param_maps.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bidlab::maps {

const char* to_string(HMode mode) {
  switch (mode) {
    case HMode::dpmp: return "dpmp";
    case HMode::sort: return "sort";
    case HMode::clip: return "clip";
    case HMode::project: return "project";
  }
  throw std::invalid_argument("unknown h_mode");
}

HMode hmode_from_string(const std::string& name) {
  if (name == "dpmp") return HMode::dpmp;
  if (name == "sort") return HMode::sort;
  if (name == "clip") return HMode::clip;
  if (name == "project") return HMode::project;
  throw std::invalid_argument("unknown h_mode: " + name);
}

namespace {

void check_cfg(const DpmpConfig& cfg) {
  if (!(cfg.q_max > 0.0)) throw std::domain_error("q_max must be positive");
  if (!(cfg.p_min < cfg.p_max)) throw std::domain_error("p_min must be below p_max");
  if (!(cfg.k_scale > 0.0)) throw std::domain_error("k_scale must be positive");
  if (!(cfg.alpha > 0.0)) throw std::domain_error("alpha must be positive");
}

void check_unit_box(const UnitBoxAction& a) {
  if (a.u_q.empty() || a.u_q.size() != a.u_p.size())
    throw std::invalid_argument("u_q and u_p must be nonempty and equal-sized");
  for (double v : a.u_q)
    if (!(v > 0.0) || !(v < 1.0))
      throw std::domain_error("u_q entry outside (0,1)");
  for (double v : a.u_p)
    if (!(v > 0.0) || !(v < 1.0))
      throw std::domain_error("u_p entry outside (0,1)");
}

void check_coords(const NonRedundantCoords& z) {
  if (z.w.empty() || z.lambda_bar.size() + 1 != z.w.size())
    throw std::invalid_argument("lambda_bar must have size K-1, w size K");
  double total = 0.0;
  for (double l : z.lambda_bar) {
    if (!(l > 0.0)) throw std::domain_error("lambda entry must be positive");
    total += l;
  }
  if (!(total < 1.0)) throw std::domain_error("lambda_bar must sum below 1");
  for (double v : z.w)
    if (!(v > 0.0)) throw std::domain_error("w entry must be positive");
}

std::vector<double> price_grid(std::vector<double> u_p, double p_max) {
  for (double& v : u_p) v *= p_max;
  return u_p;
}

bids::StepBidCurve fixed_width_curve(std::vector<double> prices, double q_max,
                                     double p_max) {
  const std::size_t k = prices.size();
  bids::StepBidCurve curve;
  curve.q_max = q_max;
  curve.p_min = 0.0;
  curve.p_max = p_max;
  curve.breakpoints.resize(k + 1);
  for (std::size_t i = 0; i <= k; ++i)
    curve.breakpoints[i] = q_max * static_cast<double>(i) / static_cast<double>(k);
  curve.prices = std::move(prices);
  return curve;
}

}  // namespace

NonRedundantCoords coords_of(const DualPositiveAction& a, const DpmpConfig& cfg) {
  check_cfg(cfg);
  if (a.r.empty() || a.r.size() != a.w.size())
    throw std::invalid_argument("r and w must be nonempty and equal-sized");
  double total = 0.0;
  for (double v : a.r) {
    if (!(v > 0.0)) throw std::domain_error("r entry must be positive");
    total += v;
  }
  for (double v : a.w)
    if (!(v > 0.0)) throw std::domain_error("w entry must be positive");
  NonRedundantCoords z;
  z.lambda_bar.resize(a.r.size() - 1);
  for (std::size_t i = 0; i + 1 < a.r.size(); ++i) z.lambda_bar[i] = a.r[i] / total;
  z.w = a.w;
  return z;
}

NonRedundantCoords coords_of(const UnitBoxAction& a, const DpmpConfig& cfg) {
  check_cfg(cfg);
  check_unit_box(a);
  const std::size_t k = a.u_q.size();
  const double m = *std::max_element(a.u_q.begin(), a.u_q.end());
  double total = 0.0;
  std::vector<double> e(k);
  for (std::size_t i = 0; i < k; ++i) {
    e[i] = std::exp(a.u_q[i] - m);
    total += e[i];
  }
  NonRedundantCoords z;
  z.lambda_bar.resize(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) z.lambda_bar[i] = e[i] / total;
  z.w.resize(k);
  for (std::size_t i = 0; i < k; ++i) z.w[i] = cfg.k_scale * a.u_p[i];
  return z;
}

bids::StepBidCurve dpmp_forward(const NonRedundantCoords& z, const DpmpConfig& cfg) {
  check_cfg(cfg);
  check_coords(z);
  const std::size_t k = z.w.size();
  const double dp = cfg.p_max - cfg.p_min;

  bids::StepBidCurve curve;
  curve.q_max = cfg.q_max;
  curve.p_min = cfg.p_min;
  curve.p_max = cfg.p_max;
  curve.breakpoints.resize(k + 1);
  curve.breakpoints[0] = 0.0;
  double lam_acc = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    lam_acc += z.lambda_bar[i];
    curve.breakpoints[i + 1] = cfg.q_max * lam_acc;
  }
  curve.breakpoints[k] = cfg.q_max;  // shares sum to one by construction

  curve.prices.resize(k);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    s += z.w[i];
    curve.prices[i] = cfg.p_min - dp * std::expm1(-cfg.alpha * s);
  }
  return curve;
}

bids::StepBidCurve dpmp_forward(const DualPositiveAction& a, const DpmpConfig& cfg) {
  return dpmp_forward(coords_of(a, cfg), cfg);
}

bids::StepBidCurve dpmp_forward(const UnitBoxAction& a, const DpmpConfig& cfg) {
  return dpmp_forward(coords_of(a, cfg), cfg);
}

NonRedundantCoords dpmp_inverse(const bids::StepBidCurve& curve,
                                const DpmpConfig& cfg) {
  check_cfg(cfg);
  const auto rep = bids::validate(curve);
  if (!rep.interior)
    throw std::domain_error("dpmp_inverse requires an interior-feasible curve");
  const std::size_t k = curve.prices.size();
  const double dp = cfg.p_max - cfg.p_min;

  NonRedundantCoords z;
  z.lambda_bar.resize(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i)
    z.lambda_bar[i] =
        (curve.breakpoints[i + 1] - curve.breakpoints[i]) / curve.q_max;
  z.w.resize(k);
  double prev_s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double ratio = (curve.prices[i] - cfg.p_min) / dp;
    if (!(ratio > 0.0) || !(ratio < 1.0))
      throw std::domain_error("price outside (p_min, p_max): log singularity");
    const double s = -std::log1p(-ratio) / cfg.alpha;
    z.w[i] = s - prev_s;
    if (!(z.w[i] > 0.0))
      throw std::domain_error("price plateau: zero increment at segment " +
                              std::to_string(i));
    prev_s = s;
  }
  return z;
}

double dpmp_jacobian_det(const NonRedundantCoords& z, const DpmpConfig& cfg) {
  check_cfg(cfg);
  check_coords(z);
  const std::size_t k = z.w.size();
  const double dp = cfg.p_max - cfg.p_min;
  double s_total = 0.0;  // sum of cumulative sums: sum_i (K - i) * w_i
  for (std::size_t i = 0; i < k; ++i)
    s_total += static_cast<double>(k - i) * z.w[i];
  const double log_det = static_cast<double>(k - 1) * std::log(cfg.q_max) +
                         static_cast<double>(k) * std::log(dp) +
                         static_cast<double>(k) * std::log(cfg.alpha) -
                         cfg.alpha * s_total;
  return std::exp(log_det);
}

bids::StepBidCurve sort_map(const UnitBoxAction& a, double q_max, double p_max) {
  check_unit_box(a);
  auto prices = price_grid(a.u_p, p_max);
  std::sort(prices.begin(), prices.end());
  return fixed_width_curve(std::move(prices), q_max, p_max);
}

bids::StepBidCurve clip_map(const UnitBoxAction& a, double q_max, double p_max) {
  check_unit_box(a);
  auto prices = price_grid(a.u_p, p_max);
  for (std::size_t i = 1; i < prices.size(); ++i)
    prices[i] = std::max(prices[i], prices[i - 1]);
  return fixed_width_curve(std::move(prices), q_max, p_max);
}

bids::StepBidCurve project_map(const UnitBoxAction& a, double q_max,
                               double p_max) {
  check_unit_box(a);
  auto prices = project_bounded_monotone(price_grid(a.u_p, p_max), 0.0, p_max);
  return fixed_width_curve(std::move(prices), q_max, p_max);
}

std::vector<double> isotonic_regression(std::vector<double> x) {
  // pool-adjacent-violators with a block stack; each block stores the mean
  // of the inputs it absorbed
  const std::size_t n = x.size();
  std::vector<double> mean(n);
  std::vector<std::size_t> count(n);
  std::size_t top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mean[top] = x[i];
    count[top] = 1;
    ++top;
    while (top > 1 && mean[top - 2] >= mean[top - 1]) {
      const double total = mean[top - 2] * static_cast<double>(count[top - 2]) +
                           mean[top - 1] * static_cast<double>(count[top - 1]);
      count[top - 2] += count[top - 1];
      mean[top - 2] = total / static_cast<double>(count[top - 2]);
      --top;
    }
  }
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t b = 0; b < top; ++b)
    out.insert(out.end(), count[b], mean[b]);
  return out;
}

std::vector<double> project_bounded_monotone(std::vector<double> x, double lo,
                                             double hi) {
  auto p = isotonic_regression(std::move(x));
  for (double& v : p) v = std::clamp(v, lo, hi);
  return p;
}

bids::StepBidCurve h_mode(HMode mode, const UnitBoxAction& a,
                          const DpmpConfig& cfg) {
  switch (mode) {
    case HMode::dpmp: return dpmp_forward(a, cfg);
    case HMode::sort: return sort_map(a, cfg.q_max, cfg.p_max);
    case HMode::clip: return clip_map(a, cfg.q_max, cfg.p_max);
    case HMode::project: return project_map(a, cfg.q_max, cfg.p_max);
  }
  throw std::invalid_argument("unknown h_mode");
}

}  // namespace bidlab::maps
