#include "bidlab/bid_curve.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace bidlab::bids {

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace

FeasibilityReport validate(const StepBidCurve& curve) {
  const std::size_t k = curve.prices.size();
  if (k == 0) throw std::invalid_argument("curve has no segments");
  if (curve.breakpoints.size() != k + 1)
    throw std::invalid_argument("breakpoints size must be prices size + 1");

  FeasibilityReport rep;
  auto flag = [&rep](std::string msg) { rep.violations.push_back(std::move(msg)); };

  if (!all_finite(curve.breakpoints) || !all_finite(curve.prices) ||
      !std::isfinite(curve.q_max) || !std::isfinite(curve.p_min) ||
      !std::isfinite(curve.p_max)) {
    flag("non-finite value");
    return rep;  // closed=false, interior=false
  }
  if (curve.q_max <= 0.0) flag("q_max must be positive");
  if (curve.p_min >= curve.p_max) flag("p_min must be below p_max");
  if (curve.breakpoints[0] != 0.0) flag("breakpoints[0] must be 0");
  for (std::size_t i = 1; i <= k; ++i)
    if (curve.breakpoints[i] < curve.breakpoints[i - 1])
      flag("breakpoints[" + std::to_string(i) + "] decreases");
  if (curve.breakpoints[k] > curve.q_max) flag("breakpoints[K] exceeds q_max");
  for (std::size_t i = 0; i < k; ++i) {
    if (curve.prices[i] < curve.p_min)
      flag("prices[" + std::to_string(i) + "] below p_min");
    if (curve.prices[i] > curve.p_max)
      flag("prices[" + std::to_string(i) + "] above p_max");
    if (i > 0 && curve.prices[i] < curve.prices[i - 1])
      flag("prices[" + std::to_string(i) + "] decreases");
  }
  rep.closed = rep.violations.empty();
  if (!rep.closed) return rep;

  rep.interior = true;
  for (std::size_t i = 1; i <= k && rep.interior; ++i)
    if (curve.breakpoints[i] <= curve.breakpoints[i - 1]) rep.interior = false;
  for (std::size_t i = 1; i < k && rep.interior; ++i)
    if (curve.prices[i] <= curve.prices[i - 1]) rep.interior = false;
  if (rep.interior &&
      (curve.prices[0] <= curve.p_min || curve.prices[k - 1] >= curve.p_max))
    rep.interior = false;
  return rep;
}

double evaluate(const StepBidCurve& curve, double q) {
  const auto& b = curve.breakpoints;
  if (!(q >= 0.0) || q > b.back())
    throw std::domain_error("quantity outside [0, Q_K]");
  if (q == 0.0) return curve.prices[0];
  // first breakpoint >= q; all earlier ones are < q, so the half-open
  // interval (Q_{i-1}, Q_i] containing q is found and zero-width segments
  // can never be selected
  auto it = std::lower_bound(b.begin() + 1, b.end(), q);
  return curve.prices[static_cast<std::size_t>(it - b.begin()) - 1];
}

nlohmann::json to_json(const StepBidCurve& curve) {
  return nlohmann::json{{"breakpoints", curve.breakpoints},
                        {"prices", curve.prices},
                        {"q_max", curve.q_max},
                        {"p_min", curve.p_min},
                        {"p_max", curve.p_max}};
}

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end())
    throw std::invalid_argument(std::string("missing field: ") + name);
  return *it;
}

std::vector<double> number_array(const nlohmann::json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_array())
    throw std::invalid_argument(std::string("field is not an array: ") + name);
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number())
      throw std::invalid_argument(std::string("non-numeric entry in: ") + name);
    out.push_back(e.get<double>());
  }
  return out;
}

double number(const nlohmann::json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_number())
    throw std::invalid_argument(std::string("field is not a number: ") + name);
  return v.get<double>();
}

}  // namespace

StepBidCurve curve_from_json(const nlohmann::json& j) {
  StepBidCurve c;
  c.breakpoints = number_array(j, "breakpoints");
  c.prices = number_array(j, "prices");
  c.q_max = number(j, "q_max");
  c.p_min = number(j, "p_min");
  c.p_max = number(j, "p_max");
  if (c.prices.empty() || c.breakpoints.size() != c.prices.size() + 1)
    throw std::invalid_argument("inconsistent breakpoints/prices sizes");
  return c;
}

}  // namespace bidlab::bids
