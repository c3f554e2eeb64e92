#pragma once

// Stepwise supply-bid curves. A curve with K segments is the pair (Q, p):
// cumulative breakpoints 0 = Q_0 <= Q_1 <= ... <= Q_K <= q_max and segment
// prices p_1 <= ... <= p_K inside [p_min, p_max]. Segment i covers the
// half-open quantity interval (Q_{i-1}, Q_i] and offers price p_i.

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace bidlab::bids {

struct StepBidCurve {
  std::vector<double> breakpoints;  // size K+1, breakpoints[0] == 0
  std::vector<double> prices;       // size K
  double q_max = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;

  int segments() const { return static_cast<int>(prices.size()); }
};

// closed: curve lies in the feasible set (weak monotonicity, closed bounds).
// interior: strictly increasing breakpoints and prices, prices strictly
// between p_min and p_max. interior implies closed.
struct FeasibilityReport {
  bool closed = false;
  bool interior = false;
  std::vector<std::string> violations;  // empty iff closed
};

// Throws std::invalid_argument on structural errors (size mismatch, K == 0).
// Value violations (including non-finite entries) are reported, not thrown.
FeasibilityReport validate(const StepBidCurve& curve);

// Price at cumulative quantity q for a closed-feasible curve. Segments are
// half-open on the left, p(0) := p_1, and zero-width segments are skipped.
// Throws std::domain_error when q < 0 or q > Q_K.
double evaluate(const StepBidCurve& curve, double q);

// JSON form: {"breakpoints":[...],"prices":[...],"q_max":x,"p_min":x,"p_max":x}.
// Round-trips preserve double values exactly.
nlohmann::json to_json(const StepBidCurve& curve);
StepBidCurve curve_from_json(const nlohmann::json& j);

}  // namespace bidlab::bids
