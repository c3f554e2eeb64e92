#pragma once

// Action-to-bid mappings behind one interface h_mode(u):
//
//   dpmp     width shares + exponentially saturating price increments;
//            interior-feasible by construction, invertible, positive
//            Jacobian determinant on the non-redundant coordinates
//   sort     prices sorted ascending (many-to-one: K! preimages)
//   clip     running-maximum repair (atoms on price plateaus)
//   project  L2 projection onto the bounded monotone set via PAV
//            (rank-deficient on pooled boundaries)
//
// The dpmp map comes in two equivalent routes. The dual-positive route takes
// raw positive vectors (r, w): lambda = r / sum(r), Q = q_max * cumsum(lambda),
// s = cumsum(w), p = p_min + (p_max - p_min) * (1 - exp(-alpha * s)). The
// unit-box route, consumed by learners, takes u in (0,1)^{2K}:
// lambda = softmax(u_q), w = k_scale * u_p. Both reduce to NonRedundantCoords
// (lambda_bar, w), the coordinates on which the Jacobian determinant
//   q_max^{K-1} * (p_max - p_min)^K * alpha^K * prod_i exp(-alpha * s_i)
// is evaluated (alpha = 1 gives the plain form).

#include <string>
#include <vector>

#include "bidlab/bid_curve.hpp"

namespace bidlab::maps {

enum class HMode { dpmp, sort, clip, project };

const char* to_string(HMode mode);
HMode hmode_from_string(const std::string& name);

struct DpmpConfig {
  double q_max = 1000.0;
  double p_min = 0.0;
  double p_max = 1000.0;
  double k_scale = 1.0;  // scales cumsum(u_p) on the unit-box route
  double alpha = 1.0;    // saturation rate of the price map
  double eps = 1e-6;     // numerical-finiteness guard only, never feasibility
};

// raw positive parameters (r, w), scale-redundant in r
struct DualPositiveAction {
  std::vector<double> r;
  std::vector<double> w;
};

// learner-facing parameters, each component strictly inside (0,1)
struct UnitBoxAction {
  std::vector<double> u_q;
  std::vector<double> u_p;
};

// (lambda_bar, w): lambda_i > 0, sum(lambda_bar) < 1, w_i > 0
struct NonRedundantCoords {
  std::vector<double> lambda_bar;  // size K-1
  std::vector<double> w;           // size K
};

NonRedundantCoords coords_of(const DualPositiveAction& a, const DpmpConfig& cfg);
NonRedundantCoords coords_of(const UnitBoxAction& a, const DpmpConfig& cfg);

bids::StepBidCurve dpmp_forward(const NonRedundantCoords& z, const DpmpConfig& cfg);
bids::StepBidCurve dpmp_forward(const DualPositiveAction& a, const DpmpConfig& cfg);
bids::StepBidCurve dpmp_forward(const UnitBoxAction& a, const DpmpConfig& cfg);

// Recovers (lambda_bar, w) by differencing; requires an interior-feasible
// curve and throws std::domain_error otherwise (log singularity at p_max,
// zero widths, plateaus).
NonRedundantCoords dpmp_inverse(const bids::StepBidCurve& curve,
                                const DpmpConfig& cfg);

// strictly positive everywhere on the valid coordinate set
double dpmp_jacobian_det(const NonRedundantCoords& z, const DpmpConfig& cfg);

bids::StepBidCurve sort_map(const UnitBoxAction& a, double q_max, double p_max);
bids::StepBidCurve clip_map(const UnitBoxAction& a, double q_max, double p_max);
bids::StepBidCurve project_map(const UnitBoxAction& a, double q_max,
                               double p_max);

// Pool-Adjacent-Violators isotonic regression (nondecreasing, unit weights).
std::vector<double> isotonic_regression(std::vector<double> x);

// Exact L2 projection onto {lo <= p_1 <= ... <= p_K <= hi}: PAV then clip.
std::vector<double> project_bounded_monotone(std::vector<double> x, double lo,
                                             double hi);

bids::StepBidCurve h_mode(HMode mode, const UnitBoxAction& a,
                          const DpmpConfig& cfg);

}  // namespace bidlab::maps
