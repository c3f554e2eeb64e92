// Executable diagnostics for the three conditions a bid post-processing map
// must satisfy under policy-gradient training: the pushforward bid
// distribution carries no atoms (NC1), the map is injective on its
// non-redundant coordinates (NC2), and its Jacobian is nonsingular there
// (NC3). Checks run directly on sampled inputs; no trained policy is
// involved. The input distribution is instantiated as iid Uniform(0,1) and as
// a logistic-squashed standard Gaussian.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bidlab/param_maps.hpp"

namespace bidlab::nc {

enum class Verdict { pass, fail, not_applicable };
const char* to_string(Verdict v);

enum class InputLaw { uniform, squashed_gaussian };
const char* to_string(InputLaw law);
maps::UnitBoxAction sample_action(InputLaw law, int segments, std::mt19937_64& rng);

// Named measurable predicate on curves. Equality events use absolute
// tolerance 1e-12: genuine atoms arise through max/averaging arithmetic and
// reproduce doubles exactly, while continuous maps never land that close.
struct CurveEvent {
  std::string id;
  std::function<bool(const bids::StepBidCurve&)> test;
};

// p_{i+1} == p_i in 1-based labels; takes the 0-based right index i >= 1.
CurveEvent adjacent_prices_equal(int i, double tol = 1e-12);
CurveEvent price_at_cap(int i, double tol = 1e-12);
CurveEvent price_at_floor(int i, double tol = 1e-12);
// Every adjacent tie plus first-at-floor and last-at-cap.
std::vector<CurveEvent> standard_events(int segments);

struct AtomEstimate {
  std::string event;
  std::string law;
  long long hits = 0;
  long long samples = 0;
  double p_hat = 0.0;
  double wilson_lo = 0.0;  // 95% score interval
  double wilson_hi = 0.0;
};

// Wilson 95% score interval for hits successes out of samples trials.
void wilson95(long long hits, long long samples, double& lo, double& hi);

// Monte Carlo event frequencies under the law. Fewer than 100 samples is
// rejected as statistically meaningless (std::invalid_argument).
std::vector<AtomEstimate> estimate_atom_mass(maps::HMode mode, const maps::DpmpConfig& cfg,
                                             int segments, InputLaw law,
                                             const std::vector<CurveEvent>& events,
                                             long long n_samples, std::mt19937_64& rng);

struct MultiplicityResult {
  int distinct = 1;  // preimages found, counting the base point itself
  long long probes = 0;
};

// Searches for distinct inputs that map to the same curve as base (output
// equality within 1e-12 per component). SORT probes permutations of the price
// block, enumerating all K! when that fits in n_probes; the other modes use
// random single-coordinate, full-vector, and antisymmetric adjacent-pair
// perturbations. DPMP is probed on its non-redundant coordinates, where the
// injectivity claim lives; the baselines are probed on the price block, the
// only block they read.
MultiplicityResult preimage_multiplicity(maps::HMode mode, const maps::DpmpConfig& cfg,
                                         const maps::UnitBoxAction& base, long long n_probes,
                                         std::mt19937_64& rng);

struct RankProbe {
  bool degenerate = false;  // the FD stencil straddles a nondifferentiable kink
  double min_singular = 0.0;
  double max_singular = 0.0;
  double abs_det = 0.0;
  // Closed-form |det| for DPMP, NaN for the baselines.
  double analytic_abs_det = std::numeric_limits<double>::quiet_NaN();
};

// Central-difference Jacobian of the mode's non-redundant map. DPMP is probed
// as (lambda_bar, w) -> (Q_1..Q_{K-1}, p_1..p_K); the baselines ignore the
// quantity block entirely (fixed-width grids), so their map is the price
// branch u_p -> p. fd_step must lie in [1e-8, 1e-3]. Kinks of the piecewise
// maps are reported through the degenerate flag, never thrown.
RankProbe jacobian_rank_probe(maps::HMode mode, const maps::DpmpConfig& cfg,
                              const maps::UnitBoxAction& action, double fd_step);

// Central-difference directional derivative of the price branch along dir
// (one entry per segment). Baselines only: DPMP's price block has no
// direction with a vanishing derivative to exhibit.
std::vector<double> price_directional_derivative(maps::HMode mode, const maps::DpmpConfig& cfg,
                                                 const maps::UnitBoxAction& action,
                                                 const std::vector<double>& dir, double fd_step);

struct NcReport {
  std::string mapping_id;
  std::vector<AtomEstimate> nc1_atom_estimates;
  MultiplicityResult nc2_multiplicity;
  double nc3_min_abs_det = 0.0;
  double nc3_min_singular = 0.0;
  bool nc3_degenerate = false;
  Verdict nc1 = Verdict::not_applicable;
  Verdict nc2 = Verdict::not_applicable;
  Verdict nc3 = Verdict::not_applicable;
};

nlohmann::json to_json(const NcReport& r);

// Full battery for one mode: atom estimates for the standard events under
// both input laws, a multiplicity search from a mode-appropriate base point
// (an adjacent decreasing price pair is forced for CLIP/PROJECT so the
// dominated/pooled branch is exercised), and rank probes at random interior
// points plus the constructed point. NC1 passes on zero hits, NC2 on a
// singleton preimage, NC3 when no probe is degenerate or rank-deficient.
NcReport run_nc_checks(maps::HMode mode, const maps::DpmpConfig& cfg, int segments,
                       long long n_samples, std::uint64_t seed);

}  // namespace bidlab::nc
