#include "bidlab/nc_verify.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

namespace bidlab::nc {

namespace {

constexpr double kCurveTol = 1e-12;
constexpr double kWilsonZ = 1.959963984540054;  // 97.5% normal quantile

bool curves_equal(const bids::StepBidCurve& a, const bids::StepBidCurve& b) {
  if (a.prices.size() != b.prices.size()) return false;
  for (std::size_t i = 0; i < a.breakpoints.size(); ++i)
    if (std::fabs(a.breakpoints[i] - b.breakpoints[i]) > kCurveTol) return false;
  for (std::size_t i = 0; i < a.prices.size(); ++i)
    if (std::fabs(a.prices[i] - b.prices[i]) > kCurveTol) return false;
  return true;
}

std::vector<double> flatten(const maps::NonRedundantCoords& z) {
  std::vector<double> x(z.lambda_bar);
  x.insert(x.end(), z.w.begin(), z.w.end());
  return x;
}

maps::NonRedundantCoords unflatten(const std::vector<double>& x, int segments) {
  maps::NonRedundantCoords z;
  z.lambda_bar.assign(x.begin(), x.begin() + segments - 1);
  z.w.assign(x.begin() + segments - 1, x.end());
  return z;
}

bool valid_z(const maps::NonRedundantCoords& z) {
  double total = 0.0;
  for (double v : z.lambda_bar) {
    if (!(v > 0.0)) return false;
    total += v;
  }
  if (!(total < 1.0 - 1e-12)) return false;
  for (double v : z.w)
    if (!(v > 0.0)) return false;
  return true;
}

double clamp_unit(double v) { return std::clamp(v, 1e-9, 1.0 - 1e-9); }

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Sizes here
// are at most 2K-1, so the classic O(n^3)-per-sweep scheme is plenty.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const int n = static_cast<int>(a.size());
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (int i = 0; i < n; ++i) {
      diag += a[i][i] * a[i][i];
      for (int j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    }
    if (off <= 1e-28 * (diag + 1e-300)) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::fabs(a[p][q]) <= 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = a[p][k] = c * akp - s * akq;
          a[k][q] = a[q][k] = s * akp + c * akq;
        }
        const double app = a[p][p], aqq = a[q][q], apq = a[p][q];
        a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        a[p][q] = a[q][p] = 0.0;
      }
    }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a[i][i];
  return eig;
}

double lu_abs_det(std::vector<std::vector<double>> m) {
  const int n = static_cast<int>(m.size());
  double det = 1.0;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int r = k + 1; r < n; ++r)
      if (std::fabs(m[r][k]) > std::fabs(m[piv][k])) piv = r;
    if (std::fabs(m[piv][k]) < 1e-300) return 0.0;
    std::swap(m[piv], m[k]);
    det *= m[k][k];
    for (int r = k + 1; r < n; ++r) {
      const double f = m[r][k] / m[k][k];
      for (int c = k; c < n; ++c) m[r][c] -= f * m[k][c];
    }
  }
  return std::fabs(det);
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::not_applicable: return "not-applicable";
  }
  return "?";
}

const char* to_string(InputLaw law) {
  switch (law) {
    case InputLaw::uniform: return "uniform";
    case InputLaw::squashed_gaussian: return "squashed_gaussian";
  }
  return "?";
}

maps::UnitBoxAction sample_action(InputLaw law, int segments, std::mt19937_64& rng) {
  if (segments < 1) throw std::invalid_argument("segments must be positive");
  auto draw = [&rng, law]() {
    double v = 0.0;
    if (law == InputLaw::uniform) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      do {
        v = u(rng);
      } while (!(v > 0.0));
    } else {
      std::normal_distribution<double> n(0.0, 1.0);
      do {
        v = 1.0 / (1.0 + std::exp(-n(rng)));
      } while (!(v > 0.0 && v < 1.0));
    }
    return v;
  };
  maps::UnitBoxAction a;
  a.u_q.resize(segments);
  a.u_p.resize(segments);
  for (double& v : a.u_q) v = draw();
  for (double& v : a.u_p) v = draw();
  return a;
}

CurveEvent adjacent_prices_equal(int i, double tol) {
  if (i < 1) throw std::invalid_argument("adjacent pair needs right index >= 1");
  CurveEvent e;
  e.id = "p" + std::to_string(i + 1) + "==p" + std::to_string(i);
  e.test = [i, tol](const bids::StepBidCurve& c) {
    if (i >= c.segments()) return false;
    return std::fabs(c.prices[i] - c.prices[i - 1]) <= tol;
  };
  return e;
}

CurveEvent price_at_cap(int i, double tol) {
  CurveEvent e;
  e.id = "p" + std::to_string(i + 1) + "==p_max";
  e.test = [i, tol](const bids::StepBidCurve& c) {
    if (i < 0 || i >= c.segments()) return false;
    return std::fabs(c.prices[i] - c.p_max) <= tol;
  };
  return e;
}

CurveEvent price_at_floor(int i, double tol) {
  CurveEvent e;
  e.id = "p" + std::to_string(i + 1) + "==p_min";
  e.test = [i, tol](const bids::StepBidCurve& c) {
    if (i < 0 || i >= c.segments()) return false;
    return std::fabs(c.prices[i] - c.p_min) <= tol;
  };
  return e;
}

std::vector<CurveEvent> standard_events(int segments) {
  if (segments < 2) throw std::invalid_argument("standard events need at least two segments");
  std::vector<CurveEvent> out;
  for (int i = 1; i < segments; ++i) out.push_back(adjacent_prices_equal(i));
  out.push_back(price_at_floor(0));
  out.push_back(price_at_cap(segments - 1));
  return out;
}

void wilson95(long long hits, long long samples, double& lo, double& hi) {
  if (samples <= 0 || hits < 0 || hits > samples)
    throw std::invalid_argument("wilson95 needs 0 <= hits <= samples, samples > 0");
  const double n = static_cast<double>(samples);
  const double p = static_cast<double>(hits) / n;
  const double z2 = kWilsonZ * kWilsonZ;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      kWilsonZ * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  lo = hits == 0 ? 0.0 : std::max(0.0, center - half);
  hi = hits == samples ? 1.0 : std::min(1.0, center + half);
}

std::vector<AtomEstimate> estimate_atom_mass(maps::HMode mode, const maps::DpmpConfig& cfg,
                                             int segments, InputLaw law,
                                             const std::vector<CurveEvent>& events,
                                             long long n_samples, std::mt19937_64& rng) {
  if (n_samples < 100)
    throw std::invalid_argument("atom estimation needs at least 100 samples");
  std::vector<long long> hits(events.size(), 0);
  for (long long s = 0; s < n_samples; ++s) {
    const auto a = sample_action(law, segments, rng);
    const auto curve = maps::h_mode(mode, a, cfg);
    for (std::size_t e = 0; e < events.size(); ++e)
      if (events[e].test(curve)) ++hits[e];
  }
  std::vector<AtomEstimate> out(events.size());
  for (std::size_t e = 0; e < events.size(); ++e) {
    out[e].event = events[e].id;
    out[e].law = to_string(law);
    out[e].hits = hits[e];
    out[e].samples = n_samples;
    out[e].p_hat = static_cast<double>(hits[e]) / static_cast<double>(n_samples);
    wilson95(hits[e], n_samples, out[e].wilson_lo, out[e].wilson_hi);
  }
  return out;
}

MultiplicityResult preimage_multiplicity(maps::HMode mode, const maps::DpmpConfig& cfg,
                                         const maps::UnitBoxAction& base, long long n_probes,
                                         std::mt19937_64& rng) {
  const int segments = static_cast<int>(base.u_p.size());
  const auto base_curve = maps::h_mode(mode, base, cfg);
  MultiplicityResult res;
  int found = 0;

  if (mode == maps::HMode::sort) {
    double fact = 1.0;
    for (int i = 2; i <= segments; ++i) fact *= i;
    std::vector<int> perm(segments);
    for (int i = 0; i < segments; ++i) perm[i] = i;
    auto is_identity = [&perm]() {
      for (std::size_t i = 0; i < perm.size(); ++i)
        if (perm[i] != static_cast<int>(i)) return false;
      return true;
    };
    auto probe_perm = [&]() {
      maps::UnitBoxAction a = base;
      for (int i = 0; i < segments; ++i) a.u_p[i] = base.u_p[perm[i]];
      ++res.probes;
      if (curves_equal(maps::h_mode(mode, a, cfg), base_curve)) ++found;
    };
    if (segments <= 12 && fact - 1.0 <= static_cast<double>(n_probes)) {
      do {
        if (!is_identity()) probe_perm();
      } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
      std::set<std::vector<int>> seen;
      for (long long t = 0; t < n_probes; ++t) {
        std::shuffle(perm.begin(), perm.end(), rng);
        if (is_identity() || !seen.insert(perm).second) continue;
        probe_perm();
      }
    }
    res.distinct = found + 1;
    return res;
  }

  std::uniform_real_distribution<double> mag(0.25e-3, 1e-3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  if (mode == maps::HMode::dpmp) {
    const auto z0 = maps::coords_of(base, cfg);
    const auto x0 = flatten(z0);
    const auto curve0 = maps::dpmp_forward(z0, cfg);
    const int dim = static_cast<int>(x0.size());
    for (long long t = 0; t < n_probes; ++t) {
      std::vector<double> delta(dim, 0.0);
      switch (t % 3) {
        case 0: {
          const int j = static_cast<int>((t / 3) % dim);
          delta[j] = (coin(rng) ? 1.0 : -1.0) * mag(rng);
          break;
        }
        case 1:
          for (double& d : delta) d = 0.5e-3 * gauss(rng);
          break;
        default: {
          const int j = segments - 1 + static_cast<int>((t / 3) % (segments - 1));
          const double step = mag(rng);
          delta[j] = step;
          delta[j + 1] = -step;
          break;
        }
      }
      // shrink until the perturbed point is a valid coordinate vector
      bool ok = false;
      maps::NonRedundantCoords z;
      for (int shrink = 0; shrink < 6 && !ok; ++shrink) {
        std::vector<double> x = x0;
        double moved = 0.0;
        for (int j = 0; j < dim; ++j) {
          x[j] += delta[j];
          moved = std::max(moved, std::fabs(delta[j]));
        }
        z = unflatten(x, segments);
        if (moved > 1e-15 && valid_z(z)) {
          ok = true;
        } else {
          for (double& d : delta) d *= 0.5;
        }
      }
      if (!ok) continue;
      ++res.probes;
      if (curves_equal(maps::dpmp_forward(z, cfg), curve0)) ++found;
    }
    res.distinct = found + 1;
    return res;
  }

  // clip / project: the quantity block is a fixed grid, so perturb prices only
  for (long long t = 0; t < n_probes; ++t) {
    maps::UnitBoxAction a = base;
    switch (t % 3) {
      case 0: {
        const int j = static_cast<int>((t / 3) % segments);
        a.u_p[j] = clamp_unit(a.u_p[j] + (coin(rng) ? 1.0 : -1.0) * mag(rng));
        break;
      }
      case 1:
        for (double& v : a.u_p) v = clamp_unit(v + 0.5e-3 * gauss(rng));
        break;
      default: {
        const int j = static_cast<int>((t / 3) % (segments - 1));
        const double step = mag(rng);
        a.u_p[j] = clamp_unit(a.u_p[j] + step);
        a.u_p[j + 1] = clamp_unit(a.u_p[j + 1] - step);
        break;
      }
    }
    double moved = 0.0;
    for (int j = 0; j < segments; ++j)
      moved = std::max(moved, std::fabs(a.u_p[j] - base.u_p[j]));
    if (moved <= 1e-15) continue;
    ++res.probes;
    if (curves_equal(maps::h_mode(mode, a, cfg), base_curve)) ++found;
  }
  res.distinct = found + 1;
  return res;
}

RankProbe jacobian_rank_probe(maps::HMode mode, const maps::DpmpConfig& cfg,
                              const maps::UnitBoxAction& action, double fd_step) {
  if (!(fd_step >= 1e-8 && fd_step <= 1e-3))
    throw std::invalid_argument("fd_step must lie in [1e-8, 1e-3]");
  const int segments = static_cast<int>(action.u_p.size());
  RankProbe probe;

  std::vector<double> x0;
  std::function<std::vector<double>(const std::vector<double>&)> f;
  double out_scale = 0.0;
  if (mode == maps::HMode::dpmp) {
    const auto z0 = maps::coords_of(action, cfg);
    x0 = flatten(z0);
    f = [&cfg, segments](const std::vector<double>& x) {
      const auto c = maps::dpmp_forward(unflatten(x, segments), cfg);
      std::vector<double> out(c.breakpoints.begin() + 1, c.breakpoints.end() - 1);
      out.insert(out.end(), c.prices.begin(), c.prices.end());
      return out;
    };
    out_scale = std::max(cfg.q_max, cfg.p_max - cfg.p_min);
    probe.analytic_abs_det = std::fabs(maps::dpmp_jacobian_det(z0, cfg));
  } else {
    x0 = action.u_p;
    f = [&, mode](const std::vector<double>& x) {
      return maps::h_mode(mode, {action.u_q, x}, cfg).prices;
    };
    out_scale = std::max(std::fabs(cfg.p_max), std::fabs(cfg.p_min));
  }

  const int n = static_cast<int>(x0.size());
  const auto f0 = f(x0);
  const double h = fd_step;
  const double kink_floor = 1e-7 * (1.0 + out_scale);
  std::vector<std::vector<double>> jac(n, std::vector<double>(n, 0.0));
  for (int j = 0; j < n; ++j) {
    auto xp = x0, xm = x0;
    xp[j] += h;
    xm[j] -= h;
    const auto fp = f(xp), fm = f(xm);
    for (int r = 0; r < n; ++r) {
      const double fwd = (fp[r] - f0[r]) / h;
      const double bwd = (f0[r] - fm[r]) / h;
      jac[r][j] = 0.5 * (fwd + bwd);
      const double diff = std::fabs(fwd - bwd);
      if (diff > 0.05 * (std::fabs(fwd) + std::fabs(bwd)) && diff > kink_floor)
        probe.degenerate = true;
    }
  }

  probe.abs_det = lu_abs_det(jac);
  std::vector<std::vector<double>> jtj(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double s = 0.0;
      for (int r = 0; r < n; ++r) s += jac[r][i] * jac[r][j];
      jtj[i][j] = jtj[j][i] = s;
    }
  const auto eig = jacobi_eigenvalues(std::move(jtj));
  double lo = eig[0], hi = eig[0];
  for (double e : eig) {
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  probe.min_singular = std::sqrt(std::max(0.0, lo));
  probe.max_singular = std::sqrt(std::max(0.0, hi));
  return probe;
}

std::vector<double> price_directional_derivative(maps::HMode mode, const maps::DpmpConfig& cfg,
                                                 const maps::UnitBoxAction& action,
                                                 const std::vector<double>& dir, double fd_step) {
  if (mode == maps::HMode::dpmp)
    throw std::invalid_argument("directional probe applies to the baseline price branch");
  if (!(fd_step >= 1e-8 && fd_step <= 1e-3))
    throw std::invalid_argument("fd_step must lie in [1e-8, 1e-3]");
  if (dir.size() != action.u_p.size())
    throw std::invalid_argument("dir must have one entry per segment");
  maps::UnitBoxAction up = action, um = action;
  for (std::size_t i = 0; i < dir.size(); ++i) {
    up.u_p[i] += fd_step * dir[i];
    um.u_p[i] -= fd_step * dir[i];
  }
  const auto fp = maps::h_mode(mode, up, cfg).prices;
  const auto fm = maps::h_mode(mode, um, cfg).prices;
  std::vector<double> out(fp.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (fp[i] - fm[i]) / (2.0 * fd_step);
  return out;
}

nlohmann::json to_json(const NcReport& r) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : r.nc1_atom_estimates) {
    atoms.push_back({{"event", a.event},
                     {"law", a.law},
                     {"hits", a.hits},
                     {"samples", a.samples},
                     {"p_hat", a.p_hat},
                     {"wilson_lo", a.wilson_lo},
                     {"wilson_hi", a.wilson_hi}});
  }
  return {{"mapping", r.mapping_id},
          {"nc1", {{"verdict", to_string(r.nc1)}, {"atoms", std::move(atoms)}}},
          {"nc2",
           {{"verdict", to_string(r.nc2)},
            {"distinct_preimages", r.nc2_multiplicity.distinct},
            {"probes", r.nc2_multiplicity.probes}}},
          {"nc3",
           {{"verdict", to_string(r.nc3)},
            {"min_abs_det", r.nc3_min_abs_det},
            {"min_singular", r.nc3_min_singular},
            {"degenerate", r.nc3_degenerate}}}};
}

NcReport run_nc_checks(maps::HMode mode, const maps::DpmpConfig& cfg, int segments,
                       long long n_samples, std::uint64_t seed) {
  if (segments < 2) throw std::invalid_argument("nc checks need at least two segments");
  std::mt19937_64 rng(seed);
  NcReport report;
  report.mapping_id = maps::to_string(mode);

  const auto events = standard_events(segments);
  bool any_atom = false;
  for (InputLaw law : {InputLaw::uniform, InputLaw::squashed_gaussian}) {
    auto ests = estimate_atom_mass(mode, cfg, segments, law, events, n_samples, rng);
    for (const auto& e : ests) any_atom = any_atom || e.hits > 0;
    report.nc1_atom_estimates.insert(report.nc1_atom_estimates.end(), ests.begin(), ests.end());
  }
  report.nc1 = any_atom ? Verdict::fail : Verdict::pass;

  maps::UnitBoxAction base = sample_action(InputLaw::uniform, segments, rng);
  const bool repairing = mode == maps::HMode::clip || mode == maps::HMode::project;
  if (repairing && base.u_p[0] < base.u_p[1]) std::swap(base.u_p[0], base.u_p[1]);
  report.nc2_multiplicity =
      preimage_multiplicity(mode, cfg, base, std::min<long long>(n_samples, 10000), rng);
  report.nc2 = report.nc2_multiplicity.distinct == 1 ? Verdict::pass : Verdict::fail;

  // Rank probes at random interior points, spaced away from sorting ties so
  // only genuine flat directions (not FD stencils astride a kink) register.
  std::vector<maps::UnitBoxAction> points;
  while (points.size() < 8) {
    auto a = sample_action(InputLaw::uniform, segments, rng);
    for (double& v : a.u_q) v = 0.05 + 0.9 * v;
    for (double& v : a.u_p) v = 0.05 + 0.9 * v;
    double gap = 1.0;
    for (int i = 0; i < segments; ++i)
      for (int j = i + 1; j < segments; ++j)
        gap = std::min(gap, std::fabs(a.u_p[i] - a.u_p[j]));
    if (gap > 1e-3) points.push_back(std::move(a));
  }
  if (repairing) {
    maps::UnitBoxAction a;
    a.u_q.assign(segments, 0.5);
    a.u_p.resize(segments);
    for (int i = 0; i < segments; ++i)
      a.u_p[i] = 0.15 + 0.7 * i / (segments - 1);
    std::swap(a.u_p[0], a.u_p[1]);
    points.push_back(std::move(a));
  }
  double min_det = std::numeric_limits<double>::infinity();
  double min_sing = std::numeric_limits<double>::infinity();
  double max_sing = 0.0;
  for (const auto& a : points) {
    const auto probe = jacobian_rank_probe(mode, cfg, a, 1e-6);
    min_det = std::min(min_det, probe.abs_det);
    min_sing = std::min(min_sing, probe.min_singular);
    max_sing = std::max(max_sing, probe.max_singular);
    report.nc3_degenerate = report.nc3_degenerate || probe.degenerate;
  }
  report.nc3_min_abs_det = min_det;
  report.nc3_min_singular = min_sing;
  report.nc3 = (!report.nc3_degenerate && min_sing > 1e-9 * (1.0 + max_sing))
                   ? Verdict::pass
                   : Verdict::fail;
  return report;
}

}  // namespace bidlab::nc
