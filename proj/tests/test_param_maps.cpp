#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "bidlab/param_maps.hpp"
#include "test_util.hpp"

namespace maps = bidlab::maps;
using maps::DpmpConfig;
using maps::DualPositiveAction;
using maps::NonRedundantCoords;
using maps::UnitBoxAction;

namespace {

DpmpConfig small_cfg() {
  DpmpConfig cfg;
  cfg.q_max = 100.0;
  cfg.p_min = 0.0;
  cfg.p_max = 100.0;
  return cfg;
}

std::vector<double> coords_to_flat(const NonRedundantCoords& z) {
  std::vector<double> v = z.lambda_bar;
  v.insert(v.end(), z.w.begin(), z.w.end());
  return v;
}

NonRedundantCoords flat_to_coords(const std::vector<double>& v, std::size_t k) {
  NonRedundantCoords z;
  z.lambda_bar.assign(v.begin(), v.begin() + (k - 1));
  z.w.assign(v.begin() + (k - 1), v.end());
  return z;
}

// image of the non-redundant map: (Q_1..Q_{K-1}, p_1..p_K)
std::vector<double> forward_flat(const std::vector<double>& v, std::size_t k,
                                 const DpmpConfig& cfg) {
  const auto curve = maps::dpmp_forward(flat_to_coords(v, k), cfg);
  std::vector<double> out;
  out.insert(out.end(), curve.breakpoints.begin() + 1,
             curve.breakpoints.end() - 1);
  out.insert(out.end(), curve.prices.begin(), curve.prices.end());
  return out;
}

NonRedundantCoords random_coords(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> d(0.05, 1.0);
  std::vector<double> lam(k);
  double total = 0.0;
  for (auto& l : lam) {
    l = d(rng);
    total += l;
  }
  NonRedundantCoords z;
  z.lambda_bar.resize(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) z.lambda_bar[i] = lam[i] / total;
  z.w.resize(k);
  for (auto& w : z.w) w = d(rng);
  return z;
}

// exact minimizer of ||p - x||^2 over monotone vectors with entries on a
// value grid, by dynamic programming with a running prefix minimum
std::vector<double> grid_isotonic_oracle(const std::vector<double>& x,
                                         double lo, double hi, double step) {
  const std::size_t n = x.size();
  const std::size_t g = static_cast<std::size_t>(std::lround((hi - lo) / step)) + 1;
  std::vector<double> grid(g);
  for (std::size_t j = 0; j < g; ++j) grid[j] = lo + step * static_cast<double>(j);

  std::vector<std::vector<double>> cost(n, std::vector<double>(g));
  std::vector<std::vector<std::size_t>> arg(n, std::vector<std::size_t>(g));
  for (std::size_t j = 0; j < g; ++j) {
    const double d = x[0] - grid[j];
    cost[0][j] = d * d;
    arg[0][j] = j;
  }
  for (std::size_t i = 1; i < n; ++i) {
    double best = cost[i - 1][0];
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < g; ++j) {
      if (cost[i - 1][j] < best) {
        best = cost[i - 1][j];
        best_j = j;
      }
      const double d = x[i] - grid[j];
      cost[i][j] = d * d + best;
      arg[i][j] = best_j;
    }
  }
  std::size_t j = 0;
  for (std::size_t t = 1; t < g; ++t)
    if (cost[n - 1][t] < cost[n - 1][j]) j = t;
  std::vector<double> out(n);
  for (std::size_t i = n; i-- > 0;) {
    out[i] = grid[j];
    j = arg[i][j];
  }
  return out;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("dpmp_forward worked example") {
  const auto cfg = small_cfg();
  DualPositiveAction a{{1.0, 1.0}, {std::log(2.0), std::log(2.0)}};
  const auto curve = maps::dpmp_forward(a, cfg);
  REQUIRE(curve.segments() == 2);
  CHECK(curve.breakpoints[0] == 0.0);
  CHECK(curve.breakpoints[1] == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(curve.breakpoints[2] == 100.0);
  CHECK(curve.prices[0] == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(curve.prices[1] == doctest::Approx(75.0).epsilon(1e-12));
  const auto rep = bidlab::bids::validate(curve);
  CHECK(rep.interior);
}

TEST_CASE("dpmp_forward single segment covers full quantity") {
  auto cfg = small_cfg();
  cfg.alpha = 1.7;
  DualPositiveAction a{{3.2}, {0.9}};
  const auto curve = maps::dpmp_forward(a, cfg);
  CHECK(curve.breakpoints == std::vector<double>{0.0, 100.0});
  CHECK(curve.prices[0] ==
        doctest::Approx(100.0 * (1.0 - std::exp(-1.7 * 0.9))).epsilon(1e-14));
}

TEST_CASE("dpmp_forward depends only on the direction of r") {
  const auto cfg = small_cfg();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.1, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    DualPositiveAction a;
    a.r = {d(rng), d(rng), d(rng), d(rng)};
    a.w = {d(rng), d(rng), d(rng), d(rng)};
    const double c = d(rng) * 10.0;
    DualPositiveAction scaled = a;
    for (auto& r : scaled.r) r *= c;
    const auto c1 = maps::dpmp_forward(a, cfg);
    const auto c2 = maps::dpmp_forward(scaled, cfg);
    for (int i = 0; i <= 4; ++i)
      CHECK(c1.breakpoints[i] ==
            doctest::Approx(c2.breakpoints[i]).epsilon(1e-12));
    CHECK(c1.prices == c2.prices);  // w untouched by the scaling
  }
}

TEST_CASE("dpmp_forward rejects nonpositive and boundary inputs") {
  const auto cfg = small_cfg();
  CHECK_THROWS_AS(
      (void)maps::dpmp_forward(DualPositiveAction{{1.0, 0.0}, {1.0, 1.0}}, cfg),
      std::domain_error);
  CHECK_THROWS_AS(
      (void)maps::dpmp_forward(DualPositiveAction{{1.0, 1.0}, {1.0, -0.5}}, cfg),
      std::domain_error);
  CHECK_THROWS_AS(
      (void)maps::dpmp_forward(UnitBoxAction{{0.5, 1.0}, {0.5, 0.5}}, cfg),
      std::domain_error);
  CHECK_THROWS_AS(
      (void)maps::dpmp_forward(UnitBoxAction{{0.5, 0.5}, {0.0, 0.5}}, cfg),
      std::domain_error);
}

TEST_CASE("unit-box route uses softmax widths and k-scaled increments") {
  auto cfg = small_cfg();
  cfg.k_scale = 0.25;
  cfg.alpha = 2.0;
  UnitBoxAction u{{0.4, 0.4, 0.4}, {0.3, 0.6, 0.9}};
  const auto curve = maps::dpmp_forward(u, cfg);
  // equal u_q -> equal widths
  for (int i = 1; i <= 3; ++i)
    CHECK(curve.breakpoints[i] ==
          doctest::Approx(100.0 * i / 3.0).epsilon(1e-12));
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    s += 0.25 * u.u_p[i];
    CHECK(curve.prices[i] ==
          doctest::Approx(100.0 * (1.0 - std::exp(-2.0 * s))).epsilon(1e-12));
  }
}

TEST_CASE("dpmp output is interior-feasible over random actions") {
  DpmpConfig cfg;  // defaults: q_max 1000, prices in (0, 1000)
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    UnitBoxAction u{testutil::random_unit_box(rng, 10),
                    testutil::random_unit_box(rng, 10)};
    const auto curve = maps::dpmp_forward(u, cfg);
    const auto rep = bidlab::bids::validate(curve);
    REQUIRE(rep.closed);
    REQUIRE(rep.interior);
  }
}

TEST_CASE("dpmp_inverse worked example and failure modes") {
  const auto cfg = small_cfg();
  bidlab::bids::StepBidCurve curve;
  curve.breakpoints = {0.0, 50.0, 100.0};
  curve.prices = {50.0, 75.0};
  curve.q_max = 100.0;
  curve.p_min = 0.0;
  curve.p_max = 100.0;
  const auto z = maps::dpmp_inverse(curve, cfg);
  REQUIRE(z.lambda_bar.size() == 1);
  CHECK(z.lambda_bar[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(z.w[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(z.w[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  SUBCASE("price at p_max cannot be inverted") {
    curve.prices = {50.0, 100.0};
    CHECK_THROWS_AS((void)maps::dpmp_inverse(curve, cfg), std::domain_error);
  }
  SUBCASE("plateau cannot be inverted") {
    curve.prices = {50.0, 50.0};
    CHECK_THROWS_AS((void)maps::dpmp_inverse(curve, cfg), std::domain_error);
  }
  SUBCASE("zero width cannot be inverted") {
    curve.breakpoints = {0.0, 50.0, 50.0};
    CHECK_THROWS_AS((void)maps::dpmp_inverse(curve, cfg), std::domain_error);
  }
}

TEST_CASE("dpmp forward/inverse round-trip on random interior curves") {
  DpmpConfig cfg;
  cfg.alpha = 1.3;
  cfg.k_scale = 0.5;
  std::mt19937_64 rng(23);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto z = random_coords(rng, 2 + trial % 9);
    const auto curve = maps::dpmp_forward(z, cfg);
    const auto back = maps::dpmp_inverse(curve, cfg);
    const auto again = maps::dpmp_forward(back, cfg);
    for (std::size_t i = 0; i < curve.breakpoints.size(); ++i)
      worst = std::max(worst,
                       std::fabs(curve.breakpoints[i] - again.breakpoints[i]));
    for (std::size_t i = 0; i < curve.prices.size(); ++i)
      worst = std::max(worst, std::fabs(curve.prices[i] - again.prices[i]));
    for (std::size_t i = 0; i < z.lambda_bar.size(); ++i)
      worst = std::max(worst, std::fabs(z.lambda_bar[i] - back.lambda_bar[i]));
    for (std::size_t i = 0; i < z.w.size(); ++i)
      worst = std::max(worst, std::fabs(z.w[i] - back.w[i]));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("dpmp jacobian determinant worked example") {
  const auto cfg = small_cfg();
  NonRedundantCoords z{{0.5}, {std::log(2.0), std::log(2.0)}};
  CHECK(maps::dpmp_jacobian_det(z, cfg) ==
        doctest::Approx(125000.0).epsilon(1e-12));

  // finite-difference oracle on the same point
  const auto f = [&](const std::vector<double>& v) {
    return forward_flat(v, 2, cfg);
  };
  const auto jac = testutil::fd_jacobian(f, coords_to_flat(z), 1e-6);
  CHECK(testutil::rel_err(std::fabs(testutil::det(jac)), 125000.0) < 1e-4);
}

TEST_CASE("dpmp jacobian determinant matches finite differences") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 60; ++trial) {
    DpmpConfig cfg;
    cfg.q_max = 500.0;
    cfg.p_min = (trial % 2) ? 10.0 : 0.0;
    cfg.p_max = cfg.p_min + 200.0;
    cfg.alpha = (trial % 3) ? 1.0 : 0.7;
    const std::size_t k = 2 + trial % 9;
    const auto z = random_coords(rng, k);
    const double analytic = maps::dpmp_jacobian_det(z, cfg);
    CHECK(analytic > 0.0);
    const auto f = [&](const std::vector<double>& v) {
      return forward_flat(v, k, cfg);
    };
    const auto jac = testutil::fd_jacobian(f, coords_to_flat(z), 1e-6);
    CHECK(testutil::rel_err(std::fabs(testutil::det(jac)), analytic) < 1e-4);
  }
}

TEST_CASE("determinant shrinks but stays positive as w grows") {
  const auto cfg = small_cfg();
  double prev = maps::dpmp_jacobian_det({{0.5}, {1.0, 1.0}}, cfg);
  for (double scale : {2.0, 4.0, 8.0, 16.0}) {
    const double det =
        maps::dpmp_jacobian_det({{0.5}, {scale, scale}}, cfg);
    CHECK(det > 0.0);
    CHECK(det < prev);
    prev = det;
  }
}

TEST_CASE("sort_map sorts prices over a fixed quantity grid") {
  UnitBoxAction u{{0.5, 0.5, 0.5}, {0.3, 0.1, 0.2}};
  const auto curve = maps::sort_map(u, 90.0, 100.0);
  CHECK(curve.prices == std::vector<double>{10.0, 20.0, 30.0});
  CHECK(curve.breakpoints == std::vector<double>{0.0, 30.0, 60.0, 90.0});

  SUBCASE("permutation invariance") {
    std::vector<double> perm = u.u_p;
    std::sort(perm.begin(), perm.end());
    do {
      const auto other = maps::sort_map({u.u_q, perm}, 90.0, 100.0);
      CHECK(other.prices == curve.prices);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  SUBCASE("sorted input unchanged") {
    const auto other = maps::sort_map({u.u_q, {0.1, 0.2, 0.3}}, 90.0, 100.0);
    CHECK(other.prices == curve.prices);
  }
}

TEST_CASE("clip_map is a running maximum") {
  UnitBoxAction u{{0.5, 0.5, 0.5}, {0.3, 0.1, 0.2}};
  const auto curve = maps::clip_map(u, 90.0, 100.0);
  CHECK(curve.prices == std::vector<double>{30.0, 30.0, 30.0});
  const auto inc = maps::clip_map({u.u_q, {0.1, 0.2, 0.3}}, 90.0, 100.0);
  CHECK(inc.prices == std::vector<double>{10.0, 20.0, 30.0});
}

TEST_CASE("clip_map places positive mass on plateaus") {
  std::mt19937_64 rng(31);
  int plateaus = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    UnitBoxAction u{testutil::random_unit_box(rng, 2),
                    testutil::random_unit_box(rng, 2)};
    const auto c = maps::clip_map(u, 100.0, 100.0);
    if (c.prices[0] == c.prices[1]) ++plateaus;
  }
  // P(u_2 <= u_1) = 1/2 for iid uniforms
  CHECK(std::fabs(plateaus / double(n) - 0.5) < 0.02);
}

TEST_CASE("projection worked examples") {
  CHECK(maps::project_bounded_monotone({3.0, 1.0, 2.0}, 0.0, 10.0) ==
        std::vector<double>{2.0, 2.0, 2.0});
  CHECK(maps::project_bounded_monotone({1.0, 2.0, 3.0}, 0.0, 10.0) ==
        std::vector<double>{1.0, 2.0, 3.0});
  CHECK(maps::project_bounded_monotone({12.0, 11.0}, 0.0, 10.0) ==
        std::vector<double>{10.0, 10.0});
}

TEST_CASE("PAV matches the grid quadratic-minimization oracle") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> d(0.0, 10.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t k = 2 + trial % 5;  // up to K = 6
    std::vector<double> x(k);
    for (auto& v : x) v = d(rng);

    const auto pav = maps::project_bounded_monotone(x, 0.0, 10.0);
    const auto grid = grid_isotonic_oracle(x, 0.0, 10.0, 0.25);

    // the exact projection can never lose to a grid-restricted candidate,
    // and strong convexity bounds how far the two argmins can sit apart
    CHECK(sq_dist(pav, x) <= sq_dist(grid, x) + 1e-9);
    for (std::size_t i = 0; i < k; ++i)
      CHECK(std::fabs(pav[i] - grid[i]) <= 0.32);
    for (std::size_t i = 1; i < k; ++i) CHECK(pav[i] >= pav[i - 1]);
  }
}

TEST_CASE("project_map emits the projected curve") {
  UnitBoxAction u{{0.5, 0.5, 0.5}, {0.3, 0.1, 0.2}};
  const auto curve = maps::project_map(u, 90.0, 100.0);
  CHECK(curve.prices == std::vector<double>{20.0, 20.0, 20.0});
  CHECK(bidlab::bids::validate(curve).closed);
}

TEST_CASE("h_mode dispatches and stays closed-feasible") {
  DpmpConfig cfg;
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 2500; ++trial) {
    UnitBoxAction u{testutil::random_unit_box(rng, 5),
                    testutil::random_unit_box(rng, 5)};
    for (auto mode : {maps::HMode::dpmp, maps::HMode::sort, maps::HMode::clip,
                      maps::HMode::project}) {
      const auto curve = maps::h_mode(mode, u, cfg);
      CHECK(bidlab::bids::validate(curve).closed);
    }
    const auto direct = maps::dpmp_forward(u, cfg);
    const auto routed = maps::h_mode(maps::HMode::dpmp, u, cfg);
    CHECK(direct.prices == routed.prices);
    CHECK(direct.breakpoints == routed.breakpoints);
  }
}

TEST_CASE("h_mode names round-trip") {
  for (auto mode : {maps::HMode::dpmp, maps::HMode::sort, maps::HMode::clip,
                    maps::HMode::project})
    CHECK(maps::hmode_from_string(maps::to_string(mode)) == mode);
  CHECK_THROWS_AS((void)maps::hmode_from_string("fold"), std::invalid_argument);
}
