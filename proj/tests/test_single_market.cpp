#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "bidlab/single_market.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bidlab;
using market::CostModel;
using market::OpponentLadder;

namespace {

bids::StepBidCurve single_block(double price, double quantity, double q_max = 1000.0,
                                double p_min = 0.0, double p_max = 1000.0) {
  bids::StepBidCurve c;
  c.breakpoints = {0.0, quantity};
  c.prices = {price};
  c.q_max = q_max;
  c.p_min = p_min;
  c.p_max = p_max;
  return c;
}

bool close(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("demand process hits the documented diurnal anchors") {
  market::DemandProcess d;
  CHECK(d.mean_at(0) == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(d.mean_at(24) == doctest::Approx(500.0).epsilon(1e-12));
  CHECK(d.mean_at(48) == doctest::Approx(800.0).epsilon(1e-12));
  CHECK(d.mean_at(96) == doctest::Approx(200.0).epsilon(1e-12));

  SUBCASE("samples are clipped to the band") {
    std::mt19937_64 rng(7);
    market::DemandProcess wide = d;
    wide.noise_std = 600.0;
    bool low = false, high = false;
    for (int i = 0; i < 2000; ++i) {
      double v = wide.sample(0, rng);
      CHECK(v >= 0.0);
      CHECK(v <= 1000.0);
      low = low || v == 0.0;
      high = high || v == 1000.0;
    }
    CHECK(low);
    CHECK(high);
  }
}

TEST_CASE("cost model: linear marginal cost case is exact") {
  CostModel cm(20.0, 300.0, 1.0, 1000.0, 101);
  CHECK(cm.mc(0.0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(cm.mc(1000.0) == doctest::Approx(320.0).epsilon(1e-12));
  CHECK(cm.mc(500.0) == doctest::Approx(170.0).epsilon(1e-12));
  CHECK(cm.cost(30.0) == doctest::Approx(735.0).epsilon(1e-12));
  CHECK(cm.cost(0.0) == 0.0);
  CHECK(cm.q_mc(25.0) == doctest::Approx(50.0 / 3.0).epsilon(1e-12));
  CHECK(cm.q_mc(19.0) == 0.0);
  CHECK(cm.q_mc(320.0) == 1000.0);
  CHECK(cm.q_mc(500.0) == 1000.0);
}

TEST_CASE("cost model: consistency invariants for curved marginal cost") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ug(1.0, 2.0), uq(0.0, 1000.0);
  for (int trial = 0; trial < 20; ++trial) {
    double gamma = ug(rng);
    CostModel cm(20.0, 300.0, gamma, 1000.0, 101);

    // mc nondecreasing and bracketed by the analytic curve at the nodes.
    for (int i = 0; i + 1 <= 100; ++i) {
      CHECK(cm.mc_nodes()[i] <= cm.mc_nodes()[i + 1]);
      double frac = i / 100.0;
      CHECK(cm.mc_nodes()[i] ==
            doctest::Approx(20.0 + 300.0 * std::pow(frac, gamma)).epsilon(1e-12));
    }
    for (int i = 0; i < 50; ++i) {
      double q = uq(rng);
      // cost is the exact integral of the interpolated mc: check against a
      // fine Riemann sum of mc itself.
      int n = 2000;
      double acc = 0.0;
      for (int k = 0; k < n; ++k) {
        double a = q * k / n, b = q * (k + 1) / n;
        acc += 0.5 * (cm.mc(a) + cm.mc(b)) * (b - a);
      }
      CHECK(close(cm.cost(q), acc, 1e-7));
      // q_mc inverts mc on the interior.
      if (q > 10.0 && q < 990.0) CHECK(close(cm.q_mc(cm.mc(q)), q, 1e-9));
      double p = cm.mc(q);
      CHECK(cm.q_mc(p) <= 1000.0);
    }
    // q_mc nondecreasing in p.
    double prev = -1.0;
    for (double p = 0.0; p <= 340.0; p += 3.7) {
      double v = cm.q_mc(p);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("clearing: priced-in agent block splits the marginal level") {
  CostModel cm(20.0, 300.0, 1.0, 1000.0);
  auto ladder = OpponentLadder::standard();

  SUBCASE("agent at 22 with demand 150 serves the residual and sets the price") {
    auto out = market::clear(single_block(22.0, 1000.0), ladder, 150.0, cm, 1000.0);
    CHECK(out.price == 22.0);
    CHECK(out.agent_q == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(out.opponent_q == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(!out.unserved);
    CHECK(close(out.profit, 22.0 * 50.0 - cm.cost(50.0)));
  }
  SUBCASE("zero demand clears at the lowest offered price with no dispatch") {
    auto out = market::clear(single_block(22.0, 1000.0), ladder, 0.0, cm, 1000.0);
    CHECK(out.price == 20.0);
    CHECK(out.agent_q == 0.0);
    CHECK(out.opponent_q == 0.0);
    CHECK(out.profit == 0.0);
    CHECK(!out.unserved);
  }
  SUBCASE("agent priced above the ladder never dispatches even at peak demand") {
    auto out = market::clear(single_block(70.0, 1000.0), ladder, 1000.0, cm, 1000.0);
    CHECK(out.price == 65.0);
    CHECK(out.agent_q == 0.0);
    CHECK(out.opponent_q == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK(!out.unserved);
  }
  SUBCASE("price ties dispatch the opponent first") {
    auto out = market::clear(single_block(25.0, 1000.0), ladder, 150.0, cm, 1000.0);
    CHECK(out.price == 25.0);
    CHECK(out.agent_q == 0.0);  // opponent's 25 block covers the residual 50
    CHECK(out.opponent_q == doctest::Approx(150.0).epsilon(1e-12));

    auto out2 = market::clear(single_block(25.0, 1000.0), ladder, 250.0, cm, 1000.0);
    CHECK(out2.price == 25.0);
    CHECK(out2.agent_q == doctest::Approx(50.0).epsilon(1e-12));
  }
  SUBCASE("demand above total offers dispatches everything at the cap") {
    OpponentLadder small;
    small.widths = {100.0, 100.0};
    small.prices = {20.0, 30.0};
    auto out = market::clear(single_block(40.0, 50.0), small, 400.0, cm, 1000.0);
    CHECK(out.unserved);
    CHECK(out.price == 1000.0);
    CHECK(out.agent_q == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(out.opponent_q == doctest::Approx(200.0).epsilon(1e-12));
  }
  SUBCASE("negative demand and malformed curves are rejected") {
    CHECK_THROWS_AS(market::clear(single_block(22.0, 100.0), ladder, -1.0, cm, 1000.0),
                    std::invalid_argument);
    auto bad = single_block(22.0, 100.0);
    bad.prices[0] = 2000.0;  // above p_max: not feasible
    CHECK_THROWS_AS(market::clear(bad, ladder, 100.0, cm, 1000.0), std::invalid_argument);
  }
}

TEST_CASE("clearing: conservation and profit identity on random multi-segment curves") {
  CostModel cm(20.0, 300.0, 1.4, 1000.0);
  auto ladder = OpponentLadder::standard();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ud(0.0, 1000.0);
  maps::DpmpConfig cfg;
  for (int trial = 0; trial < 500; ++trial) {
    auto u = testutil::random_unit_box(rng, 8);
    maps::UnitBoxAction act;
    act.u_q.assign(u.begin(), u.begin() + 4);
    act.u_p.assign(u.begin() + 4, u.end());
    auto curve = maps::dpmp_forward(act, cfg);
    double d = ud(rng);
    auto out = market::clear(curve, ladder, d, cm, 1000.0);
    double offered = ladder.total_quantity() + curve.breakpoints.back();
    CHECK(close(out.agent_q + out.opponent_q, std::min(d, offered)));
    CHECK(close(out.profit, out.price * out.agent_q - cm.cost(out.agent_q)));
    CHECK(out.agent_q >= 0.0);
    CHECK(out.agent_q <= curve.breakpoints.back() + 1e-12);
    // Price is either an offered price or the cap when demand went unserved.
    if (!out.unserved) {
      bool offered_price = std::find(ladder.prices.begin(), ladder.prices.end(), out.price) !=
                           ladder.prices.end();
      offered_price = offered_price || std::find(curve.prices.begin(), curve.prices.end(),
                                                 out.price) != curve.prices.end();
      CHECK(offered_price);
    }
  }
}

TEST_CASE("environment: deterministic episodes with documented observations") {
  market::SingleMarketConfig cfg;
  cfg.map_cfg.k_scale = 0.1;
  market::SingleAgentMarketEnv env(cfg, 42);
  CHECK(env.obs_dim() == 3);
  CHECK(env.act_dim() == 20);
  CHECK(env.horizon() == 96);
  CHECK(env.gamma() >= 1.0);
  CHECK(env.gamma() <= 2.0);

  auto obs = env.reset();
  REQUIRE(obs.size() == 3);
  CHECK(obs[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(obs[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(obs[2] == doctest::Approx(0.5).epsilon(1e-12));

  std::vector<double> mid(20, 0.5);
  SUBCASE("episode terminates exactly at the horizon") {
    int steps = 0;
    bool done = false;
    while (!done) {
      auto s = env.step(mid);
      done = s.done;
      ++steps;
      CHECK(s.demand >= 0.0);
      CHECK(s.demand <= 1000.0);
    }
    CHECK(steps == 96);
    CHECK_THROWS_AS(env.step(mid), std::logic_error);
  }
  SUBCASE("same master seed reproduces gamma and the demand path") {
    market::SingleAgentMarketEnv env2(cfg, 42);
    CHECK(env2.gamma() == env.gamma());
    env2.reset();
    for (int t = 0; t < 96; ++t) {
      auto a = env.step(mid);
      auto b = env2.step(mid);
      CHECK(a.demand == b.demand);
      CHECK(a.outcome.price == b.outcome.price);
      CHECK(a.reward == b.reward);
    }
  }
  SUBCASE("reset_with_seed gives common random demand across instances") {
    market::SingleAgentMarketEnv env2(cfg, 777);  // different gamma
    env.reset_with_seed(5);
    env2.reset_with_seed(5);
    for (int t = 0; t < 5; ++t) {
      auto a = env.step(mid);
      auto b = env2.step(mid);
      CHECK(a.demand == b.demand);
    }
  }
  SUBCASE("noise-free demand follows the diurnal anchors") {
    market::SingleMarketConfig quiet = cfg;
    quiet.demand.noise_std = 0.0;
    market::SingleAgentMarketEnv envq(quiet, 1);
    envq.reset();
    auto s0 = envq.step(mid);
    CHECK(s0.demand == doctest::Approx(200.0).epsilon(1e-12));
    for (int t = 1; t < 48; ++t) s0 = envq.step(mid);
    CHECK(s0.t == 47);
    auto s48 = envq.step(mid);
    CHECK(s48.demand == doctest::Approx(800.0).epsilon(1e-12));
  }
  SUBCASE("actions outside the open unit box raise domain errors") {
    env.reset();
    std::vector<double> bad(20, 0.5);
    bad[3] = 1.0;
    CHECK_THROWS_AS(env.step(bad), std::domain_error);
    bad[3] = -0.1;
    CHECK_THROWS_AS(env.step(bad), std::domain_error);
    std::vector<double> wrong(19, 0.5);
    CHECK_THROWS_AS(env.step(wrong), std::invalid_argument);
  }
}
