#include <doctest.h>

#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>

#include "bidlab/bid_curve.hpp"

using bidlab::bids::StepBidCurve;

namespace {

StepBidCurve two_segment_curve() {
  StepBidCurve c;
  c.breakpoints = {0.0, 50.0, 100.0};
  c.prices = {50.0, 75.0};
  c.q_max = 100.0;
  c.p_min = 0.0;
  c.p_max = 100.0;
  return c;
}

}  // namespace

TEST_CASE("validate accepts an interior curve") {
  const auto rep = bidlab::bids::validate(two_segment_curve());
  CHECK(rep.closed);
  CHECK(rep.interior);
  CHECK(rep.violations.empty());
}

TEST_CASE("validate separates closed from interior") {
  auto c = two_segment_curve();

  SUBCASE("price at p_min is closed but not interior") {
    c.prices = {0.0, 75.0};
    const auto rep = bidlab::bids::validate(c);
    CHECK(rep.closed);
    CHECK_FALSE(rep.interior);
  }
  SUBCASE("price plateau is closed but not interior") {
    c.prices = {50.0, 50.0};
    const auto rep = bidlab::bids::validate(c);
    CHECK(rep.closed);
    CHECK_FALSE(rep.interior);
  }
  SUBCASE("zero-width segment is closed but not interior") {
    c.breakpoints = {0.0, 50.0, 50.0};
    const auto rep = bidlab::bids::validate(c);
    CHECK(rep.closed);
    CHECK_FALSE(rep.interior);
  }
  SUBCASE("decreasing prices are not closed") {
    c.prices = {75.0, 50.0};
    const auto rep = bidlab::bids::validate(c);
    CHECK_FALSE(rep.closed);
    CHECK(rep.violations.size() == 1);
  }
  SUBCASE("breakpoint above q_max is not closed") {
    c.breakpoints = {0.0, 50.0, 100.5};
    CHECK_FALSE(bidlab::bids::validate(c).closed);
  }
  SUBCASE("first breakpoint must be zero") {
    c.breakpoints = {1.0, 50.0, 100.0};
    CHECK_FALSE(bidlab::bids::validate(c).closed);
  }
  SUBCASE("non-finite entries are flagged") {
    c.prices = {50.0, std::nan("")};
    const auto rep = bidlab::bids::validate(c);
    CHECK_FALSE(rep.closed);
    CHECK(rep.violations.front() == "non-finite value");
  }
  SUBCASE("structural errors throw") {
    c.prices = {};
    CHECK_THROWS_AS((void)bidlab::bids::validate(c), std::invalid_argument);
    c = two_segment_curve();
    c.breakpoints = {0.0, 100.0};
    CHECK_THROWS_AS((void)bidlab::bids::validate(c), std::invalid_argument);
  }
}

TEST_CASE("evaluate uses half-open segments with p(0) = p_1") {
  const auto c = two_segment_curve();
  CHECK(bidlab::bids::evaluate(c, 0.0) == 50.0);
  CHECK(bidlab::bids::evaluate(c, 25.0) == 50.0);
  CHECK(bidlab::bids::evaluate(c, 50.0) == 50.0);
  CHECK(bidlab::bids::evaluate(c, 50.0001) == 75.0);
  CHECK(bidlab::bids::evaluate(c, 100.0) == 75.0);
  CHECK_THROWS_AS((void)bidlab::bids::evaluate(c, -1.0), std::domain_error);
  CHECK_THROWS_AS((void)bidlab::bids::evaluate(c, 100.5), std::domain_error);
}

TEST_CASE("evaluate skips zero-width segments") {
  StepBidCurve c;
  c.breakpoints = {0.0, 50.0, 50.0, 100.0};
  c.prices = {10.0, 20.0, 30.0};
  c.q_max = 100.0;
  c.p_min = 0.0;
  c.p_max = 100.0;
  CHECK(bidlab::bids::evaluate(c, 50.0) == 10.0);
  CHECK(bidlab::bids::evaluate(c, 50.0001) == 30.0);
}

TEST_CASE("json round-trip preserves doubles exactly") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  StepBidCurve c;
  c.q_max = 1000.0;
  c.p_min = 0.0;
  c.p_max = 1000.0;
  c.breakpoints = {0.0};
  double q = 0.0;
  for (int i = 0; i < 10; ++i) {
    q += d(rng) * 99.0 + 1e-6;
    c.breakpoints.push_back(q);
    c.prices.push_back(d(rng) * 999.0 + 0.5);
  }
  std::sort(c.prices.begin(), c.prices.end());

  const auto j = bidlab::bids::to_json(c);
  const auto text = j.dump();
  const auto back =
      bidlab::bids::curve_from_json(nlohmann::json::parse(text));
  CHECK(back.breakpoints == c.breakpoints);
  CHECK(back.prices == c.prices);
  CHECK(back.q_max == c.q_max);
  CHECK(back.p_min == c.p_min);
  CHECK(back.p_max == c.p_max);
}

TEST_CASE("json parsing reports offending fields") {
  nlohmann::json j{{"breakpoints", {0.0, 1.0}}, {"prices", {5.0}},
                   {"q_max", 1.0}, {"p_min", 0.0}};
  CHECK_THROWS_WITH_AS((void)bidlab::bids::curve_from_json(j),
                       "missing field: p_max", std::invalid_argument);
  j["p_max"] = "high";
  CHECK_THROWS_WITH_AS((void)bidlab::bids::curve_from_json(j),
                       "field is not a number: p_max", std::invalid_argument);
  j["p_max"] = 10.0;
  j["prices"] = {5.0, "x"};
  CHECK_THROWS_WITH_AS((void)bidlab::bids::curve_from_json(j),
                       "non-numeric entry in: prices", std::invalid_argument);
}
