#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dnumkit/scenarios.hpp"

using namespace dnum;

TEST_CASE("chain experiment: shape, contracts, and capacity ranges") {
  Scenario sc = scenarios::gen_exp1(1);
  CHECK(sc.sources == 4);
  CHECK(sc.links == 4);
  CHECK(sc.horizon == 10);
  REQUIRE(sc.contracts.size() == 5);

  // The last two periods are covered by no contract window.
  for (const auto& c : sc.contracts)
    for (int t : c.window) CHECK(t < 8);

  for (int t = 0; t < sc.horizon; ++t) {
    CHECK(sc.capacity(t, 0) >= 4.0);
    CHECK(sc.capacity(t, 0) <= 6.0);
    CHECK(sc.capacity(t, 3) >= 4.0);
    CHECK(sc.capacity(t, 3) <= 6.0);
    CHECK(sc.capacity(t, 1) >= 4.0);
    CHECK(sc.capacity(t, 1) <= 10.0);
    CHECK(sc.capacity(t, 2) >= 4.0);
    CHECK(sc.capacity(t, 2) <= 10.0);
  }
  CHECK(validate(sc).empty());
}

TEST_CASE("chain experiment: routing is the fixed overlapping chain") {
  Scenario sc = scenarios::gen_exp1(7);
  for (int t = 0; t < sc.horizon; ++t) {
    const Mat& R = sc.routing[t];
    CHECK(R(0, 0) == 1.0);  // source 1 on link 1 only
    CHECK(R(1, 0) == 0.0);
    CHECK(R(0, 1) == 1.0);  // source 2 on links 1-2
    CHECK(R(1, 1) == 1.0);
    CHECK(R(1, 2) == 1.0);  // source 3 on links 2-3
    CHECK(R(2, 2) == 1.0);
    CHECK(R(2, 3) == 1.0);  // source 4 on links 3-4
    CHECK(R(3, 3) == 1.0);
    CHECK(R.sum() == doctest::Approx(7.0));  // 1 + 2 + 2 + 2 route hops
  }
}

TEST_CASE("line experiment: long flow, spike, and contract-free tail sources") {
  Scenario sc = scenarios::gen_exp2_line(20, 18, 10);
  CHECK(sc.links == 20);
  CHECK(sc.sources == 18);
  CHECK(sc.horizon == 10);
  for (int t = 0; t < sc.horizon; ++t) {
    for (int l = 0; l < sc.links; ++l) CHECK(sc.routing[t](l, 0) == 1.0);  // source 1 everywhere
    for (int l = 0; l < 4; ++l) CHECK(sc.routing[t](l, 1) == 1.0);
    for (int l = 4; l < sc.links; ++l) CHECK(sc.routing[t](l, 1) == 0.0);
  }
  CHECK(sc.rate_min(0, 1) == doctest::Approx(5.0));  // demand spike at period 2
  REQUIRE(sc.contracts.size() == 2);
  CHECK(sc.contracts[0].source == 0);
  CHECK(sc.contracts[1].source == 1);
  CHECK(sc.contracts[0].bound == doctest::Approx(20.0 / 4.0));
  CHECK(validate(sc).empty());
}

TEST_CASE("random experiment: routes, weights, and per-source contracts") {
  Scenario sc = scenarios::gen_exp3_random(8, 10, 6, 11);
  CHECK(sc.sources == 8);
  CHECK(sc.links == 10);
  CHECK(sc.horizon == 6);
  REQUIRE(sc.contracts.size() == 8);

  for (int s = 0; s < sc.sources; ++s) {
    int hops = 0;
    for (int l = 0; l < sc.links; ++l)
      if (sc.routing[0](l, s) != 0.0) ++hops;
    CHECK(hops >= 1);
    CHECK(hops <= 4);
    CHECK(sc.contracts[s].source == s);
    CHECK(sc.contracts[s].bound >= 4.0);
    CHECK(sc.contracts[s].bound <= 6.0);
    for (int t = 0; t < sc.horizon; ++t) {
      const auto& u = sc.utility(s, t);
      CHECK(u.kind == UtilitySpec::Kind::WeightedLog);
      CHECK(u.weight >= 0.5);
      CHECK(u.weight <= 2.0);
    }
  }
  CHECK((sc.capacity.array() == 20.0).all());
  CHECK(validate(sc).empty());
}

TEST_CASE("generators are deterministic in the seed") {
  auto a = scenarios::gen_exp1(5);
  auto b = scenarios::gen_exp1(5);
  auto c = scenarios::gen_exp1(6);
  CHECK((a.capacity - b.capacity).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.capacity - c.capacity).cwiseAbs().maxCoeff() > 0.0);

  auto r1 = scenarios::gen_exp3_random(8, 10, 6, 3);
  auto r2 = scenarios::gen_exp3_random(8, 10, 6, 3);
  CHECK((r1.capacity - r2.capacity).cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < r1.horizon; ++t)
    CHECK((r1.routing[t] - r2.routing[t]).cwiseAbs().maxCoeff() == 0.0);
  for (size_t k = 0; k < r1.contracts.size(); ++k) {
    CHECK(r1.contracts[k].bound == r2.contracts[k].bound);
    CHECK(r1.contracts[k].window == r2.contracts[k].window);
  }
}

TEST_CASE("tiny oracle instances stay within the oracle dimension cap") {
  for (int v = 0; v <= 2; ++v) {
    Scenario sc = scenarios::gen_tiny_oracle(v);
    CHECK(sc.sources * sc.horizon + sc.horizon * sc.links <= 6);
    CHECK(validate(sc).empty());
  }
}

TEST_CASE("single_period extracts one column of the horizon") {
  Scenario sc = scenarios::gen_exp1(2);
  Scenario sp = scenarios::single_period(sc, 3);
  CHECK(sp.horizon == 1);
  CHECK(sp.sources == sc.sources);
  CHECK(sp.links == sc.links);
  CHECK((sp.capacity.row(0) - sc.capacity.row(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sp.rate_min.col(0) - sc.rate_min.col(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sp.routing[0] - sc.routing[3]).cwiseAbs().maxCoeff() == 0.0);
  // Contracts covering t = 4 (0-based 3) become per-period bounds on {0}.
  CHECK(sp.contracts.size() == 3);
  for (const auto& c : sp.contracts) CHECK(c.window == std::vector<int>{0});
  CHECK(validate(sp).empty());
}

TEST_CASE("experiment spec front door dispatches to the generators") {
  scenarios::ExperimentSpec spec;
  spec.kind = scenarios::ExperimentSpec::Kind::Exp1;
  spec.seed = 4;
  Scenario a = scenarios::generate(spec);
  Scenario b = scenarios::gen_exp1(4);
  CHECK((a.capacity - b.capacity).cwiseAbs().maxCoeff() == 0.0);

  spec.kind = scenarios::ExperimentSpec::Kind::Exp3Random;
  spec.sources = 8;
  spec.links = 10;
  spec.horizon = 6;
  spec.seed = 9;
  Scenario c = scenarios::generate(spec);
  CHECK(c.sources == 8);
  CHECK(validate(c).empty());
}
