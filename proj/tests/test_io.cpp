#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "dnumkit/dual_solver.hpp"
#include "dnumkit/io.hpp"
#include "dnumkit/scenarios.hpp"

using namespace dnum;

namespace {

void check_round_trip(const Scenario& sc) {
  Scenario back = io::scenario_from_json(io::scenario_to_json(sc));
  CHECK(back.sources == sc.sources);
  CHECK(back.links == sc.links);
  CHECK(back.horizon == sc.horizon);
  CHECK((back.capacity - sc.capacity).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.rate_min - sc.rate_min).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.rate_max - sc.rate_max).cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < sc.horizon; ++t)
    CHECK((back.routing[t] - sc.routing[t]).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(back.utilities.size() == sc.utilities.size());
  for (int s = 0; s < sc.sources; ++s)
    for (int t = 0; t < sc.horizon; ++t) {
      CHECK(back.utility(s, t).kind == sc.utility(s, t).kind);
      CHECK(back.utility(s, t).a() == sc.utility(s, t).a());
    }
  REQUIRE(back.delay_model.size() == sc.delay_model.size());
  for (size_t l = 0; l < sc.delay_model.size(); ++l) {
    CHECK(back.delay_model[l].q == sc.delay_model[l].q);
    CHECK(back.delay_model[l].sigma_lo == sc.delay_model[l].sigma_lo);
    CHECK(back.delay_model[l].sigma_hi == sc.delay_model[l].sigma_hi);
  }
  REQUIRE(back.contracts.size() == sc.contracts.size());
  for (size_t k = 0; k < sc.contracts.size(); ++k) {
    CHECK(back.contracts[k].source == sc.contracts[k].source);
    CHECK(back.contracts[k].window == sc.contracts[k].window);
    CHECK(back.contracts[k].bound == sc.contracts[k].bound);
  }
  CHECK(validate(back).empty());
}

}  // namespace

TEST_CASE("scenario JSON round-trips every generator") {
  check_round_trip(scenarios::gen_exp1(1));
  check_round_trip(scenarios::gen_exp2_line(20, 18, 10));
  check_round_trip(scenarios::gen_exp3_random(8, 10, 6, 11));
  for (int v = 0; v <= 2; ++v) check_round_trip(scenarios::gen_tiny_oracle(v));
}

TEST_CASE("scenario serialization is byte-identical across runs") {
  std::string a = io::scenario_to_json(scenarios::gen_exp1(3)).dump(2);
  std::string b = io::scenario_to_json(scenarios::gen_exp1(3)).dump(2);
  CHECK(a == b);
}

TEST_CASE("scenario file save/load round-trip") {
  Scenario sc = scenarios::gen_tiny_oracle(2);
  const std::string path = "/tmp/dnumkit_io_test_scenario.json";
  io::save_scenario(sc, path);
  Scenario back = io::load_scenario(path);
  CHECK(back.horizon == sc.horizon);
  CHECK((back.capacity - sc.capacity).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.contracts.size() == sc.contracts.size());
}

TEST_CASE("malformed scenario JSON is rejected") {
  io::json j = io::scenario_to_json(scenarios::gen_tiny_oracle(2));
  SUBCASE("ragged capacity matrix") {
    j["capacities"][1].push_back(1.0);
    CHECK_THROWS_AS(io::scenario_from_json(j), std::invalid_argument);
  }
  SUBCASE("routing source id out of range") {
    j["routing"][0][0].push_back(99);
    CHECK_THROWS_AS(io::scenario_from_json(j), std::invalid_argument);
  }
  SUBCASE("unknown utility kind") {
    j["utilities"][0][0]["kind"] = "quadratic";
    CHECK_THROWS_AS(io::scenario_from_json(j), std::invalid_argument);
  }
}

TEST_CASE("result JSON carries the report fields") {
  Scenario sc = scenarios::gen_tiny_oracle(1);
  dual::Config cfg;
  cfg.th = 1e-3;
  auto r = dual::solve(sc, cfg);
  io::json j = io::result_to_json(r.allocation, r.report);
  CHECK(j.at("status").get<std::string>() == io::status_name(r.report.status));
  CHECK(j.at("converged").get<bool>() == r.report.converged);
  CHECK(j.at("iterations").get<int>() == r.report.iterations);
  CHECK(j.at("objective").get<double>() == r.report.objective);
  CHECK(j.at("kkt").at("stationarity").get<double>() == r.report.kkt.stationarity);
  CHECK(j.at("rates").size() == size_t(sc.sources));
  CHECK(j.at("margins").size() == size_t(sc.horizon));
  CHECK(j.at("capacity_slack").size() == size_t(sc.horizon * sc.links));
  CHECK(j.at("contract_slack").size() == sc.contracts.size());
}

TEST_CASE("trace CSV header and rows") {
  std::vector<TraceRow> trace = {{1, -2.5, 0.25, 0.125}, {2, -2.0, 0.0625, 0.03125}};
  std::string csv = io::trace_csv(trace);
  CHECK(csv.rfind("iteration,dual_objective,max_primal_change,max_kkt_residual\n", 0) == 0);
  CHECK(csv.find("1,-2.5,0.25,0.125\n") != std::string::npos);
  CHECK(csv.find("2,-2,0.0625,0.03125\n") != std::string::npos);
}

TEST_CASE("matrix CSV uses 1-based headers and row labels") {
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  std::string csv = io::mat_csv(m, "source", "t");
  CHECK(csv ==
        "source,t1,t2,t3\n"
        "1,1,2,3\n"
        "2,4,5,6\n");
}

TEST_CASE("status names cover every solver outcome") {
  CHECK(std::string(io::status_name(SolveStatus::Converged)) == "converged");
  CHECK(std::string(io::status_name(SolveStatus::MaxIterations)) == "max_iterations");
  CHECK(std::string(io::status_name(SolveStatus::Infeasible)) == "infeasible");
  CHECK(std::string(io::status_name(SolveStatus::Stalled)) == "stalled");
}
