// dnumkit: scenario-driven front end for the rate-allocation solvers.
//
// Exit codes: 0 success, 1 solver did not converge (results still written),
// 2 bad arguments, 3 scenario validation failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "dnumkit/dual_solver.hpp"
#include "dnumkit/io.hpp"
#include "dnumkit/model.hpp"
#include "dnumkit/mpc.hpp"
#include "dnumkit/newton_solver.hpp"
#include "dnumkit/oracle.hpp"
#include "dnumkit/scenarios.hpp"

namespace {

using dnum::Allocation;
using dnum::Scenario;
using dnum::SolveReport;
using json = dnum::io::json;

struct ScenarioArgs {
  std::string path;
  std::string gen;
  std::uint64_t seed = 1;
  int links = 20, sources = 18, horizon = 10;  // exp2/exp3 desk-scale defaults
  int variant = 0;

  void attach(CLI::App* cmd) {
    auto* p = cmd->add_option("--scenario", path, "scenario JSON file");
    auto* g = cmd->add_option("--gen", gen,
                              "built-in generator: exp1 | exp2 | exp3 | tiny");
    p->excludes(g);
    cmd->add_option("--seed", seed, "generator seed");
    cmd->add_option("--links", links, "generator link count (exp2/exp3)");
    cmd->add_option("--sources", sources, "generator source count (exp2/exp3)");
    cmd->add_option("--horizon", horizon, "generator horizon (exp2/exp3)");
    cmd->add_option("--variant", variant, "tiny generator variant (0..2)");
  }

  Scenario load() const {
    if (!path.empty()) return dnum::io::load_scenario(path);
    dnum::scenarios::ExperimentSpec spec;
    spec.seed = seed;
    spec.links = links;
    spec.sources = sources;
    spec.horizon = horizon;
    spec.variant = variant;
    if (gen == "exp1")
      spec.kind = dnum::scenarios::ExperimentSpec::Kind::Exp1;
    else if (gen == "exp2")
      spec.kind = dnum::scenarios::ExperimentSpec::Kind::Exp2Line;
    else if (gen == "exp3")
      spec.kind = dnum::scenarios::ExperimentSpec::Kind::Exp3Random;
    else if (gen == "tiny")
      spec.kind = dnum::scenarios::ExperimentSpec::Kind::TinyOracle;
    else
      throw CLI::ValidationError("--gen", "unknown generator: " + gen);
    return dnum::scenarios::generate(spec);
  }

  bool specified() const { return !path.empty() || !gen.empty(); }
};

int check_valid(const Scenario& sc) {
  auto violations = dnum::validate(sc);
  for (const auto& v : violations) std::cerr << v.field << ": " << v.message << "\n";
  return violations.empty() ? 0 : 3;
}

void write_solution_files(const std::string& dir, const Allocation& a, const SolveReport& rep,
                          bool trace) {
  std::filesystem::create_directories(dir);
  dnum::io::write_text(dir + "/results.json", dnum::io::result_to_json(a, rep).dump(2) + "\n");
  dnum::io::write_text(dir + "/rates.csv", dnum::io::mat_csv(a.rates, "source", "t"));
  dnum::io::write_text(dir + "/margins.csv", dnum::io::mat_csv(a.margins, "period", "l"));
  dnum::io::write_text(dir + "/delays.csv", dnum::io::mat_csv(a.delays, "source", "t"));
  if (trace) dnum::io::write_text(dir + "/trace.csv", dnum::io::trace_csv(rep.trace));
}

int cmd_solve(const ScenarioArgs& sa, const std::string& solver, double gamma, double th,
              int max_iters, double beta0, double tolerance, const std::string& out, bool trace) {
  Scenario sc = sa.load();
  if (int rc = check_valid(sc)) return rc;

  Allocation alloc;
  SolveReport rep;
  if (solver == "dual") {
    dnum::dual::Config cfg;
    cfg.gamma = gamma;
    cfg.th = th;
    cfg.max_iters = max_iters;
    cfg.record_trace = trace;
    auto res = dnum::dual::solve(sc, cfg);
    alloc = res.allocation;
    rep = res.report;
  } else if (solver == "newton") {
    dnum::newton::Config cfg;
    cfg.beta0 = beta0;
    cfg.gap_tol = tolerance;
    cfg.record_trace = trace;
    auto res = dnum::newton::solve(sc, cfg);
    alloc = res.allocation;
    rep = res.report;
  } else if (solver == "oracle") {
    auto res = dnum::grid_oracle(sc, tolerance > 0 ? tolerance : 1e-3);
    alloc = res.best;
    rep.objective = res.utility;
    rep.converged = res.feasible;
    rep.status = res.feasible ? dnum::SolveStatus::Converged : dnum::SolveStatus::Infeasible;
    rep.note = res.note;
    dnum::compute_delays(sc, alloc);
    dnum::fill_slacks(sc, alloc, rep);
  } else {
    std::cerr << "unknown solver: " << solver << "\n";
    return 2;
  }

  write_solution_files(out, alloc, rep, trace);
  std::cout << "status=" << dnum::io::status_name(rep.status) << " iterations=" << rep.iterations
            << " objective=" << rep.objective << "\n";
  return rep.converged ? 0 : 1;
}

int cmd_mpc(const ScenarioArgs& sa, const std::string& forecast,
            const std::vector<double>& forecast_mean, int window, const std::string& solver,
            double gamma, double th, double tolerance, const std::string& out) {
  Scenario sc = sa.load();
  if (int rc = check_valid(sc)) return rc;

  dnum::mpc::CapacityForecaster fc;
  if (forecast == "clairvoyant") {
    fc = dnum::mpc::CapacityForecaster::clairvoyant(sc.capacity);
  } else if (forecast == "running") {
    fc = dnum::mpc::CapacityForecaster::running_average(window);
  } else if (forecast == "constant") {
    dnum::Vec mean;
    if (!forecast_mean.empty()) {
      if (int(forecast_mean.size()) != sc.links) {
        std::cerr << "--forecast-mean needs one value per link (" << sc.links << ")\n";
        return 2;
      }
      mean = Eigen::Map<const dnum::Vec>(forecast_mean.data(), long(forecast_mean.size()));
    } else {
      mean = sc.capacity.colwise().mean().transpose();
    }
    fc = dnum::mpc::CapacityForecaster::constant_mean(mean);
  } else {
    std::cerr << "unknown forecaster: " << forecast << "\n";
    return 2;
  }

  dnum::mpc::InnerSolver inner;
  if (solver == "newton") {
    dnum::newton::Config cfg;
    cfg.gap_tol = tolerance;
    inner = [cfg](const Scenario& s) {
      auto r = dnum::newton::solve(s, cfg);
      return std::make_pair(r.allocation, r.report);
    };
  } else {
    dnum::dual::Config cfg;
    cfg.gamma = gamma;
    cfg.th = th;
    inner = [cfg](const Scenario& s) {
      auto r = dnum::dual::solve(s, cfg);
      return std::make_pair(r.allocation, r.report);
    };
  }

  auto res = dnum::mpc::rolling_solve(sc, sc.capacity, fc, inner);

  SolveReport rep;
  rep.objective = sc.total_utility(res.allocation.rates);
  rep.converged = !res.any_flagged;
  rep.status = res.any_flagged ? dnum::SolveStatus::Infeasible : dnum::SolveStatus::Converged;
  for (const auto& r : res.step_reports) rep.iterations += r.iterations;
  rep.kkt.primal_feasibility = std::max(dnum::max_capacity_violation(sc, res.allocation),
                                        dnum::max_contract_violation(sc, res.allocation));
  dnum::fill_slacks(sc, res.allocation, rep);
  write_solution_files(out, res.allocation, rep, false);

  std::string lines;
  for (size_t t = 0; t < res.step_reports.size(); ++t) {
    json row;
    row["period"] = int(t) + 1;
    row["status"] = dnum::io::status_name(res.step_reports[t].status);
    row["iterations"] = res.step_reports[t].iterations;
    row["objective"] = res.step_reports[t].objective;
    row["fallback"] = bool(res.step_flagged[t]);
    lines += row.dump() + "\n";
  }
  dnum::io::write_text(out + "/steps.jsonl", lines);

  std::cout << "status=" << dnum::io::status_name(rep.status)
            << " rolling_utility=" << rep.objective << "\n";
  return rep.converged ? 0 : 1;
}

int cmd_compare(const std::string& a_path, const std::string& b_path) {
  json a = json::parse(dnum::io::read_text(a_path));
  json b = json::parse(dnum::io::read_text(b_path));
  Allocation aa{dnum::io::mat_from_json(a.at("rates")), dnum::io::mat_from_json(a.at("margins")),
                dnum::io::mat_from_json(a.at("delays"))};
  Allocation bb{dnum::io::mat_from_json(b.at("rates")), dnum::io::mat_from_json(b.at("margins")),
                dnum::io::mat_from_json(b.at("delays"))};
  Scenario sc;  // shapes only; compare() needs no scenario data beyond utility
  auto d = dnum::compare(sc, aa, bb);
  json out;
  out["rate_max_abs"] = d.rate_max_abs;
  out["rate_max_rel"] = d.rate_max_rel;
  out["margin_max_abs"] = d.margin_max_abs;
  out["margin_max_rel"] = d.margin_max_rel;
  out["delay_max_abs"] = d.delay_max_abs;
  out["delay_max_rel"] = d.delay_max_rel;
  out["objective_gap"] = a.at("objective").get<double>() - b.at("objective").get<double>();
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("DNUMKIT_THREADS"))
    Eigen::setNbThreads(std::max(1, std::atoi(threads)));

  CLI::App app{"dnumkit: multi-period rate allocation under delay contracts"};
  app.require_subcommand(1);

  std::string solver = "dual", out = ".", a_path, b_path, gen_out = "scenario.json";
  double gamma = 0.01, th = 0.01, beta0 = 1.0, tolerance = 1e-4;
  int max_iters = 100000, window = 1;
  bool trace = false;
  std::string forecast = "constant";
  std::vector<double> forecast_mean;

  ScenarioArgs sa_solve, sa_mpc, sa_validate, sa_gen;

  auto* solve = app.add_subcommand("solve", "solve a scenario");
  sa_solve.attach(solve);
  solve->add_option("--solver", solver, "dual | newton | oracle");
  solve->add_option("--gamma", gamma, "dual step size (<= 0 selects the safe bound)");
  solve->add_option("--th", th, "dual stopping threshold");
  solve->add_option("--max-iters", max_iters, "dual iteration cap");
  solve->add_option("--beta0", beta0, "initial barrier weight");
  solve->add_option("--tolerance", tolerance, "barrier gap / oracle resolution");
  solve->add_option("--out", out, "output directory");
  solve->add_flag("--trace", trace, "also write trace.csv");

  auto* mpc = app.add_subcommand("mpc", "receding-horizon solve");
  sa_mpc.attach(mpc);
  mpc->add_option("--solver", solver, "inner solver: dual | newton");
  mpc->add_option("--forecast", forecast, "constant | running | clairvoyant");
  mpc->add_option("--forecast-mean", forecast_mean, "per-link constant forecast");
  mpc->add_option("--window", window, "running-average window");
  mpc->add_option("--gamma", gamma, "dual step size");
  mpc->add_option("--th", th, "dual stopping threshold");
  mpc->add_option("--tolerance", tolerance, "barrier gap");
  mpc->add_option("--out", out, "output directory");

  auto* compare = app.add_subcommand("compare", "diff two results.json files");
  compare->add_option("--a", a_path, "first results.json")->required();
  compare->add_option("--b", b_path, "second results.json")->required();

  auto* validate = app.add_subcommand("validate", "check a scenario's invariants");
  sa_validate.attach(validate);

  auto* gen = app.add_subcommand("gen", "write a generated scenario to JSON");
  sa_gen.attach(gen);
  gen->add_option("--out", gen_out, "output scenario path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // --help exits 0; anything else is a usage error
  }

  try {
    if (solve->parsed()) {
      if (!sa_solve.specified()) {
        std::cerr << "solve: provide --scenario or --gen\n";
        return 2;
      }
      return cmd_solve(sa_solve, solver, gamma, th, max_iters, beta0, tolerance, out, trace);
    }
    if (mpc->parsed()) {
      if (!sa_mpc.specified()) {
        std::cerr << "mpc: provide --scenario or --gen\n";
        return 2;
      }
      return cmd_mpc(sa_mpc, forecast, forecast_mean, window, solver, gamma, th, tolerance, out);
    }
    if (compare->parsed()) return cmd_compare(a_path, b_path);
    if (validate->parsed()) {
      if (!sa_validate.specified()) {
        std::cerr << "validate: provide --scenario or --gen\n";
        return 2;
      }
      return check_valid(sa_validate.load());
    }
    if (gen->parsed()) {
      if (!sa_gen.specified()) {
        std::cerr << "gen: provide --gen\n";
        return 2;
      }
      Scenario sc = sa_gen.load();
      if (int rc = check_valid(sc)) return rc;
      dnum::io::save_scenario(sc, gen_out);
      std::cout << "wrote " << gen_out << "\n";
      return 0;
    }
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
