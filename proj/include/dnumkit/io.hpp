#ifndef DNUMKIT_IO_HPP
#define DNUMKIT_IO_HPP

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnumkit/model.hpp"

// JSON / CSV boundary. Scenario files use 1-based source, link, and period
// indices; everything becomes 0-based on load. ordered_json keeps output
// byte-stable across runs.

namespace dnum {
namespace io {

using json = nlohmann::ordered_json;

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat mat_from_json(const json& j) {
  const int rows = int(j.size());
  const int cols = rows ? int(j.at(0).size()) : 0;
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (int(j.at(i).size()) != cols)
      throw std::invalid_argument("ragged matrix in scenario file");
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

inline json scenario_to_json(const Scenario& sc) {
  json j;
  j["horizon"] = sc.horizon;
  j["sources"] = sc.sources;
  j["links"] = sc.links;

  // routing[t][l] lists the 1-based sources crossing link l+1 at period t+1.
  json routing = json::array();
  for (int t = 0; t < sc.horizon; ++t) {
    json per_link = json::array();
    for (int l = 0; l < sc.links; ++l) {
      json ids = json::array();
      for (int s = 0; s < sc.sources; ++s)
        if (sc.routing[t](l, s) != 0.0) ids.push_back(s + 1);
      per_link.push_back(std::move(ids));
    }
    routing.push_back(std::move(per_link));
  }
  j["routing"] = std::move(routing);
  j["capacities"] = to_json(sc.capacity);
  j["rate_bounds"] = {{"min", to_json(sc.rate_min)}, {"max", to_json(sc.rate_max)}};

  json utils = json::array();
  for (int s = 0; s < sc.sources; ++s) {
    json row = json::array();
    for (int t = 0; t < sc.horizon; ++t) {
      const UtilitySpec& u = sc.utility(s, t);
      if (u.kind == UtilitySpec::Kind::Log)
        row.push_back({{"kind", "log"}});
      else
        row.push_back({{"kind", "weighted_log"}, {"weight", u.a()}});
    }
    utils.push_back(std::move(row));
  }
  j["utilities"] = std::move(utils);

  json delays = json::array();
  for (const DelaySpec& d : sc.delay_model)
    delays.push_back({{"kind", "mm1"},
                      {"q", d.q},
                      {"sigma_lo", d.sigma_lo},
                      {"sigma_hi", d.sigma_hi}});
  j["delay_models"] = std::move(delays);

  json contracts = json::array();
  for (const DelayContract& c : sc.contracts) {
    json w = json::array();
    for (int t : c.window) w.push_back(t + 1);
    contracts.push_back({{"source", c.source + 1}, {"window", std::move(w)}, {"bound", c.bound}});
  }
  j["contracts"] = std::move(contracts);
  return j;
}

inline Scenario scenario_from_json(const json& j) {
  Scenario sc;
  sc.horizon = j.at("horizon").get<int>();
  sc.sources = j.at("sources").get<int>();
  sc.links = j.at("links").get<int>();

  const json& routing = j.at("routing");
  if (int(routing.size()) != sc.horizon)
    throw std::invalid_argument("routing: expected one entry per period");
  sc.routing.assign(sc.horizon, Mat::Zero(sc.links, sc.sources));
  for (int t = 0; t < sc.horizon; ++t) {
    const json& per_link = routing.at(t);
    if (int(per_link.size()) != sc.links)
      throw std::invalid_argument("routing: expected one source list per link");
    for (int l = 0; l < sc.links; ++l)
      for (const auto& id : per_link.at(l)) {
        int s = id.get<int>();
        if (s < 1 || s > sc.sources) throw std::invalid_argument("routing: source id out of range");
        sc.routing[t](l, s - 1) = 1.0;
      }
  }

  sc.capacity = mat_from_json(j.at("capacities"));
  sc.rate_min = mat_from_json(j.at("rate_bounds").at("min"));
  sc.rate_max = mat_from_json(j.at("rate_bounds").at("max"));

  sc.utilities.resize(size_t(sc.sources) * sc.horizon);
  const json& utils = j.at("utilities");
  for (int s = 0; s < sc.sources; ++s)
    for (int t = 0; t < sc.horizon; ++t) {
      const json& u = utils.at(s).at(t);
      const std::string kind = u.at("kind").get<std::string>();
      if (kind == "log")
        sc.utility(s, t) = UtilitySpec::log_utility();
      else if (kind == "weighted_log")
        sc.utility(s, t) = UtilitySpec::weighted_log(u.at("weight").get<double>());
      else
        throw std::invalid_argument("unknown utility kind: " + kind);
    }

  for (const auto& d : j.at("delay_models")) {
    if (d.at("kind").get<std::string>() != "mm1")
      throw std::invalid_argument("unknown delay model kind");
    sc.delay_model.push_back(DelaySpec::mm1(d.at("q").get<double>(),
                                            d.value("sigma_lo", 1e-3),
                                            d.value("sigma_hi", 1e3)));
  }

  for (const auto& c : j.at("contracts")) {
    DelayContract dc;
    dc.source = c.at("source").get<int>() - 1;
    for (const auto& t : c.at("window")) dc.window.push_back(t.get<int>() - 1);
    dc.bound = c.at("bound").get<double>();
    sc.contracts.push_back(std::move(dc));
  }
  return sc;
}

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Stalled: return "stalled";
  }
  return "unknown";
}

inline json vec_to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json result_to_json(const Allocation& a, const SolveReport& rep) {
  json j;
  j["status"] = status_name(rep.status);
  j["converged"] = rep.converged;
  j["iterations"] = rep.iterations;
  j["objective"] = rep.objective;
  j["wall_time_seconds"] = rep.wall_time;
  j["kkt"] = {{"stationarity", rep.kkt.stationarity},
              {"primal_feasibility", rep.kkt.primal_feasibility},
              {"dual_feasibility", rep.kkt.dual_feasibility},
              {"complementarity", rep.kkt.complementarity}};
  j["rates"] = to_json(a.rates);
  j["margins"] = to_json(a.margins);
  j["delays"] = to_json(a.delays);
  j["capacity_slack"] = vec_to_json(rep.capacity_slack);
  j["contract_slack"] = vec_to_json(rep.contract_slack);
  if (!rep.note.empty()) j["note"] = rep.note;
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_scenario(const Scenario& sc, const std::string& path) {
  write_text(path, scenario_to_json(sc).dump(2) + "\n");
}

inline Scenario load_scenario(const std::string& path) {
  return scenario_from_json(json::parse(read_text(path)));
}

/// trace.csv: iteration, dual objective, max primal change, max KKT residual.
inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "iteration,dual_objective,max_primal_change,max_kkt_residual\n";
  out.precision(12);
  for (const TraceRow& r : trace)
    out << r.iteration << ',' << r.dual_objective << ',' << r.max_primal_change << ','
        << r.max_kkt_residual << '\n';
  return out.str();
}

/// Matrix CSV with 1-based headers, e.g. rates.csv has columns t1..tT and one
/// row per source.
inline std::string mat_csv(const Mat& m, const std::string& row_prefix,
                           const std::string& col_prefix) {
  std::ostringstream out;
  out.precision(12);
  out << row_prefix;
  for (int c = 0; c < m.cols(); ++c) out << ',' << col_prefix << (c + 1);
  out << '\n';
  for (int r = 0; r < m.rows(); ++r) {
    out << (r + 1);
    for (int c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
    out << '\n';
  }
  return out.str();
}

}  // namespace io
}  // namespace dnum

#endif  // DNUMKIT_IO_HPP
