#ifndef DNUMKIT_MODEL_HPP
#define DNUMKIT_MODEL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dnumkit/functions.hpp"

// Problem data for multi-period rate allocation under capacity and averaged
// end-to-end delay constraints, plus the primal/dual solution records shared
// by every solver. Period and source/link indices are 0-based internally;
// the 1-based external convention lives at the I/O boundary only.

namespace dnum {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Margin floor used when reporting D(sigma) at sigma = 0; D has a pole there
// and reports must stay finite. Solvers keep sigma >= 0 and handle the zero
// case explicitly.
inline constexpr double kMarginFloor = 1e-9;

/// One averaged end-to-end delay requirement: the mean of the source's
/// per-period delays over `window` must not exceed `bound`. The implied
/// indicator row carries weight 1/|window| on window periods.
struct DelayContract {
  int source = 0;                // source id, 0-based
  std::vector<int> window;       // periods, 0-based, strictly increasing
  double bound = 0.0;            // d > 0, delay units

  double weight() const { return window.empty() ? 0.0 : 1.0 / double(window.size()); }
  bool covers(int t) const {
    return std::binary_search(window.begin(), window.end(), t);
  }
};

struct Scenario {
  int horizon = 0;  // T
  int sources = 0;  // S
  int links = 0;    // L

  std::vector<Mat> routing;            // T entries, each L x S with {0,1} entries
  Mat capacity;                        // T x L, kbps
  Mat rate_min;                        // S x T, kbps
  Mat rate_max;                        // S x T, kbps
  std::vector<UtilitySpec> utilities;  // S*T, row-major (s*T + t)
  std::vector<DelaySpec> delay_model;  // per link
  std::vector<DelayContract> contracts;

  const UtilitySpec& utility(int s, int t) const { return utilities[size_t(s) * horizon + t]; }
  UtilitySpec& utility(int s, int t) { return utilities[size_t(s) * horizon + t]; }

  bool on_route(int s, int t, int l) const { return routing[t](l, s) != 0.0; }

  /// Aggregate utility of a rate matrix.
  double total_utility(const Mat& rates) const {
    double u = 0;
    for (int s = 0; s < sources; ++s)
      for (int t = 0; t < horizon; ++t) u += utility_value(utility(s, t), rates(s, t));
    return u;
  }
};

/// Primal solution: rates X (S x T), link margins Sigma (T x L), and the
/// per-source end-to-end delays phi (S x T) derived from the margins.
struct Allocation {
  Mat rates;    // S x T
  Mat margins;  // T x L
  Mat delays;   // S x T
};

/// Dual variables: lambda prices capacity per (t, l), mu prices each contract.
struct DualState {
  Mat lambda;  // T x L
  Vec mu;      // one entry per contract

  static DualState zeros(const Scenario& sc) {
    return {Mat::Zero(sc.horizon, sc.links), Vec::Zero(long(sc.contracts.size()))};
  }
};

struct KktReport {
  double stationarity = 0;       // max-norm of Lagrangian gradient (sign-aware at clips)
  double primal_feasibility = 0; // max capacity / contract violation
  double dual_feasibility = 0;   // min dual entry
  double complementarity = 0;    // max |multiplier * slack|
};

enum class SolveStatus { Converged, MaxIterations, Infeasible, Stalled };

struct TraceRow {
  int iteration = 0;
  double dual_objective = 0;
  double max_primal_change = 0;
  double max_kkt_residual = 0;
};

struct SolveReport {
  int iterations = 0;
  double objective = 0;
  KktReport kkt;
  Vec capacity_slack;  // T*L flattened (t*L + l)
  Vec contract_slack;  // per contract
  bool converged = false;
  SolveStatus status = SolveStatus::MaxIterations;
  double wall_time = 0;
  std::vector<TraceRow> trace;
  std::string note;
};

struct Violation {
  std::string field;
  std::string message;
};

/// Checks every Scenario invariant; violations name the offending field and
/// index. An empty result means the scenario is well formed.
inline std::vector<Violation> validate(const Scenario& sc) {
  std::vector<Violation> out;
  auto add = [&](const std::string& f, const std::string& m) { out.push_back({f, m}); };

  if (sc.horizon <= 0) add("horizon", "horizon must be positive");
  if (sc.sources <= 0) add("sources", "source count must be positive");
  if (sc.links <= 0) add("links", "link count must be positive");
  if (!out.empty()) return out;

  if (int(sc.routing.size()) != sc.horizon)
    add("routing", "expected one routing matrix per period");
  for (int t = 0; t < int(sc.routing.size()); ++t) {
    const Mat& R = sc.routing[t];
    if (R.rows() != sc.links || R.cols() != sc.sources) {
      add("routing[" + std::to_string(t + 1) + "]", "shape must be L x S");
      continue;
    }
    for (int l = 0; l < sc.links; ++l)
      for (int s = 0; s < sc.sources; ++s)
        if (R(l, s) != 0.0 && R(l, s) != 1.0)
          add("routing[" + std::to_string(t + 1) + "]", "entries must be 0 or 1");
  }

  if (sc.capacity.rows() != sc.horizon || sc.capacity.cols() != sc.links)
    add("capacity", "shape must be T x L");
  else
    for (int t = 0; t < sc.horizon; ++t)
      for (int l = 0; l < sc.links; ++l)
        if (!(sc.capacity(t, l) > 0))
          add("capacity[" + std::to_string(t + 1) + "," + std::to_string(l + 1) + "]",
              "capacity must be strictly positive");

  if (sc.rate_min.rows() != sc.sources || sc.rate_min.cols() != sc.horizon ||
      sc.rate_max.rows() != sc.sources || sc.rate_max.cols() != sc.horizon) {
    add("rate_bounds", "shape must be S x T");
  } else {
    for (int s = 0; s < sc.sources; ++s)
      for (int t = 0; t < sc.horizon; ++t) {
        const std::string at = "[" + std::to_string(s + 1) + "," + std::to_string(t + 1) + "]";
        if (!(sc.rate_min(s, t) > 0)) add("rate_min" + at, "rate_min must be strictly positive");
        if (sc.rate_min(s, t) > sc.rate_max(s, t)) add("rate_max" + at, "rate_max below rate_min");
      }
  }

  if (int(sc.utilities.size()) != sc.sources * sc.horizon)
    add("utilities", "expected one utility spec per (source, period)");
  if (int(sc.delay_model.size()) != sc.links)
    add("delay_models", "expected one delay spec per link");

  for (size_t k = 0; k < sc.contracts.size(); ++k) {
    const DelayContract& c = sc.contracts[k];
    const std::string at = "contracts[" + std::to_string(k + 1) + "]";
    if (c.source < 0 || c.source >= sc.sources) add(at, "source index out of range");
    if (c.window.empty()) add(at, "window must be nonempty");
    for (int t : c.window)
      if (t < 0 || t >= sc.horizon) add(at, "window out of horizon");
    if (!std::is_sorted(c.window.begin(), c.window.end()) ||
        std::adjacent_find(c.window.begin(), c.window.end()) != c.window.end())
      add(at, "window periods must be strictly increasing");
    if (!(c.bound > 0)) add(at, "bound must be strictly positive");
  }
  return out;
}

/// End-to-end delay of source s at period t: sum of D(sigma_tl) over the
/// links on its route. Zero-margin links on an active route are evaluated at
/// the margin floor; callers that need the exact pole can test margins
/// directly.
inline double route_delay(const Mat& margins, const Mat& routing_t,
                          const std::vector<DelaySpec>& delay_model, int s, int t) {
  double phi = 0;
  for (int l = 0; l < routing_t.rows(); ++l)
    if (routing_t(l, s) != 0.0)
      phi += delay_value(delay_model[l], std::max(margins(t, l), kMarginFloor));
  return phi;
}

/// Fills allocation.delays from margins and routing.
inline void compute_delays(const Scenario& sc, Allocation& a) {
  a.delays = Mat::Zero(sc.sources, sc.horizon);
  for (int t = 0; t < sc.horizon; ++t)
    for (int s = 0; s < sc.sources; ++s)
      a.delays(s, t) = route_delay(a.margins, sc.routing[t], sc.delay_model, s, t);
}

/// Average of the source's delays over the contract window; the constraint is
/// satisfied iff the result is <= contract.bound.
inline double contract_average_delay(const Allocation& a, const DelayContract& c) {
  double sum = 0;
  for (int t : c.window) sum += a.delays(c.source, t);
  return c.weight() * sum;
}

/// Traffic carried on link l at period t.
inline double link_load(const Scenario& sc, const Mat& rates, int t, int l) {
  double load = 0;
  for (int s = 0; s < sc.sources; ++s)
    if (sc.routing[t](l, s) != 0.0) load += rates(s, t);
  return load;
}

/// Max violation of the capacity constraints R_t X e_t + sigma_t <= c_t,
/// evaluated exactly as written.
inline double max_capacity_violation(const Scenario& sc, const Allocation& a) {
  double v = 0;
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l)
      v = std::max(v, link_load(sc, a.rates, t, l) + a.margins(t, l) - sc.capacity(t, l));
  return v;
}

/// Max violation of the contract constraints M_s phi_s <= d_s.
inline double max_contract_violation(const Scenario& sc, const Allocation& a) {
  double v = 0;
  for (const auto& c : sc.contracts) v = std::max(v, contract_average_delay(a, c) - c.bound);
  return v;
}

/// Records per-constraint slacks on a solve report.
inline void fill_slacks(const Scenario& sc, const Allocation& a, SolveReport& rep) {
  rep.capacity_slack = Vec(long(sc.horizon) * sc.links);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l)
      rep.capacity_slack(long(t) * sc.links + l) =
          sc.capacity(t, l) - link_load(sc, a.rates, t, l) - a.margins(t, l);
  rep.contract_slack = Vec(long(sc.contracts.size()));
  for (size_t k = 0; k < sc.contracts.size(); ++k)
    rep.contract_slack(long(k)) =
        sc.contracts[k].bound - contract_average_delay(a, sc.contracts[k]);
}

/// Certificate-style feasibility probe: with every rate at its minimum and
/// every margin at the full spare capacity, all delays are simultaneously at
/// their componentwise minimum (D is decreasing and margins are independent).
/// If some contract is still violated there, the scenario is infeasible.
inline bool provably_infeasible(const Scenario& sc, std::string* why = nullptr) {
  Allocation a;
  a.rates = sc.rate_min;
  a.margins = Mat::Zero(sc.horizon, sc.links);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) {
      double spare = sc.capacity(t, l) - link_load(sc, a.rates, t, l);
      if (spare < 0) {
        if (why)
          *why = "minimum rates exceed capacity at period " + std::to_string(t + 1) +
                 ", link " + std::to_string(l + 1);
        return true;
      }
      a.margins(t, l) = spare;
    }
  compute_delays(sc, a);
  for (size_t k = 0; k < sc.contracts.size(); ++k) {
    double avg = contract_average_delay(a, sc.contracts[k]);
    if (avg > sc.contracts[k].bound) {
      if (why)
        *why = "contract " + std::to_string(k + 1) + " unattainable even at minimum rates (best " +
               std::to_string(avg) + " > bound " + std::to_string(sc.contracts[k].bound) + ")";
      return true;
    }
  }
  return false;
}

}  // namespace dnum

#endif  // DNUMKIT_MODEL_HPP
