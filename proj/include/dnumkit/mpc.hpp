#ifndef DNUMKIT_MPC_HPP
#define DNUMKIT_MPC_HPP

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dnumkit/model.hpp"

// Receding-horizon control when future link capacities are unknown: at each
// period observe the realized capacities, solve the remaining horizon against
// forecasts, commit only the current period, and repeat. Committed rates and
// margins never change afterwards; margins are committed alongside rates
// because the already-incurred delay mass of a contract window depends on
// them.

namespace dnum {
namespace mpc {

/// Capacity forecast c_hat(t | tau): expected capacities at a future period t
/// given everything realized through tau.
struct CapacityForecaster {
  enum class Kind { ConstantMean, RunningAverage, Clairvoyant };
  Kind kind = Kind::ConstantMean;
  Vec mean;        // ConstantMean: per-link values
  int window = 1;  // RunningAverage: how many trailing periods to average
  Mat truth;       // Clairvoyant: the full realized T x L matrix

  static CapacityForecaster constant_mean(Vec values) {
    if ((values.array() <= 0).any())
      throw std::invalid_argument("forecasts must be strictly positive");
    CapacityForecaster f;
    f.kind = Kind::ConstantMean;
    f.mean = std::move(values);
    return f;
  }
  static CapacityForecaster running_average(int window) {
    if (window < 1) throw std::invalid_argument("running_average: window must be >= 1");
    CapacityForecaster f;
    f.kind = Kind::RunningAverage;
    f.window = window;
    return f;
  }
  static CapacityForecaster clairvoyant(Mat truth) {
    CapacityForecaster f;
    f.kind = Kind::Clairvoyant;
    f.truth = std::move(truth);
    return f;
  }

  /// realized holds rows 0..tau inclusive; t > tau.
  Vec forecast(int t, int tau, const Mat& realized) const {
    switch (kind) {
      case Kind::ConstantMean:
        return mean;
      case Kind::RunningAverage: {
        int first = std::max(0, tau + 1 - window);
        Vec avg = Vec::Zero(realized.cols());
        for (int i = first; i <= tau; ++i) avg += realized.row(i).transpose();
        return avg / double(tau + 1 - first);
      }
      case Kind::Clairvoyant:
        return truth.row(t).transpose();
    }
    throw std::logic_error("unknown forecaster kind");
  }
};

/// Progress of a rolling solve: everything committed through period tau - 1.
struct HorizonState {
  int tau = 0;             // next period to decide, 0-based
  Mat committed_rates;     // S x tau
  Mat committed_margins;   // tau x L
  Mat committed_delays;    // S x tau
  Mat realized_capacity;   // rows 0..tau-1 observed so far (T x L storage)
};

struct HorizonProblem {
  Scenario scenario;  // periods tau..T-1 of the original problem
  bool residual_violated = false;
  std::string note;
};

/// Remaining-horizon problem at state.tau: period tau uses the realized
/// capacities, later periods the forecasts. Expired contracts are dropped;
/// straddling ones keep only their remaining window with the bound rescaled
/// so the original weights are preserved: with G the original window length
/// and G' the remaining one, (1/G) sum_rem phi <= d - incurred becomes
/// (1/G') sum_rem phi <= (d - incurred) G / G'.
inline HorizonProblem build_horizon_problem(const Scenario& sc, const HorizonState& state,
                                            const CapacityForecaster& fc) {
  const int tau = state.tau;
  if (tau < 0 || tau >= sc.horizon) throw std::invalid_argument("horizon state out of range");
  const int rem = sc.horizon - tau;

  HorizonProblem hp;
  Scenario& out = hp.scenario;
  out.horizon = rem;
  out.sources = sc.sources;
  out.links = sc.links;
  out.routing.assign(sc.routing.begin() + tau, sc.routing.end());
  out.capacity = Mat(rem, sc.links);
  out.capacity.row(0) = state.realized_capacity.row(tau);
  for (int i = 1; i < rem; ++i)
    out.capacity.row(i) = fc.forecast(tau + i, tau, state.realized_capacity).transpose();
  out.rate_min = sc.rate_min.rightCols(rem);
  out.rate_max = sc.rate_max.rightCols(rem);
  out.utilities.resize(size_t(sc.sources) * rem);
  for (int s = 0; s < sc.sources; ++s)
    for (int t = 0; t < rem; ++t) out.utilities[size_t(s) * rem + t] = sc.utility(s, tau + t);
  out.delay_model = sc.delay_model;

  for (const auto& c : sc.contracts) {
    std::vector<int> remaining;
    double incurred = 0;
    for (int t : c.window) {
      if (t < tau)
        incurred += c.weight() * state.committed_delays(c.source, t);
      else
        remaining.push_back(t - tau);
    }
    if (remaining.empty()) continue;  // expired
    double residual = c.bound - incurred;
    if (residual <= 0) {
      hp.residual_violated = true;
      hp.note = "contract already violated; remaining constraint infeasible";
      continue;
    }
    double rescaled = residual * double(c.window.size()) / double(remaining.size());
    out.contracts.push_back({c.source, remaining, rescaled});
  }
  return hp;
}

/// Any one-shot solver usable inside the rolling loop.
using InnerSolver = std::function<std::pair<Allocation, SolveReport>(const Scenario&)>;

struct RollingResult {
  Allocation allocation;               // concatenation of per-period commitments
  std::vector<SolveReport> step_reports;
  std::vector<bool> step_flagged;      // per-period infeasibility fallback taken
  bool any_flagged = false;
};

/// For tau = 1..T: observe the realized capacities, rebuild the remaining
/// horizon against forecasts, solve, and commit period tau. On a per-step
/// infeasibility the period falls back to minimum rates with all spare
/// capacity as margin and the violation is carried forward, flagged.
inline RollingResult rolling_solve(const Scenario& sc, const Mat& capacity_stream,
                                   const CapacityForecaster& fc, const InnerSolver& solver) {
  if (capacity_stream.rows() != sc.horizon || capacity_stream.cols() != sc.links)
    throw std::invalid_argument("capacity stream must be T x L");

  RollingResult res;
  HorizonState st;
  st.committed_rates = Mat(sc.sources, 0);
  st.committed_margins = Mat(0, sc.links);
  st.committed_delays = Mat(sc.sources, sc.horizon);
  st.realized_capacity = Mat::Zero(sc.horizon, sc.links);

  res.allocation.rates = Mat(sc.sources, sc.horizon);
  res.allocation.margins = Mat(sc.horizon, sc.links);

  for (int tau = 0; tau < sc.horizon; ++tau) {
    st.tau = tau;
    st.realized_capacity.row(tau) = capacity_stream.row(tau);

    HorizonProblem hp = build_horizon_problem(sc, st, fc);
    bool flagged = hp.residual_violated;
    Vec rates_tau;
    Vec margins_tau;

    if (!flagged) {
      auto [alloc, rep] = solver(hp.scenario);
      res.step_reports.push_back(rep);
      if (rep.status == SolveStatus::Infeasible) {
        flagged = true;
      } else {
        rates_tau = alloc.rates.col(0);
        margins_tau = alloc.margins.row(0).transpose();
      }
    } else {
      res.step_reports.push_back({});
      res.step_reports.back().status = SolveStatus::Infeasible;
      res.step_reports.back().note = hp.note;
    }

    if (flagged) {
      // Streaming fallback: emit minimum rates, spend the spare on margins.
      rates_tau = sc.rate_min.col(tau);
      margins_tau = Vec(sc.links);
      for (int l = 0; l < sc.links; ++l) {
        double load = 0;
        for (int s = 0; s < sc.sources; ++s)
          if (sc.routing[tau](l, s) != 0.0) load += rates_tau(s);
        margins_tau(l) = std::max(0.0, capacity_stream(tau, l) - load);
      }
    }
    res.step_flagged.push_back(flagged);
    res.any_flagged = res.any_flagged || flagged;

    res.allocation.rates.col(tau) = rates_tau;
    res.allocation.margins.row(tau) = margins_tau.transpose();
    for (int s = 0; s < sc.sources; ++s)
      st.committed_delays(s, tau) =
          route_delay(res.allocation.margins, sc.routing[tau], sc.delay_model, s, tau);
  }

  compute_delays(sc, res.allocation);
  return res;
}

}  // namespace mpc
}  // namespace dnum

#endif  // DNUMKIT_MPC_HPP
