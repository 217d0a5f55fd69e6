#ifndef DNUMKIT_ORACLE_HPP
#define DNUMKIT_ORACLE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dnumkit/model.hpp"

// Independent correctness machinery: a KKT residual checker for any instance
// and a brute-force grid oracle for tiny ones. Nothing here calls into the
// solvers; these are the other side of every dual-route check.

namespace dnum {

/// Evaluates the four KKT residual families of the rate-allocation Lagrangian
/// at (allocation, dual). Stationarity at clipped rates is a sign condition,
/// not a zero residual.
inline KktReport kkt_check(const Scenario& sc, const Allocation& a, const DualState& dual) {
  KktReport r;
  r.dual_feasibility = std::numeric_limits<double>::infinity();

  // Aggregated route price lambda^st and link delay price mu^tl, computed
  // straight from the definitions.
  Mat lam_route = Mat::Zero(sc.sources, sc.horizon);
  Mat mu_link = Mat::Zero(sc.horizon, sc.links);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) {
      r.dual_feasibility = std::min(r.dual_feasibility, dual.lambda(t, l));
      for (int s = 0; s < sc.sources; ++s)
        if (sc.routing[t](l, s) != 0.0) lam_route(s, t) += dual.lambda(t, l);
    }
  for (size_t k = 0; k < sc.contracts.size(); ++k) {
    const DelayContract& c = sc.contracts[k];
    r.dual_feasibility = std::min(r.dual_feasibility, dual.mu(long(k)));
    for (int t : c.window)
      for (int l = 0; l < sc.links; ++l)
        if (sc.routing[t](l, c.source) != 0.0)
          mu_link(t, l) += c.weight() * dual.mu(long(k));
  }

  // Stationarity in the rates: dL/dx = U'(x) - lambda^st, sign-checked at the
  // box boundary.
  for (int s = 0; s < sc.sources; ++s)
    for (int t = 0; t < sc.horizon; ++t) {
      double grad = utility_deriv(sc.utility(s, t), a.rates(s, t)) - lam_route(s, t);
      double res;
      if (a.rates(s, t) >= sc.rate_max(s, t) - 1e-9)
        res = std::max(0.0, -grad);
      else if (a.rates(s, t) <= sc.rate_min(s, t) + 1e-9)
        res = std::max(0.0, grad);
      else
        res = std::abs(grad);
      r.stationarity = std::max(r.stationarity, res);
    }

  // Stationarity in the margins: dL/dsigma = -(mu^tl D'(sigma) + lambda_tl).
  // sigma = 0 is stationary iff no delay price touches the link.
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) {
      double sigma = a.margins(t, l);
      double mu = mu_link(t, l);
      double res;
      if (sigma <= kMarginFloor) {
        res = (mu <= 1e-12) ? 0.0 : std::abs(mu * delay_deriv(sc.delay_model[l], kMarginFloor));
      } else {
        res = std::abs(mu * delay_deriv(sc.delay_model[l], sigma) + dual.lambda(t, l));
      }
      r.stationarity = std::max(r.stationarity, res);
    }

  // Primal feasibility and complementary slackness.
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) {
      double slack = sc.capacity(t, l) - link_load(sc, a.rates, t, l) - a.margins(t, l);
      r.primal_feasibility = std::max(r.primal_feasibility, -slack);
      r.complementarity = std::max(r.complementarity, std::abs(dual.lambda(t, l) * slack));
    }
  for (size_t k = 0; k < sc.contracts.size(); ++k) {
    double slack = sc.contracts[k].bound - contract_average_delay(a, sc.contracts[k]);
    r.primal_feasibility = std::max(r.primal_feasibility, -slack);
    r.complementarity = std::max(r.complementarity, std::abs(dual.mu(long(k)) * slack));
  }
  return r;
}

struct OracleResult {
  bool feasible = false;
  double utility = -std::numeric_limits<double>::infinity();
  Allocation best;
  std::string note;
};

namespace detail {

struct GridCoord {
  bool is_rate = false;
  int s = 0, t = 0, l = 0;
  double lo = 0, hi = 0;
};

inline bool oracle_feasible(const Scenario& sc, const Allocation& a) {
  return max_capacity_violation(sc, a) <= 1e-12 && max_contract_violation(sc, a) <= 1e-12;
}

}  // namespace detail

/// Brute-force baseline for tiny instances (TS + TL <= 6 decision dims).
/// Enumerates rate and margin grids, coarse-to-fine down to `resolution`,
/// keeping the best feasible point. Margins are enumerated only on links a
/// contract window touches; elsewhere sigma = 0 is optimal outright since
/// margins only ever help delay constraints. The problem is convex, so the
/// nested refinement reaches the same point exhaustive enumeration would,
/// within the resolution bound.
inline OracleResult grid_oracle(const Scenario& sc, double resolution) {
  const int dims_total = sc.sources * sc.horizon + sc.horizon * sc.links;
  if (dims_total > 6) throw std::invalid_argument("instance too large for oracle");

  std::string why;
  if (provably_infeasible(sc, &why)) return {false, 0.0, {}, "no feasible point: " + why};

  std::vector<detail::GridCoord> coords;
  for (int s = 0; s < sc.sources; ++s)
    for (int t = 0; t < sc.horizon; ++t)
      coords.push_back({true, s, t, 0, sc.rate_min(s, t), sc.rate_max(s, t)});
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) {
      bool touched = false;
      for (const auto& c : sc.contracts)
        if (c.covers(t) && sc.routing[t](l, c.source) != 0.0) touched = true;
      if (touched) coords.push_back({false, 0, t, l, 0.0, sc.capacity(t, l)});
    }

  const int n = int(coords.size());
  const int points = n <= 3 ? 33 : (n <= 4 ? 21 : 13);

  // Feasible incumbent: minimum rates, all spare capacity as margin. The
  // probe above guarantees this point is feasible.
  Allocation inc;
  inc.rates = sc.rate_min;
  inc.margins = Mat::Zero(sc.horizon, sc.links);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l)
      inc.margins(t, l) = sc.capacity(t, l) - link_load(sc, inc.rates, t, l);
  compute_delays(sc, inc);
  double best_u = sc.total_utility(inc.rates);

  std::vector<double> lo(n), hi(n), val(n);
  for (int i = 0; i < n; ++i) lo[i] = coords[i].lo, hi[i] = coords[i].hi;

  Allocation cand;
  cand.margins = Mat::Zero(sc.horizon, sc.links);
  auto evaluate = [&](auto&& self, int depth) -> void {
    if (depth == n) {
      for (int i = 0; i < n; ++i) {
        if (coords[i].is_rate)
          cand.rates(coords[i].s, coords[i].t) = val[i];
        else
          cand.margins(coords[i].t, coords[i].l) = val[i];
      }
      if (max_capacity_violation(sc, cand) > 1e-12) return;
      double u = sc.total_utility(cand.rates);
      if (u <= best_u) return;
      compute_delays(sc, cand);
      if (max_contract_violation(sc, cand) > 1e-12) return;
      best_u = u;
      inc = cand;
      return;
    }
    double step = (hi[depth] - lo[depth]) / (points - 1);
    for (int i = 0; i < points; ++i) {
      val[depth] = lo[depth] + step * i;
      self(self, depth + 1);
    }
  };

  double cell = 0;
  for (int i = 0; i < n; ++i) cell = std::max(cell, (hi[i] - lo[i]) / (points - 1));
  cand.rates = inc.rates;
  while (true) {
    evaluate(evaluate, 0);
    if (cell <= resolution) break;
    // Shrink every range to +-1.5 cells around the incumbent and refine.
    for (int i = 0; i < n; ++i) {
      double center = coords[i].is_rate ? inc.rates(coords[i].s, coords[i].t)
                                        : inc.margins(coords[i].t, coords[i].l);
      double half = 1.5 * (hi[i] - lo[i]) / (points - 1);
      lo[i] = std::max(coords[i].lo, center - half);
      hi[i] = std::min(coords[i].hi, center + half);
    }
    cell = 0;
    for (int i = 0; i < n; ++i) cell = std::max(cell, (hi[i] - lo[i]) / (points - 1));
  }

  compute_delays(sc, inc);
  return {true, best_u, inc, ""};
}

struct DiffReport {
  double rate_max_abs = 0, rate_max_rel = 0;
  double margin_max_abs = 0, margin_max_rel = 0;
  double delay_max_abs = 0, delay_max_rel = 0;
  double utility_gap = 0;  // utility(a) - utility(b)
};

/// Fieldwise comparison of two allocations on the same scenario shapes.
inline DiffReport compare(const Scenario& sc, const Allocation& a, const Allocation& b) {
  if (a.rates.rows() != b.rates.rows() || a.rates.cols() != b.rates.cols() ||
      a.margins.rows() != b.margins.rows() || a.margins.cols() != b.margins.cols())
    throw std::invalid_argument("compare: allocation shape mismatch");

  auto diff = [](const Mat& x, const Mat& y, double& abs_d, double& rel_d) {
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j) {
        double d = std::abs(x(i, j) - y(i, j));
        abs_d = std::max(abs_d, d);
        double denom = std::max(std::abs(x(i, j)), std::abs(y(i, j)));
        if (denom > 1e-12) rel_d = std::max(rel_d, d / denom);
      }
  };

  DiffReport r;
  diff(a.rates, b.rates, r.rate_max_abs, r.rate_max_rel);
  diff(a.margins, b.margins, r.margin_max_abs, r.margin_max_rel);
  if (a.delays.size() > 0 && a.delays.size() == b.delays.size())
    diff(a.delays, b.delays, r.delay_max_abs, r.delay_max_rel);
  r.utility_gap = sc.total_utility(a.rates) - sc.total_utility(b.rates);
  return r;
}

}  // namespace dnum

#endif  // DNUMKIT_ORACLE_HPP
