#ifndef DNUMKIT_DUAL_SOLVER_HPP
#define DNUMKIT_DUAL_SOLVER_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dnumkit/model.hpp"
#include "dnumkit/oracle.hpp"

// Dual gradient projection with closed-form primal recovery: per iteration,
// rates and margins are recovered from the aggregated prices, then lambda
// ascends on capacity violation and mu on averaged-delay violation, both
// projected onto the nonnegative orthant.

namespace dnum {
namespace dual {

struct Config {
  double gamma = 0.01;        // step size; <= 0 means auto (1/Q)
  double th = 0.01;           // stop when max primal change <= th
  int max_iters = 100000;
  // Dual-range box for the step-size bound; the bound constants are only
  // meaningful with the duals confined to it.
  double mu_min = 1e-2;
  double lambda_max = 0.0;    // <= 0 means 10 * max U'(w)
  bool record_trace = false;
  bool clamp_duals = false;   // keep lambda <= lambda_max, mu >= mu_min
  // Relaxation factor on the recovered margins: sigma <- sigma +
  // margin_damping * (recovered - sigma). The closed-form recovery is exact
  // at any fixed point, but near lambda = 0 its derivative blows up and the
  // undamped two-variable dynamics can cycle; damping leaves every fixed
  // point unchanged and restores stability. 1 disables it.
  double margin_damping = 0.3;
  // Per-iteration cap on the margin movement. Near a loosely bound contract
  // the recovered margin flips between 0 (dead zone) and the capacity cap;
  // bounding its velocity turns that relay into a small, th-compatible
  // ripple. <= 0 disables the cap.
  double margin_max_step = 0.005;
  // Grow-without-bound heuristic for infeasible instances.
  double dual_ceiling = 1e4;
  // Margin floor for evaluating D in the mu gradient when a link a contract
  // window touches carries zero margin (only possible while that contract's
  // own price is zero).
  double gradient_margin_floor = 1e-3;
};

/// Route price per (source, period) and delay price per (period, link).
struct AggregatedPrices {
  Mat lambda_route;  // S x T, lambda^st = sum_l (R_t)_ls lambda_tl
  Mat mu_link;       // T x L, mu^tl = sum_s sum_k (M_s)_kt (R_t)_ls mu_sk
};

inline AggregatedPrices aggregate_prices(const DualState& dual, const Scenario& sc) {
  AggregatedPrices p;
  p.lambda_route = Mat::Zero(sc.sources, sc.horizon);
  p.mu_link = Mat::Zero(sc.horizon, sc.links);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l)
      if (dual.lambda(t, l) != 0.0)
        for (int s = 0; s < sc.sources; ++s)
          if (sc.routing[t](l, s) != 0.0) p.lambda_route(s, t) += dual.lambda(t, l);
  for (size_t k = 0; k < sc.contracts.size(); ++k) {
    const DelayContract& c = sc.contracts[k];
    if (dual.mu(long(k)) == 0.0) continue;
    for (int t : c.window)
      for (int l = 0; l < sc.links; ++l)
        if (sc.routing[t](l, c.source) != 0.0)
          p.mu_link(t, l) += c.weight() * dual.mu(long(k));
  }
  return p;
}

/// x_st = U'^{-1}(lambda^st) clipped to the rate box; a zero route price maps
/// to the maximum rate (utilities are increasing).
inline Mat primal_rates(const AggregatedPrices& prices, const Scenario& sc) {
  Mat x(sc.sources, sc.horizon);
  for (int s = 0; s < sc.sources; ++s)
    for (int t = 0; t < sc.horizon; ++t) {
      double lam = prices.lambda_route(s, t);
      double v = lam <= 0.0 ? sc.rate_max(s, t) : utility_inv_deriv(sc.utility(s, t), lam);
      x(s, t) = std::clamp(v, sc.rate_min(s, t), sc.rate_max(s, t));
    }
  return x;
}

/// sigma_tl = [D'^{-1}(-lambda_tl / mu^tl)]^+. A zero delay price makes any
/// margin wasted capacity, so sigma = 0; a zero (or tiny) lambda with a
/// positive delay price would push sigma toward infinity, so the margin is
/// capped. When the current rates are supplied the cap is the link's spare
/// capacity, which keeps the capacity gradient from whipping lambda around
/// near zero; otherwise the full link capacity is used.
inline Mat primal_margins(const DualState& dual, const AggregatedPrices& prices,
                          const Scenario& sc, const Mat* rates = nullptr,
                          const Mat* hold = nullptr) {
  Mat sigma = Mat::Zero(sc.horizon, sc.links);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) {
      double mu = prices.mu_link(t, l);
      double lam = dual.lambda(t, l);
      if (mu <= 0.0) {
        // With mu = 0 the Lagrangian is linear in sigma: zero is optimal for
        // lam > 0, and any value is optimal when lam = 0 as well.  Keeping the
        // current margin in the indifferent case avoids a relay between zero
        // and the cap when both multipliers graze zero near convergence.
        if (lam <= 0.0 && hold) sigma(t, l) = (*hold)(t, l);
        continue;
      }
      double cap = sc.capacity(t, l);
      if (rates) cap = std::max(0.0, cap - link_load(sc, *rates, t, l));
      if (lam <= 0.0) {
        sigma(t, l) = cap;
      } else {
        sigma(t, l) = std::min(delay_inv_deriv(sc.delay_model[l], -lam / mu), cap);
      }
    }
  return sigma;
}

struct Gradient {
  Mat g_lambda;  // T x L: c - sigma - load
  Vec g_mu;      // per contract: d - averaged window delay
  bool floored = false;  // some D was evaluated at the margin floor
};

inline Gradient dual_gradient(const Mat& rates, const Mat& margins, const Scenario& sc,
                              double margin_floor = 1e-3) {
  Gradient g;
  g.g_lambda = Mat(sc.horizon, sc.links);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l)
      g.g_lambda(t, l) = sc.capacity(t, l) - margins(t, l) - link_load(sc, rates, t, l);

  g.g_mu = Vec(long(sc.contracts.size()));
  for (size_t k = 0; k < sc.contracts.size(); ++k) {
    const DelayContract& c = sc.contracts[k];
    double avg = 0;
    for (int t : c.window)
      for (int l = 0; l < sc.links; ++l)
        if (sc.routing[t](l, c.source) != 0.0) {
          double sigma = margins(t, l);
          if (sigma < margin_floor) {
            sigma = margin_floor;
            g.floored = true;
          }
          avg += c.weight() * delay_value(sc.delay_model[l], sigma);
        }
    g.g_mu(long(k)) = c.bound - avg;
  }
  return g;
}

/// One projected step against the gradient of the dual function (ascent on
/// constraint violation): lambda <- [lambda - gamma g_lambda]^+, same for mu.
inline DualState dual_update(const DualState& dual, const Gradient& g, double gamma) {
  if (gamma <= 0) throw std::invalid_argument("dual_update: gamma must be positive");
  DualState next;
  next.lambda = (dual.lambda - gamma * g.g_lambda).cwiseMax(0.0);
  next.mu = (dual.mu - gamma * g.g_mu).cwiseMax(0.0);
  return next;
}

/// Lipschitz bound Q on the dual gradient, valid while the duals stay inside
/// the [mu_min, lambda_max] box; the auto step size is 1/Q, strictly inside
/// the 2/Q convergence range.
inline double step_size_bound(const Scenario& sc, double lambda_max, double mu_min) {
  if (mu_min <= 0) throw std::invalid_argument("Q undefined; configure a positive dual floor");
  if (lambda_max <= 0) throw std::invalid_argument("step_size_bound: lambda_max must be positive");
  const double T = sc.horizon, L = sc.links, S = sc.sources;
  double sum_K = double(sc.contracts.size());

  double G = 0, kappa_D = std::numeric_limits<double>::infinity();
  for (const auto& d : sc.delay_model) {
    G = std::max(G, d.lipschitz());
    kappa_D = std::min(kappa_D, d.strong_convexity());
  }
  double kappa_U = std::numeric_limits<double>::infinity();
  for (int s = 0; s < sc.sources; ++s)
    for (int t = 0; t < sc.horizon; ++t)
      kappa_U = std::min(kappa_U, utility_strong_convexity(sc.utility(s, t), sc.rate_max(s, t)));

  return T * L * (1.0 / (mu_min * kappa_D) + S / kappa_U) +
         G * T * L * lambda_max / (mu_min * mu_min * kappa_D) * sum_K +
         std::sqrt(T * L * sum_K) *
             (G / (mu_min * kappa_D) + 1.0 / (mu_min * mu_min * kappa_U));
}

/// Value of the dual function g(lambda, mu): the inner maxima of the
/// Lagrangian are available in closed form. The sigma block minimizes
/// mu^tl D(sigma) + lambda_tl sigma over [0, c_tl] per (t, l).
inline double dual_objective(const Scenario& sc, const DualState& dual) {
  AggregatedPrices p = aggregate_prices(dual, sc);
  Mat x = primal_rates(p, sc);
  double g = 0;
  for (int s = 0; s < sc.sources; ++s)
    for (int t = 0; t < sc.horizon; ++t)
      g += utility_value(sc.utility(s, t), x(s, t)) - p.lambda_route(s, t) * x(s, t);
  Mat sigma = primal_margins(dual, p, sc);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) {
      double mu = p.mu_link(t, l);
      if (mu > 0.0) {
        double s_opt = std::max(sigma(t, l), kMarginFloor);
        g -= mu * delay_value(sc.delay_model[l], s_opt) + dual.lambda(t, l) * s_opt;
      }
      g += dual.lambda(t, l) * sc.capacity(t, l);
    }
  for (size_t k = 0; k < sc.contracts.size(); ++k)
    g += dual.mu(long(k)) * sc.contracts[k].bound;
  return g;
}

namespace detail {

// Enforce the capacity constraints exactly on the recovered primal point:
// shave rates first (proportionally above their minima) and only then the
// margin, since cutting a margin tightens the delay contracts it serves.
// Reducing a rate only relaxes the other links it crosses, so one pass over
// all (t, l) suffices.
inline void restore_feasibility(const Scenario& sc, Allocation& a) {
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) {
      double excess = link_load(sc, a.rates, t, l) + a.margins(t, l) - sc.capacity(t, l);
      if (excess <= 0) continue;
      double room = 0;
      for (int s = 0; s < sc.sources; ++s)
        if (sc.routing[t](l, s) != 0.0) room += a.rates(s, t) - sc.rate_min(s, t);
      if (room > 0) {
        double frac = std::min(1.0, excess / room);
        for (int s = 0; s < sc.sources; ++s)
          if (sc.routing[t](l, s) != 0.0)
            a.rates(s, t) -= frac * (a.rates(s, t) - sc.rate_min(s, t));
        excess -= frac * room;
      }
      if (excess > 0) a.margins(t, l) -= std::min(excess, a.margins(t, l));
      // Past this point the sources are at minimum and the margin is zero;
      // any residue shows up in the report as a capacity violation.
    }
}

// Repair residual contract violations left by finite termination: on the most
// effective window cell of the worst contract, trade a proportional rate cut
// for exactly the margin increase that brings the averaged delay back to the
// bound. Rate cuts only loosen other links, so capacity stays feasible.
inline void restore_contracts(const Scenario& sc, Allocation& a, double tol = 1e-9,
                              int max_rounds = 500) {
  for (int round = 0; round < max_rounds; ++round) {
    compute_delays(sc, a);
    int worst = -1;
    double v = tol;
    for (size_t k = 0; k < sc.contracts.size(); ++k) {
      double viol = contract_average_delay(a, sc.contracts[k]) - sc.contracts[k].bound;
      if (viol > v) { v = viol; worst = int(k); }
    }
    if (worst < 0) return;
    const DelayContract& c = sc.contracts[size_t(worst)];

    // Cell where a unit of margin buys the most delay reduction, with room to
    // cut rates.
    int bt = -1, bl = -1;
    double best_gain = 0;
    for (int t : c.window)
      for (int l = 0; l < sc.links; ++l) {
        if (sc.routing[t](l, c.source) == 0.0) continue;
        double room = 0;
        for (int s = 0; s < sc.sources; ++s)
          if (sc.routing[t](l, s) != 0.0) room += a.rates(s, t) - sc.rate_min(s, t);
        if (room <= 0) continue;
        double gain = -delay_deriv(sc.delay_model[l], std::max(a.margins(t, l), kMarginFloor));
        if (gain > best_gain) { best_gain = gain; bt = t; bl = l; }
      }
    if (bt < 0) return;  // no room anywhere; the report keeps the violation

    double sigma = std::max(a.margins(bt, bl), kMarginFloor);
    double target = delay_value(sc.delay_model[bl], sigma) - v * double(c.window.size());
    double room = 0;
    for (int s = 0; s < sc.sources; ++s)
      if (sc.routing[bt](bl, s) != 0.0) room += a.rates(s, bt) - sc.rate_min(s, bt);
    double delta = target > 0 ? sc.delay_model[bl].q / target - sigma : room;
    delta = std::min(std::max(delta, 0.0), room);
    if (delta <= 0) return;

    double frac = delta / room;
    for (int s = 0; s < sc.sources; ++s)
      if (sc.routing[bt](bl, s) != 0.0)
        a.rates(s, bt) -= frac * (a.rates(s, bt) - sc.rate_min(s, bt));
    a.margins(bt, bl) = sigma + delta;
  }
}

}  // namespace detail

struct Result {
  Allocation allocation;
  DualState dual;
  SolveReport report;
};

inline Result solve(const Scenario& sc, const Config& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  Result res;
  SolveReport& rep = res.report;

  std::string why;
  if (provably_infeasible(sc, &why)) {
    rep.status = SolveStatus::Infeasible;
    rep.note = "likely infeasible: " + why;
    res.allocation.rates = sc.rate_min;
    res.allocation.margins = Mat::Zero(sc.horizon, sc.links);
    compute_delays(sc, res.allocation);
    res.dual = DualState::zeros(sc);
    fill_slacks(sc, res.allocation, rep);
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  double lambda_max = cfg.lambda_max;
  if (lambda_max <= 0) {
    double dmax = 0;
    for (int s = 0; s < sc.sources; ++s)
      for (int t = 0; t < sc.horizon; ++t)
        dmax = std::max(dmax, utility_deriv(sc.utility(s, t), sc.rate_min(s, t)));
    lambda_max = 10.0 * dmax;
  }
  double gamma = cfg.gamma;
  if (gamma <= 0) gamma = 1.0 / step_size_bound(sc, lambda_max, cfg.mu_min);

  // lambda^0 = mu^0 = 0.1: small positive duals keep the mu^tl = 0 dead zone
  // from swallowing the first iterations.
  DualState dual{Mat::Constant(sc.horizon, sc.links, 0.1),
                 Vec::Constant(long(sc.contracts.size()), 0.1)};
  Mat x_prev = sc.rate_min;
  Mat sigma_prev = Mat::Zero(sc.horizon, sc.links);

  int divergence_run = 0;
  double prev_violation = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iter = 0;
  int settled_run = 0;  // consecutive iterations passing the stop test

  const double rho = std::clamp(cfg.margin_damping, 0.0, 1.0);
  Mat x, sigma = sigma_prev;
  for (iter = 1; iter <= cfg.max_iters; ++iter) {
    AggregatedPrices prices = aggregate_prices(dual, sc);
    x = primal_rates(prices, sc);
    Mat dsigma = rho * (primal_margins(dual, prices, sc, nullptr, &sigma) - sigma);
    // Distance to the recovery target before the rate limit: a margin still
    // sliding toward a far target must not read as a small primal change.
    const double margin_drift = dsigma.cwiseAbs().maxCoeff();
    if (cfg.margin_max_step > 0)
      dsigma = dsigma.cwiseMax(-cfg.margin_max_step).cwiseMin(cfg.margin_max_step);
    sigma += dsigma;

    Gradient g = dual_gradient(x, sigma, sc, cfg.gradient_margin_floor);
    dual = dual_update(dual, g, gamma);
    if (cfg.clamp_duals) {
      dual.lambda = dual.lambda.cwiseMin(lambda_max);
      dual.mu = dual.mu.cwiseMax(cfg.mu_min);
    }

    double change = std::max({(x - x_prev).cwiseAbs().maxCoeff(),
                              (sigma - sigma_prev).cwiseAbs().maxCoeff(), margin_drift});
    x_prev = x;
    sigma_prev = sigma;
    // Residual at the recovered primal: violation where a constraint is
    // broken, and dual * slack where a positive price sits on a slack
    // constraint (the overshoot side the change test cannot see).
    double worst = 0;
    for (int t = 0; t < sc.horizon; ++t)
      for (int l = 0; l < sc.links; ++l) {
        double gv = g.g_lambda(t, l);
        worst = std::max(worst, std::max(-gv, dual.lambda(t, l) * std::max(gv, 0.0)));
      }
    for (long k = 0; k < g.g_mu.size(); ++k) {
      double gv = g.g_mu(k);
      worst = std::max(worst, std::max(-gv, dual.mu(k) * std::max(gv, 0.0)));
    }

    if (cfg.record_trace)
      rep.trace.push_back({iter, dual_objective(sc, dual), change, worst});

    // The violation crosses zero transiently while the duals overshoot, so a
    // single good iteration is not evidence of convergence; require a run.
    settled_run = (change <= cfg.th && worst <= 0.1 * cfg.th && iter > 1) ? settled_run + 1 : 0;
    if (settled_run >= 20) {
      converged = true;
      break;
    }

    // Unbounded dual growth with non-decreasing violation reads as
    // infeasibility that the probe could not certify.
    double dual_max = std::max(dual.lambda.maxCoeff(), dual.mu.size() ? dual.mu.maxCoeff() : 0.0);
    if (dual_max > cfg.dual_ceiling) {
      divergence_run = (worst >= prev_violation - 1e-12) ? divergence_run + 1 : 0;
      prev_violation = worst;
      if (divergence_run > 100) {
        rep.status = SolveStatus::Infeasible;
        rep.note = "likely infeasible: dual variables exceed ceiling with non-decreasing violation";
        break;
      }
    }
  }

  res.allocation.rates = x;
  res.allocation.margins = sigma;
  detail::restore_feasibility(sc, res.allocation);
  detail::restore_contracts(sc, res.allocation);
  compute_delays(sc, res.allocation);
  res.dual = dual;

  rep.iterations = std::min(iter, cfg.max_iters);
  rep.objective = sc.total_utility(res.allocation.rates);
  rep.kkt = kkt_check(sc, res.allocation, res.dual);
  fill_slacks(sc, res.allocation, rep);
  rep.converged = converged;
  if (converged) rep.status = SolveStatus::Converged;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace dual
}  // namespace dnum

#endif  // DNUMKIT_DUAL_SOLVER_HPP
