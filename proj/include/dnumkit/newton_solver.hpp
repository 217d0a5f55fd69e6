#ifndef DNUMKIT_NEWTON_SOLVER_HPP
#define DNUMKIT_NEWTON_SOLVER_HPP

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dnumkit/model.hpp"
#include "dnumkit/oracle.hpp"

// Barrier reformulation with equality constraints and a diagonal-Hessian
// Newton method. The stacked decision vector is z = [x; sigma; y; w] (rates,
// margins, capacity slacks, delay slacks); capacity rows are linear, delay
// rows keep their nonlinear margin dependence and are re-linearized at each
// iterate. The dual system (J H^-1 J^T) omega = -J H^-1 grad f is solved
// either directly or by the diagonal matrix-splitting fixed point, which
// needs only constraint-local sums.

namespace dnum {
namespace newton {

struct Config {
  double beta0 = 1.0;         // initial barrier coefficient
  double beta_shrink = 0.2;   // stage multiplier
  double gap_tol = 1e-4;      // stop when (barrier term count) * beta <= gap_tol
  double newton_tol = 1e-6;   // Newton decrement threshold per stage
  int max_newton_per_stage = 60;
  int splitting_max_iters = 200;
  double splitting_tol = 1e-8;
  bool direct_dual = false;   // dense direct solve instead of splitting
  bool record_trace = false;
};

/// Stacked problem data: dimensions, index maps, and the pieces of the
/// constraint map A(z) = [R x + sigma + y; M phi(sigma) + w].
struct StackedProblem {
  const Scenario* sc = nullptr;
  double beta = 1.0;
  int T = 0, L = 0, S = 0, K = 0;
  int n = 0;  // TS + 2TL + K
  int m = 0;  // TL + K
  Vec b;      // [c; d]
  std::vector<int> contract_offset;  // per source, start of its contract rows

  // z layout (0-based)
  int x_index(int s, int t) const { return s * T + t; }
  int sigma_index(int t, int l) const { return S * T + t * L + l; }
  int y_index(int t, int l) const { return S * T + T * L + t * L + l; }
  int w_index(int k) const { return S * T + 2 * T * L + k; }

  // Table-style index maps, 1-based as printed.
  int l_of(int v) const { return (v - 1) % L + 1; }        // link of capacity row v
  int t_of(int v) const { return (v - 1) / L + 1; }        // period of capacity row v
  int tau_of(int v) const { return (v - 1) % T + 1; }      // period of rate entry v
  int s_of(int v) const { return (v - 1) / T + 1; }        // source of rate entry v
  int p_of(int v) const {                                  // source of delay row v
    int k = v - 1;
    for (int s = S - 1; s >= 0; --s)
      if (contract_offset[s] <= k) return s + 1;
    return 1;
  }
};

inline StackedProblem assemble(const Scenario& sc, double beta) {
  StackedProblem p;
  p.sc = &sc;
  p.beta = beta;
  p.T = sc.horizon;
  p.L = sc.links;
  p.S = sc.sources;
  p.K = int(sc.contracts.size());
  p.n = p.S * p.T + 2 * p.T * p.L + p.K;
  p.m = p.T * p.L + p.K;
  p.b = Vec(p.m);
  for (int t = 0; t < p.T; ++t)
    for (int l = 0; l < p.L; ++l) p.b(t * p.L + l) = sc.capacity(t, l);
  for (int k = 0; k < p.K; ++k) p.b(p.T * p.L + k) = sc.contracts[k].bound;
  p.contract_offset.assign(size_t(p.S), p.K);
  for (int k = p.K - 1; k >= 0; --k) p.contract_offset[sc.contracts[k].source] = k;
  // Sources without contracts inherit the next source's offset so p_of stays
  // monotone.
  for (int s = p.S - 2; s >= 0; --s)
    if (p.contract_offset[s] == p.K) p.contract_offset[s] = p.contract_offset[s + 1];
  return p;
}

/// Barrier objective f(z) = -sum U(x) - beta sum log z_i - beta sum log(W - x).
/// The upper-box term keeps log utilities from running away on slack links;
/// an infinite rate_max drops it.
inline double barrier_objective(const StackedProblem& p, const Vec& z) {
  const Scenario& sc = *p.sc;
  double f = 0;
  for (int s = 0; s < p.S; ++s)
    for (int t = 0; t < p.T; ++t) {
      double x = z(p.x_index(s, t));
      if (x <= 0) return std::numeric_limits<double>::infinity();
      f -= utility_value(sc.utility(s, t), x) + p.beta * std::log(x);
      double W = sc.rate_max(s, t);
      if (std::isfinite(W)) {
        if (x >= W) return std::numeric_limits<double>::infinity();
        f -= p.beta * std::log(W - x);
      }
    }
  for (int i = p.S * p.T; i < p.n; ++i) {
    if (z(i) <= 0) return std::numeric_limits<double>::infinity();
    f -= p.beta * std::log(z(i));
  }
  return f;
}

inline Vec barrier_gradient(const StackedProblem& p, const Vec& z) {
  const Scenario& sc = *p.sc;
  Vec g(p.n);
  for (int s = 0; s < p.S; ++s)
    for (int t = 0; t < p.T; ++t) {
      int i = p.x_index(s, t);
      double x = z(i);
      g(i) = -utility_deriv(sc.utility(s, t), x) - p.beta / x;
      double W = sc.rate_max(s, t);
      if (std::isfinite(W)) g(i) += p.beta / (W - x);
    }
  for (int i = p.S * p.T; i < p.n; ++i) g(i) = -p.beta / z(i);
  return g;
}

/// Diagonal of the Hessian of the barrier objective; strictly positive on the
/// interior, which is what makes the whole dual apparatus cheap.
inline Vec hessian_diag(const StackedProblem& p, const Vec& z) {
  const Scenario& sc = *p.sc;
  Vec h(p.n);
  for (int i = 0; i < p.n; ++i)
    if (z(i) <= 0) throw std::domain_error("barrier domain violated");
  for (int s = 0; s < p.S; ++s)
    for (int t = 0; t < p.T; ++t) {
      int i = p.x_index(s, t);
      double x = z(i);
      h(i) = -utility_second_deriv(sc.utility(s, t), x) + p.beta / (x * x);
      double W = sc.rate_max(s, t);
      if (std::isfinite(W)) {
        if (x >= W) throw std::domain_error("barrier domain violated");
        h(i) += p.beta / ((W - x) * (W - x));
      }
    }
  for (int i = p.S * p.T; i < p.n; ++i) h(i) = p.beta / (z(i) * z(i));
  return h;
}

/// Constraint Jacobian at z: capacity rows [R I I 0] are constant, delay rows
/// [0 Jphi 0 I] re-linearize through D'(sigma).
inline Mat constraint_jacobian(const StackedProblem& p, const Vec& z) {
  const Scenario& sc = *p.sc;
  Mat J = Mat::Zero(p.m, p.n);
  for (int t = 0; t < p.T; ++t)
    for (int l = 0; l < p.L; ++l) {
      int row = t * p.L + l;
      for (int s = 0; s < p.S; ++s)
        if (sc.routing[t](l, s) != 0.0) J(row, p.x_index(s, t)) = 1.0;
      J(row, p.sigma_index(t, l)) = 1.0;
      J(row, p.y_index(t, l)) = 1.0;
    }
  for (int k = 0; k < p.K; ++k) {
    const DelayContract& c = sc.contracts[k];
    int row = p.T * p.L + k;
    for (int t : c.window)
      for (int l = 0; l < p.L; ++l)
        if (sc.routing[t](l, c.source) != 0.0)
          J(row, p.sigma_index(t, l)) =
              c.weight() * delay_deriv(sc.delay_model[l], z(p.sigma_index(t, l)));
    J(row, p.w_index(k)) = 1.0;
  }
  return J;
}

/// Constraint map value A(z) - b.
inline Vec constraint_residual(const StackedProblem& p, const Vec& z) {
  const Scenario& sc = *p.sc;
  Vec r(p.m);
  for (int t = 0; t < p.T; ++t)
    for (int l = 0; l < p.L; ++l) {
      double load = 0;
      for (int s = 0; s < p.S; ++s)
        if (sc.routing[t](l, s) != 0.0) load += z(p.x_index(s, t));
      r(t * p.L + l) = load + z(p.sigma_index(t, l)) + z(p.y_index(t, l)) - sc.capacity(t, l);
    }
  for (int k = 0; k < p.K; ++k) {
    const DelayContract& c = sc.contracts[k];
    double avg = 0;
    for (int t : c.window)
      for (int l = 0; l < p.L; ++l)
        if (sc.routing[t](l, c.source) != 0.0)
          avg += c.weight() * delay_value(sc.delay_model[l], z(p.sigma_index(t, l)));
    r(p.T * p.L + k) = avg + z(p.w_index(k)) - c.bound;
  }
  return r;
}

/// Jacobi-style splitting for (J H^-1 J^T) omega = rhs. The scaling matrix is
/// Cbar = C + Bbar with C the diagonal of the system matrix and Bbar the
/// absolute off-diagonal row sums, so Cbar - M is diagonally dominant and the
/// fixed-point map is a contraction whenever M is positive definite.
class SplittingSolver {
 public:
  SplittingSolver(Mat system, Vec rhs) : M_(std::move(system)), rhs_(std::move(rhs)) {
    const int m = int(M_.rows());
    cbar_ = Vec(m);
    for (int v = 0; v < m; ++v) {
      double offdiag = M_.row(v).cwiseAbs().sum() - std::abs(M_(v, v));
      cbar_(v) = M_(v, v) + offdiag;
      if (cbar_(v) <= 0) throw std::runtime_error("degenerate splitting (isolated constraint row)");
    }
  }

  Vec step(const Vec& omega) const {
    return omega + (rhs_ - M_ * omega).cwiseQuotient(cbar_);
  }

  double residual(const Vec& omega) const { return (M_ * omega - rhs_).norm(); }

  /// Iterates to the fixed point; returns the iteration count used.
  int solve(Vec& omega, int max_iters, double tol) const {
    int it = 0;
    for (; it < max_iters; ++it) {
      if (residual(omega) <= tol) break;
      omega = step(omega);
    }
    return it;
  }

  const Mat& system() const { return M_; }

 private:
  Mat M_;
  Vec rhs_;
  Vec cbar_;
};

/// Builds the dual system J H^-1 J^T and right-hand side -J H^-1 grad.
inline SplittingSolver dual_system(const Mat& J, const Vec& hdiag, const Vec& grad) {
  Mat JH = J * hdiag.cwiseInverse().asDiagonal();
  return SplittingSolver(JH * J.transpose(), -(JH * grad));
}

/// One splitting sweep, exposed for the componentwise-update tests.
inline Vec dual_splitting_step(const Mat& J, const Vec& hdiag, const Vec& grad,
                               const Vec& omega) {
  return dual_system(J, hdiag, grad).step(omega);
}

/// Newton direction Delta z = -H^-1 (grad f + J^T omega).
inline Vec newton_direction(const Vec& hdiag, const Vec& grad, const Mat& J, const Vec& omega) {
  return -((grad + J.transpose() * omega).cwiseQuotient(hdiag));
}

struct LineSearchResult {
  double delta = 0;
  bool accepted = false;
};

/// Largest allowed step: 0.99 of the way to the first boundary crossed by
/// z + delta dz (positive orthant and rate boxes), never above 0.99. Keeping
/// even interior steps strictly below 1 damps the search to delta <= 1/2 on
/// the power-of-two grid, which the inexact splitting directions need.
inline double max_feasible_step(const StackedProblem& p, const Vec& z, const Vec& dz) {
  const Scenario& sc = *p.sc;
  double limit = 1.0;
  for (int i = 0; i < p.n; ++i)
    if (dz(i) < 0) limit = std::min(limit, -z(i) / dz(i));
  for (int s = 0; s < p.S; ++s)
    for (int t = 0; t < p.T; ++t) {
      double W = sc.rate_max(s, t);
      int i = p.x_index(s, t);
      if (std::isfinite(W) && dz(i) > 0) limit = std::min(limit, (W - z(i)) / dz(i));
    }
  return 0.99 * limit;
}

/// Backtracking over delta = 0.5^m below the boundary step, with an Armijo
/// decrease test on the barrier objective. When the caller knows the Newton
/// decrement it can pass slope = -decrement^2, which is immune to the
/// inexact-dual-solve noise in grad . dz.
inline LineSearchResult line_search(const StackedProblem& p, const Vec& z, const Vec& dz,
                                    const Vec& grad,
                                    double slope = std::numeric_limits<double>::quiet_NaN()) {
  const double f0 = barrier_objective(p, z);
  if (std::isnan(slope)) slope = grad.dot(dz);
  const double delta_max = max_feasible_step(p, z, dz);
  double delta = 1.0;
  while (delta > delta_max) delta *= 0.5;
  while (delta >= 1e-12) {
    if (barrier_objective(p, z + delta * dz) <= f0 + 1e-4 * delta * slope)
      return {delta, true};
    delta *= 0.5;
  }
  return {0.0, false};
}

struct Result {
  Allocation allocation;
  DualState dual;  // inequality multipliers recovered from the barrier
  SolveReport report;
  std::vector<int> inner_iters;  // splitting iterations per Newton step
  int newton_steps = 0;
};

namespace detail {

// Strictly feasible start: minimum rates everywhere, most of the spare
// capacity as margin (delays at their near-minimum), the rest as capacity
// slack.
inline Vec initial_point(const StackedProblem& p, std::string* err) {
  const Scenario& sc = *p.sc;
  Vec z(p.n);
  for (const double frac : {0.9, 0.95, 0.99}) {
    for (int s = 0; s < p.S; ++s)
      for (int t = 0; t < p.T; ++t) z(p.x_index(s, t)) = sc.rate_min(s, t);
    bool ok = true;
    for (int t = 0; t < p.T && ok; ++t)
      for (int l = 0; l < p.L; ++l) {
        double spare = sc.capacity(t, l) - [&] {
          double load = 0;
          for (int s = 0; s < p.S; ++s)
            if (sc.routing[t](l, s) != 0.0) load += sc.rate_min(s, t);
          return load;
        }();
        if (spare <= 0) {
          if (err)
            *err = "cannot initialize interior point: minimum rates exceed capacity at period " +
                   std::to_string(t + 1) + ", link " + std::to_string(l + 1);
          ok = false;
          break;
        }
        z(p.sigma_index(t, l)) = frac * spare;
        z(p.y_index(t, l)) = (1.0 - frac) * spare;
      }
    if (!ok) return Vec();
    for (int k = 0; k < p.K; ++k) {
      const DelayContract& c = sc.contracts[k];
      double avg = 0;
      for (int t : c.window)
        for (int l = 0; l < p.L; ++l)
          if (sc.routing[t](l, c.source) != 0.0)
            avg += c.weight() * delay_value(sc.delay_model[l], z(p.sigma_index(t, l)));
      double slack = c.bound - avg;
      if (slack <= 0) { ok = false; break; }
      z(p.w_index(k)) = slack;
    }
    if (ok) return z;
  }
  if (err && err->empty())
    *err = "cannot initialize interior point: a delay contract is violated even at minimum rates";
  return Vec();
}

// Re-derive the slack entries from the exact constraint map so A(z) = b holds
// identically after each accepted step; only the nonlinear delay rows drift,
// and only by the linearization error.
inline bool restore_slacks(const StackedProblem& p, Vec& z) {
  const Scenario& sc = *p.sc;
  for (int t = 0; t < p.T; ++t)
    for (int l = 0; l < p.L; ++l) {
      double load = 0;
      for (int s = 0; s < p.S; ++s)
        if (sc.routing[t](l, s) != 0.0) load += z(p.x_index(s, t));
      double y = sc.capacity(t, l) - load - z(p.sigma_index(t, l));
      if (y <= 0) return false;
      z(p.y_index(t, l)) = y;
    }
  for (int k = 0; k < p.K; ++k) {
    const DelayContract& c = sc.contracts[k];
    double avg = 0;
    for (int t : c.window)
      for (int l = 0; l < p.L; ++l)
        if (sc.routing[t](l, c.source) != 0.0)
          avg += c.weight() * delay_value(sc.delay_model[l], z(p.sigma_index(t, l)));
    double w = c.bound - avg;
    if (w <= 0) return false;
    z(p.w_index(k)) = w;
  }
  return true;
}

// Backtracking search evaluated on the restored point: a step counts only if
// the slacks can be re-derived from the exact constraints there, and the
// Armijo test uses the restored barrier objective. Testing the raw point
// z + delta dz instead would accept steps whose linearized delay slack looks
// fine while the true slack has gone negative, which stalls the stage once
// the slacks shrink with beta.
inline LineSearchResult restored_line_search(const StackedProblem& p, const Vec& z,
                                             const Vec& dz, double slope, Vec& z_out) {
  const double f0 = barrier_objective(p, z);
  const double delta_max = max_feasible_step(p, z, dz);
  double delta = 1.0;
  while (delta > delta_max) delta *= 0.5;
  for (; delta >= 1e-12; delta *= 0.5) {
    Vec zn = z + delta * dz;
    if (!restore_slacks(p, zn)) continue;
    if (barrier_objective(p, zn) <= f0 + 1e-4 * delta * slope) {
      z_out = std::move(zn);
      return {delta, true};
    }
  }
  return {0.0, false};
}

}  // namespace detail

inline Result solve(const Scenario& sc, const Config& cfg) {
  auto clock0 = std::chrono::steady_clock::now();
  Result res;
  SolveReport& rep = res.report;

  StackedProblem p = assemble(sc, cfg.beta0);
  std::string err;
  Vec z = detail::initial_point(p, &err);
  if (z.size() == 0) {
    rep.status = SolveStatus::Infeasible;
    rep.note = err;
    res.allocation.rates = sc.rate_min;
    res.allocation.margins = Mat::Zero(sc.horizon, sc.links);
    compute_delays(sc, res.allocation);
    res.dual = DualState::zeros(sc);
    fill_slacks(sc, res.allocation, rep);
    rep.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
    return res;
  }

  // Number of barrier terms: positivity on all of z plus the finite upper
  // rate bounds; the duality-gap proxy is this count times beta.
  int barrier_terms = p.n;
  for (int s = 0; s < p.S; ++s)
    for (int t = 0; t < p.T; ++t)
      if (std::isfinite(sc.rate_max(s, t))) ++barrier_terms;

  Vec omega = Vec::Zero(p.m);

  for (double beta = cfg.beta0;; beta *= cfg.beta_shrink) {
    p.beta = beta;
    for (int step = 0; step < cfg.max_newton_per_stage; ++step) {
      Vec hdiag = hessian_diag(p, z);
      Vec grad = barrier_gradient(p, z);
      Mat J = constraint_jacobian(p, z);
      SplittingSolver dual_sys = dual_system(J, hdiag, grad);
      int inner = 0;
      Vec dz;
      double decrement = 0;
      if (cfg.direct_dual) {
        omega = dual_sys.system().ldlt().solve(-(J * hdiag.cwiseInverse().asDiagonal() * grad));
        dz = newton_direction(hdiag, grad, J, omega);
        decrement = std::sqrt(dz.dot(hdiag.cwiseProduct(dz).eval()));
      } else {
        // Refine the dual solve until its residual cannot corrupt the descent
        // slope: the slope error is bounded by |omega| |J dz residual|, which
        // must stay well under decrement^2.
        double tol = cfg.splitting_tol;
        for (int refine = 0; refine < 4; ++refine) {
          inner += dual_sys.solve(omega, cfg.splitting_max_iters, tol);
          dz = newton_direction(hdiag, grad, J, omega);
          decrement = std::sqrt(dz.dot(hdiag.cwiseProduct(dz).eval()));
          double noise = dual_sys.residual(omega) * (omega.norm() + 1.0);
          if (noise <= 0.1 * decrement * decrement) break;
          tol = std::max(1e-14, 0.05 * decrement * decrement / (omega.norm() + 1.0));
        }
      }
      res.inner_iters.push_back(inner);
      if (decrement <= cfg.newton_tol) break;

      Vec z_next;
      LineSearchResult ls =
          detail::restored_line_search(p, z, dz, -decrement * decrement, z_next);
      // A failed search means no numerically measurable descent remains at
      // this barrier weight; finish the stage and let beta shrink.
      if (!ls.accepted) break;
      z = std::move(z_next);
      ++res.newton_steps;

      if (cfg.record_trace)
        rep.trace.push_back({res.newton_steps, barrier_objective(p, z), decrement,
                             constraint_residual(p, z).cwiseAbs().maxCoeff()});
    }
    if (barrier_terms * beta <= cfg.gap_tol) break;
  }

  res.allocation.rates = Mat(p.S, p.T);
  res.allocation.margins = Mat(p.T, p.L);
  for (int s = 0; s < p.S; ++s)
    for (int t = 0; t < p.T; ++t) res.allocation.rates(s, t) = z(p.x_index(s, t));
  for (int t = 0; t < p.T; ++t)
    for (int l = 0; l < p.L; ++l) res.allocation.margins(t, l) = z(p.sigma_index(t, l));
  compute_delays(sc, res.allocation);

  // Inequality multipliers from the barrier relation omega = beta / slack.
  res.dual.lambda = Mat(p.T, p.L);
  for (int t = 0; t < p.T; ++t)
    for (int l = 0; l < p.L; ++l) res.dual.lambda(t, l) = std::max(0.0, omega(t * p.L + l));
  res.dual.mu = Vec(p.K);
  for (int k = 0; k < p.K; ++k) res.dual.mu(k) = std::max(0.0, omega(p.T * p.L + k));

  rep.iterations = res.newton_steps;
  rep.objective = sc.total_utility(res.allocation.rates);
  rep.kkt = kkt_check(sc, res.allocation, res.dual);
  rep.converged = true;
  rep.status = SolveStatus::Converged;
  fill_slacks(sc, res.allocation, rep);
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  return res;
}

}  // namespace newton
}  // namespace dnum

#endif  // DNUMKIT_NEWTON_SOLVER_HPP
