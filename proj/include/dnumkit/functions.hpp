#ifndef DNUMKIT_FUNCTIONS_HPP
#define DNUMKIT_FUNCTIONS_HPP

#include <cmath>
#include <stdexcept>
#include <string>

// Utility and delay function algebra: values, derivatives, inverse first
// derivatives, and the Lipschitz / strong-convexity constants the step-size
// bound consumes. All functions are pure; specs are immutable values.

namespace dnum {

/// Concave utility of a source rate. kind "log" is U(x) = log x,
/// "weighted_log" is U(x) = a log x with a > 0.
struct UtilitySpec {
  enum class Kind { Log, WeightedLog };
  Kind kind = Kind::Log;
  double weight = 1.0;  // a; ignored for plain Log

  static UtilitySpec log_utility() { return {Kind::Log, 1.0}; }
  static UtilitySpec weighted_log(double a) {
    if (a <= 0) throw std::invalid_argument("weighted_log: weight must be positive");
    return {Kind::WeightedLog, a};
  }

  double a() const { return kind == Kind::Log ? 1.0 : weight; }
};

inline double utility_value(const UtilitySpec& u, double x) {
  if (x <= 0) throw std::domain_error("utility_value: rate must be positive");
  return u.a() * std::log(x);
}

inline double utility_deriv(const UtilitySpec& u, double x) {
  if (x <= 0) throw std::domain_error("utility_deriv: rate must be positive");
  return u.a() / x;
}

inline double utility_second_deriv(const UtilitySpec& u, double x) {
  if (x <= 0) throw std::domain_error("utility_second_deriv: rate must be positive");
  return -u.a() / (x * x);
}

/// Unique x with U'(x) = y, unclipped; the caller projects onto the rate box.
inline double utility_inv_deriv(const UtilitySpec& u, double y) {
  if (y <= 0) throw std::domain_error("price must be positive for log-family utilities");
  return u.a() / y;
}

/// Strong-convexity constant of -U on a box with upper end W: a / W^2.
inline double utility_strong_convexity(const UtilitySpec& u, double rate_max) {
  if (rate_max <= 0) throw std::invalid_argument("utility_strong_convexity: bad box");
  return u.a() / (rate_max * rate_max);
}

/// Link delay as a function of the link margin. Only the M/M/1 form
/// D(sigma) = q / sigma is built in; the interface (value, derivs, inverse
/// derivative, constants) is what solvers depend on, so M/G/1-style delay
/// functions can be added without touching them.
struct DelaySpec {
  double q = 1.0;
  // Working domain on which the Lipschitz / strong-convexity constants hold;
  // q/sigma has neither property globally on (0, inf).
  double sigma_lo = 1e-3;
  double sigma_hi = 1e3;

  static DelaySpec mm1(double q, double lo, double hi) {
    if (q <= 0) throw std::invalid_argument("mm1: q must be positive");
    if (!(0 < lo && lo < hi)) throw std::invalid_argument("mm1: degenerate working domain");
    return {q, lo, hi};
  }

  /// Lipschitz constant of D on [sigma_lo, sigma_hi].
  double lipschitz() const { return q / (sigma_lo * sigma_lo); }
  /// Strong-convexity constant of D on [sigma_lo, sigma_hi].
  double strong_convexity() const { return 2.0 * q / (sigma_hi * sigma_hi * sigma_hi); }
};

inline double delay_value(const DelaySpec& d, double sigma) {
  if (sigma <= 0) throw std::domain_error("delay_value: margin must be positive");
  return d.q / sigma;
}

inline double delay_deriv(const DelaySpec& d, double sigma) {
  if (sigma <= 0) throw std::domain_error("delay_deriv: margin must be positive");
  return -d.q / (sigma * sigma);
}

inline double delay_second_deriv(const DelaySpec& d, double sigma) {
  if (sigma <= 0) throw std::domain_error("delay_second_deriv: margin must be positive");
  return 2.0 * d.q / (sigma * sigma * sigma);
}

/// Unique sigma > 0 with D'(sigma) = y; requires y < 0 since D is decreasing.
inline double delay_inv_deriv(const DelaySpec& d, double y) {
  if (y >= 0) throw std::domain_error("inverse derivative undefined for nonnegative slope");
  return std::sqrt(-d.q / y);
}

}  // namespace dnum

#endif  // DNUMKIT_FUNCTIONS_HPP
