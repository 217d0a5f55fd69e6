#ifndef DNUMKIT_SCENARIOS_HPP
#define DNUMKIT_SCENARIOS_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dnumkit/model.hpp"

// Generators for the bundled experiment scenarios. Everything is
// deterministic given the seed; the RNG maps mt19937_64 output to doubles
// itself so regeneration is identical across standard libraries.

namespace dnum {
namespace scenarios {

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * double(eng_() >> 11) * 0x1.0p-53;
  }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + int(eng_() % uint64_t(hi - lo + 1));
  }

 private:
  std::mt19937_64 eng_;
};

struct ExperimentSpec {
  enum class Kind { Exp1, Exp2Line, Exp3Random, TinyOracle };
  Kind kind = Kind::Exp1;
  uint64_t seed = 1;
  int links = 0, sources = 0, horizon = 0;  // Exp2/Exp3 dimensions
  int variant = 0;                          // TinyOracle variant
};

namespace detail {

inline void fill_common(Scenario& sc, double w, double W, double q) {
  sc.rate_min = Mat::Constant(sc.sources, sc.horizon, w);
  sc.rate_max = Mat::Constant(sc.sources, sc.horizon, W);
  sc.utilities.assign(size_t(sc.sources) * sc.horizon, UtilitySpec::log_utility());
  double cap_max = sc.capacity.maxCoeff();
  sc.delay_model.assign(size_t(sc.links), DelaySpec::mm1(q, 1e-3, cap_max));
}

inline std::vector<int> window_range(int first, int last) {  // inclusive, 0-based
  std::vector<int> w;
  for (int t = first; t <= last; ++t) w.push_back(t);
  return w;
}

}  // namespace detail

/// Four sources on a four-link chain over T = 10 periods, log utilities,
/// M/M/1 links with q = 1. Capacities of links 1 and 4 are drawn from [4, 6],
/// links 2 and 3 from [4, 10]. Five delay contracts; periods 9 and 10 carry
/// no contract window, so the delay machinery is inert there.
inline Scenario gen_exp1(uint64_t seed) {
  Rng rng(seed);
  Scenario sc;
  sc.horizon = 10;
  sc.sources = 4;
  sc.links = 4;

  // Stand-in chain topology with short routes: source 1 uses link 1 alone,
  // source 2 links 1-2, source 3 links 2-3, source 4 links 3-4. Short routes
  // keep the contract prices moderate, which is what lets the fixed small
  // step size settle within a few hundred iterations.
  Mat R = Mat::Zero(4, 4);
  R(0, 0) = 1;
  R(0, 1) = R(1, 1) = 1;
  R(1, 2) = R(2, 2) = 1;
  R(2, 3) = R(3, 3) = 1;
  sc.routing.assign(10, R);

  sc.capacity = Mat(10, 4);
  for (int t = 0; t < 10; ++t) {
    sc.capacity(t, 0) = rng.uniform(4, 6);
    sc.capacity(t, 1) = rng.uniform(4, 10);
    sc.capacity(t, 2) = rng.uniform(4, 10);
    sc.capacity(t, 3) = rng.uniform(4, 6);
  }

  detail::fill_common(sc, 0.1, 10.0, 1.0);

  sc.contracts = {
      {0, detail::window_range(0, 2), 2.0},
      {0, detail::window_range(5, 7), 1.0},
      {1, detail::window_range(0, 5), 2.0},
      {2, detail::window_range(2, 7), 2.0},
      {3, detail::window_range(2, 5), 2.5},
  };
  return sc;
}

/// Line topology: source 1 crosses every link, source 2 the first four, and
/// each remaining source a four-link staircase window. Only sources 1 and 2
/// carry contracts (full-horizon window, bound L/4); source 1 has a
/// minimum-rate spike of 5 at period 2, which makes the per-period problem
/// there infeasible while the multi-period one is not.
inline Scenario gen_exp2_line(int L, int S, int T, uint64_t seed = 2) {
  if (L < 4 || S < 2) throw std::invalid_argument("gen_exp2_line: need L >= 4, S >= 2");
  Rng rng(seed);
  Scenario sc;
  sc.horizon = T;
  sc.sources = S;
  sc.links = L;

  Mat R = Mat::Zero(L, S);
  for (int l = 0; l < L; ++l) R(l, 0) = 1;
  for (int l = 0; l < 4; ++l) R(l, 1) = 1;
  for (int s = 2; s < S; ++s)
    for (int l = s - 1; l <= std::min(s + 2, L - 1); ++l) R(l, s) = 1;
  sc.routing.assign(size_t(T), R);

  sc.capacity = Mat(T, L);
  for (int t = 0; t < T; ++t)
    for (int l = 0; l < L; ++l) sc.capacity(t, l) = rng.uniform(8, 12);

  detail::fill_common(sc, 0.5, 10.0, 1.0);
  if (T > 1) sc.rate_min(0, 1) = 5.0;  // the period-2 spike

  double d = double(L) / 4.0;
  sc.contracts = {
      {0, detail::window_range(0, T - 1), d},
      {1, detail::window_range(0, T - 1), d},
  };
  return sc;
}

/// Random topology: every source crosses 1-4 random links and carries exactly
/// one contract over a random contiguous window with bound drawn from [4, 6].
/// Capacities are flat at 20 kbps; utility weights vary per (source, period)
/// so the averaged-delay freedom is actually worth something.
inline Scenario gen_exp3_random(int S, int L, int T, uint64_t seed) {
  Rng rng(seed);
  Scenario sc;
  sc.horizon = T;
  sc.sources = S;
  sc.links = L;

  Mat R = Mat::Zero(L, S);
  for (int s = 0; s < S; ++s) {
    int hops = rng.uniform_int(1, 4);
    int start = rng.uniform_int(0, L - 1);
    for (int i = 0; i < hops; ++i) R((start + i) % L, s) = 1;
  }
  sc.routing.assign(size_t(T), R);

  sc.capacity = Mat::Constant(T, L, 20.0);
  detail::fill_common(sc, 0.1, 10.0, 1.0);
  for (int s = 0; s < S; ++s)
    for (int t = 0; t < T; ++t)
      sc.utility(s, t) = UtilitySpec::weighted_log(rng.uniform(0.5, 2.0));

  for (int s = 0; s < S; ++s) {
    int len = rng.uniform_int(1, T);
    int first = rng.uniform_int(0, T - len);
    sc.contracts.push_back({s, detail::window_range(first, first + len - 1),
                            rng.uniform(4.0, 6.0)});
  }
  return sc;
}

/// Hand-sized instances for the grid oracle (TS + TL <= 6 decision dims).
/// Variants: 0 = two sources on one link, no contracts; 1 = same plus a
/// binding delay contract on source 1; 2 = two periods with a windowed
/// contract coupling them.
inline Scenario gen_tiny_oracle(int variant) {
  Scenario sc;
  sc.sources = 2;
  sc.links = 1;
  sc.horizon = (variant == 2) ? 2 : 1;
  sc.routing.assign(size_t(sc.horizon), Mat::Ones(1, 2));
  sc.capacity = Mat::Constant(sc.horizon, 1, 2.0);
  if (variant == 2) sc.capacity(1, 0) = 3.0;
  detail::fill_common(sc, 0.1, 10.0, 1.0);
  if (variant == 1) sc.contracts = {{0, {0}, 1.0}};
  if (variant == 2) sc.contracts = {{0, {0, 1}, 1.5}};
  return sc;
}

inline Scenario generate(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentSpec::Kind::Exp1:
      return gen_exp1(spec.seed);
    case ExperimentSpec::Kind::Exp2Line:
      return gen_exp2_line(spec.links, spec.sources, spec.horizon, spec.seed);
    case ExperimentSpec::Kind::Exp3Random:
      return gen_exp3_random(spec.sources, spec.links, spec.horizon, spec.seed);
    case ExperimentSpec::Kind::TinyOracle:
      return gen_tiny_oracle(spec.variant);
  }
  throw std::logic_error("unknown experiment kind");
}

/// Extracts period t as a standalone single-period problem; contracts whose
/// windows cover t become per-period bounds (the single-period reading of an
/// averaged-delay requirement).
inline Scenario single_period(const Scenario& sc, int t) {
  Scenario out;
  out.horizon = 1;
  out.sources = sc.sources;
  out.links = sc.links;
  out.routing = {sc.routing[t]};
  out.capacity = sc.capacity.row(t);
  out.rate_min = sc.rate_min.col(t);
  out.rate_max = sc.rate_max.col(t);
  out.utilities.resize(size_t(sc.sources));
  for (int s = 0; s < sc.sources; ++s) out.utilities[s] = sc.utility(s, t);
  out.delay_model = sc.delay_model;
  for (const auto& c : sc.contracts)
    if (c.covers(t)) out.contracts.push_back({c.source, {0}, c.bound});
  return out;
}

}  // namespace scenarios
}  // namespace dnum

#endif  // DNUMKIT_SCENARIOS_HPP
