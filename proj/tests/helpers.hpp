#ifndef DNUMKIT_TESTS_HELPERS_HPP
#define DNUMKIT_TESTS_HELPERS_HPP

#include <cstdint>
#include <vector>

#include "dnumkit/model.hpp"
#include "dnumkit/scenarios.hpp"

namespace dnum::test {

/// Two identical log-utility sources sharing one link of capacity c, one
/// period, no contracts. The optimum is the equal split.
inline Scenario two_sources_one_link(double c = 2.0) {
  Scenario sc;
  sc.sources = 2;
  sc.links = 1;
  sc.horizon = 1;
  sc.routing.assign(1, Mat::Ones(1, 2));
  sc.capacity = Mat::Constant(1, 1, c);
  sc.rate_min = Mat::Constant(2, 1, 0.1);
  sc.rate_max = Mat::Constant(2, 1, 10.0);
  sc.utilities.assign(2, UtilitySpec::log_utility());
  sc.delay_model.assign(1, DelaySpec::mm1(1.0, 1e-3, c));
  return sc;
}

/// Small random instance for property tests: S, L, T <= 3, one contract.
inline Scenario random_small(uint64_t seed) {
  scenarios::Rng rng(seed);
  Scenario sc;
  sc.sources = rng.uniform_int(1, 3);
  sc.links = rng.uniform_int(1, 3);
  sc.horizon = rng.uniform_int(1, 3);
  Mat R = Mat::Zero(sc.links, sc.sources);
  for (int s = 0; s < sc.sources; ++s) {
    int l0 = rng.uniform_int(0, sc.links - 1);
    R(l0, s) = 1;
    if (sc.links > 1 && rng.uniform_int(0, 1)) R((l0 + 1) % sc.links, s) = 1;
  }
  sc.routing.assign(size_t(sc.horizon), R);
  sc.capacity = Mat(sc.horizon, sc.links);
  for (int t = 0; t < sc.horizon; ++t)
    for (int l = 0; l < sc.links; ++l) sc.capacity(t, l) = rng.uniform(4.0, 8.0);
  sc.rate_min = Mat::Constant(sc.sources, sc.horizon, 0.1);
  sc.rate_max = Mat::Constant(sc.sources, sc.horizon, 10.0);
  sc.utilities.resize(size_t(sc.sources) * sc.horizon);
  for (auto& u : sc.utilities) u = UtilitySpec::weighted_log(rng.uniform(0.5, 2.0));
  double cap_max = sc.capacity.maxCoeff();
  sc.delay_model.assign(size_t(sc.links), DelaySpec::mm1(1.0, 1e-3, cap_max));
  int first = rng.uniform_int(0, sc.horizon - 1);
  std::vector<int> window;
  for (int t = first; t < sc.horizon; ++t) window.push_back(t);
  sc.contracts = {{rng.uniform_int(0, sc.sources - 1), window, rng.uniform(1.5, 3.0)}};
  return sc;
}

}  // namespace dnum::test

#endif  // DNUMKIT_TESTS_HELPERS_HPP
