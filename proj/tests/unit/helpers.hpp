#pragma once

#include <cstdint>
#include <vector>

#include "kdpe/distribution.hpp"
#include "kdpe/random.hpp"

namespace kdpe::testing {

inline std::vector<double> uniform_vector(RandomStream& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

inline FiniteModel random_dgp1(std::size_t n, std::uint64_t seed, double lo = 0.1, double hi = 0.9) {
  RandomStream rng(seed, 0);
  auto x = uniform_vector(rng, n, 0.0, 1.0);
  auto g0 = uniform_vector(rng, n, lo, hi);
  auto q = uniform_vector(rng, 2 * n, lo, hi);
  return FiniteModel::dgp1(x, g0, q);
}

inline FiniteModel random_dgp2(std::size_t n, std::uint64_t seed, double lo = 0.1, double hi = 0.9) {
  RandomStream rng(seed, 0);
  auto x = uniform_vector(rng, n, 0.0, 8.0);
  auto g0 = uniform_vector(rng, n, lo, hi);
  auto ql = uniform_vector(rng, 2 * n, lo, hi);
  auto g1 = uniform_vector(rng, 4 * n, lo, hi);
  auto q = uniform_vector(rng, 8 * n, lo, hi);
  return FiniteModel::dgp2(x, g0, ql, g1, q);
}

// One observation per atom with binary coordinates drawn from the model.
inline std::vector<Observation> draw_on_atoms(const FiniteModel& m, std::uint64_t seed) {
  RandomStream rng(seed, 1);
  std::vector<Observation> out;
  const int c = m.combos();
  for (std::size_t i = 0; i < m.size(); ++i) {
    double u = rng.uniform(), acc = 0.0;
    int code = c - 1;
    for (int k = 0; k < c; ++k) {
      acc += m.conditional(i, k);
      if (u < acc) {
        code = k;
        break;
      }
    }
    out.push_back(Observation::from_code(m.schema(), m.x(i), code));
  }
  return out;
}

}  // namespace kdpe::testing
