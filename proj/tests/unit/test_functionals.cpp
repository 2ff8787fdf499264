#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "kdpe/errors.hpp"
#include "kdpe/functionals.hpp"
#include "kdpe/preestimate.hpp"

using namespace kdpe;
using kdpe::testing::random_dgp1;
using kdpe::testing::random_dgp2;

namespace {

// Closed-form treatment means of the first simulation design.
double true_mu0() {
  const double pi = std::numbers::pi;
  return 0.4 + 0.25 * (pi / 40.0) * (1.0 - std::cos(40.0 / pi));
}
double true_mu1() { return true_mu0() + 0.37 / 3.0; }

// Oracle tables on a midpoint grid of [0, 1]; plug-in means then equal the
// integrals up to O(h^2).
FiniteModel oracle_grid_model(std::size_t n) {
  std::vector<Observation> data;
  for (std::size_t k = 0; k < n; ++k) data.push_back(Observation::dgp1((static_cast<double>(k) + 0.5) / n, k % 2, 0));
  PreEstimateConfig cfg;
  cfg.method = PreEstimateMethod::Oracle;
  return fit_pre_estimate(data, cfg).model;
}

double expected_influence(const FiniteModel& m, Target t) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (int c = 0; c < m.combos(); ++c) s += m.joint(i, c) * influence_target_at(m, i, c, t);
  }
  return s;
}

}  // namespace

TEST_CASE("target combinations") {
  CHECK(combine_target(Target::Ate, 0.3, 0.3) == 0.0);
  CHECK(combine_target(Target::Rr, 0.3, 0.3) == 1.0);
  CHECK(combine_target(Target::Or, 0.3, 0.3) == 1.0);
  CHECK(combine_target(Target::Or, 0.5, 0.25) == doctest::Approx(3.0));
  CHECK_THROWS_AS(combine_target(Target::Or, 1.0, 0.5), InternalError);
  CHECK(parse_target("rr") == Target::Rr);
  CHECK_THROWS(parse_target("risk"));
}

TEST_CASE("plug-in targets on the true law") {
  const auto m = oracle_grid_model(20000);
  CHECK(std::abs(evaluate(m, Target::Ate) - 0.1233) <= 1e-4);
  const double mu1 = true_mu1(), mu0 = true_mu0();
  CHECK(evaluate(m, Target::Rr) == doctest::Approx(mu1 / mu0).epsilon(1e-6));
  CHECK(evaluate(m, Target::Or) == doctest::Approx(mu1 / (1 - mu1) / (mu0 / (1 - mu0))).epsilon(1e-6));
}

TEST_CASE("null effect on the longitudinal design") {
  auto m = random_dgp2(6, 41);
  auto t = m.tables();
  for (std::size_t i = 0; i < m.size(); ++i) {
    t.q_l1[2 * i + 1] = t.q_l1[2 * i];
    for (int l1 = 0; l1 < 2; ++l1) {
      const double q = t.q_y[8 * i + 2 * static_cast<std::size_t>(l1)];
      for (int a0 = 0; a0 < 2; ++a0) {
        for (int a1 = 0; a1 < 2; ++a1) t.q_y[8 * i + 4 * a0 + 2 * l1 + a1] = q;
      }
    }
  }
  CHECK(std::abs(evaluate(m.with_tables(t), Target::Ate)) < 1e-15);
}

TEST_CASE("influence function values") {
  const auto m = FiniteModel::dgp1({0.5}, {0.5}, {0.2, 0.7});
  CHECK(influence_mu_a(m, Observation::dgp1(0.5, 1, 1), 1) == doctest::Approx(0.6).epsilon(1e-15));
  const auto r = random_dgp1(8, 42);
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (int code = 0; code < 4; ++code) {
      const auto o = r.support_point(r.cell(i, code));
      CHECK(influence_target(r, o, Target::Ate) == influence_mu_a(r, o, 1) - influence_mu_a(r, o, 0));
    }
  }
  CHECK_THROWS_AS(influence_mu_a(r, Observation::dgp1(3.0, 1, 1), 1), OffSupport);
}

TEST_CASE("influence functions have model mean zero") {
  for (std::uint64_t seed = 43; seed < 48; ++seed) {
    const auto m = random_dgp1(25, seed);
    for (Target t : kAllTargets) CHECK(std::abs(expected_influence(m, t)) < 1e-12);
  }
}

TEST_CASE("influence functions represent the pathwise derivative") {
  for (std::uint64_t seed = 50; seed < 53; ++seed) {
    const auto m = random_dgp1(12, seed);
    RandomStream rng(seed, 3);
    for (int k = 0; k < 20; ++k) {
      ScoreField raw = ScoreField::zeros(m);
      for (auto& v : raw.values) v = rng.normal();
      const ScoreField h = project_dgp1(m, raw);
      for (Target t : kAllTargets) {
        double inner = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
          for (int c = 0; c < 4; ++c) inner += m.joint(i, c) * influence_target_at(m, i, c, t) * h.at(i, c);
        }
        const double eps = 1e-6;
        auto moved = [&](double e) {
          ScoreField s = h;
          for (auto& v : s.values) v *= e;
          return evaluate(apply_fluctuation(m, ProjectedScore{s, std::nullopt}, 1e-6), t);
        };
        const double fd = (moved(eps) - moved(-eps)) / (2 * eps);
        CHECK(std::abs(fd - inner) <= 1e-4 * std::max(std::abs(inner), 1e-3));
      }
    }
  }
}

TEST_CASE("efficiency bound of a null-effect model, two ways") {
  auto m = random_dgp1(30, 60);
  auto t = m.tables();
  for (std::size_t i = 0; i < m.size(); ++i) t.q_y[2 * i + 1] = t.q_y[2 * i];
  m = m.with_tables(t);
  double by_cells = 0.0, closed = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (int c = 0; c < 4; ++c) {
      const double phi = influence_target_at(m, i, c, Target::Ate);
      by_cells += m.joint(i, c) * phi * phi;
    }
    const double q = t.q_y[2 * i], g = t.g0[i];
    closed += q * (1 - q) * (1 / g + 1 / (1 - g)) / static_cast<double>(m.size());
  }
  CHECK(by_cells == doctest::Approx(closed).epsilon(1e-12));
}

TEST_CASE("empirical influence mean") {
  const auto m = random_dgp1(10, 61);
  const auto data = kdpe::testing::draw_on_atoms(m, 62);
  double manual = 0.0;
  for (const auto& o : data) manual += influence_target(m, o, Target::Rr);
  CHECK(empirical_influence_mean(m, data, Target::Rr) == doctest::Approx(manual / 10.0).epsilon(1e-14));
}
