#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "kdpe/distribution.hpp"
#include "kdpe/errors.hpp"
#include "kdpe/kernel.hpp"

using namespace kdpe;
using kdpe::testing::random_dgp1;
using kdpe::testing::random_dgp2;

namespace {

double bern(double p, int v) { return v ? p : 1.0 - p; }

double total_mass(const FiniteModel& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (int c = 0; c < m.combos(); ++c) s += m.joint(i, c);
  }
  return s;
}

ScoreField random_field(const FiniteModel& m, std::uint64_t seed) {
  RandomStream rng(seed, 7);
  ScoreField h = ScoreField::zeros(m);
  for (auto& v : h.values) v = rng.normal();
  return h;
}

}  // namespace

TEST_CASE("density of a one-atom model") {
  const auto m = FiniteModel::dgp1({0.3}, {0.5}, {0.5, 0.5});
  CHECK(density(m, Observation::dgp1(0.3, 1, 1)) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(density(m, Observation::dgp1(0.4, 1, 1)), OffSupport);
}

TEST_CASE("joint mass sums to one") {
  CHECK(std::abs(total_mass(random_dgp1(40, 1)) - 1.0) < 1e-12);
  CHECK(std::abs(total_mass(random_dgp2(40, 2)) - 1.0) < 1e-12);
}

TEST_CASE("three-atom density matches hand multiplication") {
  const std::vector<double> x{0.1, 0.5, 0.9};
  const std::vector<double> g{0.2, 0.5, 0.7};
  const std::vector<double> q{0.3, 0.6, 0.4, 0.8, 0.1, 0.9};  // index 2i + a
  const auto m = FiniteModel::dgp1(x, g, q);
  for (std::size_t i = 0; i < 3; ++i) {
    for (int a = 0; a < 2; ++a) {
      for (int y = 0; y < 2; ++y) {
        const double expected = (1.0 / 3.0) * bern(g[i], a) * bern(q[2 * i + static_cast<std::size_t>(a)], y);
        CHECK(std::abs(density(m, Observation::dgp1(x[i], a, y)) - expected) < 1e-15);
      }
    }
  }
}

TEST_CASE("outcome projection") {
  const auto m = random_dgp1(6, 3);
  SUBCASE("constants project to zero") {
    ScoreField h = ScoreField::zeros(m);
    for (auto& v : h.values) v = 3.0;
    for (double v : project_dgp1(m, h).values) CHECK(std::abs(v) < 1e-15);
  }
  SUBCASE("conditional mean zero given the parents") {
    const auto p = project_dgp1(m, random_field(m, 4));
    CHECK(p.kind == ScoreKind::OutcomeProjected);
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (int a = 0; a < 2; ++a) {
        const double q = m.outcome_prob(i, 2 * a);
        CHECK(std::abs(q * p.at(i, 2 * a + 1) + (1 - q) * p.at(i, 2 * a)) < 1e-12);
      }
    }
  }
  SUBCASE("centered kernel column on two atoms matches brute force") {
    const auto m2 = random_dgp1(2, 5);
    const auto ck = center_kernel(BaseKernel::default_for(Schema::Dgp1), m2);
    const auto h = ScoreField::from_function(
        m2, [&](const Observation& o) { return ck.eval(m2, o, Observation::dgp1(m2.x(1), 1, 0)); });
    const auto p = project_dgp1(m2, h);
    for (std::size_t i = 0; i < 2; ++i) {
      for (int a = 0; a < 2; ++a) {
        const double q = m2.tables().q_y[2 * i + static_cast<std::size_t>(a)];
        const double h0 = ck.eval(m2, Observation::dgp1(m2.x(i), a, 0), Observation::dgp1(m2.x(1), 1, 0));
        const double h1 = ck.eval(m2, Observation::dgp1(m2.x(i), a, 1), Observation::dgp1(m2.x(1), 1, 0));
        const double mean = q * h1 + (1 - q) * h0;
        CHECK(std::abs(p.at(i, 2 * a) - (h0 - mean)) < 1e-14);
        CHECK(std::abs(p.at(i, 2 * a + 1) - (h1 - mean)) < 1e-14);
      }
    }
  }
}

TEST_CASE("longitudinal projections") {
  const auto m = random_dgp2(5, 6);
  SUBCASE("constants project to zero") {
    ScoreField h = ScoreField::zeros(m);
    for (auto& v : h.values) v = -2.5;
    const auto [hl, hy] = project_dgp2(m, h);
    for (double v : hl.values) CHECK(std::abs(v) < 1e-15);
    for (double v : hy.values) CHECK(std::abs(v) < 1e-15);
  }
  SUBCASE("conditional mean zero identities") {
    const auto [hl, hy] = project_dgp2(m, random_field(m, 8));
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (int a0 = 0; a0 < 2; ++a0) {
        const double ql = m.intermediate_prob(i, a0);
        CHECK(std::abs(ql * hl.at(i, 8 * a0 + 4) + (1 - ql) * hl.at(i, 8 * a0)) < 1e-12);
        for (int l1 = 0; l1 < 2; ++l1) {
          for (int a1 = 0; a1 < 2; ++a1) {
            const int base = 8 * a0 + 4 * l1 + 2 * a1;
            const double q = m.outcome_prob(i, base);
            CHECK(std::abs(q * hy.at(i, base + 1) + (1 - q) * hy.at(i, base)) < 1e-12);
          }
        }
      }
    }
  }
  SUBCASE("two atoms against nested enumeration") {
    const auto m2 = random_dgp2(2, 9);
    const auto h = random_field(m2, 10);
    const auto [hl, hy] = project_dgp2(m2, h);
    for (std::size_t i = 0; i < 2; ++i) {
      for (int a0 = 0; a0 < 2; ++a0) {
        double given_l1[2] = {0, 0};
        for (int l1 = 0; l1 < 2; ++l1) {
          for (int a1 = 0; a1 < 2; ++a1) {
            for (int y = 0; y < 2; ++y) {
              const int code = 8 * a0 + 4 * l1 + 2 * a1 + y;
              given_l1[l1] += bern(m2.second_treatment_prob(i, a0, l1), a1) * bern(m2.outcome_prob(i, code), y) *
                              h.at(i, code);
            }
          }
        }
        const double ql = m2.intermediate_prob(i, a0);
        const double given_a0 = ql * given_l1[1] + (1 - ql) * given_l1[0];
        for (int code = 8 * a0; code < 8 * a0 + 8; ++code) {
          const int l1 = (code >> 2) & 1;
          CHECK(std::abs(hl.at(i, code) - (given_l1[l1] - given_a0)) < 1e-13);
          const double q = m2.outcome_prob(i, code);
          const double mean_y = q * h.at(i, code | 1) + (1 - q) * h.at(i, code & ~1);
          CHECK(std::abs(hy.at(i, code) - (h.at(i, code) - mean_y)) < 1e-13);
        }
      }
    }
  }
}

TEST_CASE("fluctuation updates") {
  const auto m = random_dgp1(4, 11);
  SUBCASE("zero score is the identity") {
    const ProjectedScore zero{ScoreField::zeros(m, ScoreKind::OutcomeProjected), std::nullopt};
    CHECK(apply_fluctuation(m, zero, 0.001) == m);
  }
  SUBCASE("table entries follow (1 + h) q and stay normalized") {
    auto h = project_dgp1(m, random_field(m, 12));
    for (auto& v : h.values) v *= 0.05;
    const auto out = apply_fluctuation(m, ProjectedScore{h, std::nullopt}, 0.001);
    CHECK(out.tables().g0 == m.tables().g0);
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (int a = 0; a < 2; ++a) {
        const double q = m.outcome_prob(i, 2 * a);
        const double q1 = (1 + h.at(i, 2 * a + 1)) * q;
        const double q0 = (1 + h.at(i, 2 * a)) * (1 - q);
        CHECK(std::abs(q1 + q0 - 1.0) < 1e-12);
        CHECK(std::abs(out.outcome_prob(i, 2 * a) - q1) < 1e-15);
      }
    }
    CHECK(std::abs(total_mass(out) - 1.0) < 1e-12);
  }
  SUBCASE("two-atom hand example") {
    const auto m2 = FiniteModel::dgp1({0.2, 0.7}, {0.5, 0.5}, {0.5, 0.4, 0.2, 0.8});
    ScoreField h = ScoreField::zeros(m2, ScoreKind::OutcomeProjected);
    // atom 0, a = 0: q = 0.5, h(y=1) = 0.2 and h(y=0) = -0.2 keep the mean at zero.
    h.values[1] = 0.2;
    h.values[0] = -0.2;
    // atom 1, a = 1: q = 0.8, h(y=1) = 0.1, h(y=0) = -0.4.
    h.values[7] = 0.1;
    h.values[6] = -0.4;
    const auto out = apply_fluctuation(m2, ProjectedScore{h, std::nullopt}, 0.001);
    CHECK(out.tables().q_y[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(out.tables().q_y[1] == 0.4);
    CHECK(out.tables().q_y[2] == 0.2);
    CHECK(out.tables().q_y[3] == doctest::Approx(0.88).epsilon(1e-15));
  }
  SUBCASE("leaving the bounds throws") {
    ScoreField h = ScoreField::zeros(m, ScoreKind::OutcomeProjected);
    const double q = m.outcome_prob(0, 0);
    h.values[1] = (1 - q) / q * 0.9999;
    h.values[0] = -0.9999;
    CHECK_THROWS_AS(apply_fluctuation(m, ProjectedScore{h, std::nullopt}, 0.001), ConstraintViolation);
  }
  SUBCASE("unprojected scores are rejected") {
    CHECK_THROWS(apply_fluctuation(m, ProjectedScore{random_field(m, 13), std::nullopt}, 0.001));
  }
}

TEST_CASE("longitudinal fluctuation keeps both tables normalized") {
  const auto m = random_dgp2(4, 14);
  auto [hl, hy] = project_dgp2(m, random_field(m, 15));
  for (auto& v : hl.values) v *= 0.05;
  for (auto& v : hy.values) v *= 0.05;
  const auto out = apply_fluctuation(m, ProjectedScore{hy, hl}, 0.001);
  CHECK(out.tables().g0 == m.tables().g0);
  CHECK(out.tables().g1 == m.tables().g1);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (int a0 = 0; a0 < 2; ++a0) {
      const double ql = m.intermediate_prob(i, a0);
      const double s = (1 + hl.at(i, 8 * a0 + 4)) * ql + (1 + hl.at(i, 8 * a0)) * (1 - ql);
      CHECK(std::abs(s - 1.0) < 1e-12);
      CHECK(std::abs(out.intermediate_prob(i, a0) - (1 + hl.at(i, 8 * a0 + 4)) * ql) < 1e-15);
    }
  }
  CHECK(std::abs(total_mass(out) - 1.0) < 1e-12);
}

TEST_CASE("treatment-specific means") {
  SUBCASE("degenerate outcome") {
    const auto m = FiniteModel::dgp1({0.1, 0.2}, {0.3, 0.6}, {1.0, 1.0, 1.0, 1.0});
    CHECK(mu_a(m, 0) == 1.0);
    CHECK(mu_a(m, 1) == 1.0);
  }
  SUBCASE("two atoms") {
    const auto m = FiniteModel::dgp1({0.1, 0.2}, {0.3, 0.6}, {0.5, 0.2, 0.5, 0.6});
    CHECK(mu_a(m, 1) == doctest::Approx(0.4).epsilon(1e-15));
  }
  SUBCASE("propensity does not enter") {
    const auto m = random_dgp1(10, 16);
    auto t = m.tables();
    for (auto& g : t.g0) g = 1.0 - g;
    const auto m2 = m.with_tables(t);
    CHECK(mu_a(m, 1) == mu_a(m2, 1));
    CHECK(mu_a(m, 0) == mu_a(m2, 0));
  }
  SUBCASE("longitudinal g-computation by enumeration") {
    const auto m = random_dgp2(2, 17);
    for (int a = 0; a < 2; ++a) {
      double total = 0.0;
      for (std::size_t i = 0; i < 2; ++i) {
        // Enumerate the joint law with A0 and A1 clamped to a.
        for (int code = 0; code < 16; ++code) {
          const int a0 = (code >> 3) & 1, l1 = (code >> 2) & 1, a1 = (code >> 1) & 1, y = code & 1;
          if (a0 != a || a1 != a || y != 1) continue;
          total += 0.5 * bern(m.intermediate_prob(i, a0), l1) * m.outcome_prob(i, code);
        }
      }
      CHECK(std::abs(mu_a(m, a) - total) < 1e-15);
    }
  }
}

TEST_CASE("l2 distance") {
  const auto a = random_dgp1(5, 18);
  const auto b = random_dgp1(5, 18, 0.2, 0.8);
  CHECK(l2_distance(a, a) == 0.0);
  CHECK(l2_distance(a, b) == l2_distance(b, a));
  const double d = 0.05;
  const auto one = FiniteModel::dgp1({0.4}, {0.3}, {0.5, 0.6});
  const auto two = FiniteModel::dgp1({0.4}, {0.3}, {0.5 + d, 0.6 + d});
  // Joint deltas: +-0.7 d for a = 0 and +-0.3 d for a = 1.
  const double expected = std::sqrt(2 * (0.7 * d) * (0.7 * d) + 2 * (0.3 * d) * (0.3 * d));
  CHECK(l2_distance(one, two) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS(l2_distance(one, a));
}

TEST_CASE("model documents round-trip losslessly") {
  for (const auto& m : {random_dgp1(7, 19), random_dgp2(7, 20)}) {
    const auto doc = model_from_json(to_json(m, 0.001));
    CHECK(doc.model == m);
    CHECK(doc.c_bound == 0.001);
  }
  CHECK_THROWS(model_from_json("{\"version\": 99}"));
}
