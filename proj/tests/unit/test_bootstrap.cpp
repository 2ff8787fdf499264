#include <doctest.h>

#include <cmath>

#include "kdpe/bootstrap.hpp"
#include "kdpe/errors.hpp"
#include "kdpe/simulation.hpp"

using namespace kdpe;

namespace {

std::optional<std::vector<double>> mean_y(std::span<const Observation> d) {
  double s = 0.0;
  for (const auto& o : d) s += o.y();
  return std::vector<double>{s / static_cast<double>(d.size())};
}

}  // namespace

TEST_CASE("normal quantiles") {
  BootstrapConfig cfg;
  CHECK(cfg.z() == doctest::Approx(1.959964).epsilon(1e-6));
  cfg.literal_quantile = true;
  CHECK(cfg.z() == doctest::Approx(1.644854).epsilon(1e-6));
  cfg.m = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("resampling") {
  const auto data = generate({Schema::Dgp1, 100, 100, 0});
  RandomStream rng(1, 2);
  const auto plain = resample(data, rng, false);
  CHECK(plain.size() == 100);
  const auto unique = resample(data, rng, true);
  CHECK(unique.size() < 100);
  CHECK(unique.size() > 40);
  for (std::size_t k = 1; k < unique.size(); ++k) CHECK(unique[k] != unique[k - 1]);
}

TEST_CASE("constant estimator") {
  const auto data = generate({Schema::Dgp1, 50, 101, 0});
  const Estimator constant = [](std::span<const Observation>) { return std::vector<double>{0.7}; };
  const auto res = bootstrap_ci(data, constant, {}, 3);
  CHECK(res.intervals[0].variance == 0.0);
  CHECK(res.intervals[0].lower == 0.7);
  CHECK(res.intervals[0].upper == 0.7);
}

TEST_CASE("sample-mean standard error matches the closed form") {
  BootstrapConfig cfg;
  cfg.dedupe = false;
  double ratio = 0.0;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    const auto data = generate({Schema::Dgp1, 300, 102, rep});
    const auto res = bootstrap_ci(data, mean_y, cfg, 500 + rep);
    const double p = res.intervals[0].estimate;
    const auto& iv = res.intervals[0];
    CHECK(iv.variance >= 0.0);
    CHECK(iv.lower <= iv.estimate);
    CHECK(iv.estimate <= iv.upper);
    ratio += std::sqrt(iv.variance) / std::sqrt(p * (1 - p) / 300.0) / 50.0;
  }
  CHECK(std::abs(ratio - 1.0) <= 0.15);
}

TEST_CASE("results do not depend on the worker count") {
  const auto data = generate({Schema::Dgp1, 120, 103, 0});
  BootstrapConfig cfg;
  cfg.m = 40;
  const auto serial = bootstrap_ci(data, mean_y, cfg, 9);
  cfg.jobs = 3;
  const auto parallel = bootstrap_ci(data, mean_y, cfg, 9);
  CHECK(serial.replicates == parallel.replicates);
  CHECK(serial.intervals[0].variance == parallel.intervals[0].variance);
}

TEST_CASE("failed replications are retried, then counted") {
  const auto data = generate({Schema::Dgp1, 120, 104, 0});
  BootstrapConfig cfg;
  const Estimator flaky = [&](std::span<const Observation> d) -> std::optional<std::vector<double>> {
    if (d.size() != data.size() && d.size() % 2 == 1) return std::nullopt;
    return mean_y(d);
  };
  const auto res = bootstrap_ci(data, flaky, cfg, 11);
  CHECK(res.retries > 0);
  CHECK(res.completed + res.missing == cfg.m);
  CHECK(res.missing <= 20);

  const Estimator broken = [&](std::span<const Observation> d) -> std::optional<std::vector<double>> {
    if (d.size() != data.size() && d.size() % 4 != 0) throw std::runtime_error("no fit");
    return mean_y(d);
  };
  CHECK_THROWS_AS(bootstrap_ci(data, broken, cfg, 11), BootstrapFailure);
  const Estimator dead = [](std::span<const Observation>) { return std::optional<std::vector<double>>{}; };
  CHECK_THROWS_AS(bootstrap_ci(data, dead, cfg, 11), BootstrapFailure);
}
