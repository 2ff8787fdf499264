#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "kdpe/observation.hpp"
#include "kdpe/random.hpp"

namespace kdpe {

struct BootstrapConfig {
  int m = 100;
  double alpha_level = 0.05;
  bool dedupe = true;
  // false: z = Phi^-1(1 - alpha/2), the usual two-sided interval.
  // true:  z = Phi^-1(1 - alpha), as the resampling recipe writes it.
  bool literal_quantile = false;
  int max_retries = 3;
  double max_missing_fraction = 0.2;
  int jobs = 1;

  void validate() const;
  [[nodiscard]] double z() const;
  bool operator==(const BootstrapConfig&) const = default;
};

// Estimates one or more statistics from a dataset; nullopt (or an exception)
// marks a failed fit.
using Estimator = std::function<std::optional<std::vector<double>>(std::span<const Observation>)>;

struct BootstrapInterval {
  double estimate = 0.0;
  double variance = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct BootstrapResult {
  std::vector<BootstrapInterval> intervals;  // one per statistic
  int completed = 0;
  int missing = 0;
  int retries = 0;
  std::vector<std::vector<double>> replicates;  // completed replications
};

class BootstrapFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// n draws with replacement; with dedupe each drawn index is kept once, in
// increasing index order.
std::vector<Observation> resample(std::span<const Observation> data, RandomStream& rng, bool dedupe);

// Replication j, attempt k draws from stream j * (max_retries + 1) + k of
// `seed`, so results do not depend on the worker count.
BootstrapResult bootstrap_ci(std::span<const Observation> data, const Estimator& estimator,
                             const BootstrapConfig& cfg, std::uint64_t seed);

}  // namespace kdpe
