#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdpe/distribution.hpp"
#include "kdpe/observation.hpp"

namespace kdpe {

enum class PreEstimateMethod { NadarayaWatson, LogisticLinear, Oracle };
enum class BandwidthRule { Silverman, Fixed };

std::string_view to_string(PreEstimateMethod m);
PreEstimateMethod parse_pre_estimate_method(std::string_view name);
std::string_view to_string(BandwidthRule r);
BandwidthRule parse_bandwidth_rule(std::string_view name);

struct PreEstimateConfig {
  PreEstimateMethod method = PreEstimateMethod::NadarayaWatson;
  BandwidthRule bandwidth_rule = BandwidthRule::Silverman;
  double fixed_bandwidth = 0.1;  // used with BandwidthRule::Fixed
  double clip = 0.01;

  void validate() const;
  bool operator==(const PreEstimateConfig&) const = default;
};

struct PreEstimate {
  FiniteModel model;
  double bandwidth = 0.0;              // NadarayaWatson only
  std::vector<std::string> fallbacks;  // strata that used the marginal rate
};

// Silverman's rule 1.06 sd(x) n^(-1/5); 0 when all x coincide.
double silverman_bandwidth(std::span<const double> x);

// Atoms are the observed x values in data order. Every fitted table is clipped
// to [clip, 1 - clip].
PreEstimate fit_pre_estimate(std::span<const Observation> data, const PreEstimateConfig& cfg);

}  // namespace kdpe
