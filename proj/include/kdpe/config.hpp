#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kdpe/benchmark.hpp"
#include "kdpe/bootstrap.hpp"

namespace kdpe {

// Everything a CLI run needs. Stored on disk as `key = value` lines; `#`
// starts a comment. Keys are listed in serialize_run_config's output.
struct RunConfig {
  CampaignConfig campaign;
  BootstrapConfig bootstrap;
  std::string output_dir = ".";
  int histogram_bins = 20;

  // Schema-dependent defaults: KDPE tuning, kernel x scale, baseline method.
  static RunConfig defaults(Schema schema);
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

using Setting = std::pair<std::string, std::string>;

// Splits a config document into settings, in file order.
std::vector<Setting> parse_settings(std::string_view text);

// Starts from the defaults of the last `dgp` setting (DGP1 if none) and
// applies every setting in order. Unknown keys and bad values throw InvalidInput.
RunConfig build_run_config(const std::vector<Setting>& settings);
RunConfig parse_run_config(std::string_view text);

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

// Lists every key; doubles keep 17 significant digits.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace kdpe
