#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kdpe/baselines.hpp"
#include "kdpe/bootstrap.hpp"
#include "kdpe/functionals.hpp"
#include "kdpe/kdpe.hpp"
#include "kdpe/kernel.hpp"
#include "kdpe/preestimate.hpp"
#include "kdpe/simulation.hpp"

namespace kdpe {

enum class Method { Kdpe, Tmle, Naive, Ltmle };
std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct CampaignConfig {
  DgpSpec dgp;  // stream is replaced by the replication index
  std::size_t sims = 100;
  std::vector<Method> methods{Method::Kdpe, Method::Tmle, Method::Naive};
  std::vector<Target> targets{kAllTargets.begin(), kAllTargets.end()};
  PreEstimateConfig pre;
  KdpeConfig kdpe;
  TmleConfig tmle;
  double kernel_x_scale = 1.0;
  int jobs = 1;
  TruthOptions truth;

  void validate() const;
  bool operator==(const CampaignConfig&) const = default;
};

struct BenchmarkRecord {
  std::size_t sim_id = 0;
  Method method = Method::Kdpe;
  Target target = Target::Ate;
  double estimate = 0.0;
  double true_value = 0.0;
  int iterations = 0;
  bool converged = true;
  double seconds = 0.0;
};

struct Replication {
  std::vector<BenchmarkRecord> records;
  std::optional<KdpeTrace> kdpe_trace;
  // DGP1 only: empirical mean of the ATE influence function before and after KDPE.
  std::optional<std::pair<double, double>> ate_influence_mean;
  std::string error;  // non-empty when the replication aborted
};

// Everything a replication needs, fixed once per campaign.
struct CampaignContext {
  CampaignConfig cfg;
  TrueParameters truth;
  BaseKernel kernel;
};

CampaignContext make_context(const CampaignConfig& cfg);
CampaignContext make_context(const CampaignConfig& cfg, TrueParameters truth);

Replication run_replication(const CampaignContext& ctx, std::size_t sim_id);

struct CellSummary {
  std::size_t count = 0;
  double rmse = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double mean_iterations = 0.0;
  std::size_t not_converged = 0;
};

struct CampaignResult {
  std::vector<Replication> replications;  // ordered by sim_id
  std::map<std::pair<Method, Target>, CellSummary> summary;
  [[nodiscard]] bool all_converged() const;
  [[nodiscard]] std::vector<BenchmarkRecord> records() const;
};

// Runs sims replications on cfg.jobs worker threads; output order and values do
// not depend on the worker count.
CampaignResult run_campaign(const CampaignContext& ctx);

std::map<std::pair<Method, Target>, CellSummary> summarize(const std::vector<BenchmarkRecord>& records);

void write_results_csv(std::ostream& out, const std::vector<BenchmarkRecord>& records);
std::string summary_json(const CampaignResult& res);
// Plot-ready histogram of estimates per (method, target):
// method,target,bin_lower,bin_upper,count.
void write_histogram_csv(std::ostream& out, const std::vector<BenchmarkRecord>& records, int bins);

// Bootstrap study: per replication, intervals for every (method, target).
struct BootstrapRecord {
  std::size_t sim_id = 0;
  Method method = Method::Kdpe;
  Target target = Target::Ate;
  double estimate = 0.0;
  double variance = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool covered = false;
};

struct BootstrapStudy {
  std::vector<BootstrapRecord> records;
  std::vector<std::string> errors;  // replications whose bootstrap failed
};

// Estimator for one method: pre-estimate plus targeting, returning one value
// per target; nullopt when KDPE or TMLE does not converge.
Estimator method_estimator(const CampaignContext& ctx, Method m);

BootstrapStudy run_bootstrap_study(const CampaignContext& ctx, const BootstrapConfig& boot);
void write_bootstrap_csv(std::ostream& out, const std::vector<BootstrapRecord>& records);
std::map<std::pair<Method, Target>, double> coverage(const std::vector<BootstrapRecord>& records);

}  // namespace kdpe
