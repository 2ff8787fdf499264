#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "kdpe/distribution.hpp"
#include "kdpe/kernel.hpp"
#include "kdpe/observation.hpp"
#include "kdpe/solver.hpp"

namespace kdpe {

struct KdpeConfig {
  double lambda = 0.0;
  double gamma = 0.002;
  double c_bound = 0.001;
  int max_outer_iterations = 50;
  double solver_tol = 1e-8;

  // DGP1 {lambda 0, gamma 0.002, c 0.001}; DGP2 {lambda 15, gamma 1e-4, c 0.001}.
  static KdpeConfig defaults(Schema schema);
  void validate() const;
  bool operator==(const KdpeConfig&) const = default;
};

enum class KdpeStatus { Converged, IterationCap };
std::string_view to_string(KdpeStatus s);

struct KdpeIteration {
  int iteration = 0;
  double alpha_norm = 0.0;
  double objective_drop = 0.0;      // f(0) - f(alpha), >= 0
  double l2_step = 0.0;             // distance between consecutive models
  double max_score_residual = 0.0;  // before the step
  int newton_iterations = 0;
  Eigen::Index rank = 0;
  SolveStatus solver_status = SolveStatus::ConvergedInterior;
  double seconds = 0.0;
};

struct KdpeTrace {
  std::vector<KdpeIteration> iterations;
  KdpeStatus status = KdpeStatus::IterationCap;
};

struct KdpeResult {
  FiniteModel model;
  KdpeTrace trace;
};

// Projected centered-kernel scores k_{O_j} for every observation j, evaluated on
// the whole support, plus everything the fluctuation problem needs.
struct ScoreSystem {
  std::vector<std::size_t> cells;            // support cell of each observation
  Eigen::MatrixXd outcome;                   // support x n, outcome component
  std::optional<Eigen::MatrixXd> intermediate;  // support x n, L1 component (DGP2)
  Eigen::MatrixXd observed;                  // n x n, combined score at observed points
  Eigen::MatrixXd gram;                      // n x n centered Gram matrix
};

// Support cell of each observation; observation j is matched to atom j when
// their x agree, otherwise to the first equal atom.
std::vector<std::size_t> observation_cells(const FiniteModel& m, std::span<const Observation> data);

ScoreSystem build_score_system(const FiniteModel& m, std::span<const Observation> data, const CenteredKernel& ck);

// Bound rows: one per updatable conditional-table entry (P(Y=1|parents, x_i),
// and P(L1=1|a0, x_i) for DGP2).
FluctuationProblem fluctuation_problem(const FiniteModel& m, const ScoreSystem& sys, double lambda, double c_bound);

// The score alpha' k_O split into the components the model update needs.
ProjectedScore combined_score(const FiniteModel& m, const ScoreSystem& sys, const Eigen::VectorXd& alpha);

KdpeResult kdpe_fit(std::span<const Observation> data, const FiniteModel& pre, const BaseKernel& k,
                    const KdpeConfig& cfg);

// Entry j: empirical mean of the projected k_{O_j} under the kernel centered at m.
std::vector<double> score_residuals(const FiniteModel& m, std::span<const Observation> data, const BaseKernel& k);

// One JSON object per iteration, newline separated.
std::string trace_to_jsonl(const KdpeTrace& trace, bool include_timing = true);

}  // namespace kdpe
