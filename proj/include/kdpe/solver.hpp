#pragma once

#include <string_view>

#include <Eigen/Core>

namespace kdpe {

// Minimize over alpha
//   f(alpha) = -(1/n) sum_i log(1 + (H alpha)_i) + lambda alpha' G alpha
// subject to lower_r <= base_r (1 + (D alpha)_r) <= upper_r for every bound row r.
// Each bound row is one updatable conditional-table entry; D holds the projected
// score directions evaluated at that entry.
struct FluctuationProblem {
  Eigen::MatrixXd observed_values;   // H, n x p
  Eigen::MatrixXd gram;              // G, p x p
  double lambda = 0.0;
  Eigen::MatrixXd bound_directions;  // D, R x p
  Eigen::VectorXd bound_base;        // table entries at alpha = 0
  Eigen::VectorXd lower;             // per-row bounds
  Eigen::VectorXd upper;

  // Bounds [c + margin, 1 - c - margin] on every row, widened to keep alpha = 0
  // strictly feasible when an entry already sits at or beyond them. The margin
  // absorbs roundoff between the solver's view of the rows and the update.
  void set_uniform_bounds(double c_bound, double margin = 0.0);
  void validate() const;
  [[nodiscard]] Eigen::Index dimension() const { return observed_values.cols(); }
};

enum class SolveStatus { ConvergedInterior, ConvergedNearBound, MaxIterations };
std::string_view to_string(SolveStatus s);

struct SolverOptions {
  double tol = 1e-8;
  double mu0 = 1e-2;
  int max_newton = 200;
  // Relative pivot threshold for restricting alpha to independent directions.
  double rank_tol = 1e-13;
  bool reduce = true;
};

struct FluctuationSolution {
  Eigen::VectorXd alpha;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int newton_iterations = 0;
  int barrier_outer_rounds = 0;
  int active_bounds = 0;
  Eigen::Index rank = 0;
  SolveStatus status = SolveStatus::ConvergedInterior;
};

double fluctuation_objective(const FluctuationProblem& prob, const Eigen::VectorXd& alpha);
Eigen::VectorXd fluctuation_gradient(const FluctuationProblem& prob, const Eigen::VectorXd& alpha);
// Whether alpha satisfies every bound row and keeps 1 + H alpha > 0.
bool is_feasible(const FluctuationProblem& prob, const Eigen::VectorXd& alpha);

FluctuationSolution solve_fluctuation(const FluctuationProblem& prob, const SolverOptions& opt = {});

}  // namespace kdpe
