#include "kdpe/kdpe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "kdpe/errors.hpp"

namespace kdpe {

namespace {
constexpr double kBoundMargin = 1e-10;
}

KdpeConfig KdpeConfig::defaults(Schema schema) {
  KdpeConfig c;
  if (schema == Schema::Dgp2) {
    c.lambda = 15.0;
    c.gamma = 1e-4;
  }
  return c;
}

void KdpeConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and >= 0");
  if (!(gamma > 0.0)) throw InvalidInput("gamma must be positive");
  if (!(c_bound > 0.0 && c_bound < 0.5)) throw InvalidInput("c_bound must lie in (0, 0.5)");
  if (max_outer_iterations < 1) throw InvalidInput("max_outer_iterations must be at least 1");
  if (!(solver_tol > 0.0)) throw InvalidInput("solver_tol must be positive");
}

std::string_view to_string(KdpeStatus s) { return s == KdpeStatus::Converged ? "converged" : "iteration_cap"; }

std::vector<std::size_t> observation_cells(const FiniteModel& m, std::span<const Observation> data) {
  std::vector<std::size_t> cells(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) {
    const Observation& o = data[j];
    if (o.schema != m.schema()) throw InvalidInput("observation schema does not match model");
    std::size_t atom = j;
    if (j >= m.size() || m.x(j) != o.x) {
      const auto found = m.find_atom(o.x);
      if (!found) throw OffSupport("observation is not on the model support");
      atom = *found;
    }
    cells[j] = m.cell(atom, o.code());
  }
  return cells;
}

ScoreSystem build_score_system(const FiniteModel& m, std::span<const Observation> data, const CenteredKernel& ck) {
  ck.require_model(m);
  if (data.empty()) throw InvalidInput("no observations");
  ScoreSystem sys;
  sys.cells = observation_cells(m, data);
  sys.outcome = ck.columns(sys.cells);
  if (m.schema() == Schema::Dgp2) sys.intermediate = project_intermediate_columns(m, sys.outcome);
  project_outcome_columns(m, sys.outcome);

  const auto n = static_cast<Eigen::Index>(data.size());
  sys.observed.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto cell = static_cast<Eigen::Index>(sys.cells[static_cast<std::size_t>(i)]);
    sys.observed.row(i) = sys.outcome.row(cell);
    if (sys.intermediate) sys.observed.row(i) += sys.intermediate->row(cell);
  }
  sys.gram = ck.gram_cells(sys.cells).values;
  return sys;
}

FluctuationProblem fluctuation_problem(const FiniteModel& m, const ScoreSystem& sys, double lambda, double c_bound) {
  FluctuationProblem prob;
  prob.observed_values = sys.observed;
  prob.gram = sys.gram;
  prob.lambda = lambda;
  const auto c = static_cast<std::size_t>(m.combos());
  const std::size_t outcome_rows = m.tables().q_y.size();
  const std::size_t inter_rows = m.schema() == Schema::Dgp2 ? m.tables().q_l1.size() : 0;
  const auto cols = sys.observed.cols();
  prob.bound_directions.resize(static_cast<Eigen::Index>(outcome_rows + inter_rows), cols);
  prob.bound_base.resize(static_cast<Eigen::Index>(outcome_rows + inter_rows));
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t parent = 0; parent < c / 2; ++parent, ++r) {
      const auto cell = static_cast<Eigen::Index>(i * c + 2 * parent + 1);
      prob.bound_directions.row(r) = sys.outcome.row(cell);
      prob.bound_base(r) = m.tables().q_y[i * (c / 2) + parent];
    }
  }
  if (inter_rows > 0) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t a0 = 0; a0 < 2; ++a0, ++r) {
        const auto cell = static_cast<Eigen::Index>(i * c + 8 * a0 + 4);
        prob.bound_directions.row(r) = sys.intermediate->row(cell);
        prob.bound_base(r) = m.tables().q_l1[2 * i + a0];
      }
    }
  }
  prob.set_uniform_bounds(c_bound, kBoundMargin);
  return prob;
}

ProjectedScore combined_score(const FiniteModel& m, const ScoreSystem& sys, const Eigen::VectorXd& alpha) {
  // Large coefficients cancel inside the products, so the combined scores are
  // projected once more to restore the conditional mean-zero identities to
  // roundoff relative to their own size.
  ProjectedScore h{ScoreField::zeros(m, ScoreKind::OutcomeProjected), std::nullopt};
  Eigen::Map<Eigen::VectorXd> outcome(h.outcome.values.data(), sys.outcome.rows());
  outcome = sys.outcome * alpha;
  project_outcome_columns(m, outcome);
  if (sys.intermediate) {
    ScoreField inter = ScoreField::zeros(m, ScoreKind::IntermediateProjected);
    const Eigen::VectorXd raw = *sys.intermediate * alpha;
    Eigen::Map<Eigen::VectorXd>(inter.values.data(), sys.intermediate->rows()) =
        project_intermediate_columns(m, raw);
    h.intermediate = std::move(inter);
  }
  return h;
}

namespace {

double max_abs_column_mean(const Eigen::MatrixXd& observed) {
  if (observed.size() == 0) return 0.0;
  return (observed.colwise().sum() / static_cast<double>(observed.rows())).cwiseAbs().maxCoeff();
}

}  // namespace

KdpeResult kdpe_fit(std::span<const Observation> data, const FiniteModel& pre, const BaseKernel& k,
                    const KdpeConfig& cfg) {
  cfg.validate();
  if (pre.bound_violation(cfg.c_bound, 1.0 - cfg.c_bound) > 1e-12) {
    throw InvalidInput("pre-estimate has table entries outside [c, 1-c]");
  }
  SolverOptions opt;
  opt.tol = cfg.solver_tol;

  KdpeResult res{pre, {}};
  for (int it = 0; it < cfg.max_outer_iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const CenteredKernel ck = center_kernel(k, res.model);
    const ScoreSystem sys = build_score_system(res.model, data, ck);
    const FluctuationProblem prob = fluctuation_problem(res.model, sys, cfg.lambda, cfg.c_bound);
    const FluctuationSolution sol = solve_fluctuation(prob, opt);
    FiniteModel next = apply_fluctuation(res.model, combined_score(res.model, sys, sol.alpha), cfg.c_bound);

    KdpeIteration rec;
    rec.iteration = it;
    rec.alpha_norm = sol.alpha.norm();
    rec.objective_drop = -sol.objective;
    rec.l2_step = l2_distance(next, res.model);
    rec.max_score_residual = max_abs_column_mean(sys.observed);
    rec.newton_iterations = sol.newton_iterations;
    rec.rank = sol.rank;
    rec.solver_status = sol.status;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.model = std::move(next);
    res.trace.iterations.push_back(rec);
    if (rec.l2_step <= cfg.gamma) {
      res.trace.status = KdpeStatus::Converged;
      return res;
    }
  }
  res.trace.status = KdpeStatus::IterationCap;
  return res;
}

std::vector<double> score_residuals(const FiniteModel& m, std::span<const Observation> data, const BaseKernel& k) {
  const CenteredKernel ck = center_kernel(k, m);
  const ScoreSystem sys = build_score_system(m, data, ck);
  const Eigen::VectorXd means = sys.observed.colwise().sum().transpose() / static_cast<double>(data.size());
  return {means.data(), means.data() + means.size()};
}

std::string trace_to_jsonl(const KdpeTrace& trace, bool include_timing) {
  std::string out;
  for (const auto& r : trace.iterations) {
    nlohmann::json j;
    j["iteration"] = r.iteration;
    j["alpha_norm"] = r.alpha_norm;
    j["objective_drop"] = r.objective_drop;
    j["l2_step"] = r.l2_step;
    j["max_score_residual"] = r.max_score_residual;
    j["newton_iterations"] = r.newton_iterations;
    j["rank"] = r.rank;
    j["solver_status"] = std::string(to_string(r.solver_status));
    if (include_timing) j["seconds"] = r.seconds;
    out += j.dump();
    out += '\n';
  }
  nlohmann::json end;
  end["status"] = std::string(to_string(trace.status));
  end["iterations"] = trace.iterations.size();
  out += end.dump();
  out += '\n';
  return out;
}

}  // namespace kdpe
