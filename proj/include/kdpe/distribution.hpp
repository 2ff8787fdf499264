#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "kdpe/observation.hpp"

namespace kdpe {

// Conditional probability tables. Every entry stores P(variable = 1 | parents, x_i).
//   g0   : n entries,  P(A=1|x_i) for DGP1, P(A0=1|x_i) for DGP2
//   q_l1 : 2n entries, index 2i + a0                       (DGP2 only)
//   g1   : 4n entries, index 4i + 2a0 + l1                 (DGP2 only)
//   q_y  : DGP1 2n entries, index 2i + a; DGP2 8n entries, index 8i + 4a0 + 2l1 + a1
struct ConditionalTables {
  std::vector<double> g0;
  std::vector<double> q_l1;
  std::vector<double> g1;
  std::vector<double> q_y;

  bool operator==(const ConditionalTables&) const = default;
};

// A distribution on {x atoms} x {binary coordinates}. X is the empirical marginal
// of the atoms (weight 1/n each); everything else lives in conditional tables.
// Immutable: updates return new models.
class FiniteModel {
 public:
  FiniteModel(Schema schema, std::vector<double> x_atoms, ConditionalTables tables);

  static FiniteModel dgp1(std::vector<double> x_atoms, std::vector<double> g0, std::vector<double> q_y);
  static FiniteModel dgp2(std::vector<double> x_atoms, std::vector<double> g0, std::vector<double> q_l1,
                          std::vector<double> g1, std::vector<double> q_y);

  [[nodiscard]] Schema schema() const { return schema_; }
  [[nodiscard]] std::size_t size() const { return x_.size(); }
  [[nodiscard]] int combos() const { return combo_count(schema_); }
  [[nodiscard]] std::size_t support_size() const { return x_.size() * static_cast<std::size_t>(combos()); }
  [[nodiscard]] std::size_t cell(std::size_t atom, int code) const {
    return atom * static_cast<std::size_t>(combos()) + static_cast<std::size_t>(code);
  }
  [[nodiscard]] Observation support_point(std::size_t cell) const;

  [[nodiscard]] std::span<const double> x_atoms() const { return x_; }
  [[nodiscard]] double x(std::size_t i) const { return x_[i]; }
  [[nodiscard]] const ConditionalTables& tables() const { return tables_; }

  // P(Y=1 | parents encoded in `code`, x_i); y bit of code is ignored.
  [[nodiscard]] double outcome_prob(std::size_t i, int code) const {
    return tables_.q_y[i * static_cast<std::size_t>(combos() / 2) + static_cast<std::size_t>(code >> 1)];
  }
  // P(L1=1 | a0, x_i), DGP2.
  [[nodiscard]] double intermediate_prob(std::size_t i, int a0) const {
    return tables_.q_l1[2 * i + static_cast<std::size_t>(a0)];
  }
  // P(A1=1 | a0, l1, x_i), DGP2.
  [[nodiscard]] double second_treatment_prob(std::size_t i, int a0, int l1) const {
    return tables_.g1[4 * i + 2 * static_cast<std::size_t>(a0) + static_cast<std::size_t>(l1)];
  }
  [[nodiscard]] double first_treatment_prob(std::size_t i) const { return tables_.g0[i]; }

  // P(binary coordinates = code | x_i).
  [[nodiscard]] double conditional(std::size_t i, int code) const;
  // Joint mass of support cell (x_i, code): conditional / n.
  [[nodiscard]] double joint(std::size_t i, int code) const {
    return conditional(i, code) / static_cast<double>(x_.size());
  }

  // Index of the first atom equal to x, if any.
  [[nodiscard]] std::optional<std::size_t> find_atom(double x) const;

  // FNV-1a over schema, atoms and tables.
  [[nodiscard]] std::uint64_t fingerprint() const;

  [[nodiscard]] FiniteModel with_tables(ConditionalTables tables) const;

  // Largest violation of the per-table [lo, hi] bounds on the updatable
  // components (q_y, and q_l1 for DGP2); <= 0 when inside.
  [[nodiscard]] double bound_violation(double lo, double hi) const;

  bool operator==(const FiniteModel&) const = default;

 private:
  void validate() const;

  Schema schema_;
  std::vector<double> x_;
  ConditionalTables tables_;
};

enum class ScoreKind {
  Raw,                    // arbitrary function on the support
  OutcomeProjected,       // zero mean given all parents of Y
  IntermediateProjected,  // function of (l1, a0, x), zero mean given (a0, x)
};

// A real function on every support cell (x_i, code), stored in cell order.
struct ScoreField {
  Schema schema = Schema::Dgp1;
  std::size_t atoms = 0;
  std::vector<double> values;
  ScoreKind kind = ScoreKind::Raw;

  static ScoreField zeros(const FiniteModel& m, ScoreKind kind = ScoreKind::Raw);
  static ScoreField from_function(const FiniteModel& m, const std::function<double(const Observation&)>& f);

  [[nodiscard]] double at(std::size_t atom, int code) const {
    return values[atom * static_cast<std::size_t>(combo_count(schema)) + static_cast<std::size_t>(code)];
  }
};

// The score that drives a fluctuation: the outcome component for both schemas,
// plus the intermediate (L1) component for DGP2.
struct ProjectedScore {
  ScoreField outcome;
  std::optional<ScoreField> intermediate;
};

double density(const FiniteModel& m, const Observation& o);

// h - E[h | A, X] under the model's outcome table.
ScoreField project_dgp1(const FiniteModel& m, const ScoreField& h);
// (E[h|L1,A0,X] - E[h|A0,X], h - E[h|A1,L1,A0,X]).
std::pair<ScoreField, ScoreField> project_dgp2(const FiniteModel& m, const ScoreField& h);

// Column-wise versions of the projections; rows of `cols` are support cells.
void project_outcome_columns(const FiniteModel& m, Eigen::Ref<Eigen::MatrixXd> cols);
Eigen::MatrixXd project_intermediate_columns(const FiniteModel& m, const Eigen::Ref<const Eigen::MatrixXd>& cols);

// Multiplies each updatable conditional table by (1 + projected score).
// Throws ConstraintViolation on lost positivity or entries outside [c, 1-c]
// (beyond a 1e-12 rounding allowance, which is clamped).
FiniteModel apply_fluctuation(const FiniteModel& m, const ProjectedScore& h, double c_bound);

// g-computation mean of Y under treatment a (at both time points for DGP2).
double mu_a(const FiniteModel& m, int a);

// Euclidean distance between the joint mass functions over the finite support.
double l2_distance(const FiniteModel& a, const FiniteModel& b);

// Versioned JSON document; doubles are written with round-trip precision.
std::string to_json(const FiniteModel& m, double c_bound);
struct ModelDocument {
  FiniteModel model;
  double c_bound;
};
ModelDocument model_from_json(std::string_view text);

}  // namespace kdpe
