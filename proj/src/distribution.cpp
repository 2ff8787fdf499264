#include "kdpe/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

#include "kdpe/errors.hpp"

namespace kdpe {

namespace {

constexpr double kBoundRounding = 1e-12;

void check_table(const std::vector<double>& t, std::size_t expected, const char* name) {
  if (t.size() != expected) {
    throw InvalidInput(std::string("table ") + name + " has " + std::to_string(t.size()) + " entries, expected " +
                       std::to_string(expected));
  }
  for (double v : t) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidInput(std::string("table ") + name + " has an entry outside [0, 1]");
    }
  }
}

double bernoulli(double p_one, int bit) { return bit != 0 ? p_one : 1.0 - p_one; }

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < len; ++k) {
    h ^= p[k];
    h *= 0x100000001b3ULL;
  }
}

void fnv_vector(std::uint64_t& h, const std::vector<double>& v) {
  const std::uint64_t len = v.size();
  fnv_bytes(h, &len, sizeof(len));
  if (!v.empty()) fnv_bytes(h, v.data(), v.size() * sizeof(double));
}

void require_same_support(const FiniteModel& m, const ScoreField& h) {
  if (h.schema != m.schema() || h.atoms != m.size() || h.values.size() != m.support_size()) {
    throw InvalidInput("score field does not match the model support");
  }
}

}  // namespace

FiniteModel::FiniteModel(Schema schema, std::vector<double> x_atoms, ConditionalTables tables)
    : schema_(schema), x_(std::move(x_atoms)), tables_(std::move(tables)) {
  validate();
}

FiniteModel FiniteModel::dgp1(std::vector<double> x_atoms, std::vector<double> g0, std::vector<double> q_y) {
  return FiniteModel(Schema::Dgp1, std::move(x_atoms), ConditionalTables{std::move(g0), {}, {}, std::move(q_y)});
}

FiniteModel FiniteModel::dgp2(std::vector<double> x_atoms, std::vector<double> g0, std::vector<double> q_l1,
                              std::vector<double> g1, std::vector<double> q_y) {
  return FiniteModel(Schema::Dgp2, std::move(x_atoms),
                     ConditionalTables{std::move(g0), std::move(q_l1), std::move(g1), std::move(q_y)});
}

void FiniteModel::validate() const {
  const std::size_t n = x_.size();
  if (n == 0) throw InvalidInput("model needs at least one atom");
  for (double v : x_) {
    if (!std::isfinite(v)) throw InvalidInput("non-finite x atom");
  }
  check_table(tables_.g0, n, "g0");
  if (schema_ == Schema::Dgp1) {
    check_table(tables_.q_y, 2 * n, "q_y");
    if (!tables_.q_l1.empty() || !tables_.g1.empty()) throw InvalidInput("DGP1 model carries DGP2 tables");
  } else {
    check_table(tables_.q_l1, 2 * n, "q_l1");
    check_table(tables_.g1, 4 * n, "g1");
    check_table(tables_.q_y, 8 * n, "q_y");
  }
}

Observation FiniteModel::support_point(std::size_t cell) const {
  const auto c = static_cast<std::size_t>(combos());
  return Observation::from_code(schema_, x_[cell / c], static_cast<int>(cell % c));
}

double FiniteModel::conditional(std::size_t i, int code) const {
  if (schema_ == Schema::Dgp1) {
    const int a = code_bit(schema_, code, 0);
    const int y = code_bit(schema_, code, 1);
    return bernoulli(tables_.g0[i], a) * bernoulli(outcome_prob(i, code), y);
  }
  const int a0 = code_bit(schema_, code, 0);
  const int l1 = code_bit(schema_, code, 1);
  const int a1 = code_bit(schema_, code, 2);
  const int y = code_bit(schema_, code, 3);
  return bernoulli(tables_.g0[i], a0) * bernoulli(intermediate_prob(i, a0), l1) *
         bernoulli(second_treatment_prob(i, a0, l1), a1) * bernoulli(outcome_prob(i, code), y);
}

std::optional<std::size_t> FiniteModel::find_atom(double x) const {
  const auto it = std::find(x_.begin(), x_.end(), x);
  if (it == x_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - x_.begin());
}

std::uint64_t FiniteModel::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const int s = schema_ == Schema::Dgp1 ? 1 : 2;
  fnv_bytes(h, &s, sizeof(s));
  fnv_vector(h, x_);
  fnv_vector(h, tables_.g0);
  fnv_vector(h, tables_.q_l1);
  fnv_vector(h, tables_.g1);
  fnv_vector(h, tables_.q_y);
  return h;
}

FiniteModel FiniteModel::with_tables(ConditionalTables tables) const {
  return FiniteModel(schema_, x_, std::move(tables));
}

double FiniteModel::bound_violation(double lo, double hi) const {
  double worst = -std::numeric_limits<double>::infinity();
  auto scan = [&](const std::vector<double>& t) {
    for (double v : t) worst = std::max({worst, lo - v, v - hi});
  };
  scan(tables_.q_y);
  if (schema_ == Schema::Dgp2) scan(tables_.q_l1);
  return worst;
}

ScoreField ScoreField::zeros(const FiniteModel& m, ScoreKind kind) {
  return ScoreField{m.schema(), m.size(), std::vector<double>(m.support_size(), 0.0), kind};
}

ScoreField ScoreField::from_function(const FiniteModel& m, const std::function<double(const Observation&)>& f) {
  ScoreField h = zeros(m);
  for (std::size_t cell = 0; cell < m.support_size(); ++cell) h.values[cell] = f(m.support_point(cell));
  return h;
}

double density(const FiniteModel& m, const Observation& o) {
  if (o.schema != m.schema()) throw InvalidInput("observation schema does not match model");
  double total = 0.0;
  bool found = false;
  const int code = o.code();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.x(i) == o.x) {
      total += m.joint(i, code);
      found = true;
    }
  }
  if (!found) throw OffSupport("x is not an atom of the model");
  return total;
}

void project_outcome_columns(const FiniteModel& m, Eigen::Ref<Eigen::MatrixXd> cols) {
  if (static_cast<std::size_t>(cols.rows()) != m.support_size()) throw InvalidInput("column height mismatch");
  const auto c = static_cast<std::size_t>(m.combos());
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t parent = 0; parent < c / 2; ++parent) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(i * c + 2 * parent);
      const Eigen::Index r1 = r0 + 1;
      const double q = m.outcome_prob(i, static_cast<int>(2 * parent));
      const Eigen::RowVectorXd mean = q * cols.row(r1) + (1.0 - q) * cols.row(r0);
      cols.row(r1) -= mean;
      cols.row(r0) -= mean;
    }
  }
}

Eigen::MatrixXd project_intermediate_columns(const FiniteModel& m, const Eigen::Ref<const Eigen::MatrixXd>& cols) {
  if (m.schema() != Schema::Dgp2) throw InvalidInput("intermediate projection needs a DGP2 model");
  if (static_cast<std::size_t>(cols.rows()) != m.support_size()) throw InvalidInput("column height mismatch");
  Eigen::MatrixXd out(cols.rows(), cols.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto base = static_cast<Eigen::Index>(16 * i);
    for (int a0 = 0; a0 < 2; ++a0) {
      // E[h | l1, a0, x_i] for l1 = 0, 1
      Eigen::RowVectorXd given_l1[2];
      for (int l1 = 0; l1 < 2; ++l1) {
        given_l1[l1] = Eigen::RowVectorXd::Zero(cols.cols());
        const double g1 = m.second_treatment_prob(i, a0, l1);
        for (int a1 = 0; a1 < 2; ++a1) {
          const int parents = 8 * a0 + 4 * l1 + 2 * a1;
          const double q = m.outcome_prob(i, parents);
          const double w = bernoulli(g1, a1);
          given_l1[l1] += w * (q * cols.row(base + parents + 1) + (1.0 - q) * cols.row(base + parents));
        }
      }
      const double ql = m.intermediate_prob(i, a0);
      const Eigen::RowVectorXd given_a0 = ql * given_l1[1] + (1.0 - ql) * given_l1[0];
      for (int l1 = 0; l1 < 2; ++l1) {
        const Eigen::RowVectorXd v = given_l1[l1] - given_a0;
        for (int tail = 0; tail < 4; ++tail) out.row(base + 8 * a0 + 4 * l1 + tail) = v;
      }
    }
  }
  return out;
}

ScoreField project_dgp1(const FiniteModel& m, const ScoreField& h) {
  if (m.schema() != Schema::Dgp1) throw InvalidInput("project_dgp1 needs a DGP1 model");
  require_same_support(m, h);
  ScoreField out = h;
  Eigen::Map<Eigen::MatrixXd> col(out.values.data(), static_cast<Eigen::Index>(out.values.size()), 1);
  project_outcome_columns(m, col);
  out.kind = ScoreKind::OutcomeProjected;
  return out;
}

std::pair<ScoreField, ScoreField> project_dgp2(const FiniteModel& m, const ScoreField& h) {
  if (m.schema() != Schema::Dgp2) throw InvalidInput("project_dgp2 needs a DGP2 model");
  require_same_support(m, h);
  const Eigen::Map<const Eigen::MatrixXd> col(h.values.data(), static_cast<Eigen::Index>(h.values.size()), 1);
  ScoreField inter = ScoreField::zeros(m, ScoreKind::IntermediateProjected);
  Eigen::Map<Eigen::MatrixXd>(inter.values.data(), col.rows(), 1) = project_intermediate_columns(m, col);
  ScoreField outcome = h;
  Eigen::Map<Eigen::MatrixXd> out_col(outcome.values.data(), col.rows(), 1);
  project_outcome_columns(m, out_col);
  outcome.kind = ScoreKind::OutcomeProjected;
  return {std::move(inter), std::move(outcome)};
}

namespace {

// New value of a binary conditional table entry after multiplying P(1) by
// (1 + h1) and P(0) by (1 + h0).
double fluctuate_entry(double p1, double h1, double h0, double c_bound, const char* table) {
  const double up = p1 * (1.0 + h1);
  const double down = (1.0 - p1) * (1.0 + h0);
  if (!(1.0 + h1 > 0.0) || !(1.0 + h0 > 0.0)) {
    throw ConstraintViolation(std::string("fluctuation of ") + table + " loses positivity");
  }
  // Roundoff in the projected score scales with its magnitude.
  const double scale = 1.0 + std::abs(p1 * h1) + std::abs((1.0 - p1) * h0);
  if (std::abs(up + down - 1.0) > 1e-12 * scale) {
    throw InvalidInput(std::string("score for ") + table + " is not conditionally mean-zero");
  }
  if (up < c_bound - kBoundRounding || up > 1.0 - c_bound + kBoundRounding) {
    throw ConstraintViolation(std::string("fluctuation moves ") + table + " outside [c, 1-c]");
  }
  return std::clamp(up, c_bound, 1.0 - c_bound);
}

}  // namespace

FiniteModel apply_fluctuation(const FiniteModel& m, const ProjectedScore& h, double c_bound) {
  require_same_support(m, h.outcome);
  if (h.outcome.kind != ScoreKind::OutcomeProjected) throw InvalidInput("outcome score is not projected");
  ConditionalTables t = m.tables();
  const int c = m.combos();
  // An all-zero score leaves the tables bitwise unchanged, including entries
  // sitting exactly on a bound.
  auto is_zero = [](const ScoreField& f) {
    return std::all_of(f.values.begin(), f.values.end(), [](double v) { return v == 0.0; });
  };
  if (!is_zero(h.outcome)) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (int parent = 0; parent < c / 2; ++parent) {
        const int code0 = 2 * parent;
        auto& entry = t.q_y[i * static_cast<std::size_t>(c / 2) + static_cast<std::size_t>(parent)];
        entry = fluctuate_entry(entry, h.outcome.at(i, code0 + 1), h.outcome.at(i, code0), c_bound, "q_y");
      }
    }
  }
  if (m.schema() == Schema::Dgp2) {
    if (!h.intermediate) throw InvalidInput("DGP2 fluctuation needs an intermediate score");
    require_same_support(m, *h.intermediate);
    if (h.intermediate->kind != ScoreKind::IntermediateProjected) {
      throw InvalidInput("intermediate score is not projected");
    }
    if (!is_zero(*h.intermediate)) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        for (int a0 = 0; a0 < 2; ++a0) {
          auto& entry = t.q_l1[2 * i + static_cast<std::size_t>(a0)];
          entry = fluctuate_entry(entry, h.intermediate->at(i, 8 * a0 + 4), h.intermediate->at(i, 8 * a0), c_bound,
                                  "q_l1");
        }
      }
    }
  }
  return m.with_tables(std::move(t));
}

double mu_a(const FiniteModel& m, int a) {
  if (a != 0 && a != 1) throw InvalidInput("treatment level must be 0 or 1");
  double total = 0.0;
  if (m.schema() == Schema::Dgp1) {
    for (std::size_t i = 0; i < m.size(); ++i) total += m.outcome_prob(i, 2 * a);
  } else {
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double ql = m.intermediate_prob(i, a);
      const double y_l0 = m.outcome_prob(i, 8 * a + 2 * a);
      const double y_l1 = m.outcome_prob(i, 8 * a + 4 + 2 * a);
      total += (1.0 - ql) * y_l0 + ql * y_l1;
    }
  }
  return total / static_cast<double>(m.size());
}

double l2_distance(const FiniteModel& a, const FiniteModel& b) {
  if (a.schema() != b.schema() || !std::equal(a.x_atoms().begin(), a.x_atoms().end(), b.x_atoms().begin(),
                                               b.x_atoms().end())) {
    throw InvalidInput("l2_distance needs models on identical atoms");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int code = 0; code < a.combos(); ++code) {
      const double d = a.joint(i, code) - b.joint(i, code);
      sum += d * d;
    }
  }
  return std::sqrt(sum);
}

std::string to_json(const FiniteModel& m, double c_bound) {
  nlohmann::json doc;
  doc["format"] = "kdpe-finite-model";
  doc["version"] = 1;
  doc["schema"] = std::string(to_string(m.schema()));
  doc["c_bound"] = c_bound;
  doc["x_atoms"] = std::vector<double>(m.x_atoms().begin(), m.x_atoms().end());
  doc["g0"] = m.tables().g0;
  doc["q_y"] = m.tables().q_y;
  if (m.schema() == Schema::Dgp2) {
    doc["q_l1"] = m.tables().q_l1;
    doc["g1"] = m.tables().g1;
  }
  return doc.dump(2);
}

ModelDocument model_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("model document is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "kdpe-finite-model") throw InvalidInput("unknown model format tag");
    if (doc.at("version").get<int>() != 1) throw InvalidInput("unsupported model document version");
    const Schema schema = parse_schema(doc.at("schema").get<std::string>());
    ConditionalTables t;
    t.g0 = doc.at("g0").get<std::vector<double>>();
    t.q_y = doc.at("q_y").get<std::vector<double>>();
    if (schema == Schema::Dgp2) {
      t.q_l1 = doc.at("q_l1").get<std::vector<double>>();
      t.g1 = doc.at("g1").get<std::vector<double>>();
    }
    return ModelDocument{FiniteModel(schema, doc.at("x_atoms").get<std::vector<double>>(), std::move(t)),
                         doc.at("c_bound").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace kdpe
