#include "kdpe/functionals.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "kdpe/errors.hpp"

namespace kdpe {

std::string_view to_string(Target t) {
  switch (t) {
    case Target::Ate: return "ATE";
    case Target::Rr: return "RR";
    case Target::Or: return "OR";
  }
  return "?";
}

Target parse_target(std::string_view name) {
  std::string s(name);
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (s == "ATE") return Target::Ate;
  if (s == "RR") return Target::Rr;
  if (s == "OR") return Target::Or;
  throw InvalidInput("unknown target parameter '" + std::string(name) + "'");
}

double combine_target(Target t, double mu1, double mu0) {
  switch (t) {
    case Target::Ate: return mu1 - mu0;
    case Target::Rr:
      if (!(mu0 > 0.0)) throw InternalError("relative risk needs mu_0 > 0");
      return mu1 / mu0;
    case Target::Or:
      if (!(mu0 > 0.0 && mu0 < 1.0 && mu1 > 0.0 && mu1 < 1.0)) {
        throw InternalError("odds ratio needs mu_0, mu_1 in (0, 1)");
      }
      return (mu1 / (1.0 - mu1)) / (mu0 / (1.0 - mu0));
  }
  throw InternalError("unknown target");
}

std::array<double, 2> target_weights(Target t, double mu1, double mu0) {
  switch (t) {
    case Target::Ate: return {1.0, -1.0};
    case Target::Rr: return {1.0 / mu0, -mu1 / (mu0 * mu0)};
    case Target::Or: {
      const double psi = combine_target(t, mu1, mu0);
      return {psi / (mu1 * (1.0 - mu1)), -psi / (mu0 * (1.0 - mu0))};
    }
  }
  throw InternalError("unknown target");
}

double evaluate(const FiniteModel& m, Target t) { return combine_target(t, mu_a(m, 1), mu_a(m, 0)); }

namespace {

void require_dgp1(const FiniteModel& m) {
  if (m.schema() != Schema::Dgp1) throw InvalidInput("analytic influence functions are implemented for DGP1");
}

double influence_mu_at(const FiniteModel& m, std::size_t atom, int code, int a, double mu) {
  const int obs_a = code_bit(Schema::Dgp1, code, 0);
  const int y = code_bit(Schema::Dgp1, code, 1);
  const double q = m.outcome_prob(atom, 2 * a);
  double phi = q - mu;
  if (obs_a == a) {
    const double g1 = m.first_treatment_prob(atom);
    const double g = a == 1 ? g1 : 1.0 - g1;
    if (!(g > 0.0)) throw InternalError("propensity is zero at an observed treatment level");
    phi += (static_cast<double>(y) - q) / g;
  }
  return phi;
}

std::size_t atom_of(const FiniteModel& m, const Observation& o) {
  if (o.schema != m.schema()) throw InvalidInput("observation schema does not match model");
  const auto atom = m.find_atom(o.x);
  if (!atom) throw OffSupport("x is not an atom of the model");
  return *atom;
}

}  // namespace

double influence_mu_a(const FiniteModel& m, const Observation& o, int a) {
  require_dgp1(m);
  if (a != 0 && a != 1) throw InvalidInput("treatment level must be 0 or 1");
  return influence_mu_at(m, atom_of(m, o), o.code(), a, mu_a(m, a));
}

double influence_target(const FiniteModel& m, const Observation& o, Target t) {
  require_dgp1(m);
  return influence_target_at(m, atom_of(m, o), o.code(), t);
}

double influence_target_at(const FiniteModel& m, std::size_t atom, int code, Target t) {
  require_dgp1(m);
  const double mu1 = mu_a(m, 1);
  const double mu0 = mu_a(m, 0);
  const auto w = target_weights(t, mu1, mu0);
  const double phi1 = influence_mu_at(m, atom, code, 1, mu1);
  const double phi0 = influence_mu_at(m, atom, code, 0, mu0);
  if (t == Target::Ate) return phi1 - phi0;
  return w[0] * phi1 + w[1] * phi0;
}

ScoreField influence_field(const FiniteModel& m, Target t) {
  require_dgp1(m);
  const double mu1 = mu_a(m, 1);
  const double mu0 = mu_a(m, 0);
  const auto w = target_weights(t, mu1, mu0);
  ScoreField f = ScoreField::zeros(m);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (int code = 0; code < m.combos(); ++code) {
      const double phi1 = influence_mu_at(m, i, code, 1, mu1);
      const double phi0 = influence_mu_at(m, i, code, 0, mu0);
      f.values[m.cell(i, code)] = t == Target::Ate ? phi1 - phi0 : w[0] * phi1 + w[1] * phi0;
    }
  }
  return f;
}

double empirical_influence_mean(const FiniteModel& m, std::span<const Observation> data, Target t) {
  require_dgp1(m);
  if (data.empty()) throw InvalidInput("no observations");
  const ScoreField f = influence_field(m, t);
  double s = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    std::size_t atom = j;
    if (j >= m.size() || m.x(j) != data[j].x) atom = atom_of(m, data[j]);
    s += f.at(atom, data[j].code());
  }
  return s / static_cast<double>(data.size());
}

}  // namespace kdpe
