#include "kdpe/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kdpe/errors.hpp"
#include "kdpe/simulation.hpp"

namespace kdpe {

namespace {

constexpr double kBoundMargin = 1e-10;

std::size_t atom_for(const FiniteModel& m, std::span<const Observation> data, std::size_t j) {
  if (j < m.size() && m.x(j) == data[j].x) return j;
  const auto found = m.find_atom(data[j].x);
  if (!found) throw OffSupport("observation is not on the model support");
  return *found;
}

double clamp_open(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

// Root of sum_i w_i (z_i - expit(offset_i + eps c_i)) = 0 by safeguarded Newton;
// the score is decreasing in eps when every w_i c_i >= 0.
double logistic_fluctuation(const std::vector<double>& offset, const std::vector<double>& cov,
                            const std::vector<double>& z) {
  auto score = [&](double eps, double* deriv) {
    double s = 0.0, d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = dgp::expit(offset[i] + eps * cov[i]);
      s += cov[i] * (z[i] - p);
      d -= cov[i] * cov[i] * p * (1.0 - p);
    }
    if (deriv) *deriv = d;
    return s;
  };
  if (z.empty()) return 0.0;
  double lo = -1.0, hi = 1.0;
  while (score(lo, nullptr) < 0.0 && lo > -1e6) lo *= 2.0;
  while (score(hi, nullptr) > 0.0 && hi < 1e6) hi *= 2.0;
  double eps = 0.0;
  for (int it = 0; it < 200; ++it) {
    double d = 0.0;
    const double s = score(eps, &d);
    if (s > 0.0) lo = eps; else hi = eps;
    if (std::abs(s) < 1e-14 || hi - lo < 1e-15) break;
    double next = d < 0.0 ? eps - s / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    eps = next;
  }
  return eps;
}

}  // namespace

void TmleConfig::validate() const {
  if (!(epsilon_tol > 0.0)) throw InvalidInput("epsilon_tol must be positive");
  if (max_iterations < 1) throw InvalidInput("max_iterations must be at least 1");
  if (targets.empty()) throw InvalidInput("TMLE needs at least one target");
  if (!(c_bound > 0.0 && c_bound < 0.5)) throw InvalidInput("c_bound must lie in (0, 0.5)");
}

double bounded_linear_mle(std::span<const double> v, double lo, double hi) {
  if (!(lo <= 0.0 && hi >= 0.0)) throw InvalidInput("the interval must contain 0");
  auto deriv = [&](double e) {
    double s = 0.0;
    for (double x : v) s += x / (1.0 + e * x);
    return s;
  };
  auto second = [&](double e) {
    double s = 0.0;
    for (double x : v) {
      const double t = x / (1.0 + e * x);
      s -= t * t;
    }
    return s;
  };
  const double d0 = deriv(0.0);
  if (d0 == 0.0) return 0.0;
  // The derivative is decreasing; bracket the root inside the feasible side.
  double a = 0.0, b = d0 > 0.0 ? hi : lo;
  if (b == 0.0) return 0.0;
  if ((d0 > 0.0 && deriv(b) >= 0.0) || (d0 < 0.0 && deriv(b) <= 0.0)) return b;
  double e = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double d = deriv(e);
    if (d == 0.0) break;
    if ((d > 0.0) == (d0 > 0.0)) a = e; else b = e;
    double next = e - d / second(e);
    if (!((next - a) * (next - b) < 0.0)) next = 0.5 * (a + b);
    if (std::abs(next - e) <= 1e-15 * std::max(1.0, std::abs(e))) {
      e = next;
      break;
    }
    e = next;
  }
  return e;
}

std::map<Target, TmleResult> tmle_fit_dgp1(std::span<const Observation> data, const FiniteModel& pre,
                                           const TmleConfig& cfg) {
  cfg.validate();
  if (pre.schema() != Schema::Dgp1) throw InvalidInput("tmle_fit_dgp1 needs a DGP1 model");
  if (data.empty()) throw InvalidInput("no observations");
  std::vector<std::size_t> cells(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) cells[j] = pre.cell(atom_for(pre, data, j), data[j].code());

  const double lo_b = cfg.c_bound + kBoundMargin;
  const double hi_b = 1.0 - cfg.c_bound - kBoundMargin;
  std::map<Target, TmleResult> out;
  for (Target t : cfg.targets) {
    TmleResult res{pre, 0, false, 0.0, {}};
    for (int it = 0; it < cfg.max_iterations; ++it) {
      const ScoreField h = project_dgp1(res.model, influence_field(res.model, t));
      std::vector<double> v(data.size());
      for (std::size_t j = 0; j < data.size(); ++j) v[j] = h.values[cells[j]];
      // Feasible step sizes: every P(Y=1|a, x_i) stays in the bounds and the
      // observed density factors stay positive.
      double lo = -std::numeric_limits<double>::infinity();
      double hi = std::numeric_limits<double>::infinity();
      auto restrict = [&](double base, double slope, double lower, double upper) {
        // lower <= base + eps * slope <= upper
        if (slope > 0.0) {
          hi = std::min(hi, (upper - base) / slope);
          lo = std::max(lo, (lower - base) / slope);
        } else if (slope < 0.0) {
          hi = std::min(hi, (lower - base) / slope);
          lo = std::max(lo, (upper - base) / slope);
        }
      };
      for (std::size_t i = 0; i < res.model.size(); ++i) {
        for (int a = 0; a < 2; ++a) {
          const double q = res.model.outcome_prob(i, 2 * a);
          restrict(q, q * h.at(i, 2 * a + 1), std::min(lo_b, q), std::max(hi_b, q));
        }
      }
      for (double x : v) restrict(1.0, x, 0.0, std::numeric_limits<double>::infinity());
      lo = std::min(lo, 0.0);
      hi = std::max(hi, 0.0);
      const double eps = bounded_linear_mle(v, lo, hi);
      res.epsilons.push_back(eps);
      res.iterations = it + 1;
      if (std::abs(eps) <= cfg.epsilon_tol) {
        res.converged = true;
        break;
      }
      ScoreField step = h;
      for (double& x : step.values) x *= eps;
      // Re-project so the scaled score is conditionally mean-zero to roundoff.
      step = project_dgp1(res.model, step);
      res.model = apply_fluctuation(res.model, ProjectedScore{step, std::nullopt}, cfg.c_bound);
    }
    res.final_score = empirical_influence_mean(res.model, data, t);
    out.emplace(t, std::move(res));
  }
  return out;
}

LtmleResult ltmle_fit_dgp2(std::span<const Observation> data, const FiniteModel& pre, int a) {
  if (pre.schema() != Schema::Dgp2) throw InvalidInput("ltmle_fit_dgp2 needs a DGP2 model");
  if (a != 0 && a != 1) throw InvalidInput("treatment level must be 0 or 1");
  if (data.empty()) throw InvalidInput("no observations");
  const std::size_t n = pre.size();

  auto g0_a = [&](std::size_t i) {
    const double g = pre.first_treatment_prob(i);
    return a == 1 ? g : 1.0 - g;
  };
  auto g1_a = [&](std::size_t i, int l1) {
    const double g = pre.second_treatment_prob(i, a, l1);
    return a == 1 ? g : 1.0 - g;
  };
  auto outcome = [&](std::size_t i, int l1) { return pre.outcome_prob(i, 8 * a + 4 * l1 + 2 * a); };

  // Stage 2: P(Y=1 | A0=a, l1, A1=a, x) among observations following the regime.
  std::vector<double> off, cov, z;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const Observation& o = data[j];
    if (o.a0() != a || o.a1() != a) continue;
    const std::size_t i = atom_for(pre, data, j);
    off.push_back(dgp::logit(clamp_open(outcome(i, o.l1()))));
    cov.push_back(1.0 / (g0_a(i) * g1_a(i, o.l1())));
    z.push_back(o.y());
  }
  LtmleResult res;
  res.epsilon_outcome = logistic_fluctuation(off, cov, z);
  res.outcome_targeted.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int l1 = 0; l1 < 2; ++l1) {
      res.outcome_targeted[2 * i + static_cast<std::size_t>(l1)] = dgp::expit(
          dgp::logit(clamp_open(outcome(i, l1))) + res.epsilon_outcome / (g0_a(i) * g1_a(i, l1)));
    }
  }

  // Stage 1: the induced regression sum_l1 P(l1 | a, x) Q2*(l1, x), fluctuated
  // among observations with A0 = a against the pseudo-outcome Q2*(L1, x).
  auto induced = [&](std::size_t i) {
    const double ql = pre.intermediate_prob(i, a);
    return (1.0 - ql) * res.outcome_targeted[2 * i] + ql * res.outcome_targeted[2 * i + 1];
  };
  off.clear();
  cov.clear();
  z.clear();
  for (std::size_t j = 0; j < data.size(); ++j) {
    const Observation& o = data[j];
    if (o.a0() != a) continue;
    const std::size_t i = atom_for(pre, data, j);
    off.push_back(dgp::logit(clamp_open(induced(i))));
    cov.push_back(1.0 / g0_a(i));
    z.push_back(res.outcome_targeted[2 * i + static_cast<std::size_t>(o.l1())]);
  }
  res.epsilon_intermediate = logistic_fluctuation(off, cov, z);
  res.intermediate_targeted.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    res.intermediate_targeted[i] =
        dgp::expit(dgp::logit(clamp_open(induced(i))) + res.epsilon_intermediate / g0_a(i));
    total += res.intermediate_targeted[i];
  }
  res.estimate = total / static_cast<double>(n);
  return res;
}

double naive_plugin(const FiniteModel& pre, Target t) { return evaluate(pre, t); }

}  // namespace kdpe
