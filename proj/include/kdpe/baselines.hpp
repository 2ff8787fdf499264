#pragma once

#include <map>
#include <span>
#include <vector>

#include "kdpe/distribution.hpp"
#include "kdpe/functionals.hpp"
#include "kdpe/observation.hpp"

namespace kdpe {

struct TmleConfig {
  double epsilon_tol = 1e-10;
  int max_iterations = 100;
  std::vector<Target> targets{kAllTargets.begin(), kAllTargets.end()};
  double c_bound = 0.001;

  void validate() const;
  bool operator==(const TmleConfig&) const = default;
};

struct TmleResult {
  FiniteModel model;
  int iterations = 0;
  bool converged = false;
  double final_score = 0.0;  // empirical mean of the influence function at the output
  std::vector<double> epsilons;
};

// One linear-fluctuation TMLE per target: p <- (1 + eps * phi_proj) p, with
// eps the bounded one-dimensional MLE, iterated until |eps| <= epsilon_tol.
std::map<Target, TmleResult> tmle_fit_dgp1(std::span<const Observation> data, const FiniteModel& pre,
                                           const TmleConfig& cfg);

// Maximizer of sum_i log(1 + eps v_i) over eps in [lo, hi] (lo <= 0 <= hi).
double bounded_linear_mle(std::span<const double> v, double lo, double hi);

struct LtmleResult {
  double estimate = 0.0;              // targeted mu_a
  double epsilon_outcome = 0.0;       // fluctuation of P(Y=1 | a, l1, a, x)
  double epsilon_intermediate = 0.0;  // fluctuation of the induced E[Y_a | A0 = a, x]
  std::vector<double> outcome_targeted;  // per atom and l1: index 2i + l1
  std::vector<double> intermediate_targeted;  // per atom
};

// Sequential-regression TMLE for mu_a under A0 = A1 = a with logistic
// fluctuations and inverse-propensity clever covariates.
LtmleResult ltmle_fit_dgp2(std::span<const Observation> data, const FiniteModel& pre, int a);

double naive_plugin(const FiniteModel& pre, Target t);

}  // namespace kdpe
