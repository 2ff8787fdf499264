#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "kdpe/functionals.hpp"
#include "kdpe/observation.hpp"

namespace kdpe {

struct DgpSpec {
  Schema kind = Schema::Dgp1;
  std::size_t n = 300;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;  // replication index

  void validate() const;
  bool operator==(const DgpSpec&) const = default;
};

// Closed-form conditional laws of the two data-generating processes.
namespace dgp {

double expit(double v);
double logit(double p);
double normal_cdf(double v);

// DGP1: X ~ U[0,1], A | X ~ Bern(g), Y | A, X ~ Bern(Q).
double dgp1_propensity(double x);
double dgp1_outcome(int a, double x);

// DGP2: X ~ U[0,8], A0 ~ Bern(0.5), L1, A1, Y thresholded as below.
inline constexpr double kDgp2FirstTreatment = 0.5;
double dgp2_intermediate(int a0, double x);       // P(L1 = 1 | a0, x)
int dgp2_second_treatment(int l1, double x);      // A1 is a deterministic function of (l1, x)
double dgp2_outcome(int a0, int l1, int a1, double x);  // P(Y = 1 | a0, l1, a1, x)

}  // namespace dgp

std::vector<Observation> generate(const DgpSpec& spec);

struct TruthOptions {
  std::size_t draws = 10'000'000;
  std::uint64_t seed = 20240611;

  bool operator==(const TruthOptions&) const = default;
};

struct TrueParameters {
  double mu1 = 0.0;
  double mu0 = 0.0;
  std::map<Target, double> values;
  double standard_error_ate = 0.0;  // 0 for exact quadrature
};

// DGP1 by adaptive quadrature of the closed-form integrands; DGP2 by Monte
// Carlo g-computation under the clamped intervention A0 = A1 = a.
TrueParameters true_parameters(Schema kind, const TruthOptions& opt = {});

struct MonteCarloValue {
  double value = 0.0;
  double standard_error = 0.0;
};

// Monte Carlo second moment of the influence function under the true law.
// DGP2 has A1 deterministic given (L1, X), so the bound is infinite there and
// the call throws.
MonteCarloValue efficiency_bound(Schema kind, Target t, const TruthOptions& opt = {});

// CSV: header `x,a,y` or `x,a0,l1,a1,y`, 17 significant digits for x.
void write_dataset(std::ostream& out, std::span<const Observation> data);
std::vector<Observation> read_dataset(std::istream& in);

}  // namespace kdpe
