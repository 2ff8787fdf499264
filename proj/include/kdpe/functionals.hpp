#pragma once

#include <array>
#include <span>
#include <string_view>

#include "kdpe/distribution.hpp"
#include "kdpe/observation.hpp"

namespace kdpe {

enum class Target { Ate, Rr, Or };
inline constexpr std::array<Target, 3> kAllTargets{Target::Ate, Target::Rr, Target::Or};

std::string_view to_string(Target t);
Target parse_target(std::string_view name);

// psi from the two potential-outcome means.
double combine_target(Target t, double mu1, double mu0);
// Gradient of combine_target with respect to (mu1, mu0).
std::array<double, 2> target_weights(Target t, double mu1, double mu0);

double evaluate(const FiniteModel& m, Target t);

// Influence function of mu_a at a DGP1 point:
//   1{A=a}/g_a(x) (Y - Q(a, x)) + Q(a, x) - mu_a.
double influence_mu_a(const FiniteModel& m, const Observation& o, int a);
double influence_target(const FiniteModel& m, const Observation& o, Target t);
// Same, at support cell (atom, code); skips the atom lookup.
double influence_target_at(const FiniteModel& m, std::size_t atom, int code, Target t);

// The influence function as a field on the whole support.
ScoreField influence_field(const FiniteModel& m, Target t);

// Empirical mean of the influence function over the data.
double empirical_influence_mean(const FiniteModel& m, std::span<const Observation> data, Target t);

}  // namespace kdpe
