#include "kdpe/simulation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "kdpe/errors.hpp"
#include "kdpe/random.hpp"

namespace kdpe {

void DgpSpec::validate() const {
  if (n < 2) throw InvalidInput("a dataset needs n >= 2");
}

namespace dgp {

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double logit(double p) { return std::log(p / (1.0 - p)); }
double normal_cdf(double v) { return 0.5 * std::erfc(-v / std::numbers::sqrt2); }

double dgp1_propensity(double x) { return 0.5 + std::sin(50.0 * x / std::numbers::pi) / 3.0; }

double dgp1_outcome(int a, double x) {
  const double d = x - 0.3;
  return 0.4 + a * d * d + 0.25 * std::sin(40.0 * x / std::numbers::pi);
}

double dgp2_intermediate(int a0, double x) { return normal_cdf(3.0 + a0 - 0.75 * x); }

int dgp2_second_treatment(int l1, double x) { return expit(-3.0 + 0.5 * x + 0.4 * l1) >= 0.3 ? 1 : 0; }

double dgp2_outcome(int a0, int l1, int a1, double x) {
  return normal_cdf(x - 3.5 - 0.3 * a0 - 0.5 * l1 - 0.5 * a1);
}

}  // namespace dgp

std::vector<Observation> generate(const DgpSpec& spec) {
  spec.validate();
  RandomStream rng(spec.seed, spec.stream);
  std::vector<Observation> out;
  out.reserve(spec.n);
  for (std::size_t k = 0; k < spec.n; ++k) {
    if (spec.kind == Schema::Dgp1) {
      const double x = rng.uniform();
      const int a = rng.uniform() < dgp::dgp1_propensity(x) ? 1 : 0;
      const int y = rng.uniform() < dgp::dgp1_outcome(a, x) ? 1 : 0;
      out.push_back(Observation::dgp1(x, a, y));
    } else {
      const double x = 8.0 * rng.uniform();
      const int a0 = rng.uniform() < dgp::kDgp2FirstTreatment ? 1 : 0;
      const int l1 = 3.0 + a0 - 0.75 * x + rng.normal() > 0.0 ? 1 : 0;
      const int a1 = dgp::dgp2_second_treatment(l1, x);
      const double e2 = rng.normal();
      const int y = dgp::expit(x - 3.5 - 0.3 * a0 - 0.5 * l1 - 0.5 * a1 + e2) >= 0.5 ? 1 : 0;
      out.push_back(Observation::dgp2(x, a0, l1, a1, y));
    }
  }
  return out;
}

namespace {

double integrate01(const std::function<double(double)>& f) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-14);
}

TrueParameters finish(double mu1, double mu0) {
  TrueParameters p;
  p.mu1 = mu1;
  p.mu0 = mu0;
  for (Target t : kAllTargets) p.values[t] = combine_target(t, mu1, mu0);
  return p;
}

}  // namespace

TrueParameters true_parameters(Schema kind, const TruthOptions& opt) {
  if (kind == Schema::Dgp1) {
    const double mu1 = integrate01([](double x) { return dgp::dgp1_outcome(1, x); });
    const double mu0 = integrate01([](double x) { return dgp::dgp1_outcome(0, x); });
    return finish(mu1, mu0);
  }
  if (opt.draws < 2) throw InvalidInput("Monte Carlo truth needs at least two draws");
  RandomStream rng(opt.seed, 0);
  double s1 = 0.0, s0 = 0.0, sd = 0.0, sdd = 0.0;
  for (std::size_t k = 0; k < opt.draws; ++k) {
    const double x = 8.0 * rng.uniform();
    const double e1 = rng.normal();
    const double e2 = rng.normal();
    int y[2];
    for (int a = 0; a < 2; ++a) {
      const int l1 = 3.0 + a - 0.75 * x + e1 > 0.0 ? 1 : 0;
      y[a] = dgp::expit(x - 3.5 - 0.3 * a - 0.5 * l1 - 0.5 * a + e2) >= 0.5 ? 1 : 0;
    }
    s1 += y[1];
    s0 += y[0];
    const double d = y[1] - y[0];
    sd += d;
    sdd += d * d;
  }
  const auto m = static_cast<double>(opt.draws);
  TrueParameters p = finish(s1 / m, s0 / m);
  const double mean_d = sd / m;
  p.standard_error_ate = std::sqrt(std::max(0.0, sdd / m - mean_d * mean_d) / (m - 1.0));
  return p;
}

MonteCarloValue efficiency_bound(Schema kind, Target t, const TruthOptions& opt) {
  if (kind == Schema::Dgp2) {
    throw InvalidInput("DGP2 assigns A1 deterministically; the efficiency bound is infinite");
  }
  if (opt.draws < 2) throw InvalidInput("Monte Carlo needs at least two draws");
  const TrueParameters truth = true_parameters(kind, opt);
  const auto w = target_weights(t, truth.mu1, truth.mu0);
  RandomStream rng(opt.seed, 1);
  double s = 0.0, ss = 0.0;
  for (std::size_t k = 0; k < opt.draws; ++k) {
    const double x = rng.uniform();
    const double g = dgp::dgp1_propensity(x);
    const int a = rng.uniform() < g ? 1 : 0;
    const double q1 = dgp::dgp1_outcome(1, x);
    const double q0 = dgp::dgp1_outcome(0, x);
    const int y = rng.uniform() < (a == 1 ? q1 : q0) ? 1 : 0;
    const double phi1 = (a == 1 ? (y - q1) / g : 0.0) + q1 - truth.mu1;
    const double phi0 = (a == 0 ? (y - q0) / (1.0 - g) : 0.0) + q0 - truth.mu0;
    const double phi = w[0] * phi1 + w[1] * phi0;
    const double v = phi * phi;
    s += v;
    ss += v * v;
  }
  const auto m = static_cast<double>(opt.draws);
  const double mean = s / m;
  return {mean, std::sqrt(std::max(0.0, ss / m - mean * mean) / (m - 1.0))};
}

void write_dataset(std::ostream& out, std::span<const Observation> data) {
  if (data.empty()) throw InvalidInput("empty dataset");
  const Schema s = data.front().schema;
  out << (s == Schema::Dgp1 ? "x,a,y\n" : "x,a0,l1,a1,y\n");
  char buf[64];
  for (const auto& o : data) {
    if (o.schema != s) throw InvalidInput("mixed schemas in dataset");
    std::snprintf(buf, sizeof buf, "%.17g", o.x);
    out << buf;
    for (int k = 0; k < discrete_count(s); ++k) out << ',' << o.bit(k);
    out << '\n';
  }
}

std::vector<Observation> read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("dataset is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Schema s;
  if (line == "x,a,y") {
    s = Schema::Dgp1;
  } else if (line == "x,a0,l1,a1,y") {
    s = Schema::Dgp2;
  } else {
    throw InvalidInput("unrecognized dataset header '" + line + "'");
  }
  const int fields = 1 + discrete_count(s);
  std::vector<Observation> data;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != fields) {
      throw InvalidInput("row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " fields");
    }
    double x = 0.0;
    const auto [px, ex] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), x);
    if (ex != std::errc() || px != cells[0].data() + cells[0].size() || !std::isfinite(x)) {
      throw InvalidInput("row " + std::to_string(row) + ": bad x value");
    }
    Observation o;
    o.schema = s;
    o.x = x;
    for (int k = 0; k < discrete_count(s); ++k) {
      const std::string& c = cells[static_cast<std::size_t>(k + 1)];
      if (c != "0" && c != "1") throw InvalidInput("row " + std::to_string(row) + ": non-binary coordinate");
      o.bits[static_cast<std::size_t>(k)] = c == "1" ? 1 : 0;
    }
    data.push_back(o);
  }
  return data;
}

}  // namespace kdpe
