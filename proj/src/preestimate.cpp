#include "kdpe/preestimate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "kdpe/errors.hpp"
#include "kdpe/simulation.hpp"

namespace kdpe {

std::string_view to_string(PreEstimateMethod m) {
  switch (m) {
    case PreEstimateMethod::NadarayaWatson: return "nadaraya_watson";
    case PreEstimateMethod::LogisticLinear: return "logistic_linear";
    case PreEstimateMethod::Oracle: return "oracle";
  }
  return "?";
}

PreEstimateMethod parse_pre_estimate_method(std::string_view name) {
  if (name == "nadaraya_watson" || name == "nw") return PreEstimateMethod::NadarayaWatson;
  if (name == "logistic_linear" || name == "logistic") return PreEstimateMethod::LogisticLinear;
  if (name == "oracle") return PreEstimateMethod::Oracle;
  throw InvalidInput("unknown pre-estimate method '" + std::string(name) + "'");
}

std::string_view to_string(BandwidthRule r) { return r == BandwidthRule::Silverman ? "silverman" : "fixed"; }

BandwidthRule parse_bandwidth_rule(std::string_view name) {
  if (name == "silverman") return BandwidthRule::Silverman;
  if (name == "fixed") return BandwidthRule::Fixed;
  throw InvalidInput("unknown bandwidth rule '" + std::string(name) + "'");
}

void PreEstimateConfig::validate() const {
  if (!(clip > 0.0 && clip < 0.5)) throw InvalidInput("clip must lie in (0, 0.5)");
  if (bandwidth_rule == BandwidthRule::Fixed && !(fixed_bandwidth > 0.0)) {
    throw InvalidInput("fixed bandwidth must be positive");
  }
}

double silverman_bandwidth(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return 1.06 * sd * std::pow(n, -0.2);
}

namespace {

// One binary conditional table: the response is bit `response` of each
// observation and the stratum is given by bits [0, response).
struct TableSpec {
  const char* name;
  int response;
};

int stratum_of(const Observation& o, int response) {
  int s = 0;
  for (int k = 0; k < response; ++k) s = 2 * s + o.bit(k);
  return s;
}

double clip_to(double v, double clip) { return std::clamp(v, clip, 1.0 - clip); }

class TableFitter {
 public:
  TableFitter(std::span<const Observation> data, const PreEstimateConfig& cfg, PreEstimate& out)
      : data_(data), cfg_(cfg), out_(out) {}

  // Entry for (atom i, stratum s) stored at i * strata + s.
  std::vector<double> fit(const TableSpec& spec) {
    const int strata = 1 << spec.response;
    const std::size_t n = data_.size();
    std::vector<double> table(n * static_cast<std::size_t>(strata));
    if (cfg_.method == PreEstimateMethod::LogisticLinear) {
      const Eigen::VectorXd beta = logistic(spec.response);
      for (std::size_t i = 0; i < n; ++i) {
        for (int s = 0; s < strata; ++s) {
          const Eigen::VectorXd row = features(data_[i].x, s, spec.response);
          table[i * static_cast<std::size_t>(strata) + static_cast<std::size_t>(s)] =
              clip_to(dgp::expit(row.dot(beta)), cfg_.clip);
        }
      }
      return table;
    }
    double marginal = 0.0;
    for (const auto& o : data_) marginal += o.bit(spec.response);
    marginal /= static_cast<double>(n);
    for (int s = 0; s < strata; ++s) {
      std::vector<std::size_t> members;
      for (std::size_t j = 0; j < n; ++j) {
        if (stratum_of(data_[j], spec.response) == s) members.push_back(j);
      }
      std::function<double(double)> predict;
      if (members.empty()) {
        out_.fallbacks.push_back(std::string(spec.name) + " stratum " + std::to_string(s));
        predict = [marginal](double) { return marginal; };
      } else {
        predict = nadaraya_watson(members, spec.response);
      }
      for (std::size_t i = 0; i < n; ++i) {
        table[i * static_cast<std::size_t>(strata) + static_cast<std::size_t>(s)] =
            clip_to(predict(data_[i].x), cfg_.clip);
      }
    }
    return table;
  }

 private:
  std::function<double(double)> nadaraya_watson(const std::vector<std::size_t>& members, int response) const {
    std::vector<double> xs, vs;
    for (std::size_t j : members) {
      xs.push_back(data_[j].x);
      vs.push_back(data_[j].bit(response));
    }
    const double h = out_.bandwidth;
    return [xs, vs, h](double x) {
      if (!(h > 0.0)) {
        double s = 0.0;
        for (double v : vs) s += v;
        return s / static_cast<double>(vs.size());
      }
      // Shift exponents by the nearest point so distant strata do not underflow.
      double nearest = std::numeric_limits<double>::infinity();
      for (double xj : xs) nearest = std::min(nearest, std::abs(x - xj));
      const double base = 0.5 * (nearest / h) * (nearest / h);
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const double z = (x - xs[k]) / h;
        const double w = std::exp(base - 0.5 * z * z);
        num += w * vs[k];
        den += w;
      }
      return num / den;
    };
  }

  // (1, x, parent bits) for a stratum code whose bits are the parents in order.
  static Eigen::VectorXd features(double x, int stratum, int parents) {
    Eigen::VectorXd f(2 + parents);
    f(0) = 1.0;
    f(1) = x;
    for (int k = 0; k < parents; ++k) f(2 + k) = (stratum >> (parents - 1 - k)) & 1;
    return f;
  }

  // Logistic maximum likelihood by IRLS. A small ridge keeps separated data
  // (e.g. a deterministic treatment rule) from diverging; the fitted
  // probabilities then saturate and are clipped.
  Eigen::VectorXd logistic(int response) const {
    const auto m = static_cast<Eigen::Index>(data_.size());
    Eigen::MatrixXd design(m, 2 + response);
    Eigen::VectorXd y(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const Observation& o = data_[static_cast<std::size_t>(k)];
      design.row(k) = features(o.x, stratum_of(o, response), response).transpose();
      y(k) = o.bit(response);
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
    for (int it = 0; it < 100; ++it) {
      const Eigen::ArrayXd p = 1.0 / (1.0 + (-(design * beta).array()).exp());
      const Eigen::ArrayXd w = p * (1.0 - p);
      Eigen::MatrixXd info = design.transpose() * (w.matrix().asDiagonal() * design);
      info.diagonal().array() += 1e-6;
      const Eigen::VectorXd grad = design.transpose() * (y.array() - p).matrix() - 1e-6 * beta;
      const Eigen::VectorXd step = info.ldlt().solve(grad);
      if (!step.allFinite()) break;
      beta += step;
      if (step.cwiseAbs().maxCoeff() < 1e-10) break;
    }
    return beta;
  }

  std::span<const Observation> data_;
  const PreEstimateConfig& cfg_;
  PreEstimate& out_;
};

FiniteModel oracle_model(std::span<const Observation> data, double clip) {
  std::vector<double> xs;
  for (const auto& o : data) xs.push_back(o.x);
  const std::size_t n = xs.size();
  if (data.front().schema == Schema::Dgp1) {
    std::vector<double> g0(n), qy(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      g0[i] = clip_to(dgp::dgp1_propensity(xs[i]), clip);
      for (int a = 0; a < 2; ++a) qy[2 * i + static_cast<std::size_t>(a)] = clip_to(dgp::dgp1_outcome(a, xs[i]), clip);
    }
    return FiniteModel::dgp1(std::move(xs), std::move(g0), std::move(qy));
  }
  std::vector<double> g0(n), ql(2 * n), g1(4 * n), qy(8 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = xs[i];
    g0[i] = clip_to(dgp::kDgp2FirstTreatment, clip);
    for (int a0 = 0; a0 < 2; ++a0) {
      ql[2 * i + static_cast<std::size_t>(a0)] = clip_to(dgp::dgp2_intermediate(a0, x), clip);
      for (int l1 = 0; l1 < 2; ++l1) {
        g1[4 * i + static_cast<std::size_t>(2 * a0 + l1)] = clip_to(dgp::dgp2_second_treatment(l1, x), clip);
        for (int a1 = 0; a1 < 2; ++a1) {
          qy[8 * i + static_cast<std::size_t>(4 * a0 + 2 * l1 + a1)] = clip_to(dgp::dgp2_outcome(a0, l1, a1, x), clip);
        }
      }
    }
  }
  return FiniteModel::dgp2(std::move(xs), std::move(g0), std::move(ql), std::move(g1), std::move(qy));
}

}  // namespace

PreEstimate fit_pre_estimate(std::span<const Observation> data, const PreEstimateConfig& cfg) {
  cfg.validate();
  if (data.size() < 2) throw InvalidInput("pre-estimate needs at least two observations");
  const Schema s = data.front().schema;
  std::vector<double> xs;
  for (const auto& o : data) {
    if (o.schema != s) throw InvalidInput("mixed schemas in dataset");
    for (int k = 0; k < discrete_count(s); ++k) {
      if (o.bit(k) != 0 && o.bit(k) != 1) throw InvalidInput("non-binary coordinate");
    }
    xs.push_back(o.x);
  }

  PreEstimate out{oracle_model(data, cfg.clip), 0.0, {}};
  if (cfg.method == PreEstimateMethod::Oracle) return out;
  if (cfg.method == PreEstimateMethod::NadarayaWatson) {
    out.bandwidth = cfg.bandwidth_rule == BandwidthRule::Fixed ? cfg.fixed_bandwidth : silverman_bandwidth(xs);
  }
  TableFitter fitter(data, cfg, out);
  if (s == Schema::Dgp1) {
    auto g0 = fitter.fit({"g0", 0});
    auto qy = fitter.fit({"q_y", 1});
    out.model = FiniteModel::dgp1(std::move(xs), std::move(g0), std::move(qy));
  } else {
    auto g0 = fitter.fit({"g0", 0});
    auto ql = fitter.fit({"q_l1", 1});
    auto g1 = fitter.fit({"g1", 2});
    auto qy = fitter.fit({"q_y", 3});
    out.model = FiniteModel::dgp2(std::move(xs), std::move(g0), std::move(ql), std::move(g1), std::move(qy));
  }
  return out;
}

}  // namespace kdpe
