#include "kdpe/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "kdpe/errors.hpp"
#include "kdpe/random.hpp"

namespace kdpe {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class F>
void parallel_for(std::size_t count, int jobs, F&& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const auto n = static_cast<std::size_t>(jobs) < count ? static_cast<std::size_t>(jobs) : count;
  for (std::size_t w = 0; w < n; ++w) {
    workers.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) body(k);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Kdpe: return "KDPE";
    case Method::Tmle: return "TMLE";
    case Method::Naive: return "NAIVE";
    case Method::Ltmle: return "LTMLE";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string s(name);
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (s == "KDPE") return Method::Kdpe;
  if (s == "TMLE") return Method::Tmle;
  if (s == "NAIVE") return Method::Naive;
  if (s == "LTMLE") return Method::Ltmle;
  throw InvalidInput("unknown method '" + std::string(name) + "'");
}

void CampaignConfig::validate() const {
  dgp.validate();
  if (sims < 1) throw InvalidInput("sims must be at least 1");
  if (methods.empty()) throw InvalidInput("methods must not be empty");
  if (targets.empty()) throw InvalidInput("targets must not be empty");
  for (Method m : methods) {
    if (m == Method::Tmle && dgp.kind != Schema::Dgp1) throw InvalidInput("TMLE baseline is for DGP1; use LTMLE");
    if (m == Method::Ltmle && dgp.kind != Schema::Dgp2) throw InvalidInput("LTMLE baseline is for DGP2; use TMLE");
  }
  pre.validate();
  kdpe.validate();
  tmle.validate();
  if (pre.clip < kdpe.c_bound) throw InvalidInput("pre-estimate clip must be >= the KDPE c_bound");
  if (!(kernel_x_scale > 0.0)) throw InvalidInput("kernel x scale must be positive");
  if (jobs < 1) throw InvalidInput("jobs must be at least 1");
}

CampaignContext make_context(const CampaignConfig& cfg) {
  cfg.validate();
  return make_context(cfg, true_parameters(cfg.dgp.kind, cfg.truth));
}

CampaignContext make_context(const CampaignConfig& cfg, TrueParameters truth) {
  cfg.validate();
  return CampaignContext{cfg, std::move(truth), BaseKernel::gaussian(cfg.dgp.kind, cfg.kernel_x_scale)};
}

Replication run_replication(const CampaignContext& ctx, std::size_t sim_id) {
  const CampaignConfig& cfg = ctx.cfg;
  Replication rep;
  try {
    DgpSpec spec = cfg.dgp;
    spec.stream = sim_id;
    const auto data = generate(spec);
    auto t0 = Clock::now();
    const PreEstimate pre = fit_pre_estimate(data, cfg.pre);
    const double pre_seconds = since(t0);

    auto add = [&](Method m, Target t, double est, int its, bool conv, double secs) {
      rep.records.push_back(BenchmarkRecord{sim_id, m, t, est, ctx.truth.values.at(t), its, conv, secs});
    };
    for (Method m : cfg.methods) {
      switch (m) {
        case Method::Naive:
          for (Target t : cfg.targets) add(m, t, naive_plugin(pre.model, t), 0, true, pre_seconds);
          break;
        case Method::Kdpe: {
          t0 = Clock::now();
          KdpeResult res = kdpe_fit(data, pre.model, ctx.kernel, cfg.kdpe);
          const double secs = since(t0);
          const bool conv = res.trace.status == KdpeStatus::Converged;
          const int its = static_cast<int>(res.trace.iterations.size());
          for (Target t : cfg.targets) add(m, t, evaluate(res.model, t), its, conv, secs);
          if (spec.kind == Schema::Dgp1) {
            rep.ate_influence_mean = {empirical_influence_mean(pre.model, data, Target::Ate),
                                      empirical_influence_mean(res.model, data, Target::Ate)};
          }
          rep.kdpe_trace = std::move(res.trace);
          break;
        }
        case Method::Tmle: {
          TmleConfig tc = cfg.tmle;
          tc.targets = cfg.targets;
          t0 = Clock::now();
          const auto fits = tmle_fit_dgp1(data, pre.model, tc);
          const double secs = since(t0) / static_cast<double>(cfg.targets.size());
          for (Target t : cfg.targets) {
            const TmleResult& r = fits.at(t);
            add(m, t, evaluate(r.model, t), r.iterations, r.converged, secs);
          }
          break;
        }
        case Method::Ltmle: {
          t0 = Clock::now();
          const double mu1 = ltmle_fit_dgp2(data, pre.model, 1).estimate;
          const double mu0 = ltmle_fit_dgp2(data, pre.model, 0).estimate;
          const double secs = since(t0);
          for (Target t : cfg.targets) add(m, t, combine_target(t, mu1, mu0), 2, true, secs);
          break;
        }
      }
    }
  } catch (const std::exception& e) {
    rep.records.clear();
    rep.error = e.what();
  }
  return rep;
}

bool CampaignResult::all_converged() const {
  for (const auto& r : replications) {
    if (!r.error.empty()) return false;
    for (const auto& rec : r.records) {
      if (!rec.converged) return false;
    }
  }
  return true;
}

std::vector<BenchmarkRecord> CampaignResult::records() const {
  std::vector<BenchmarkRecord> out;
  for (const auto& r : replications) out.insert(out.end(), r.records.begin(), r.records.end());
  return out;
}

std::map<std::pair<Method, Target>, CellSummary> summarize(const std::vector<BenchmarkRecord>& records) {
  std::map<std::pair<Method, Target>, std::vector<const BenchmarkRecord*>> groups;
  for (const auto& r : records) groups[{r.method, r.target}].push_back(&r);
  std::map<std::pair<Method, Target>, CellSummary> out;
  for (const auto& [key, recs] : groups) {
    CellSummary s;
    s.count = recs.size();
    double err = 0.0, sq = 0.0, its = 0.0, mean = 0.0;
    for (const auto* r : recs) {
      const double e = r->estimate - r->true_value;
      err += e;
      sq += e * e;
      its += r->iterations;
      mean += r->estimate;
      if (!r->converged) ++s.not_converged;
    }
    const auto c = static_cast<double>(s.count);
    mean /= c;
    double var = 0.0;
    for (const auto* r : recs) var += (r->estimate - mean) * (r->estimate - mean);
    s.bias = err / c;
    s.rmse = std::sqrt(sq / c);
    s.variance = var / c;
    s.mean_iterations = its / c;
    out[key] = s;
  }
  return out;
}

CampaignResult run_campaign(const CampaignContext& ctx) {
  CampaignResult res;
  res.replications.resize(ctx.cfg.sims);
  parallel_for(ctx.cfg.sims, ctx.cfg.jobs, [&](std::size_t k) { res.replications[k] = run_replication(ctx, k); });
  res.summary = summarize(res.records());
  return res;
}

void write_results_csv(std::ostream& out, const std::vector<BenchmarkRecord>& records) {
  out << "sim_id,method,target,estimate,true_value,iterations,converged,seconds\n";
  for (const auto& r : records) {
    out << r.sim_id << ',' << to_string(r.method) << ',' << to_string(r.target) << ',' << fmt17(r.estimate) << ','
        << fmt17(r.true_value) << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << fmt17(r.seconds)
        << '\n';
  }
}

std::string summary_json(const CampaignResult& res) {
  nlohmann::json doc;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, s] : res.summary) {
    cells.push_back({{"method", std::string(to_string(key.first))},
                     {"target", std::string(to_string(key.second))},
                     {"count", s.count},
                     {"rmse", s.rmse},
                     {"bias", s.bias},
                     {"variance", s.variance},
                     {"mean_iterations", s.mean_iterations},
                     {"not_converged", s.not_converged}});
  }
  std::size_t failed = 0;
  nlohmann::json errors = nlohmann::json::array();
  for (std::size_t k = 0; k < res.replications.size(); ++k) {
    if (!res.replications[k].error.empty()) {
      ++failed;
      errors.push_back({{"sim_id", k}, {"error", res.replications[k].error}});
    }
  }
  doc["replications"] = res.replications.size();
  doc["failed_replications"] = failed;
  doc["errors"] = errors;
  doc["cells"] = cells;
  return doc.dump(2);
}

void write_histogram_csv(std::ostream& out, const std::vector<BenchmarkRecord>& records, int bins) {
  if (bins < 1) throw InvalidInput("histogram needs at least one bin");
  out << "method,target,bin_lower,bin_upper,count\n";
  std::map<std::pair<Method, Target>, std::vector<double>> groups;
  for (const auto& r : records) groups[{r.method, r.target}].push_back(r.estimate);
  for (const auto& [key, v] : groups) {
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double width = (hi - lo) / bins;
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double x : v) {
      auto b = static_cast<std::size_t>((x - lo) / width);
      counts[std::min(b, counts.size() - 1)]++;
    }
    for (int b = 0; b < bins; ++b) {
      out << to_string(key.first) << ',' << to_string(key.second) << ',' << fmt17(lo + b * width) << ','
          << fmt17(lo + (b + 1) * width) << ',' << counts[static_cast<std::size_t>(b)] << '\n';
    }
  }
}

Estimator method_estimator(const CampaignContext& ctx, Method m) {
  return [&ctx, m](std::span<const Observation> d) -> std::optional<std::vector<double>> {
    const CampaignConfig& cfg = ctx.cfg;
    const PreEstimate pre = fit_pre_estimate(d, cfg.pre);
    std::vector<double> out;
    switch (m) {
      case Method::Naive:
        for (Target t : cfg.targets) out.push_back(naive_plugin(pre.model, t));
        break;
      case Method::Kdpe: {
        const KdpeResult res = kdpe_fit(d, pre.model, ctx.kernel, cfg.kdpe);
        if (res.trace.status != KdpeStatus::Converged) return std::nullopt;
        for (Target t : cfg.targets) out.push_back(evaluate(res.model, t));
        break;
      }
      case Method::Tmle: {
        TmleConfig tc = cfg.tmle;
        tc.targets = cfg.targets;
        const auto fits = tmle_fit_dgp1(d, pre.model, tc);
        for (Target t : cfg.targets) {
          if (!fits.at(t).converged) return std::nullopt;
          out.push_back(evaluate(fits.at(t).model, t));
        }
        break;
      }
      case Method::Ltmle: {
        const double mu1 = ltmle_fit_dgp2(d, pre.model, 1).estimate;
        const double mu0 = ltmle_fit_dgp2(d, pre.model, 0).estimate;
        for (Target t : cfg.targets) out.push_back(combine_target(t, mu1, mu0));
        break;
      }
    }
    return out;
  };
}

BootstrapStudy run_bootstrap_study(const CampaignContext& ctx, const BootstrapConfig& boot) {
  const CampaignConfig& cfg = ctx.cfg;
  boot.validate();
  struct Slot {
    std::vector<BootstrapRecord> records;
    std::vector<std::string> errors;
  };
  std::vector<Slot> slots(cfg.sims);
  BootstrapConfig inner = boot;
  inner.jobs = 1;  // parallelism is across replications
  parallel_for(cfg.sims, cfg.jobs, [&](std::size_t sim) {
    DgpSpec spec = cfg.dgp;
    spec.stream = sim;
    const auto data = generate(spec);
    for (Method m : cfg.methods) {
      try {
        const std::uint64_t seed = mix_seed(cfg.dgp.seed ^ 0xb0075a4b1eULL, sim * 8 + static_cast<std::uint64_t>(m));
        const BootstrapResult r = bootstrap_ci(data, method_estimator(ctx, m), inner, seed);
        for (std::size_t k = 0; k < cfg.targets.size(); ++k) {
          const Target t = cfg.targets[k];
          const auto& iv = r.intervals[k];
          const double truth = ctx.truth.values.at(t);
          slots[sim].records.push_back(BootstrapRecord{sim, m, t, iv.estimate, iv.variance, iv.lower, iv.upper,
                                                       iv.lower <= truth && truth <= iv.upper});
        }
      } catch (const std::exception& e) {
        slots[sim].errors.push_back("sim " + std::to_string(sim) + " " + std::string(to_string(m)) + ": " + e.what());
      }
    }
  });
  BootstrapStudy study;
  for (auto& s : slots) {
    study.records.insert(study.records.end(), s.records.begin(), s.records.end());
    study.errors.insert(study.errors.end(), s.errors.begin(), s.errors.end());
  }
  return study;
}

void write_bootstrap_csv(std::ostream& out, const std::vector<BootstrapRecord>& records) {
  out << "sim_id,method,target,estimate,variance,lower,upper,covered\n";
  for (const auto& r : records) {
    out << r.sim_id << ',' << to_string(r.method) << ',' << to_string(r.target) << ',' << fmt17(r.estimate) << ','
        << fmt17(r.variance) << ',' << fmt17(r.lower) << ',' << fmt17(r.upper) << ',' << (r.covered ? 1 : 0) << '\n';
  }
}

std::map<std::pair<Method, Target>, double> coverage(const std::vector<BootstrapRecord>& records) {
  std::map<std::pair<Method, Target>, std::pair<double, double>> acc;
  for (const auto& r : records) {
    auto& a = acc[{r.method, r.target}];
    a.first += r.covered ? 1.0 : 0.0;
    a.second += 1.0;
  }
  std::map<std::pair<Method, Target>, double> out;
  for (const auto& [k, a] : acc) out[k] = a.first / a.second;
  return out;
}

}  // namespace kdpe
