#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kdpe/config.hpp"
#include "kdpe/errors.hpp"

namespace fs = std::filesystem;
using namespace kdpe;

namespace {

enum ExitCode { kOk = 0, kIoError = 2, kNotConverged = 3 };

// KDPE_LOG: error, warn, info (default), debug.
int log_level() {
  static const int level = [] {
    const char* v = std::getenv("KDPE_LOG");
    if (!v) return 2;
    const std::string s(v);
    if (s == "error") return 0;
    if (s == "warn") return 1;
    if (s == "debug") return 3;
    return 2;
  }();
  return level;
}

void log(int level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "[" << names[level] << "] " << msg << '\n';
}

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::vector<Setting> overrides;
  std::vector<std::string> sets;
  bool trace = false;
  std::string data_path;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_config(const Options& opt) {
  std::vector<Setting> settings;
  if (!opt.config_path.empty()) settings = parse_settings(read_file(opt.config_path));
  settings.insert(settings.end(), opt.overrides.begin(), opt.overrides.end());
  for (const auto& s : opt.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + s + "'");
    settings.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  RunConfig cfg = build_run_config(settings);
  cfg.validate();
  log(3, "config:\n" + serialize_run_config(cfg));
  return cfg;
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
  return fs::path(dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

int cmd_simulate(const Options& opt) {
  const RunConfig cfg = load_config(opt);
  const auto dir = prepare_dir(cfg.output_dir);
  const DgpSpec& spec = cfg.campaign.dgp;
  const auto path = dir / (std::string(to_string(spec.kind)) + "_n" + std::to_string(spec.n) + "_seed" +
                           std::to_string(spec.seed) + ".csv");
  auto out = open_out(path);
  write_dataset(out, generate(spec));
  finish(out, path);
  std::cout << path.string() << '\n';
  return kOk;
}

int cmd_fit(const Options& opt) {
  const RunConfig cfg = load_config(opt);
  const auto& c = cfg.campaign;
  std::vector<Observation> data;
  if (opt.data_path.empty()) {
    data = generate(c.dgp);
  } else {
    std::ifstream in(opt.data_path);
    if (!in) throw IoError("cannot read " + opt.data_path);
    data = read_dataset(in);
    if (data.front().schema != c.dgp.kind) throw InvalidInput("dataset schema does not match dgp setting");
  }
  const auto dir = prepare_dir(cfg.output_dir);
  const PreEstimate pre = fit_pre_estimate(data, c.pre);
  const KdpeResult res = kdpe_fit(data, pre.model, BaseKernel::gaussian(c.dgp.kind, c.kernel_x_scale), c.kdpe);

  nlohmann::json est;
  for (Target t : c.targets) {
    est[std::string(to_string(t))] = {{"naive", evaluate(pre.model, t)}, {"kdpe", evaluate(res.model, t)}};
  }
  est["iterations"] = res.trace.iterations.size();
  est["status"] = std::string(to_string(res.trace.status));

  const auto model_path = dir / "model.json";
  auto mout = open_out(model_path);
  mout << to_json(res.model, c.kdpe.c_bound) << '\n';
  finish(mout, model_path);
  if (opt.trace) {
    const auto trace_path = dir / "trace.jsonl";
    auto tout = open_out(trace_path);
    tout << trace_to_jsonl(res.trace);
    finish(tout, trace_path);
  }
  std::cout << est.dump(2) << '\n';
  return res.trace.status == KdpeStatus::Converged ? kOk : kNotConverged;
}

int cmd_benchmark(const Options& opt) {
  const RunConfig cfg = load_config(opt);
  const auto dir = prepare_dir(cfg.output_dir);
  log(2, "computing true parameters");
  const CampaignContext ctx = make_context(cfg.campaign);
  log(2, "running " + std::to_string(cfg.campaign.sims) + " replications on " + std::to_string(cfg.campaign.jobs) +
             " worker(s)");
  const CampaignResult res = run_campaign(ctx);
  const auto records = res.records();

  const auto results_path = dir / "results.csv";
  auto rout = open_out(results_path);
  write_results_csv(rout, records);
  finish(rout, results_path);

  const auto summary_path = dir / "summary.json";
  auto sout = open_out(summary_path);
  sout << summary_json(res) << '\n';
  finish(sout, summary_path);

  const auto hist_path = dir / "histogram.csv";
  auto hout = open_out(hist_path);
  write_histogram_csv(hout, records, cfg.histogram_bins);
  finish(hout, hist_path);

  if (opt.trace) {
    const auto trace_path = dir / "trace.jsonl";
    auto tout = open_out(trace_path);
    for (std::size_t k = 0; k < res.replications.size(); ++k) {
      const auto& tr = res.replications[k].kdpe_trace;
      if (!tr) continue;
      std::istringstream lines(trace_to_jsonl(*tr));
      for (std::string line; std::getline(lines, line);) {
        auto j = nlohmann::json::parse(line);
        j["sim_id"] = k;
        tout << j.dump() << '\n';
      }
    }
    finish(tout, trace_path);
  }

  for (const auto& [key, s] : res.summary) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s %-4s rmse %.4f  bias %+.4f  sd %.4f  iters %.2f", to_string(key.first).data(),
                  to_string(key.second).data(), s.rmse, s.bias, std::sqrt(s.variance), s.mean_iterations);
    std::cout << buf << '\n';
  }
  for (std::size_t k = 0; k < res.replications.size(); ++k) {
    if (!res.replications[k].error.empty()) log(1, "sim " + std::to_string(k) + ": " + res.replications[k].error);
  }
  if (!res.all_converged()) {
    log(1, "some replications did not converge");
    return kNotConverged;
  }
  return kOk;
}

int cmd_bootstrap(const Options& opt) {
  const RunConfig cfg = load_config(opt);
  const auto dir = prepare_dir(cfg.output_dir);
  const CampaignContext ctx = make_context(cfg.campaign);
  BootstrapConfig boot = cfg.bootstrap;
  const BootstrapStudy study = run_bootstrap_study(ctx, boot);

  const auto path = dir / "bootstrap.csv";
  auto out = open_out(path);
  write_bootstrap_csv(out, study.records);
  finish(out, path);

  for (const auto& [key, cov] : coverage(study.records)) {
    double len = 0.0;
    int count = 0;
    for (const auto& r : study.records) {
      if (r.method == key.first && r.target == key.second) {
        len += r.upper - r.lower;
        ++count;
      }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s %-4s coverage %.3f  mean length %.4f  (%d sims)", to_string(key.first).data(),
                  to_string(key.second).data(), cov, count ? len / count : 0.0, count);
    std::cout << buf << '\n';
  }
  for (const auto& e : study.errors) log(1, e);
  return study.errors.empty() ? kOk : kNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel debiased plug-in estimation: simulation, fitting, benchmarks and bootstrap"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "key = value config file");
    auto over = [&](const std::string& flag, const std::string& key, const std::string& help) {
      sub->add_option_function<std::string>(
          flag, [&opt, key](const std::string& v) { opt.overrides.emplace_back(key, v); }, help);
    };
    over("--dgp", "dgp", "dgp1 or dgp2");
    over("--n", "n", "sample size");
    over("--sims", "sims", "number of replications");
    over("--lambda", "kdpe.lambda", "KDPE regularization");
    over("--gamma", "kdpe.gamma", "KDPE stopping tolerance");
    sub->add_option_function<std::string>(
        "--c-bound",
        [&opt](const std::string& v) {
          opt.overrides.emplace_back("kdpe.c_bound", v);
          opt.overrides.emplace_back("tmle.c_bound", v);
        },
        "density bound for KDPE and TMLE");
    over("--seed", "seed", "data seed");
    over("--methods", "methods", "comma list of KDPE,TMLE,NAIVE,LTMLE");
    over("--out", "output_dir", "output directory");
    over("--jobs", "jobs", "worker threads");
    sub->add_flag("--trace", opt.trace, "write per-iteration KDPE trace as JSON lines");
    sub->add_option("--set", opt.sets, "any config key as key=value");
  };

  auto* simulate = app.add_subcommand("simulate", "write a simulated dataset as CSV");
  auto* fit = app.add_subcommand("fit", "fit the pre-estimate and KDPE on one dataset");
  auto* bench = app.add_subcommand("benchmark", "Monte Carlo comparison of estimators");
  auto* boot = app.add_subcommand("bootstrap", "bootstrap confidence intervals over replications");
  for (auto* sub : {simulate, fit, bench, boot}) add_common(sub);
  fit->add_option("--data", opt.data_path, "dataset CSV (simulated from the config if absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoError;
  }

  try {
    if (*simulate) return cmd_simulate(opt);
    if (*fit) return cmd_fit(opt);
    if (*bench) return cmd_benchmark(opt);
    if (*boot) return cmd_bootstrap(opt);
  } catch (const IoError& e) {
    log(0, e.what());
    return kIoError;
  } catch (const InvalidInput& e) {
    log(0, e.what());
    return kIoError;
  } catch (const std::exception& e) {
    log(0, e.what());
    return 1;
  }
  return kOk;
}
