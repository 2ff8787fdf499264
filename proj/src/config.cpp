#include "kdpe/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "kdpe/errors.hpp"

namespace kdpe {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string bad(std::string_view key, std::string_view value) {
  return "bad value '" + std::string(value) + "' for " + std::string(key);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw InvalidInput(bad(key, v));
  return out;
}

template <class Int>
Int to_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw InvalidInput(bad(key, v));
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidInput(bad(key, v));
}

template <class T, class F>
std::vector<T> to_list(std::string_view v, F parse) {
  std::vector<T> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    if (!item.empty()) out.push_back(parse(item));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (const auto& it : items) {
    if (!out.empty()) out += ',';
    out += to_string(it);
  }
  return out;
}

}  // namespace

RunConfig RunConfig::defaults(Schema schema) {
  RunConfig cfg;
  auto& c = cfg.campaign;
  c.dgp.kind = schema;
  c.kdpe = KdpeConfig::defaults(schema);
  c.tmle.c_bound = c.kdpe.c_bound;
  c.kernel_x_scale = BaseKernel::default_x_scale(schema);
  c.methods = schema == Schema::Dgp1 ? std::vector{Method::Kdpe, Method::Tmle, Method::Naive}
                                     : std::vector{Method::Kdpe, Method::Ltmle, Method::Naive};
  return cfg;
}

void RunConfig::validate() const {
  campaign.validate();
  bootstrap.validate();
  if (histogram_bins < 1) throw InvalidInput("histogram_bins must be at least 1");
  if (output_dir.empty()) throw InvalidInput("output_dir must not be empty");
}

std::vector<Setting> parse_settings(std::string_view text) {
  std::vector<Setting> out;
  int line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidInput("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidInput("config line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view v) {
  auto& c = cfg.campaign;
  auto& b = cfg.bootstrap;
  if (key == "dgp") c.dgp.kind = parse_schema(v);
  else if (key == "n") c.dgp.n = to_int<std::size_t>(key, v);
  else if (key == "seed") c.dgp.seed = to_int<std::uint64_t>(key, v);
  else if (key == "sims") c.sims = to_int<std::size_t>(key, v);
  else if (key == "jobs") c.jobs = to_int<int>(key, v);
  else if (key == "methods") c.methods = to_list<Method>(v, parse_method);
  else if (key == "targets") c.targets = to_list<Target>(v, parse_target);
  else if (key == "output_dir") cfg.output_dir = std::string(v);
  else if (key == "histogram_bins") cfg.histogram_bins = to_int<int>(key, v);
  else if (key == "pre.method") c.pre.method = parse_pre_estimate_method(v);
  else if (key == "pre.bandwidth_rule") c.pre.bandwidth_rule = parse_bandwidth_rule(v);
  else if (key == "pre.bandwidth") c.pre.fixed_bandwidth = to_double(key, v);
  else if (key == "pre.clip") c.pre.clip = to_double(key, v);
  else if (key == "kernel.x_scale") c.kernel_x_scale = to_double(key, v);
  else if (key == "kdpe.lambda") c.kdpe.lambda = to_double(key, v);
  else if (key == "kdpe.gamma") c.kdpe.gamma = to_double(key, v);
  else if (key == "kdpe.c_bound") c.kdpe.c_bound = to_double(key, v);
  else if (key == "kdpe.max_iterations") c.kdpe.max_outer_iterations = to_int<int>(key, v);
  else if (key == "kdpe.solver_tol") c.kdpe.solver_tol = to_double(key, v);
  else if (key == "tmle.epsilon_tol") c.tmle.epsilon_tol = to_double(key, v);
  else if (key == "tmle.max_iterations") c.tmle.max_iterations = to_int<int>(key, v);
  else if (key == "tmle.c_bound") c.tmle.c_bound = to_double(key, v);
  else if (key == "bootstrap.m") b.m = to_int<int>(key, v);
  else if (key == "bootstrap.alpha") b.alpha_level = to_double(key, v);
  else if (key == "bootstrap.dedupe") b.dedupe = to_bool(key, v);
  else if (key == "bootstrap.literal_quantile") b.literal_quantile = to_bool(key, v);
  else if (key == "bootstrap.max_retries") b.max_retries = to_int<int>(key, v);
  else if (key == "bootstrap.max_missing_fraction") b.max_missing_fraction = to_double(key, v);
  else if (key == "truth.draws") c.truth.draws = to_int<std::size_t>(key, v);
  else if (key == "truth.seed") c.truth.seed = to_int<std::uint64_t>(key, v);
  else throw InvalidInput("unknown config key '" + std::string(key) + "'");
}

RunConfig build_run_config(const std::vector<Setting>& settings) {
  Schema schema = Schema::Dgp1;
  for (const auto& [k, v] : settings) {
    if (k == "dgp") schema = parse_schema(v);
  }
  RunConfig cfg = RunConfig::defaults(schema);
  for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
  return cfg;
}

RunConfig parse_run_config(std::string_view text) { return build_run_config(parse_settings(text)); }

std::string serialize_run_config(const RunConfig& cfg) {
  const auto& c = cfg.campaign;
  const auto& b = cfg.bootstrap;
  std::ostringstream out;
  auto kv = [&](std::string_view k, const std::string& v) { out << k << " = " << v << '\n'; };
  auto flag = [](bool x) { return std::string(x ? "true" : "false"); };
  kv("dgp", std::string(to_string(c.dgp.kind)));
  kv("n", std::to_string(c.dgp.n));
  kv("seed", std::to_string(c.dgp.seed));
  kv("sims", std::to_string(c.sims));
  kv("jobs", std::to_string(c.jobs));
  kv("methods", join(c.methods));
  kv("targets", join(c.targets));
  kv("output_dir", cfg.output_dir);
  kv("histogram_bins", std::to_string(cfg.histogram_bins));
  kv("pre.method", std::string(to_string(c.pre.method)));
  kv("pre.bandwidth_rule", std::string(to_string(c.pre.bandwidth_rule)));
  kv("pre.bandwidth", num(c.pre.fixed_bandwidth));
  kv("pre.clip", num(c.pre.clip));
  kv("kernel.x_scale", num(c.kernel_x_scale));
  kv("kdpe.lambda", num(c.kdpe.lambda));
  kv("kdpe.gamma", num(c.kdpe.gamma));
  kv("kdpe.c_bound", num(c.kdpe.c_bound));
  kv("kdpe.max_iterations", std::to_string(c.kdpe.max_outer_iterations));
  kv("kdpe.solver_tol", num(c.kdpe.solver_tol));
  kv("tmle.epsilon_tol", num(c.tmle.epsilon_tol));
  kv("tmle.max_iterations", std::to_string(c.tmle.max_iterations));
  kv("tmle.c_bound", num(c.tmle.c_bound));
  kv("bootstrap.m", std::to_string(b.m));
  kv("bootstrap.alpha", num(b.alpha_level));
  kv("bootstrap.dedupe", flag(b.dedupe));
  kv("bootstrap.literal_quantile", flag(b.literal_quantile));
  kv("bootstrap.max_retries", std::to_string(b.max_retries));
  kv("bootstrap.max_missing_fraction", num(b.max_missing_fraction));
  kv("truth.draws", std::to_string(c.truth.draws));
  kv("truth.seed", std::to_string(c.truth.seed));
  return out.str();
}

}  // namespace kdpe
