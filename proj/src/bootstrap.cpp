#include "kdpe/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "kdpe/errors.hpp"

namespace kdpe {

void BootstrapConfig::validate() const {
  if (m < 2) throw InvalidInput("bootstrap needs m >= 2");
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw InvalidInput("alpha_level must lie in (0, 1)");
  if (max_retries < 0) throw InvalidInput("max_retries must be >= 0");
  if (!(max_missing_fraction >= 0.0 && max_missing_fraction < 1.0)) {
    throw InvalidInput("max_missing_fraction must lie in [0, 1)");
  }
  if (jobs < 1) throw InvalidInput("jobs must be >= 1");
}

double BootstrapConfig::z() const {
  const boost::math::normal_distribution<double> std_normal;
  return boost::math::quantile(std_normal, literal_quantile ? 1.0 - alpha_level : 1.0 - alpha_level / 2.0);
}

std::vector<Observation> resample(std::span<const Observation> data, RandomStream& rng, bool dedupe) {
  const std::size_t n = data.size();
  std::vector<std::size_t> idx(n);
  for (auto& k : idx) k = rng.index(n);
  if (dedupe) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  }
  std::vector<Observation> out;
  out.reserve(idx.size());
  for (std::size_t k : idx) out.push_back(data[k]);
  return out;
}

namespace {

std::optional<std::vector<double>> safe_call(const Estimator& est, std::span<const Observation> d) {
  try {
    auto v = est(d);
    if (v && std::all_of(v->begin(), v->end(), [](double x) { return std::isfinite(x); })) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

}  // namespace

BootstrapResult bootstrap_ci(std::span<const Observation> data, const Estimator& estimator,
                             const BootstrapConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (data.size() < 2) throw InvalidInput("bootstrap needs at least two observations");
  const auto full = estimator(data);
  if (!full || full->empty()) throw BootstrapFailure("estimator failed on the full dataset");
  const std::size_t stats = full->size();

  struct Slot {
    std::optional<std::vector<double>> value;
    int attempts = 0;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(cfg.m));
  auto run = [&](std::size_t j) {
    for (int k = 0; k <= cfg.max_retries; ++k) {
      RandomStream rng(seed, j * static_cast<std::uint64_t>(cfg.max_retries + 1) + static_cast<std::uint64_t>(k));
      const auto sample = resample(data, rng, cfg.dedupe);
      slots[j].attempts = k + 1;
      auto v = safe_call(estimator, sample);
      if (v && v->size() == stats) {
        slots[j].value = std::move(v);
        return;
      }
    }
  };
  if (cfg.jobs <= 1) {
    for (std::size_t j = 0; j < slots.size(); ++j) run(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < cfg.jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t j = next++; j < slots.size(); j = next++) run(j);
      });
    }
    for (auto& t : workers) t.join();
  }

  BootstrapResult res;
  for (const auto& s : slots) {
    res.retries += s.attempts - 1;
    if (s.value) {
      res.replicates.push_back(*s.value);
    } else {
      ++res.missing;
    }
  }
  res.completed = static_cast<int>(res.replicates.size());
  if (static_cast<double>(res.missing) > cfg.max_missing_fraction * cfg.m || res.completed < 2) {
    throw BootstrapFailure(std::to_string(res.missing) + " of " + std::to_string(cfg.m) +
                           " bootstrap replications failed after retries");
  }
  const double z = cfg.z();
  for (std::size_t s = 0; s < stats; ++s) {
    // Shifted by the first replicate: exact zero for constant replicates.
    const double shift = res.replicates.front()[s];
    double sum = 0.0, ss = 0.0;
    for (const auto& r : res.replicates) {
      sum += r[s] - shift;
      ss += (r[s] - shift) * (r[s] - shift);
    }
    BootstrapInterval iv;
    iv.estimate = (*full)[s];
    iv.variance = std::max(0.0, (ss - sum * sum / res.completed) / (res.completed - 1));
    const double half = z * std::sqrt(iv.variance);
    iv.lower = iv.estimate - half;
    iv.upper = iv.estimate + half;
    res.intervals.push_back(iv);
  }
  return res;
}

}  // namespace kdpe
