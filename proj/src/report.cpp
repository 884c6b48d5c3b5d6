#include "dmd/report.hpp"

#include "dmd/errors.hpp"
#include "dmd/rng.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <sstream>

namespace dmd {

using json = nlohmann::ordered_json;

std::uint64_t demo_seed(const RunConfig& cfg, int seed_index) {
  return derive_seed(cfg.seed, {0x64656d6fULL, static_cast<std::uint64_t>(seed_index)});
}
std::uint64_t train_seed(const RunConfig& cfg, int seed_index) {
  return derive_seed(cfg.seed, {0x747261696eULL, static_cast<std::uint64_t>(seed_index)});
}
std::uint64_t plan_seed(const RunConfig& cfg, int seed_index) {
  return derive_seed(cfg.seed, {0x706c616eULL, static_cast<std::uint64_t>(seed_index)});
}

double ComparisonReport::mean_success(const std::string& method) const {
  if (seeds.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : seeds) sum += s.methods.at(method).success_rate;
  return sum / static_cast<double>(seeds.size());
}

double ComparisonReport::mean_error(const std::string& method) const {
  if (seeds.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : seeds) sum += s.methods.at(method).median_angle_error;
  return sum / static_cast<double>(seeds.size());
}

ComparisonReport run_comparison(const RunConfig& cfg, const std::vector<std::string>& methods, bool online) {
  ComparisonReport report;
  report.methods = methods;
  report.config_hash = config_hash(cfg);
  const auto& ex = cfg.experiment;
  const auto test = generate_demos(ex.sim, static_cast<std::size_t>(cfg.harness.test_demos), cfg.harness.test_seed);

  for (int s = 0; s < cfg.harness.seeds; ++s) {
    SeedResult sr;
    sr.seed_index = s;
    sr.demo_seed = demo_seed(cfg, s);
    sr.train_seed = train_seed(cfg, s);
    sr.plan_seed = plan_seed(cfg, s);
    const auto demos = generate_demos(ex.sim, static_cast<std::size_t>(cfg.harness.demos), sr.demo_seed);

    std::map<std::string, Controller> controllers;
    for (const auto& name : methods) {
      const MethodSpec m = named_method(name, cfg);
      const auto set = build_training_set(demos, m, ex, sr.train_seed);
      TrainConfig tc = ex.train;
      tc.seed = sr.train_seed;
      auto trained = train(set, ex.arch, tc);
      auto& mr = sr.methods[name];
      mr.train_samples = set.size();
      mr.median_angle_error = offline_eval(trained.net, test).median_angle_error;
      spdlog::info("seed {} {}: {} samples, offline median error {:.4f} rad", s, name, set.size(),
                   mr.median_angle_error);
      controllers[name] = policy_controller(std::make_shared<PolicyNet>(std::move(trained.net)));
    }

    if (online && cfg.harness.trials_per_method > 0) {
      auto plan = ABTrialPlan::make(ex.sim, methods, cfg.harness.trials_per_method, sr.plan_seed);
      const auto online_report = run_ab(plan, controllers, ex.sim);
      for (const auto& [name, stats] : online_report.per_method) {
        auto& mr = sr.methods[name];
        mr.successes = stats.successes;
        mr.trials = stats.trials;
        mr.success_rate = stats.success_rate();
        spdlog::info("seed {} {}: {}/{} successes", s, name, stats.successes, stats.trials);
      }
    }
    report.seeds.push_back(std::move(sr));
  }
  return report;
}

double KSweepReport::mean_error(int k) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& rows : per_seed) {
    for (const auto& r : rows) {
      if (r.k == k) {
        sum += r.median_angle_error;
        ++n;
      }
    }
  }
  if (n == 0) throw ConfigError("k=" + std::to_string(k) + " is not part of the sweep");
  return sum / n;
}

double KSweepReport::mean_overshoot(int k) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& rows : per_seed) {
    for (const auto& r : rows) {
      if (r.k == k) {
        sum += r.overshoot_fraction;
        ++n;
      }
    }
  }
  if (n == 0) throw ConfigError("k=" + std::to_string(k) + " is not part of the sweep");
  return sum / n;
}

KSweepReport run_k_sweep(const RunConfig& cfg) {
  KSweepReport report;
  report.ks = cfg.harness.k_values;
  report.config_hash = config_hash(cfg);
  const auto& ex = cfg.experiment;
  const auto test = generate_demos(ex.sim, static_cast<std::size_t>(cfg.harness.test_demos), cfg.harness.test_seed);
  const MethodSpec base = named_method("dmd", cfg);
  for (int s = 0; s < cfg.harness.seeds; ++s) {
    const auto demos = generate_demos(ex.sim, static_cast<std::size_t>(cfg.harness.demos), demo_seed(cfg, s));
    report.per_seed.push_back(k_sweep(demos, test, report.ks, base, ex, train_seed(cfg, s)));
    for (const auto& r : report.per_seed.back()) {
      spdlog::info("seed {} k={}: median error {:.4f} rad, overshoot {:.4f}", s, r.k, r.median_angle_error,
                   r.overshoot_fraction);
    }
  }
  return report;
}

std::string comparison_json(const ComparisonReport& r) {
  json j;
  j["config_hash"] = r.config_hash;
  j["methods"] = r.methods;
  auto& mean = j["mean"] = json::object();
  for (const auto& m : r.methods) {
    mean[m] = {{"median_angle_error", r.mean_error(m)}, {"success_rate", r.mean_success(m)}};
  }
  auto& seeds = j["seeds"] = json::array();
  for (const auto& s : r.seeds) {
    json js = {{"seed_index", s.seed_index},
               {"demo_seed", s.demo_seed},
               {"train_seed", s.train_seed},
               {"plan_seed", s.plan_seed}};
    auto& ms = js["methods"] = json::object();
    for (const auto& [name, mr] : s.methods) {
      ms[name] = {{"median_angle_error", mr.median_angle_error},
                  {"success_rate", mr.success_rate},
                  {"successes", mr.successes},
                  {"trials", mr.trials},
                  {"train_samples", mr.train_samples}};
    }
    seeds.push_back(std::move(js));
  }
  return j.dump(2) + "\n";
}

std::string comparison_csv(const ComparisonReport& r) {
  std::ostringstream out;
  out << "seed,method,median_angle_error,successes,trials,success_rate,train_samples\n";
  char buf[256];
  for (const auto& s : r.seeds) {
    for (const auto& [name, mr] : s.methods) {
      std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%d,%d,%.17g,%zu\n", s.seed_index, name.c_str(),
                    mr.median_angle_error, mr.successes, mr.trials, mr.success_rate, mr.train_samples);
      out << buf;
    }
  }
  return out.str();
}

std::string k_sweep_json(const KSweepReport& r) {
  json j;
  j["config_hash"] = r.config_hash;
  j["k_values"] = r.ks;
  auto& mean = j["mean"] = json::array();
  for (int k : r.ks) {
    mean.push_back({{"k", k}, {"median_angle_error", r.mean_error(k)}, {"overshoot_fraction", r.mean_overshoot(k)}});
  }
  auto& seeds = j["seeds"] = json::array();
  for (const auto& rows : r.per_seed) {
    json js = json::array();
    for (const auto& row : rows) {
      js.push_back({{"k", row.k},
                    {"median_angle_error", row.median_angle_error},
                    {"overshoot_fraction", row.overshoot_fraction}});
    }
    seeds.push_back(std::move(js));
  }
  return j.dump(2) + "\n";
}

std::string k_sweep_csv(const KSweepReport& r) {
  std::ostringstream out;
  out << "seed,k,median_angle_error,overshoot_fraction\n";
  char buf[128];
  for (std::size_t s = 0; s < r.per_seed.size(); ++s) {
    for (const auto& row : r.per_seed[s]) {
      std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%.17g\n", s, row.k, row.median_angle_error, row.overshoot_fraction);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace dmd
