#pragma once

// Multi-seed experiment recipes driven by a RunConfig: method comparison
// (offline error + online A/B success) and the lookahead sweep.

#include "dmd/config.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dmd {

struct MethodResult {
  double median_angle_error = 0.0;
  double success_rate = 0.0;
  int successes = 0;
  int trials = 0;
  std::size_t train_samples = 0;
};

struct SeedResult {
  int seed_index = 0;
  std::uint64_t demo_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t plan_seed = 0;
  std::map<std::string, MethodResult> methods;
};

struct ComparisonReport {
  std::vector<std::string> methods;
  std::vector<SeedResult> seeds;
  std::string config_hash;

  double mean_success(const std::string& method) const;
  double mean_error(const std::string& method) const;
};

/// Per-seed stream seeds, derived from the master seed.
std::uint64_t demo_seed(const RunConfig& cfg, int seed_index);
std::uint64_t train_seed(const RunConfig& cfg, int seed_index);
std::uint64_t plan_seed(const RunConfig& cfg, int seed_index);

/// For each seed: generate demos, train every method, evaluate offline on the
/// shared held-out demos and online with one A/B plan over all methods.
/// `online` = false skips the A/B trials.
ComparisonReport run_comparison(const RunConfig& cfg, const std::vector<std::string>& methods, bool online = true);

struct KSweepReport {
  std::vector<int> ks;
  std::vector<std::vector<KSweepRow>> per_seed;
  std::string config_hash;

  double mean_error(int k) const;
  double mean_overshoot(int k) const;
};

KSweepReport run_k_sweep(const RunConfig& cfg);

std::string comparison_json(const ComparisonReport& r);
std::string comparison_csv(const ComparisonReport& r);
std::string k_sweep_json(const KSweepReport& r);
std::string k_sweep_csv(const KSweepReport& r);

}  // namespace dmd
