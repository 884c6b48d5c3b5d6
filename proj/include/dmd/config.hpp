#pragma once

// Run configuration: one JSON file covering the simulator, perturbations,
// synthesizer, policy, training and harness parameters. Missing keys keep
// their defaults; unknown keys are rejected.

#include "dmd/harness.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dmd {

struct HarnessConfig {
  int demos = 8;             // task demos per seed for training
  int test_demos = 20;       // held-out demos for the offline metric
  int play_trajectories = 20;
  int trials_per_method = 50;
  int seeds = 3;
  std::vector<int> k_values{1, 2, 3, 4, 5};
  std::vector<std::string> methods{"bc", "dmd"};
  std::uint64_t test_seed = 999;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  ExperimentConfig experiment;
  PerturbationSpec perturbation = default_pushing_perturbation();
  SynthesizerId::Kind backend = SynthesizerId::Kind::Oracle;
  RemoteOptions remote;
  HarnessConfig harness;

  /// Directory relative paths are resolved against (the config file's).
  std::filesystem::path base_dir = ".";

  /// Pushing perturbations with the sample count used by the experiments.
  static PerturbationSpec default_pushing_perturbation();

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  void validate() const;
};

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON of the resolved configuration (base_dir excluded).
std::string dump_run_config(const RunConfig& cfg);
/// SHA-256 (hex) of the canonical JSON without the output directory.
std::string config_hash(const RunConfig& cfg);
std::string sha256_hex(std::string_view data);

/// Named training-data recipes: bc, dmd, dmd_flip, dmd_jitter,
/// dmd_flip_jitter, dmd_oracle, dmd_homography, dmd_identity, dmd_remote.
/// Plain "dmd" uses the configured backend.
MethodSpec named_method(const std::string& name, const RunConfig& cfg);

}  // namespace dmd
