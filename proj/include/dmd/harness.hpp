#pragma once

// Evaluation: offline median angle error, randomized A/B trials in the
// simulator, and the experiment recipes that compare training-data variants.

#include "dmd/augmentor.hpp"
#include "dmd/policy.hpp"
#include "dmd/pushsim.hpp"
#include "dmd/synthesis.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dmd {

/// acos of the clamped dot product; both inputs must be unit within 1e-6.
double angle_error(const Vec3& pred, const Vec3& gt);

double median(std::vector<double> values);

struct OfflineReport {
  std::string method;
  double median_angle_error = 0.0;
  std::size_t test_frames = 0;
  std::size_t train_samples = 0;
  std::uint64_t seed = 0;
};

/// Median angle error of `predict` against the expert action on every
/// non-final frame of the test episodes.
OfflineReport offline_eval(const std::function<Vec3(const Image&)>& predict, std::span<const Episode> test);
OfflineReport offline_eval(const PolicyNet& net, std::span<const Episode> test);

/// Training-data recipe for one method.
struct MethodSpec {
  std::string name = "bc";
  bool augment = false;  // add D_aug
  SynthesizerId::Kind backend = SynthesizerId::Kind::Oracle;
  PerturbationSpec perturbation = PerturbationSpec::pushing();
  bool flip = false;    // add a mirrored copy of every sample
  bool jitter = false;  // add a colour-jittered copy of every sample
};

struct ExperimentConfig {
  SimConfig sim;
  PolicyArchitecture arch;
  TrainConfig train;
  RemoteOptions remote;
  int augment_threads = 1;
};

std::unique_ptr<Synthesizer> make_synthesizer(SynthesizerId::Kind kind, const ExperimentConfig& cfg);

/// Expert (image, action) pairs of every non-final frame.
std::vector<LabeledImage> expert_samples(std::span<const Episode> demos);

/// D_aug over all demos, in demo order.
std::vector<AugmentedSample> augment_episodes(std::span<const Episode> demos, const PerturbationSpec& spec,
                                              const Synthesizer& synth, std::uint64_t seed, int threads);

/// Appends a mirrored copy of every sample, then a colour-jittered copy of
/// every sample (including the mirrored ones).
void append_flip_jitter(std::vector<LabeledImage>& set, bool flip, bool jitter, std::uint64_t seed);

std::vector<LabeledImage> build_training_set(std::span<const Episode> demos, const MethodSpec& method,
                                             const ExperimentConfig& cfg, std::uint64_t seed);

/// Camera-frame action from the current observation (and, for the expert
/// anchor only, the true state).
using Controller = std::function<Vec3(const Image& observation, const SimWorld& state)>;

Controller policy_controller(std::shared_ptr<const PolicyNet> net);
Controller expert_controller(const SimConfig& cfg);

struct TrialSpec {
  int index = 0;
  StartConfig start;
  std::string method;
};

/// Start configurations are drawn first from their own stream; method
/// assignment is drawn afterwards from an independent stream.
class ABTrialPlan {
 public:
  static ABTrialPlan make(const SimConfig& cfg, std::vector<std::string> methods, int trials_per_method,
                          std::uint64_t seed);

  const std::vector<TrialSpec>& trials() const { return trials_; }
  const std::vector<std::string>& methods() const { return methods_; }
  const std::vector<std::string>& draw_order() const { return draw_order_; }
  std::uint64_t start_seed() const { return start_seed_; }
  std::uint64_t assignment_seed() const { return assignment_seed_; }
  bool executed() const { return executed_; }
  /// Marks the plan as consumed; throws PlanReuse on the second call.
  void begin_execution();

 private:
  std::vector<TrialSpec> trials_;
  std::vector<std::string> methods_;
  std::vector<std::string> draw_order_;
  std::uint64_t start_seed_ = 0;
  std::uint64_t assignment_seed_ = 0;
  bool executed_ = false;
};

struct TrialResult {
  int index = 0;
  std::string method;
  Outcome outcome = Outcome::Running;
  int steps = 0;
  EpisodeLog log;
};

struct MethodStats {
  int trials = 0;
  int successes = 0;
  double success_rate() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / trials; }
};

struct OnlineReport {
  std::map<std::string, MethodStats> per_method;
  std::vector<TrialResult> trials;
  std::string config_hash;
};

/// Runs every trial of the plan once; a plan can only be executed once.
OnlineReport run_ab(ABTrialPlan& plan, const std::map<std::string, Controller>& controllers, const SimConfig& cfg);

/// Runs one controller from a start configuration until a terminal outcome.
EpisodeLog run_episode(const SimConfig& cfg, const StartConfig& start, const Controller& controller,
                       std::uint64_t seed = 0);

struct KSweepRow {
  int k = 0;
  double median_angle_error = 0.0;
  double overshoot_fraction = 0.0;
};

/// Trains one augmented policy per k (same seeds) and evaluates offline.
std::vector<KSweepRow> k_sweep(std::span<const Episode> train, std::span<const Episode> test,
                               const std::vector<int>& ks, const MethodSpec& base, const ExperimentConfig& cfg,
                               std::uint64_t seed);

std::string online_report_json(const OnlineReport& report);
std::string online_report_csv(const OnlineReport& report);

}  // namespace dmd
