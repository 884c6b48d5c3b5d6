#pragma once

// Off-trajectory augmentation: sample camera perturbations around each
// demonstrated frame, synthesize the perturbed view, and label it with the
// action that carries the perturbed camera to the frame k steps ahead.

#include "dmd/geometry.hpp"
#include "dmd/image.hpp"
#include "dmd/pushsim.hpp"
#include "dmd/rng.hpp"
#include "dmd/synthesis.hpp"
#include "dmd/trajectory.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dmd {

struct AngleRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct RotationRanges {
  AngleRange yaw;
  AngleRange pitch;
  AngleRange roll;

  /// +-10 deg yaw, +-10 deg pitch, [-10, 15] deg roll.
  static RotationRanges defaults();
};

struct PerturbationSpec {
  enum class DirectionMode : std::uint8_t { Sphere, InPlane };

  /// Metres for metric trajectories; fractions of the scale s otherwise.
  double lo = 0.02;
  double hi = 0.04;
  DirectionMode direction_mode = DirectionMode::Sphere;
  Vec3 plane_normal = Vec3::UnitZ();  // camera frame, InPlane only
  std::optional<RotationRanges> rotation;
  int samples_per_frame = 2;
  int lookahead_k = 3;
  /// Control switch: every perturbation is the identity.
  bool identity_perturbations = false;
  /// Experimental: drop samples whose label opposes the expert step.
  bool filter_overshoot = false;

  /// Translation-only, in the image plane, metric [2 cm, 4 cm].
  static PerturbationSpec pushing();
  /// Non-metric reconstructions: [0.2 s, s].
  static PerturbationSpec reconstruction();

  void validate() const;
};

struct RngPath {
  std::string trajectory_id;
  int frame = 0;
  int sample = 0;
};

struct Perturbation {
  RigidTransformd t_from_tilde;  // from cam~(t, j) to cam(t)
  int source_frame_index = 0;    // position in Trajectory::frames
  int sample_index = 0;
  RngPath rng_path;
};

struct AugmentedSample {
  Image image;
  Action action;
  int k_used = 0;
  Perturbation provenance;
  SynthesizerId synthesizer;
};

/// Deterministic in (master_seed, rng_path).
Perturbation sample_perturbation(const PerturbationSpec& spec, const Scale& scale, const Trajectory& t,
                                 const RngPath& path, std::uint64_t master_seed);

/// a~ = t~_T_t * t_T_w * (t+k_T_w)^-1. Throws ZeroAction for a vanishing
/// translation and IndexOutOfRange when t + k runs past the trajectory.
Action compute_label(const Perturbation& p, const Trajectory& t, int k);

/// Fraction of samples whose label moves against the expert's step at the
/// source frame.
double overshoot_fraction(std::span<const AugmentedSample> samples, const Trajectory& t);

struct AugmentOptions {
  enum class FailurePolicy : std::uint8_t { Abort, SkipAndLog };
  std::uint64_t master_seed = 0;
  int threads = 1;
  FailurePolicy on_failure = FailurePolicy::Abort;
};

/// Frames 0 .. N-k-1, `samples_per_frame` each, frame-major order.
/// `scenes` (per-frame simulator state) is only needed by the oracle backend.
std::vector<AugmentedSample> augment_trajectory(const Trajectory& t, std::span<const Image> images,
                                                std::span<const SimWorld> scenes,
                                                const PerturbationSpec& spec, const Synthesizer& synth,
                                                const AugmentOptions& options);

/// Horizontal mirror: the camera-x action component changes sign.
template <typename Sample>
Sample flip_augment(const Sample& s) {
  Sample out = s;
  out.image = mirror_horizontal(s.image);
  out.action.translation.x() = -s.action.translation.x();
  if (out.action.rotation) {
    // Rotation vectors are axial: a mirror in x flips their y and z parts.
    out.action.rotation->y() = -s.action.rotation->y();
    out.action.rotation->z() = -s.action.rotation->z();
  }
  return out;
}

/// p' = gain * p + bias * 255, clamped; the action is untouched.
Image jitter_image(const Image& img, double gain, double bias);

template <typename Sample>
Sample jitter_augment(const Sample& s, double gain, double bias) {
  Sample out = s;
  out.image = jitter_image(s.image, gain, bias);
  return out;
}

/// Gain in [0.8, 1.2], bias in [-0.1, 0.1] of full scale.
template <typename Sample>
Sample jitter_augment(const Sample& s, Engine& rng) {
  const double gain = uniform(rng, 0.8, 1.2);
  const double bias = uniform(rng, -0.1, 0.1);
  return jitter_augment(s, gain, bias);
}

/// Writes <dir>/aug.jsonl plus one PNG per sample under <dir>/<trajectory id>/.
void save_augmented(const std::filesystem::path& dir, const PerturbationSpec& spec,
                    const SynthesizerId& synth, std::uint64_t master_seed,
                    const std::vector<AugmentedSample>& samples);
std::vector<AugmentedSample> load_augmented(const std::filesystem::path& dir);

}  // namespace dmd
