#pragma once

// Posed trajectories: COLMAP images.txt ingest, the native .traj.jsonl format,
// reconstruction scale, expert actions and diffusion-finetuning triples.

#include "dmd/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dmd {

enum class GripperState : std::uint8_t { None, Open, Closed };
enum class TrajectoryKind : std::uint8_t { Task, Play };

struct Scale {
  enum class Kind : std::uint8_t { Metric, Reconstruction };
  Kind kind = Kind::Metric;
  double s = 0.0;  // largest adjacent displacement; meaningful for Reconstruction only

  static Scale metric() { return {Kind::Metric, 0.0}; }
  static Scale reconstruction(double s) { return {Kind::Reconstruction, s}; }
  bool is_metric() const { return kind == Kind::Metric; }
  friend bool operator==(const Scale&, const Scale&) = default;
};

struct Frame {
  int index = 0;
  std::string image_ref;
  RigidTransformd cam_from_world;  // t_T_w: from world, to cam(index)
  std::optional<double> timestamp;
  GripperState gripper = GripperState::None;
};

struct Trajectory {
  std::string id;
  std::vector<Frame> frames;
  Scale scale;
  TrajectoryKind kind = TrajectoryKind::Task;
};

/// Translation (camera frame) plus an optional rotation-vector part.
struct Action {
  Vec3 translation = Vec3::Zero();
  std::optional<Vec3> rotation;
};

struct FinetuneTriple {
  std::string image_a_ref;
  std::string image_b_ref;
  RigidTransformd a_from_b;
};

struct ColmapImage {
  long image_id = 0;
  long camera_id = 0;
  std::string name;
  RigidTransformd cam_from_world;
};

/// Reads COLMAP images.txt. Poses are camera-from-world as COLMAP writes them;
/// `invert` reinterprets every record as world-from-camera instead.
std::vector<ColmapImage> parse_colmap_images(std::istream& in, bool invert = false);
std::vector<ColmapImage> read_colmap_images(const std::filesystem::path& path, bool invert = false);
void write_colmap_images(std::ostream& out, const std::vector<ColmapImage>& images);

/// Builds a reconstruction-scale trajectory ordered as in the file. Frames
/// that do not move relative to the previous kept frame are dropped.
Trajectory trajectory_from_colmap(std::string id, const std::vector<ColmapImage>& images,
                                  TrajectoryKind kind = TrajectoryKind::Task);

void write_trajectory(std::ostream& out, const Trajectory& t);
Trajectory read_trajectory(std::istream& in);
void save_trajectory(const std::filesystem::path& path, const Trajectory& t);
Trajectory load_trajectory(const std::filesystem::path& path);

/// Checks frame count, index ordering, non-empty image refs and frame tags.
void validate(const Trajectory& t);

/// Largest distance between adjacent camera centers. Throws
/// DegenerateTrajectory when every frame coincides.
double compute_scale(const Trajectory& t);

/// Removes frames closer than `eps` to the previously kept frame.
/// Returns the number of dropped frames.
std::size_t drop_stationary_frames(Trajectory& t, double eps = 1e-8);

/// Translation of i_T_{i+1}; unit length for reconstruction-scale data.
Action expert_action(const Trajectory& t, std::size_t i);

/// `n` distinct ordered pairs (a != b), uniformly sampled, deterministic in seed.
std::vector<FinetuneTriple> export_finetune_triples(const Trajectory& t, std::size_t n,
                                                    std::uint64_t seed);
void write_finetune_triples(std::ostream& out, const std::vector<FinetuneTriple>& triples);

const char* to_string(GripperState g);
const char* to_string(TrajectoryKind k);

}  // namespace dmd
