#pragma once

// Deterministic planar pushing world with a top-down eye-in-hand camera.
//
// World frame: table plane z = 0, table spans [0, table_size]^2. The camera
// hangs `camera_height` above the gripper looking straight down; its x axis is
// world +x and its y axis is world -y, so "ahead" (world +y) is up in the
// image. The gripper tip sits at the camera origin and therefore projects to
// a fixed pixel near the bottom-centre of every frame.

#include "dmd/geometry.hpp"
#include "dmd/image.hpp"
#include "dmd/trajectory.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dmd {

using Vec2 = Eigen::Vector2d;

struct SimConfig {
  double table_size = 0.6;
  double object_radius = 0.03;
  double gripper_radius = 0.01;
  double success_radius = 0.03;
  double step_length = 0.01;
  int max_steps = 400;

  // Camera.
  double camera_height = 0.30;
  double view_window = 0.24;
  int resolution = 64;
  int gripper_row_from_bottom = 4;  // pixel rows between image bottom and gripper tip

  // Rendering.
  double ring_half_width = 0.003;
  std::uint8_t background_level = 30;
  std::uint8_t target_level = 120;
  std::uint8_t object_level = 200;
  std::uint8_t gripper_level = 255;

  // Expert.
  double standoff = 0.05;  // approach point distance behind the object centre

  double pixel_pitch() const { return view_window / resolution; }
};

struct StartConfig {
  Vec2 gripper = Vec2::Zero();
  Vec2 object = Vec2::Zero();
  Vec2 target = Vec2::Zero();
  friend bool operator==(const StartConfig&, const StartConfig&) = default;
};

enum class Outcome : std::uint8_t { Running, Success, OutOfBounds, Timeout };
const char* to_string(Outcome o);

struct SimWorld {
  Vec2 gripper = Vec2::Zero();
  Vec2 object = Vec2::Zero();
  Vec2 target = Vec2::Zero();
  int steps = 0;
  Outcome outcome = Outcome::Running;

  static SimWorld from_start(const StartConfig& s) { return {s.gripper, s.object, s.target, 0, Outcome::Running}; }
  bool terminal() const { return outcome != Outcome::Running; }
  friend bool operator==(const SimWorld&, const SimWorld&) = default;
};

/// Advances by one step along a unit world-frame direction with
/// quasi-static projection contact. Terminal worlds are returned unchanged.
SimWorld step(const SimConfig& cfg, const SimWorld& world, const Vec2& direction);

/// Outcome of a non-terminal state without advancing it (success / out of bounds).
Outcome classify(const SimConfig& cfg, const SimWorld& world);

/// cam_from_world for a camera riding on a gripper at `gripper`.
RigidTransformd camera_pose(const SimConfig& cfg, const Vec2& gripper, FrameTag cam);

/// Renders the table seen from `cam_from_world`. Depends only on object,
/// target and the camera pose; the gripper is drawn at the camera origin.
Image render(const SimConfig& cfg, const SimWorld& world, const RigidTransformd& cam_from_world);

/// Camera-frame 3-vector of a world-frame planar direction, and back.
Vec3 world_to_camera_direction(const Vec2& world_dir);
Vec2 camera_to_world_direction(const Vec3& cam_dir);

/// Scripted two-phase pusher. Always returns a unit world-frame direction.
Vec2 expert_policy(const SimConfig& cfg, const SimWorld& world);

StartConfig sample_start(const SimConfig& cfg, std::uint64_t seed, std::uint64_t index);

struct EpisodeStep {
  SimWorld state;
  Vec2 action = Vec2::Zero();  // world frame; zero for the final state
  std::string image_ref;
};

struct EpisodeLog {
  std::uint64_t seed = 0;
  StartConfig start;
  std::vector<EpisodeStep> steps;  // one per visited state, including the final one
  Outcome outcome = Outcome::Running;
  int steps_used = 0;
};

/// Re-simulates the logged actions from the logged start; true when every
/// state matches bit-for-bit.
bool replay_matches(const SimConfig& cfg, const EpisodeLog& log);

struct Episode {
  Trajectory trajectory;
  std::vector<Image> images;
  EpisodeLog log;
};

std::vector<Episode> generate_demos(const SimConfig& cfg, std::size_t n, std::uint64_t seed);
std::vector<Episode> generate_play(const SimConfig& cfg, std::size_t n, std::uint64_t seed,
                                   int steps_per_trajectory = 120);

/// Builds an Episode (trajectory + renders) from a finished log.
Episode episode_from_log(const SimConfig& cfg, std::string id, TrajectoryKind kind, EpisodeLog log);

// Dataset directories: manifest.json, <id>.traj.jsonl, <id>.episode.json, <id>/NNNNNN.png.
void save_episodes(const std::filesystem::path& dir, const std::vector<Episode>& episodes);
std::vector<Episode> load_episodes(const std::filesystem::path& dir, bool with_images = true);

std::string episode_log_json(const EpisodeLog& log);
EpisodeLog parse_episode_log(const std::string& text);

}  // namespace dmd
