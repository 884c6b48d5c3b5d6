#pragma once

// Shared test helpers: random generators and independent 4x4-matrix oracles.

#include "dmd/geometry.hpp"
#include "dmd/rng.hpp"
#include "dmd/trajectory.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

namespace testutil {

using dmd::Engine;
using Mat4 = Eigen::Matrix4d;

inline double uni(Engine& e, double lo, double hi) { return dmd::uniform(e, lo, hi); }

/// Uniform random unit quaternion (Shoemake), returned as (w, x, y, z).
inline Eigen::Vector4d random_wxyz(Engine& e) {
  const double u1 = uni(e, 0, 1), u2 = uni(e, 0, 2 * std::numbers::pi), u3 = uni(e, 0, 2 * std::numbers::pi);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  return {b * std::cos(u3), a * std::sin(u2), a * std::cos(u2), b * std::sin(u3)};
}

inline dmd::Rotationd random_rotation(Engine& e) {
  const auto q = random_wxyz(e);
  return dmd::Rotationd::FromWxyz(q[0], q[1], q[2], q[3]);
}

inline dmd::Vec3 random_vec(Engine& e, double r) { return {uni(e, -r, r), uni(e, -r, r), uni(e, -r, r)}; }

inline dmd::RigidTransformd random_transform(Engine& e, dmd::FrameTag from, dmd::FrameTag to, double r = 2.0) {
  return dmd::RigidTransformd(random_rotation(e), random_vec(e, r), from, to);
}

/// Rotation matrix written out from the quaternion components.
inline Eigen::Matrix3d quat_matrix(double w, double x, double y, double z) {
  Eigen::Matrix3d m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

inline Mat4 homogeneous(const dmd::RigidTransformd& t) {
  const auto& r = t.rotation();
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = quat_matrix(r.w(), r.x(), r.y(), r.z());
  m.topRightCorner<3, 1>() = t.translation();
  return m;
}

/// Rotation angle of a 3x3 rotation matrix from its trace.
inline double matrix_angle(const Eigen::Matrix3d& r) {
  return std::acos(std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0));
}

/// Trajectory with random poses; frame i has tag cam(i).
inline dmd::Trajectory random_trajectory(Engine& e, int n, const std::string& id = "traj") {
  dmd::Trajectory t;
  t.id = id;
  t.scale = dmd::Scale::metric();
  for (int i = 0; i < n; ++i) {
    dmd::Frame f;
    f.index = i;
    f.image_ref = id + "/" + std::to_string(i) + ".png";
    f.cam_from_world = random_transform(e, dmd::FrameTag::world(), dmd::FrameTag::camera(i));
    t.frames.push_back(f);
  }
  return t;
}

/// Camera translating along its own +z axis with identity orientation,
/// `step` metres per frame.
inline dmd::Trajectory straight_line(int n, double step, const std::string& id = "line") {
  dmd::Trajectory t;
  t.id = id;
  t.scale = dmd::Scale::metric();
  for (int i = 0; i < n; ++i) {
    dmd::Frame f;
    f.index = i;
    f.image_ref = id + "/" + std::to_string(i) + ".png";
    // cam_from_world of a camera centred at (0, 0, i*step) in world.
    f.cam_from_world = dmd::RigidTransformd(dmd::Rotationd::Identity(), dmd::Vec3(0, 0, -i * step),
                                            dmd::FrameTag::world(), dmd::FrameTag::camera(i));
    t.frames.push_back(f);
  }
  return t;
}

}  // namespace testutil
