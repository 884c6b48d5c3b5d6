#pragma once

// Rigid-transform algebra with runtime frame tags.
//
// A RigidTransform maps points expressed in `from` into `to`: the transform
// written a_T_b has from = b and to = a. Composition a_T_b * b_T_c is only
// legal when the inner tags agree; anything else throws FrameMismatch.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace dmd {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;

/// Lightweight label naming the coordinate frame a pose refers to.
struct FrameTag {
  enum class Kind : std::uint8_t { World, Camera, Perturbed };

  Kind kind = Kind::World;
  int index = 0;   // camera time step
  int sample = 0;  // perturbation sample, Perturbed only

  static FrameTag world() { return {Kind::World, 0, 0}; }
  static FrameTag camera(int t) { return {Kind::Camera, t, 0}; }
  static FrameTag perturbed(int t, int j) { return {Kind::Perturbed, t, j}; }

  friend bool operator==(const FrameTag&, const FrameTag&) = default;

  std::string str() const {
    switch (kind) {
      case Kind::World:
        return "world";
      case Kind::Camera:
        return "cam(" + std::to_string(index) + ")";
      case Kind::Perturbed:
        return "cam~(" + std::to_string(index) + "," + std::to_string(sample) + ")";
    }
    return "?";
  }
};

class FrameMismatch : public std::logic_error {
 public:
  FrameMismatch(const FrameTag& outer_from, const FrameTag& inner_to)
      : std::logic_error("frame mismatch: cannot compose transform from " + outer_from.str() +
                         " with transform into " + inner_to.str()) {}
};

/// Unit quaternion rotation, canonicalized to w >= 0.
template <typename Scalar>
class Rotation {
 public:
  using Quaternion = Eigen::Quaternion<Scalar>;

  Rotation() : q_(Quaternion::Identity()) {}
  explicit Rotation(const Quaternion& q) : q_(q) { canonicalize(); }
  explicit Rotation(const Matrix3<Scalar>& m) : q_(m) { canonicalize(); }

  static Rotation Identity() { return Rotation(); }
  static Rotation FromWxyz(Scalar w, Scalar x, Scalar y, Scalar z) {
    return Rotation(Quaternion(w, x, y, z));
  }

  const Quaternion& quaternion() const { return q_; }
  Scalar w() const { return q_.w(); }
  Scalar x() const { return q_.x(); }
  Scalar y() const { return q_.y(); }
  Scalar z() const { return q_.z(); }

  Matrix3<Scalar> matrix() const { return q_.toRotationMatrix(); }
  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Vector3<Scalar> operator*(const Vector3<Scalar>& v) const { return q_._transformVector(v); }
  Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }

  /// Rotation angle in [0, pi].
  Scalar angle() const {
    return Scalar(2) * std::atan2(q_.vec().norm(), std::abs(q_.w()));
  }

 private:
  void canonicalize() {
    // Only renormalize when measurably off the unit sphere, so that
    // reconstructing from stored components is bit-stable.
    const Scalar n = q_.norm();
    if (!(n > Scalar(0))) throw std::invalid_argument("zero or non-finite quaternion");
    if (std::abs(n - Scalar(1)) > Scalar(8) * std::numeric_limits<Scalar>::epsilon()) {
      q_.coeffs() /= n;
    }
    bool flip = q_.w() < Scalar(0);
    if (q_.w() == Scalar(0)) {
      // Tie-break on the first non-zero vector component.
      for (int i = 0; i < 3; ++i) {
        if (q_.vec()[i] != Scalar(0)) {
          flip = q_.vec()[i] < Scalar(0);
          break;
        }
      }
    }
    if (flip) q_.coeffs() = -q_.coeffs();
  }

  Quaternion q_;
};

template <typename Scalar>
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Rotation<Scalar>& rotation, const Vector3<Scalar>& translation,
                 FrameTag from, FrameTag to)
      : rotation_(rotation), translation_(translation), from_(from), to_(to) {}

  static RigidTransform Identity(FrameTag frame) {
    return RigidTransform(Rotation<Scalar>::Identity(), Vector3<Scalar>::Zero(), frame, frame);
  }
  static RigidTransform Identity(FrameTag from, FrameTag to) {
    return RigidTransform(Rotation<Scalar>::Identity(), Vector3<Scalar>::Zero(), from, to);
  }

  const Rotation<Scalar>& rotation() const { return rotation_; }
  const Vector3<Scalar>& translation() const { return translation_; }
  const FrameTag& from() const { return from_; }
  const FrameTag& to() const { return to_; }

  RigidTransform retagged(FrameTag from, FrameTag to) const {
    return RigidTransform(rotation_, translation_, from, to);
  }

  /// Homogeneous 4x4 matrix.
  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation_.matrix();
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& point) const {
    return rotation_ * point + translation_;
  }

 private:
  Rotation<Scalar> rotation_;
  Vector3<Scalar> translation_ = Vector3<Scalar>::Zero();
  FrameTag from_;
  FrameTag to_;
};

/// a * b, i.e. a_T_b composed with b_T_c gives a_T_c.
template <typename Scalar>
RigidTransform<Scalar> compose(const RigidTransform<Scalar>& a, const RigidTransform<Scalar>& b) {
  if (!(a.from() == b.to())) throw FrameMismatch(a.from(), b.to());
  return RigidTransform<Scalar>(a.rotation() * b.rotation(),
                                a.rotation() * b.translation() + a.translation(), b.from(),
                                a.to());
}

template <typename Scalar>
RigidTransform<Scalar> operator*(const RigidTransform<Scalar>& a, const RigidTransform<Scalar>& b) {
  return compose(a, b);
}

template <typename Scalar>
RigidTransform<Scalar> inverse(const RigidTransform<Scalar>& a) {
  const Rotation<Scalar> r_inv = a.rotation().inverse();
  return RigidTransform<Scalar>(r_inv, -(r_inv * a.translation()), a.to(), a.from());
}

/// a_T_b = a_T_w * (b_T_w)^-1. Both inputs must map from the world frame.
template <typename Scalar>
RigidTransform<Scalar> relative_pose(const RigidTransform<Scalar>& a_from_w,
                                     const RigidTransform<Scalar>& b_from_w) {
  if (!(a_from_w.from() == FrameTag::world())) throw FrameMismatch(a_from_w.from(), FrameTag::world());
  if (!(b_from_w.from() == FrameTag::world())) throw FrameMismatch(b_from_w.from(), FrameTag::world());
  return compose(a_from_w, inverse(b_from_w));
}

/// Axis-angle vector with magnitude in [0, pi].
template <typename Scalar>
Vector3<Scalar> rotation_to_vector(const Rotation<Scalar>& r) {
  const auto& q = r.quaternion();
  const Scalar n = q.vec().norm();
  if (n == Scalar(0)) return Vector3<Scalar>::Zero();
  const Scalar angle = Scalar(2) * std::atan2(n, q.w());
  return q.vec() * (angle / n);
}

template <typename Scalar>
Rotation<Scalar> vector_to_rotation(const Vector3<Scalar>& v) {
  const Scalar angle = v.norm();
  if (angle == Scalar(0)) return Rotation<Scalar>::Identity();
  const Scalar half = angle / Scalar(2);
  const Vector3<Scalar> axis = v / angle;
  return Rotation<Scalar>(Eigen::Quaternion<Scalar>(std::cos(half), std::sin(half) * axis.x(),
                                                    std::sin(half) * axis.y(),
                                                    std::sin(half) * axis.z()));
}

/// Intrinsic Z-Y-X: yaw about z, then pitch about the new y, then roll about the new x.
template <typename Scalar>
Rotation<Scalar> euler_to_rotation(Scalar yaw, Scalar pitch, Scalar roll) {
  using AngleAxis = Eigen::AngleAxis<Scalar>;
  return Rotation<Scalar>(Eigen::Quaternion<Scalar>(AngleAxis(yaw, Vector3<Scalar>::UnitZ()) *
                                                    AngleAxis(pitch, Vector3<Scalar>::UnitY()) *
                                                    AngleAxis(roll, Vector3<Scalar>::UnitX())));
}

/// Quaternion distance that ignores the sign ambiguity.
template <typename Scalar>
Scalar rotation_distance(const Rotation<Scalar>& a, const Rotation<Scalar>& b) {
  const auto d1 = (a.quaternion().coeffs() - b.quaternion().coeffs()).norm();
  const auto d2 = (a.quaternion().coeffs() + b.quaternion().coeffs()).norm();
  return std::min(d1, d2);
}

template <typename Scalar>
bool is_approx(const RigidTransform<Scalar>& a, const RigidTransform<Scalar>& b, Scalar tol) {
  return a.from() == b.from() && a.to() == b.to() &&
         rotation_distance(a.rotation(), b.rotation()) <= tol &&
         (a.translation() - b.translation()).norm() <= tol;
}

using Rotationd = Rotation<double>;
using RigidTransformd = RigidTransform<double>;
using Vec3 = Vector3<double>;

}  // namespace dmd
