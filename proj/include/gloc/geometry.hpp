#pragma once

#include <optional>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gloc/errors.hpp"

namespace gloc {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Rigid world->camera transform: x_cam = R * x_world + t.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  /// Camera center in world coordinates, C = -R^T t.
  Vec3 center() const { return -rotation.transpose() * translation; }

  Vec3 apply(const Vec3& world_point) const {
    return rotation * world_point + translation;
  }

  /// Composition: (this * other).apply(x) == this->apply(other.apply(x)).
  Pose compose(const Pose& other) const {
    return Pose{rotation * other.rotation,
                rotation * other.translation + translation};
  }

  Pose inverse() const {
    return Pose{rotation.transpose(), -(rotation.transpose() * translation)};
  }

  /// R^T R = I and det(R) = +1, both within `tol`.
  bool is_valid(double tol = 1e-9) const;
};

/// Left-multiplicative SE(3) exponential. xi = (v, w): translation part
/// first, rotation part last, matching the refinement Jacobian layout.
Pose se3_exp(const Eigen::Matrix<double, 6, 1>& xi);

/// World->camera pose looking from `camera_center` toward `target`, image
/// y pointing down; falls back to a y-up reference when the view direction
/// is nearly vertical.
Pose look_at(const Vec3& camera_center, const Vec3& target);

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Pinhole camera: intrinsics plus world->camera pose.
struct Camera {
  Intrinsics intrinsics;
  int width = 0;
  int height = 0;
  Pose pose;
  // Authoritative rotation for cameras born from or loaded as a
  // quaternion; matrix<->quaternion conversions are not bit-stable, so
  // text serialization needs the original. Unset for ad-hoc cameras.
  std::optional<Eigen::Quaterniond> orientation_quat;

  Vec3 center() const { return pose.center(); }
  void validate() const;
};

struct Projection {
  PixelPoint pixel;
  double depth = 0.0;  // camera-frame z, scene units
};

/// Perspective projection. Throws NonPositiveDepth for points at or behind
/// the camera plane.
Projection project(const Camera& camera, const Vec3& world_point);

/// Inverse of project: pixel + camera-frame depth back to a world point.
Vec3 backproject(const Camera& camera, const PixelPoint& pixel, double depth);

/// True iff depth > 0 and the projection lies inside the image rectangle
/// grown by `margin` pixels on every side (inclusive bounds).
bool in_frustum(const Camera& camera, const Vec3& world_point,
                double margin = 0.0);

/// Unit vector from `center` toward the camera center. Throws
/// DegenerateDirection when the two points coincide.
Vec3 viewing_direction(const Vec3& center, const Camera& camera);

struct PoseError {
  double translation = 0.0;  // scene units
  double rotation_deg = 0.0;
};

/// Translation error |t_hat - t| and rotation error
/// arccos((trace(R_hat^T R) - 1) / 2) in degrees, with the arccos argument
/// clamped to [-1, 1].
PoseError pose_error(const Pose& estimate, const Pose& truth);

/// Quaternion with a canonical sign (w >= 0; first nonzero component
/// positive when w == 0) for deterministic serialization.
Eigen::Quaterniond canonical_quaternion(const Mat3& rotation);

}  // namespace gloc
