#include "gloc/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace gloc {

bool Pose::is_valid(double tol) const {
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose se3_exp(const Eigen::Matrix<double, 6, 1>& xi) {
  const Vec3 v = xi.head<3>();
  const Vec3 w = xi.tail<3>();
  const double theta = w.norm();

  Mat3 hat;
  hat << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;

  Mat3 rot;
  Mat3 V;
  if (theta < 1e-9) {
    // Second-order series; adequate well below the cutoff.
    rot = Mat3::Identity() + hat + 0.5 * hat * hat;
    V = Mat3::Identity() + 0.5 * hat + (1.0 / 6.0) * hat * hat;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double t2 = theta * theta;
    rot = Mat3::Identity() + (s / theta) * hat + ((1.0 - c) / t2) * hat * hat;
    V = Mat3::Identity() + ((1.0 - c) / t2) * hat +
        ((theta - s) / (t2 * theta)) * hat * hat;
  }
  return Pose{rot, V * v};
}

Pose look_at(const Vec3& camera_center, const Vec3& target) {
  const Vec3 forward = (target - camera_center).normalized();
  Vec3 up(0.0, 0.0, 1.0);
  if (std::abs(forward.dot(up)) > 1.0 - 1e-6) up = Vec3(0.0, 1.0, 0.0);
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 rot;
  rot.row(0) = right.transpose();
  rot.row(1) = down.transpose();
  rot.row(2) = forward.transpose();
  return Pose{rot, -rot * camera_center};
}

void Camera::validate() const {
  if (intrinsics.fx <= 0.0 || intrinsics.fy <= 0.0)
    throw InvalidConfig("camera focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw InvalidConfig("camera resolution must be positive");
  if (intrinsics.cx <= 0.0 || intrinsics.cx >= width ||
      intrinsics.cy <= 0.0 || intrinsics.cy >= height)
    throw InvalidConfig("principal point must lie inside the image");
}

Projection project(const Camera& camera, const Vec3& world_point) {
  const Vec3 p = camera.pose.apply(world_point);
  if (p.z() <= 0.0)
    throw NonPositiveDepth("point is at or behind the camera plane");
  const auto& k = camera.intrinsics;
  return Projection{PixelPoint{k.fx * p.x() / p.z() + k.cx,
                               k.fy * p.y() / p.z() + k.cy},
                    p.z()};
}

Vec3 backproject(const Camera& camera, const PixelPoint& pixel, double depth) {
  if (depth <= 0.0) throw NonPositiveDepth("backprojection needs depth > 0");
  const auto& k = camera.intrinsics;
  const Vec3 cam_point(depth * (pixel.u - k.cx) / k.fx,
                       depth * (pixel.v - k.cy) / k.fy, depth);
  return camera.pose.inverse().apply(cam_point);
}

bool in_frustum(const Camera& camera, const Vec3& world_point, double margin) {
  const Vec3 p = camera.pose.apply(world_point);
  if (p.z() <= 0.0) return false;
  const auto& k = camera.intrinsics;
  const double u = k.fx * p.x() / p.z() + k.cx;
  const double v = k.fy * p.y() / p.z() + k.cy;
  return u >= -margin && u <= camera.width + margin && v >= -margin &&
         v <= camera.height + margin;
}

Vec3 viewing_direction(const Vec3& center, const Camera& camera) {
  const Vec3 d = camera.center() - center;
  const double n = d.norm();
  if (n < 1e-12)
    throw DegenerateDirection("camera center coincides with gaussian center");
  return d / n;
}

PoseError pose_error(const Pose& estimate, const Pose& truth) {
  // The trace sits within a few ulps of 3 for near-identical rotations,
  // where arccos amplifies every ulp to ~1e-6 deg; accumulate the relative
  // rotation's trace in extended precision to keep the metric usable there.
  long double tr = 0.0L;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k)
      tr += static_cast<long double>(estimate.rotation(k, r)) *
            static_cast<long double>(truth.rotation(k, r));
  long double arg = (tr - 1.0L) / 2.0L;
  arg = std::clamp(arg, -1.0L, 1.0L);
  PoseError err;
  err.rotation_deg =
      static_cast<double>(std::acos(arg) * 180.0L / M_PI);
  err.translation = (estimate.translation - truth.translation).norm();
  return err;
}

Eigen::Quaterniond canonical_quaternion(const Mat3& rotation) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  const double* c = q.coeffs().data();  // x, y, z, w
  double lead = c[3];
  for (int i = 2; lead == 0.0 && i >= 0; --i) lead = c[i];
  if (lead < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace gloc
