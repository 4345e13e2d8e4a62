#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "gloc/geometry.hpp"
#include "test_util.hpp"

using namespace gloc;
using gloc::testing::random_point;
using gloc::testing::random_pose;
using gloc::testing::simple_camera;

namespace {

// Independent projection oracle: full homogeneous 3x4 multiply.
Vec3 homogeneous_project(const Camera& cam, const Vec3& x) {
  Eigen::Matrix3d k;
  k << cam.intrinsics.fx, 0, cam.intrinsics.cx, 0, cam.intrinsics.fy,
      cam.intrinsics.cy, 0, 0, 1;
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = cam.pose.rotation;
  rt.col(3) = cam.pose.translation;
  Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
  return k * (rt * xh);
}

// Rotation-error oracle via the relative quaternion.
double quaternion_rotation_error_deg(const Pose& a, const Pose& b) {
  const Eigen::Quaterniond qa(a.rotation), qb(b.rotation);
  const Eigen::Quaterniond rel = qa.conjugate() * qb;
  const double angle =
      2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
  return angle * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("project principal-axis point") {
  const Camera cam = simple_camera();
  const Projection p = project(cam, Vec3(0, 0, 1));
  CHECK(p.pixel.u == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(p.pixel.v == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(p.depth == doctest::Approx(1.0));
}

TEST_CASE("project pinhole formula") {
  const Camera cam = simple_camera();
  const Projection p = project(cam, Vec3(0.1, 0, 1));
  CHECK(p.pixel.u == doctest::Approx(60.0).epsilon(1e-12));
  CHECK(p.pixel.v == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("project matches homogeneous oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Camera cam = simple_camera(80.0 + trial, 120, 90, random_pose(rng));
    const Vec3 x = random_point(rng, 2.0);
    const Vec3 in_cam = cam.pose.apply(x);
    if (in_cam.z() <= 1e-3) continue;
    const Vec3 h = homogeneous_project(cam, x);
    const Projection p = project(cam, x);
    CHECK(p.pixel.u == doctest::Approx(h.x() / h.z()).epsilon(1e-12));
    CHECK(p.pixel.v == doctest::Approx(h.y() / h.z()).epsilon(1e-12));
    CHECK(p.depth == doctest::Approx(h.z()).epsilon(1e-12));
  }
}

TEST_CASE("project rejects non-positive depth") {
  const Camera cam = simple_camera();
  CHECK_THROWS_AS(project(cam, Vec3(0, 0, -1)), NonPositiveDepth);
  CHECK_THROWS_AS(project(cam, Vec3(0.3, -0.1, 0.0)), NonPositiveDepth);
}

TEST_CASE("project backproject round-trip") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Camera cam = simple_camera(150.0, 200, 160, random_pose(rng));
    const Vec3 x = random_point(rng, 1.5);
    if (cam.pose.apply(x).z() <= 1e-2) continue;
    const Projection p = project(cam, x);
    const Vec3 back = backproject(cam, p.pixel, p.depth);
    CHECK((back - x).norm() < 1e-10);
  }
}

TEST_CASE("in_frustum semantics") {
  const Camera cam = simple_camera();
  CHECK(in_frustum(cam, Vec3(0, 0, 1), 0.0));
  CHECK_FALSE(in_frustum(cam, Vec3(0, 0, -1), 0.0));

  // Point projecting to u = width + 0.5.
  const double u = cam.width + 0.5;
  const double x = (u - cam.intrinsics.cx) / cam.intrinsics.fx;
  CHECK(in_frustum(cam, Vec3(x, 0, 1), 1.0));
  CHECK_FALSE(in_frustum(cam, Vec3(x, 0, 1), 0.0));
}

TEST_CASE("viewing_direction basics") {
  Camera cam = simple_camera();  // center at origin
  CHECK((viewing_direction(Vec3(0, 0, 1), cam) - Vec3(0, 0, -1)).norm() <
        1e-12);

  cam.pose = Pose{Mat3::Identity(), Vec3(-1, -1, -1)};  // center (1,1,1)
  const Vec3 d = viewing_direction(Vec3(0, 0, 0), cam);
  CHECK((d - Vec3(1, 1, 1) / std::sqrt(3.0)).norm() < 1e-12);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Camera c = simple_camera(100, 100, 100, random_pose(rng));
    const Vec3 dir = viewing_direction(random_point(rng), c);
    CHECK(std::abs(dir.norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("viewing_direction degenerate") {
  const Camera cam = simple_camera();
  CHECK_THROWS_AS(viewing_direction(cam.center(), cam), DegenerateDirection);
}

TEST_CASE("pose_error identical and known rotation") {
  std::mt19937_64 rng(5);
  const Pose p = random_pose(rng);
  const PoseError e0 = pose_error(p, p);
  CHECK(e0.translation == 0.0);
  CHECK(e0.rotation_deg == doctest::Approx(0.0).epsilon(1e-9));

  Pose q = p;
  Mat3 rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;  // 90 degrees about z
  q.rotation = p.rotation * rz;
  const PoseError e1 = pose_error(q, p);
  CHECK(e1.translation == 0.0);
  CHECK(e1.rotation_deg == doctest::Approx(90.0).epsilon(1e-9));
}

TEST_CASE("pose_error matches quaternion oracle") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const PoseError e = pose_error(a, b);
    CHECK(e.rotation_deg ==
          doctest::Approx(quaternion_rotation_error_deg(a, b)).epsilon(1e-9));
    CHECK(e.translation ==
          doctest::Approx((a.translation - b.translation).norm()));
    // Rotation error is symmetric.
    CHECK(pose_error(b, a).rotation_deg ==
          doctest::Approx(e.rotation_deg).epsilon(1e-12));
  }
}

TEST_CASE("compose with identity leaves projection unchanged") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose p = random_pose(rng);
    const Pose composed = p.compose(Pose::identity());
    Camera a = simple_camera(120, 160, 120, p);
    Camera b = simple_camera(120, 160, 120, composed);
    const Vec3 x = random_point(rng, 2.0);
    if (p.apply(x).z() <= 1e-2) continue;
    const Projection pa = project(a, x);
    const Projection pb = project(b, x);
    CHECK(std::abs(pa.pixel.u - pb.pixel.u) <= 1e-12);
    CHECK(std::abs(pa.pixel.v - pb.pixel.v) <= 1e-12);
  }
}

TEST_CASE("pose validity check") {
  std::mt19937_64 rng(19);
  CHECK(random_pose(rng).is_valid());
  Pose bad;
  bad.rotation(0, 0) = 2.0;
  CHECK_FALSE(bad.is_valid());
  Pose reflect = Pose::identity();
  reflect.rotation(2, 2) = -1.0;  // det = -1
  CHECK_FALSE(reflect.is_valid());
}

TEST_CASE("se3_exp matches small-angle expectations") {
  Eigen::Matrix<double, 6, 1> xi = Eigen::Matrix<double, 6, 1>::Zero();
  xi.head<3>() = Vec3(0.1, -0.2, 0.3);
  const Pose pure_t = se3_exp(xi);
  CHECK((pure_t.rotation - Mat3::Identity()).norm() < 1e-15);
  CHECK((pure_t.translation - Vec3(0.1, -0.2, 0.3)).norm() < 1e-15);

  xi.setZero();
  xi.tail<3>() = Vec3(0, 0, M_PI / 2);
  const Pose rot = se3_exp(xi);
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((rot.rotation - expected).norm() < 1e-12);
  CHECK(rot.is_valid());
}
