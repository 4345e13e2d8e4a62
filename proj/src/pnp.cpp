#include "gloc/pnp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "gloc/errors.hpp"

namespace gloc {

namespace {

constexpr double kRankTol = 1e-10;

double reprojection_error_px(const Pose& pose, const Match2D3D& m,
                             const Intrinsics& k) {
  const Vec3 p = pose.apply(m.world);
  if (p.z() <= 0.0) return std::numeric_limits<double>::infinity();
  const double u = k.fx * p.x() / p.z() + k.cx;
  const double v = k.fy * p.y() / p.z() + k.cy;
  const double du = u - m.pixel.u;
  const double dv = v - m.pixel.v;
  return std::sqrt(du * du + dv * dv);
}

double total_squared_error(const Pose& pose,
                           const std::vector<Match2D3D>& matches,
                           const Intrinsics& k) {
  double sum = 0.0;
  for (const auto& m : matches) {
    const double e = reprojection_error_px(pose, m, k);
    if (!std::isfinite(e)) return std::numeric_limits<double>::infinity();
    sum += e * e;
  }
  return sum;
}

}  // namespace

void RansacConfig::validate() const {
  if (max_iterations < 1) throw InvalidParams("max_iterations must be >= 1");
  if (inlier_threshold_px <= 0.0)
    throw InvalidParams("inlier threshold must be > 0");
  if (confidence <= 0.0 || confidence >= 1.0)
    throw InvalidParams("confidence must be in (0, 1)");
  if (min_inliers < 6) throw InvalidParams("min_inliers must be >= 6");
}

Pose pnp_minimal(const std::vector<Match2D3D>& matches,
                 const Intrinsics& intrinsics) {
  const int n = static_cast<int>(matches.size());
  if (n < 6) throw InvalidParams("pnp_minimal needs >= 6 correspondences");

  // Hartley-style conditioning of the world points.
  Vec3 centroid = Vec3::Zero();
  for (const auto& m : matches) centroid += m.world;
  centroid /= n;
  double mean_norm = 0.0;
  for (const auto& m : matches) mean_norm += (m.world - centroid).norm();
  mean_norm /= n;
  const double scale = mean_norm > 1e-12 ? std::sqrt(3.0) / mean_norm : 1.0;

  Eigen::MatrixXd a(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    const Vec3 xw = scale * (matches[i].world - centroid);
    const double xn = (matches[i].pixel.u - intrinsics.cx) / intrinsics.fx;
    const double yn = (matches[i].pixel.v - intrinsics.cy) / intrinsics.fy;
    const Eigen::RowVector4d X(xw.x(), xw.y(), xw.z(), 1.0);
    a.row(2 * i).setZero();
    a.row(2 * i).segment<4>(0) = X;
    a.row(2 * i).segment<4>(8) = -xn * X;
    a.row(2 * i + 1).setZero();
    a.row(2 * i + 1).segment<4>(4) = X;
    a.row(2 * i + 1).segment<4>(8) = -yn * X;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // One null direction is the solution itself; a second one means the
  // configuration does not determine the pose.
  if (sv[10] < kRankTol * sv[0])
    throw DegenerateConfiguration("rank-deficient PnP system");

  Eigen::Matrix<double, 3, 4> p;
  const Eigen::VectorXd h = svd.matrixV().col(11);
  p.row(0) = h.segment<4>(0).transpose();
  p.row(1) = h.segment<4>(4).transpose();
  p.row(2) = h.segment<4>(8).transpose();

  // Undo conditioning: X' = scale * (X - centroid).
  Eigen::Matrix4d t_world = Eigen::Matrix4d::Identity();
  t_world.topLeftCorner<3, 3>() *= scale;
  t_world.topRightCorner<3, 1>() = -scale * centroid;
  p = p * t_world;

  double mean_depth = 0.0;
  for (const auto& m : matches)
    mean_depth += p.row(2).head<3>().dot(m.world) + p(2, 3);
  if (mean_depth < 0.0) p = -p;

  const Mat3 a_block = p.topLeftCorner<3, 3>();
  Eigen::JacobiSVD<Mat3> rot_svd(a_block,
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 rot = rot_svd.matrixU() * rot_svd.matrixV().transpose();
  if (rot.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    rot = rot_svd.matrixU() * flip * rot_svd.matrixV().transpose();
  }
  const double lambda = rot_svd.singularValues().mean();
  if (lambda < 1e-15)
    throw DegenerateConfiguration("vanishing projection scale");
  return Pose{rot, p.topRightCorner<3, 1>() / lambda};
}

Eigen::Matrix<double, 2, 6> reprojection_jacobian(const Pose& pose,
                                                  const Vec3& world,
                                                  const Intrinsics& k) {
  const Vec3 p = pose.apply(world);
  const double z = p.z();
  Eigen::Matrix<double, 2, 3> j_proj;
  j_proj << k.fx / z, 0.0, -k.fx * p.x() / (z * z), 0.0, k.fy / z,
      -k.fy * p.y() / (z * z);

  Eigen::Matrix<double, 3, 6> j_point;
  j_point.leftCols<3>() = Mat3::Identity();
  Mat3 hat;
  hat << 0, -p.z(), p.y(), p.z(), 0, -p.x(), -p.y(), p.x(), 0;
  j_point.rightCols<3>() = -hat;
  return j_proj * j_point;
}

Pose refine_pose(const Pose& initial, const std::vector<Match2D3D>& inliers,
                 const Intrinsics& intrinsics, int iterations) {
  if (static_cast<int>(inliers.size()) < 6)
    throw InvalidParams("refine_pose needs >= 6 inliers");

  Pose current = initial;
  double current_error = total_squared_error(current, inliers, intrinsics);
  if (!std::isfinite(current_error)) return initial;

  double damping = 1e-8;
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& m : inliers) {
      const Vec3 p = current.apply(m.world);
      if (p.z() <= 0.0) continue;
      const Eigen::Matrix<double, 2, 6> j =
          reprojection_jacobian(current, m.world, intrinsics);
      const double u = intrinsics.fx * p.x() / p.z() + intrinsics.cx;
      const double v = intrinsics.fy * p.y() / p.z() + intrinsics.cy;
      const Eigen::Vector2d r(u - m.pixel.u, v - m.pixel.v);
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }

    bool accepted = false;
    while (damping <= 1e12) {
      const Eigen::Matrix<double, 6, 1> step =
          (jtj + damping * Eigen::Matrix<double, 6, 6>::Identity())
              .ldlt()
              .solve(-jtr);
      const Pose candidate = se3_exp(step).compose(current);
      const double cand_error =
          total_squared_error(candidate, inliers, intrinsics);
      if (cand_error < current_error) {
        current = candidate;
        current_error = cand_error;
        damping = std::max(damping * 0.5, 1e-12);
        accepted = true;
        break;
      }
      damping *= 2.0;  // rejected step: double the damping and retry
    }
    if (!accepted) break;
  }
  return current;
}

PoseEstimate ransac_pnp(const std::vector<Match2D3D>& matches,
                        const Intrinsics& intrinsics,
                        const RansacConfig& config) {
  config.validate();
  const int n = static_cast<int>(matches.size());
  if (n < 6) throw InvalidParams("ransac_pnp needs >= 6 matches");

  std::mt19937_64 rng(config.seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  Pose best_pose;
  int best_count = -1;
  double best_mean_err = std::numeric_limits<double>::infinity();
  int iterations_done = 0;

  std::vector<Match2D3D> sample(6);
  for (int it = 0; it < config.max_iterations; ++it) {
    ++iterations_done;
    for (int i = 0; i < 6; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(order[i], order[pick(rng)]);
      sample[i] = matches[order[i]];
    }

    Pose pose;
    try {
      pose = pnp_minimal(sample, intrinsics);
    } catch (const DegenerateConfiguration&) {
      continue;
    }

    int count = 0;
    double err_sum = 0.0;
    for (const auto& m : matches) {
      const double e = reprojection_error_px(pose, m, intrinsics);
      if (e < config.inlier_threshold_px) {
        ++count;
        err_sum += e;
      }
    }
    const double mean_err = count > 0 ? err_sum / count : 0.0;
    if (count > best_count ||
        (count == best_count && mean_err < best_mean_err)) {
      best_count = count;
      best_mean_err = mean_err;
      best_pose = pose;
    }

    if (best_count > 0) {
      const double rho = static_cast<double>(best_count) / n;
      const double denom = std::log(1.0 - std::min(0.999999999999,
                                                   std::pow(rho, 6)));
      if (denom < 0.0) {
        const double needed = std::log(1.0 - config.confidence) / denom;
        if (iterations_done >= needed) break;
      }
    }
  }

  if (best_count < config.min_inliers)
    throw NoConsensus("best model has " + std::to_string(std::max(0, best_count)) +
                      " inliers, need " + std::to_string(config.min_inliers));

  // Polish on the best inlier set, then rebuild the mask so it is
  // consistent with the returned pose.
  std::vector<Match2D3D> inliers;
  inliers.reserve(best_count);
  for (const auto& m : matches)
    if (reprojection_error_px(best_pose, m, intrinsics) <
        config.inlier_threshold_px)
      inliers.push_back(m);
  const Pose refined = refine_pose(best_pose, inliers, intrinsics);

  PoseEstimate out;
  out.pose = refined;
  out.inlier_mask.assign(n, 0);
  double err_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = reprojection_error_px(refined, matches[i], intrinsics);
    if (e < config.inlier_threshold_px) {
      out.inlier_mask[i] = 1;
      ++out.inlier_count;
      err_sum += e;
    }
  }
  out.mean_reprojection_error_px =
      out.inlier_count > 0 ? err_sum / out.inlier_count : 0.0;
  out.iterations_used = iterations_done;
  if (out.inlier_count < config.min_inliers)
    throw NoConsensus("refinement lost consensus");
  return out;
}

LiftResult lift_to_3d(const std::vector<PixelMatch>& matches,
                      const DepthMap& depth, const Pose& render_pose,
                      const Intrinsics& intrinsics) {
  LiftResult out;
  const Pose inv = render_pose.inverse();
  for (const auto& m : matches) {
    const int x = static_cast<int>(std::floor(m.reference.u));
    const int y = static_cast<int>(std::floor(m.reference.v));
    if (x < 0 || x >= depth.width || y < 0 || y >= depth.height) {
      ++out.dropped;
      continue;
    }
    const double d = depth.at(x, y);
    if (d <= 0.0) {
      ++out.dropped;
      continue;
    }
    const Vec3 cam_point(d * (m.reference.u - intrinsics.cx) / intrinsics.fx,
                         d * (m.reference.v - intrinsics.cy) / intrinsics.fy,
                         d);
    out.matches.push_back(
        Match2D3D{m.query, inv.apply(cam_point), m.score});
  }
  return out;
}

}  // namespace gloc
