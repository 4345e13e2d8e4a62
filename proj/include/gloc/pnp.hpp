#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "gloc/geometry.hpp"
#include "gloc/grids.hpp"

namespace gloc {

struct Match2D3D {
  PixelPoint pixel;
  Vec3 world = Vec3::Zero();
  double weight = 1.0;
};

struct RansacConfig {
  int max_iterations = 10000;
  double inlier_threshold_px = 2.0;
  double confidence = 0.9999;
  std::uint64_t seed = 0;
  int min_inliers = 6;

  void validate() const;
};

struct PoseEstimate {
  Pose pose;
  std::vector<char> inlier_mask;
  int inlier_count = 0;
  double mean_reprojection_error_px = 0.0;  // over inliers
  int iterations_used = 0;
};

/// DLT pose solve from >= 6 correspondences on normalized image
/// coordinates, followed by projection of the linear rotation block onto
/// SO(3) and a sign fix that puts the point centroid at positive depth.
/// Throws DegenerateConfiguration when the system is rank-deficient beyond
/// its one-dimensional solution space (e.g. collinear points).
Pose pnp_minimal(const std::vector<Match2D3D>& matches,
                 const Intrinsics& intrinsics);

/// Classic RANSAC over 6-point minimal samples with reprojection-error
/// scoring, confidence-based early exit and a final refinement on the best
/// inlier set. Deterministic per config.seed. Throws NoConsensus when the
/// best model has fewer than min_inliers inliers.
PoseEstimate ransac_pnp(const std::vector<Match2D3D>& matches,
                        const Intrinsics& intrinsics,
                        const RansacConfig& config);

/// Damped Gauss-Newton on the SE(3) tangent (translation first, rotation
/// last; left-multiplicative update). Total squared reprojection error is
/// non-increasing across accepted steps; returns the input pose when no
/// step improves it.
Pose refine_pose(const Pose& initial, const std::vector<Match2D3D>& inliers,
                 const Intrinsics& intrinsics, int iterations = 20);

/// d(residual)/d(xi) of the reprojection residual at xi = 0 for one point;
/// columns 0-2 translation, 3-5 rotation.
Eigen::Matrix<double, 2, 6> reprojection_jacobian(const Pose& pose,
                                                  const Vec3& world,
                                                  const Intrinsics& intrinsics);

struct PixelMatch {
  PixelPoint query;
  PixelPoint reference;  // on the rendered view
  double score = 1.0;
};

struct LiftResult {
  std::vector<Match2D3D> matches;
  int dropped = 0;  // endpoints on missing or non-positive depth
};

/// Back-projects each reference endpoint through the render pose using the
/// per-cell depth map and pairs the world point with the query pixel.
LiftResult lift_to_3d(const std::vector<PixelMatch>& matches,
                      const DepthMap& depth, const Pose& render_pose,
                      const Intrinsics& intrinsics);

}  // namespace gloc
