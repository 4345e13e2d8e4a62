#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "gloc/landmarks.hpp"
#include "gloc/scene.hpp"

namespace gloc {

/// Surface normal of an anisotropic gaussian: the orientation axis of the
/// smallest scale, sign-fixed to point toward the centroid of the given
/// camera centers. Throws AmbiguousNormal when the two smallest scales are
/// within 1e-9 relative (no meaningful normal).
Vec3 gaussian_normal(const Gaussian& g,
                     const std::vector<Vec3>& visible_camera_centers);

struct FusionWeights {
  std::vector<int> views;         // visible view indices (when known)
  std::vector<double> raw;        // n . d per view, clamped at epsilon
  std::vector<double> normalized; // raw / sum(raw), sums to 1
};

/// Geometric view weights w_k = n . d_k, where d_k is the unit direction
/// from the gaussian center to camera k. With the globally disambiguated
/// normal, grazing or back-facing views are clamped to epsilon_w = 1e-6
/// rather than dropped. `per_view_flip` instead flips the normal per view
/// (every weight becomes |n . d|); kept for comparison runs.
FusionWeights fusion_weights(const Gaussian& g,
                             const std::vector<Vec3>& camera_centers,
                             bool per_view_flip = false);

/// Uniform weights 1/K; the fallback when the normal is ambiguous.
FusionWeights uniform_weights(int k_views);

/// Convex combination sum_k w_k f_k of the per-view observations.
Eigen::VectorXd fuse(const std::vector<Eigen::VectorXd>& observations,
                     const FusionWeights& weights);

/// Fused feature of one gaussian from its visible views' observations,
/// with the AmbiguousNormal -> uniform fallback applied.
Eigen::VectorXd fuse_gaussian(const Scene& scene, int gaussian_index,
                              const std::vector<int>& views,
                              const std::vector<Eigen::VectorXd>& observations);

struct FusionStats {
  int fused = 0;
  int uniform_fallback = 0;  // ambiguous normals
  int dropped = 0;           // landmarks with no visible view, removed
};

/// Fills db.features by fusing each landmark's visible observations under
/// `seed`. Landmarks without any visible view are removed and counted.
FusionStats build_landmark_features(const Scene& scene, LandmarkDB& db,
                                    std::uint64_t seed);

}  // namespace gloc
