#pragma once

#include <cstdint>
#include <vector>

#include "gloc/grids.hpp"
#include "gloc/landmarks.hpp"
#include "gloc/matching.hpp"
#include "gloc/pnp.hpp"
#include "gloc/scene.hpp"

namespace gloc {

/// Feature/depth stand-in for a rendered image: every visible gaussian's
/// (noisy) feature splatted into its nearest fine cell with a z-buffer,
/// plus an 8x8 average-pooled coarse grid.
struct RenderedView {
  FeatureGrid fine;    // one cell per pixel
  FeatureGrid coarse;  // 1/8 resolution
  DepthMap depth;      // fine resolution, winner depth per cell
  Pose pose;
};

/// sigma_r is the per-component noise of the splatted features; values
/// above the scene's observation sigma emulate rendering degradation.
RenderedView render_synthetic_view(const Scene& scene, const Pose& pose,
                                   int width, int height, double sigma_r,
                                   std::uint64_t seed);

struct QueryConfig {
  int max_keypoints = 2048;
  double clutter_fraction = 0.3;
  // Localization error of the synthetic keypoint detector; without it the
  // sparse stage would be exact and the dense refinement unmeasurable.
  double keypoint_jitter_px = 1.0;
};

/// A synthetic query: ground-truth camera, detector-style keypoints
/// (jittered projections of textured gaussians plus clutter) and the
/// query-side feature grids built by the same splatting as the renderer.
struct QueryView {
  Camera camera;  // pose is the ground truth
  std::vector<Keypoint> keypoints;
  FeatureGrid fine;
  FeatureGrid coarse;
};

QueryView make_query_view(const Scene& scene, std::uint64_t query_id,
                          const QueryConfig& config, std::uint64_t seed);

/// Sparse stage: keypoint descriptors vs landmark features, argmax
/// cosine per keypoint, landmark centers as world points, RANSAC+PnP.
PoseEstimate localize_coarse(const std::vector<Keypoint>& keypoints,
                             const LandmarkDB& db, const Scene& scene,
                             const RansacConfig& ransac);

struct RefineConfig {
  int iterations = 1;
  double sigma_r = 0.1;
  double temperature = 0.1;  // dual-softmax
  double min_probability = 0.0;  // optional floor on P before MNN (0 = off)
  bool use_lgcv = true;
  LGCVConfig lgcv;
  RansacConfig ransac;
};

struct IterationStats {
  int n_coarse_dense = 0;   // MNN matches on the coarse grids
  int n_lgcv = 0;           // surviving LGCV
  int n_fine = 0;           // fine window matches
  int n_lifted = 0;         // valid 2D-3D after depth lifting
  PoseEstimate estimate;
};

struct RefineOutcome {
  PoseEstimate final_estimate;  // last successful iteration (or the input)
  std::vector<IterationStats> iterations;
  bool diverged = false;  // an iteration lost consensus; earlier pose kept
};

/// Dense render-and-match refinement; re-renders at the current pose every
/// iteration.
RefineOutcome refine(const QueryView& query, const Pose& p_coarse,
                     const Scene& scene, const RefineConfig& config,
                     std::uint64_t seed);

struct LocalizationResult {
  PoseEstimate coarse;
  RefineOutcome refinement;
  int n_keypoints = 0;
  double wall_time_sec = 0.0;
};

LocalizationResult localize(const Scene& scene, const LandmarkDB& db,
                            const QueryView& query,
                            const RansacConfig& coarse_ransac,
                            const RefineConfig& refine_config,
                            std::uint64_t seed);

struct BenchmarkRow {
  std::uint64_t query_id = 0;
  PoseError coarse_error;
  PoseError fine_error;
  int n_keypoints = 0;
  int n_coarse_inliers = 0;
  int n_coarse_dense = 0;
  int n_lgcv = 0;
  int n_fine = 0;
  int n_lifted = 0;
  int iterations = 0;
  bool diverged = false;
};

/// Runs `n_queries` seeded queries (per-query substreams, order
/// independent) and reports per-query errors against ground truth.
std::vector<BenchmarkRow> run_benchmark(const Scene& scene,
                                        const LandmarkDB& db, int n_queries,
                                        const QueryConfig& query_config,
                                        const RansacConfig& coarse_ransac,
                                        const RefineConfig& refine_config,
                                        std::uint64_t seed);

}  // namespace gloc
