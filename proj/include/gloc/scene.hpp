#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gloc/geometry.hpp"

namespace gloc {

/// Anisotropic 3D primitive with a latent descriptor. The orientation is
/// kept as a (canonical-sign) unit quaternion so that scene files round-trip
/// losslessly; `rotation()` materializes the scale-axis frame.
struct Gaussian {
  Vec3 center = Vec3::Zero();
  Vec3 scales = Vec3::Ones();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  double opacity = 1.0;
  Eigen::VectorXd true_feature;
  std::optional<Eigen::VectorXd> stored_feature;
  bool textured = true;

  Mat3 rotation() const { return orientation.toRotationMatrix(); }
};

struct Keypoint {
  PixelPoint pixel;
  Eigen::VectorXd descriptor;
};

struct SceneConfig {
  int n_gaussians = 600;
  int n_cameras = 24;
  int feature_dim = 8;
  double sigma = 0.05;            // per-component observation noise stddev
  double extent = 1.0;            // gaussian centers live in this ball
  double clutter_fraction = 0.3;  // fraction of keypoints that are clutter
  // Fraction of gaussians placed as near-coincident companions of earlier
  // ones so that rays genuinely overlap and alpha-blending weights stay
  // below 1. Zero yields an isolated (bias-free) scene.
  double overlap_fraction = 0.5;
  double textured_fraction = 0.7;  // fraction of gaussians emitting keypoints
  // Correlation of observation noise across views (0 = independent).
  double noise_view_correlation = 0.0;
  int image_width = 256;
  int image_height = 192;
  double focal = 180.0;

  void validate() const;
};

/// Ground-truth synthetic world: primitives, cameras, noise model and
/// per-view keypoints. Immutable after generation.
struct Scene {
  SceneConfig config;
  std::uint64_t seed = 0;
  std::vector<Gaussian> gaussians;
  std::vector<Camera> cameras;
  Eigen::VectorXd noise_cov;  // diagonal of Sigma (per-component variances)
  std::vector<std::vector<Keypoint>> keypoints_per_view;

  int feature_dim() const { return config.feature_dim; }
};

struct ViewObservation {
  int camera_index = 0;
  std::vector<char> visible;
  std::vector<PixelPoint> pixels;      // valid where visible
  std::vector<double> depths;          // valid where visible
  std::vector<Eigen::VectorXd> features;  // empty vector where invisible
};

/// Visibility of every gaussian in an arbitrary camera: inside the frustum
/// and not occluded. A gaussian is occluded when another center projects
/// within `occlusion_radius_px` of it at > 1% smaller relative depth.
struct Visibility {
  std::vector<char> visible;
  std::vector<PixelPoint> pixels;
  std::vector<double> depths;
};
Visibility compute_visibility(const Scene& scene, const Camera& camera,
                              double occlusion_radius_px = 0.5);

Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Noisy per-view observations f_k = true_feature + eps, with eps drawn from
/// an independent substream per (seed, view, gaussian). The optional
/// cross-view correlation mixes in a per-gaussian shared component.
ViewObservation observe_features(const Scene& scene, int view,
                                 std::uint64_t seed);

/// Same noise model for a camera that is not part of the scene;
/// `stream_id` keeps the draws disjoint from the training views'.
ViewObservation observe_camera(const Scene& scene, const Camera& camera,
                               std::uint64_t stream_id, std::uint64_t seed);

struct RayEntry {
  Eigen::VectorXd feature;
  double alpha = 0.0;
};

struct BlendResult {
  Eigen::VectorXd feature;       // sum_i f_i alpha_i T_i
  std::vector<double> weights;   // w_i = alpha_i * T_i
};

/// Front-to-back alpha compositing of a sorted ray.
BlendResult render_feature_ray(const std::vector<RayEntry>& ordered,
                               int feature_dim);

/// Exact keypoints on textured visible gaussians plus uniform clutter;
/// descriptors are the noisy observed features (clutter gets random unit
/// descriptors). n_clutter = round(n_textured * c / (1 - c)); when c >= 1
/// the formula is undefined and a fixed budget of 256 clutter points is
/// emitted instead.
std::vector<Keypoint> synthesize_keypoints(const Scene& scene, int view,
                                           double clutter_fraction,
                                           std::uint64_t seed);

/// All gaussians whose centers project within `radius_px` of `pixel`
/// (positive depth only), sorted front to back by (depth, index). This is
/// the desk-scale stand-in for the sorted overlap set of a render ray.
struct RaySample {
  int index = 0;
  double depth = 0.0;
  double alpha = 0.0;
};
std::vector<RaySample> ray_through(const Scene& scene, const Camera& camera,
                                   const PixelPoint& pixel,
                                   double radius_px = 0.5);

// Versioned text serialization; doubles are written with 17 significant
// digits so save/load round-trips are lossless.
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

}  // namespace gloc
