#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gloc/scene.hpp"

namespace gloc {

/// One ray split into the target's share and everything else. The residual
/// transmittance of a non-opaque ray is folded into the background as a
/// zero-feature contribution, so
///   blended = weight * f_target + (1 - weight) * background
/// holds exactly. When weight >= 1 - 1e-12 the background is undefined and
/// `full_contribution` is set (background is left zero).
struct RayDecomposition {
  double weight = 0.0;
  Eigen::VectorXd background;
  bool full_contribution = false;
};

RayDecomposition decompose_blend(const std::vector<RayEntry>& ordered,
                                 int target_index, int feature_dim);

/// Closed-form minimizer of the multi-view blending loss
///   L(f) = sum_k | w_k f + (1 - w_k) B_k - y_k |^2,
/// namely f* = sum_k w_k (y_k - (1 - w_k) B_k) / sum_k w_k^2.
/// Throws DegenerateWeights when sum w_k^2 <= 1e-15.
Eigen::VectorXd optimal_feature_joint(
    const std::vector<Eigen::VectorXd>& observations,
    const Eigen::VectorXd& weights,
    const std::vector<Eigen::VectorXd>& backgrounds);

/// Expected deviation of the optimum from the true feature:
///   bias = sum_k w_k (1 - w_k) (mu - B_k) / sum_k w_k^2.
Eigen::VectorXd analytic_bias(const Eigen::VectorXd& mu,
                              const Eigen::VectorXd& weights,
                              const std::vector<Eigen::VectorXd>& backgrounds);

/// Single-view simplified form, bias = ((1 - w) / w) (mu - B).
Eigen::VectorXd analytic_bias_single_view(const Eigen::VectorXd& mu,
                                          double weight,
                                          const Eigen::VectorXd& background);

struct BiasReport {
  Eigen::VectorXd mean_optimal_feature;
  Eigen::VectorXd analytic;
  Eigen::VectorXd empirical;        // mean(f*) - mu over trials
  Eigen::VectorXd standard_error;   // per component
  int trials = 0;
};

/// Monte-Carlo check of the bias formula: draws eps_k ~ N(0, diag(noise_var))
/// per trial, solves for f*, and reports mean(f*) - mu with standard errors.
/// Deterministic per seed; trial substreams are keyed by trial index so the
/// result is independent of any loop partitioning.
BiasReport empirical_bias(const Eigen::VectorXd& mu,
                          const Eigen::VectorXd& noise_var,
                          const Eigen::VectorXd& weights,
                          const std::vector<Eigen::VectorXd>& backgrounds,
                          int trials, std::uint64_t seed);

/// D(g) = 1 - mean_k cos(f, f_k) over the visible observations,
/// in [0, 2]. Throws ZeroVector on any zero-norm input.
double feature_distance(const Eigen::VectorXd& stored_feature,
                        const std::vector<Eigen::VectorXd>& observations);

enum class FeatureSource {
  kAlphaOptimum,  // per-gaussian blending optimum, neighbors frozen at truth
  kFused,         // geometry-weighted fusion of the same observations
};

struct DistanceHistogram {
  std::vector<double> bin_edges;  // bins + 1 edges spanning [0, 2]
  std::vector<int> counts;
  double mean = 0.0;
  std::string method;
};

/// Scores every gaussian with at least one visible view. Observations are
/// the scene's noisy per-view features under `seed`; both sources see the
/// identical draws so the histograms are directly comparable.
DistanceHistogram distance_histogram(const Scene& scene, FeatureSource source,
                                     int bins, std::uint64_t seed);

/// Per-view blending context of one gaussian, derived from the scene's
/// ray geometry with neighbor features frozen at their true values.
struct BlendContext {
  std::vector<int> views;  // views where the gaussian is visible
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> backgrounds;
};
BlendContext blend_context(const Scene& scene, int gaussian_index);

}  // namespace gloc
