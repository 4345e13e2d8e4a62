#include "gloc/bias.hpp"

#include <algorithm>
#include <cmath>

#include "gloc/errors.hpp"
#include "gloc/fusion.hpp"
#include "gloc/rng.hpp"

namespace gloc {

namespace {
constexpr double kFullContributionTol = 1e-12;
constexpr double kWeightSqFloor = 1e-15;
constexpr std::uint64_t kTagTrial = 0x20;
}  // namespace

RayDecomposition decompose_blend(const std::vector<RayEntry>& ordered,
                                 int target_index, int feature_dim) {
  if (target_index < 0 || target_index >= static_cast<int>(ordered.size()))
    throw InvalidParams("target index out of range");

  RayDecomposition out;
  out.background = Eigen::VectorXd::Zero(feature_dim);
  Eigen::VectorXd rest = Eigen::VectorXd::Zero(feature_dim);
  double transmittance = 1.0;
  for (int i = 0; i < static_cast<int>(ordered.size()); ++i) {
    const double w = ordered[i].alpha * transmittance;
    if (i == target_index)
      out.weight = w;
    else
      rest += w * ordered[i].feature;
    transmittance *= 1.0 - ordered[i].alpha;
  }

  if (out.weight >= 1.0 - kFullContributionTol) {
    out.full_contribution = true;
    return out;
  }
  out.background = rest / (1.0 - out.weight);
  return out;
}

Eigen::VectorXd optimal_feature_joint(
    const std::vector<Eigen::VectorXd>& observations,
    const Eigen::VectorXd& weights,
    const std::vector<Eigen::VectorXd>& backgrounds) {
  const int k_views = static_cast<int>(weights.size());
  if (static_cast<int>(observations.size()) != k_views ||
      static_cast<int>(backgrounds.size()) != k_views)
    throw LengthMismatch("observations, weights and backgrounds disagree");
  if (k_views == 0) throw DegenerateWeights("no views");
  const double denom = weights.squaredNorm();
  if (denom <= kWeightSqFloor)
    throw DegenerateWeights("sum of squared weights is zero");

  Eigen::VectorXd num = Eigen::VectorXd::Zero(observations[0].size());
  for (int k = 0; k < k_views; ++k)
    num += weights[k] * (observations[k] - (1.0 - weights[k]) * backgrounds[k]);
  return num / denom;
}

Eigen::VectorXd analytic_bias(const Eigen::VectorXd& mu,
                              const Eigen::VectorXd& weights,
                              const std::vector<Eigen::VectorXd>& backgrounds) {
  const int k_views = static_cast<int>(weights.size());
  if (static_cast<int>(backgrounds.size()) != k_views)
    throw LengthMismatch("weights and backgrounds disagree");
  if (k_views == 0) throw DegenerateWeights("no views");
  const double denom = weights.squaredNorm();
  if (denom <= kWeightSqFloor)
    throw DegenerateWeights("sum of squared weights is zero");

  Eigen::VectorXd num = Eigen::VectorXd::Zero(mu.size());
  for (int k = 0; k < k_views; ++k)
    num += weights[k] * (1.0 - weights[k]) * (mu - backgrounds[k]);
  return num / denom;
}

Eigen::VectorXd analytic_bias_single_view(const Eigen::VectorXd& mu,
                                          double weight,
                                          const Eigen::VectorXd& background) {
  if (weight * weight <= kWeightSqFloor)
    throw DegenerateWeights("weight is zero");
  return ((1.0 - weight) / weight) * (mu - background);
}

BiasReport empirical_bias(const Eigen::VectorXd& mu,
                          const Eigen::VectorXd& noise_var,
                          const Eigen::VectorXd& weights,
                          const std::vector<Eigen::VectorXd>& backgrounds,
                          int trials, std::uint64_t seed) {
  if (trials < 100) throw InvalidParams("empirical_bias needs >= 100 trials");
  if (noise_var.size() != mu.size())
    throw LengthMismatch("noise_var and mu disagree");
  const int k_views = static_cast<int>(weights.size());
  const int dim = static_cast<int>(mu.size());
  const Eigen::VectorXd sigma = noise_var.cwiseSqrt();

  // Welford accumulation; the naive sum-of-squares form loses the variance
  // to cancellation when the trials are (near-)identical.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim);
  const std::uint64_t key = mix64(seed, kTagTrial);
  std::vector<Eigen::VectorXd> obs(k_views);
  for (int t = 0; t < trials; ++t) {
    auto rng = substream(key, static_cast<std::uint64_t>(t));
    for (int k = 0; k < k_views; ++k)
      obs[k] = mu + sigma.cwiseProduct(normal_vector(rng, dim));
    const Eigen::VectorXd f = optimal_feature_joint(obs, weights, backgrounds);
    const Eigen::VectorXd delta = f - mean;
    mean += delta / (t + 1);
    m2 += delta.cwiseProduct(f - mean);
  }

  BiasReport report;
  report.trials = trials;
  report.mean_optimal_feature = mean;
  report.analytic = analytic_bias(mu, weights, backgrounds);
  report.empirical = mean - mu;
  const Eigen::VectorXd var = m2 / std::max(1, trials - 1);
  report.standard_error = var.cwiseMax(0.0).cwiseSqrt() / std::sqrt(trials);
  return report;
}

double feature_distance(const Eigen::VectorXd& stored_feature,
                        const std::vector<Eigen::VectorXd>& observations) {
  if (observations.empty())
    throw InvalidParams("feature_distance needs >= 1 observation");
  const double norm_f = stored_feature.norm();
  if (norm_f < 1e-12) throw ZeroVector("stored feature has zero norm");
  double sum = 0.0;
  for (const auto& obs : observations) {
    const double norm_o = obs.norm();
    if (norm_o < 1e-12) throw ZeroVector("observation has zero norm");
    sum += stored_feature.dot(obs) / (norm_f * norm_o);
  }
  return 1.0 - sum / static_cast<double>(observations.size());
}

namespace {

// weights/backgrounds of one gaussian given per-view visibility and pixels.
BlendContext blend_context_from(
    const Scene& scene, int gaussian_index,
    const std::vector<const Visibility*>& per_view) {
  BlendContext ctx;
  std::vector<double> weights;
  for (int k = 0; k < static_cast<int>(per_view.size()); ++k) {
    const Visibility& vis = *per_view[k];
    if (!vis.visible[gaussian_index]) continue;
    const auto ray = ray_through(scene, scene.cameras[k],
                                 vis.pixels[gaussian_index]);
    std::vector<RayEntry> entries;
    entries.reserve(ray.size());
    int target_pos = -1;
    for (const auto& s : ray) {
      if (s.index == gaussian_index) target_pos = static_cast<int>(entries.size());
      entries.push_back(
          RayEntry{scene.gaussians[s.index].true_feature, s.alpha});
    }
    if (target_pos < 0) continue;  // association radius missed the target
    const RayDecomposition d =
        decompose_blend(entries, target_pos, scene.feature_dim());
    ctx.views.push_back(k);
    weights.push_back(d.weight);
    ctx.backgrounds.push_back(d.full_contribution
                                  ? Eigen::VectorXd::Zero(scene.feature_dim())
                                  : d.background);
  }
  ctx.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), weights.size());
  return ctx;
}

}  // namespace

BlendContext blend_context(const Scene& scene, int gaussian_index) {
  if (gaussian_index < 0 ||
      gaussian_index >= static_cast<int>(scene.gaussians.size()))
    throw InvalidParams("gaussian index out of range");
  std::vector<Visibility> vis;
  vis.reserve(scene.cameras.size());
  for (const auto& cam : scene.cameras)
    vis.push_back(compute_visibility(scene, cam));
  std::vector<const Visibility*> refs;
  for (const auto& v : vis) refs.push_back(&v);
  return blend_context_from(scene, gaussian_index, refs);
}

DistanceHistogram distance_histogram(const Scene& scene, FeatureSource source,
                                     int bins, std::uint64_t seed) {
  if (bins < 1) throw InvalidParams("bins must be >= 1");
  const int n_views = static_cast<int>(scene.cameras.size());

  std::vector<ViewObservation> observations;
  observations.reserve(n_views);
  for (int k = 0; k < n_views; ++k)
    observations.push_back(observe_features(scene, k, seed));
  // ViewObservation carries the same visibility/pixel data blend contexts
  // need; alias it to avoid recomputing the occlusion tests per gaussian.
  std::vector<Visibility> per_view(n_views);
  std::vector<const Visibility*> per_view_refs(n_views);
  for (int k = 0; k < n_views; ++k) {
    per_view[k].visible = observations[k].visible;
    per_view[k].pixels = observations[k].pixels;
    per_view[k].depths = observations[k].depths;
    per_view_refs[k] = &per_view[k];
  }

  DistanceHistogram hist;
  hist.method = source == FeatureSource::kFused ? "fused" : "alpha_optimum";
  hist.bin_edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b)
    hist.bin_edges[b] = 2.0 * static_cast<double>(b) / bins;
  hist.counts.assign(bins, 0);

  double total = 0.0;
  int scored = 0;
  for (int i = 0; i < static_cast<int>(scene.gaussians.size()); ++i) {
    std::vector<int> views;
    std::vector<Eigen::VectorXd> obs_i;
    for (int k = 0; k < n_views; ++k) {
      if (!observations[k].visible[i]) continue;
      views.push_back(k);
      obs_i.push_back(observations[k].features[i]);
    }
    if (views.empty()) continue;

    Eigen::VectorXd feature;
    if (source == FeatureSource::kFused) {
      feature = fuse_gaussian(scene, i, views, obs_i);
    } else {
      const BlendContext ctx = blend_context_from(scene, i, per_view_refs);
      std::vector<Eigen::VectorXd> obs_ctx;
      obs_ctx.reserve(ctx.views.size());
      for (int v : ctx.views) obs_ctx.push_back(observations[v].features[i]);
      if (ctx.views.empty() || ctx.weights.squaredNorm() <= kWeightSqFloor)
        continue;
      feature = optimal_feature_joint(obs_ctx, ctx.weights, ctx.backgrounds);
    }
    if (feature.norm() < 1e-12) continue;

    const double d = feature_distance(feature, obs_i);
    int bin = static_cast<int>(d / 2.0 * bins);
    bin = std::clamp(bin, 0, bins - 1);
    ++hist.counts[bin];
    total += d;
    ++scored;
  }
  hist.mean = scored > 0 ? total / scored : 0.0;
  return hist;
}

}  // namespace gloc
