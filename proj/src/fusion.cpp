#include "gloc/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "gloc/errors.hpp"

namespace gloc {

namespace {
constexpr double kGrazingClamp = 1e-6;
constexpr double kAmbiguousRelTol = 1e-9;
}  // namespace

Vec3 gaussian_normal(const Gaussian& g,
                     const std::vector<Vec3>& visible_camera_centers) {
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (g.scales[a] < g.scales[axis]) axis = a;
  double second = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a)
    if (a != axis) second = std::min(second, g.scales[a]);
  if (second - g.scales[axis] <= kAmbiguousRelTol * second)
    throw AmbiguousNormal("two smallest scales nearly equal");

  Vec3 normal = g.rotation().col(axis).normalized();
  if (!visible_camera_centers.empty()) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& c : visible_camera_centers) centroid += c;
    centroid /= static_cast<double>(visible_camera_centers.size());
    if (normal.dot(centroid - g.center) < 0.0) normal = -normal;
  }
  return normal;
}

FusionWeights uniform_weights(int k_views) {
  if (k_views < 1) throw NoVisibleViews("no views to weight");
  FusionWeights w;
  w.raw.assign(k_views, 1.0);
  w.normalized.assign(k_views, 1.0 / k_views);
  return w;
}

FusionWeights fusion_weights(const Gaussian& g,
                             const std::vector<Vec3>& camera_centers,
                             bool per_view_flip) {
  if (camera_centers.empty())
    throw NoVisibleViews("gaussian has no visible views");
  const Vec3 normal = gaussian_normal(g, camera_centers);

  FusionWeights out;
  out.raw.reserve(camera_centers.size());
  double sum = 0.0;
  for (const auto& c : camera_centers) {
    const Vec3 diff = c - g.center;
    const double norm = diff.norm();
    if (norm < 1e-12)
      throw DegenerateDirection("camera center coincides with gaussian");
    double w = normal.dot(diff / norm);
    if (per_view_flip) w = std::abs(w);
    w = std::max(w, kGrazingClamp);
    out.raw.push_back(w);
    sum += w;
  }
  out.normalized.resize(out.raw.size());
  for (std::size_t i = 0; i < out.raw.size(); ++i)
    out.normalized[i] = out.raw[i] / sum;
  return out;
}

Eigen::VectorXd fuse(const std::vector<Eigen::VectorXd>& observations,
                     const FusionWeights& weights) {
  if (observations.empty() ||
      observations.size() != weights.normalized.size())
    throw LengthMismatch("observation and weight counts disagree");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(observations[0].size());
  for (std::size_t k = 0; k < observations.size(); ++k)
    out += weights.normalized[k] * observations[k];
  return out;
}

Eigen::VectorXd fuse_gaussian(const Scene& scene, int gaussian_index,
                              const std::vector<int>& views,
                              const std::vector<Eigen::VectorXd>& observations) {
  if (views.empty()) throw NoVisibleViews("gaussian has no visible views");
  if (views.size() != observations.size())
    throw LengthMismatch("views and observations disagree");
  std::vector<Vec3> centers;
  centers.reserve(views.size());
  for (int v : views) centers.push_back(scene.cameras[v].center());

  FusionWeights w;
  try {
    w = fusion_weights(scene.gaussians[gaussian_index], centers);
  } catch (const AmbiguousNormal&) {
    w = uniform_weights(static_cast<int>(views.size()));
  }
  return fuse(observations, w);
}

FusionStats build_landmark_features(const Scene& scene, LandmarkDB& db,
                                    std::uint64_t seed) {
  for (int idx : db.indices)
    if (idx < 0 || idx >= static_cast<int>(scene.gaussians.size()))
      throw InvalidParams("landmark index out of range for this scene");

  const int n_views = static_cast<int>(scene.cameras.size());
  std::vector<ViewObservation> observations;
  observations.reserve(n_views);
  for (int k = 0; k < n_views; ++k)
    observations.push_back(observe_features(scene, k, seed));

  FusionStats stats;
  std::vector<int> kept;
  std::vector<Eigen::VectorXd> rows;
  for (int idx : db.indices) {
    std::vector<int> views;
    std::vector<Eigen::VectorXd> obs;
    for (int k = 0; k < n_views; ++k) {
      if (!observations[k].visible[idx]) continue;
      views.push_back(k);
      obs.push_back(observations[k].features[idx]);
    }
    if (views.empty()) {
      ++stats.dropped;
      continue;
    }
    std::vector<Vec3> centers;
    for (int v : views) centers.push_back(scene.cameras[v].center());
    FusionWeights w;
    try {
      w = fusion_weights(scene.gaussians[idx], centers);
      ++stats.fused;
    } catch (const AmbiguousNormal&) {
      w = uniform_weights(static_cast<int>(views.size()));
      ++stats.uniform_fallback;
    }
    kept.push_back(idx);
    rows.push_back(fuse(obs, w));
  }

  db.indices = std::move(kept);
  db.feature_dim = scene.feature_dim();
  db.features.resize(static_cast<Eigen::Index>(rows.size()), db.feature_dim);
  for (std::size_t r = 0; r < rows.size(); ++r) db.features.row(r) = rows[r];
  return stats;
}

}  // namespace gloc
