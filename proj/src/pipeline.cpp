#include "gloc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "gloc/errors.hpp"
#include "gloc/rng.hpp"

namespace gloc {

namespace {

constexpr std::uint64_t kTagRender = 0x30;
constexpr std::uint64_t kTagQueryCam = 0x31;
constexpr std::uint64_t kTagQueryObs = 0x32;
constexpr std::uint64_t kTagQueryKp = 0x33;
constexpr std::uint64_t kTagRefine = 0x34;
constexpr std::uint64_t kTagCoarse = 0x35;
constexpr int kCoarseFactor = 8;

struct SplatInput {
  const std::vector<char>* visible;
  const std::vector<PixelPoint>* pixels;
  const std::vector<double>* depths;
  const std::vector<Eigen::VectorXd>* features;
};

// Nearest-cell splatting with a z-buffer, then 8x8 average pooling.
void splat_grids(const SplatInput& in, int width, int height, int dim,
                 FeatureGrid* fine, FeatureGrid* coarse, DepthMap* depth) {
  fine->width = width;
  fine->height = height;
  fine->dim = dim;
  fine->features = Eigen::MatrixXd::Zero(width * height, dim);
  fine->occupied.assign(width * height, 0);
  depth->width = width;
  depth->height = height;
  depth->depth.assign(width * height, -1.0);

  const std::size_t n = in.visible->size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(*in.visible)[i]) continue;
    const PixelPoint& p = (*in.pixels)[i];
    const int x = std::clamp(static_cast<int>(std::floor(p.u)), 0, width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(p.v)), 0, height - 1);
    const int c = fine->cell(x, y);
    const double z = (*in.depths)[i];
    if (fine->occupied[c] && depth->depth[c] <= z) continue;
    fine->features.row(c) = (*in.features)[i].transpose();
    fine->occupied[c] = 1;
    depth->depth[c] = z;
  }

  const int cw = (width + kCoarseFactor - 1) / kCoarseFactor;
  const int ch = (height + kCoarseFactor - 1) / kCoarseFactor;
  coarse->width = cw;
  coarse->height = ch;
  coarse->dim = dim;
  coarse->features = Eigen::MatrixXd::Zero(cw * ch, dim);
  coarse->occupied.assign(cw * ch, 0);
  for (int cy = 0; cy < ch; ++cy) {
    for (int cx = 0; cx < cw; ++cx) {
      const int x1 = std::min(width, (cx + 1) * kCoarseFactor);
      const int y1 = std::min(height, (cy + 1) * kCoarseFactor);
      int cells = 0;
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim);
      bool any = false;
      for (int y = cy * kCoarseFactor; y < y1; ++y)
        for (int x = cx * kCoarseFactor; x < x1; ++x) {
          ++cells;
          const int c = fine->cell(x, y);
          if (!fine->occupied[c]) continue;
          sum += fine->features.row(c);
          any = true;
        }
      const int cc = coarse->cell(cx, cy);
      if (any) {
        coarse->features.row(cc) = sum / cells;
        coarse->occupied[cc] = 1;
      }
    }
  }
}

Camera render_camera(const Scene& scene, const Pose& pose, int width,
                     int height) {
  Camera cam;
  const double scale = static_cast<double>(width) / scene.config.image_width;
  cam.intrinsics = {scene.config.focal * scale, scene.config.focal * scale,
                    width / 2.0, height / 2.0};
  cam.width = width;
  cam.height = height;
  cam.pose = pose;
  return cam;
}

Vec3 scene_centroid(const Scene& scene) {
  Vec3 c = Vec3::Zero();
  for (const auto& g : scene.gaussians) c += g.center;
  return c / static_cast<double>(scene.gaussians.size());
}

}  // namespace

RenderedView render_synthetic_view(const Scene& scene, const Pose& pose,
                                   int width, int height, double sigma_r,
                                   std::uint64_t seed) {
  if (!pose.is_valid(1e-6)) throw InvalidParams("render pose is not rigid");
  const Camera cam = render_camera(scene, pose, width, height);
  const Visibility vis = compute_visibility(scene, cam);

  const int n = static_cast<int>(scene.gaussians.size());
  const int dim = scene.feature_dim();
  std::vector<Eigen::VectorXd> features(n);
  const std::uint64_t key = mix64(seed, kTagRender);
  for (int i = 0; i < n; ++i) {
    if (!vis.visible[i]) continue;
    features[i] = scene.gaussians[i].true_feature;
    if (sigma_r > 0.0) {
      auto rng = substream(key, static_cast<std::uint64_t>(i));
      features[i] += normal_vector(rng, dim, sigma_r);
    }
  }

  RenderedView view;
  view.pose = pose;
  splat_grids(SplatInput{&vis.visible, &vis.pixels, &vis.depths, &features},
              width, height, dim, &view.fine, &view.coarse, &view.depth);
  return view;
}

QueryView make_query_view(const Scene& scene, std::uint64_t query_id,
                          const QueryConfig& config, std::uint64_t seed) {
  if (config.max_keypoints < 1)
    throw InvalidConfig("max_keypoints must be >= 1");
  if (config.clutter_fraction < 0.0 || config.clutter_fraction > 1.0)
    throw InvalidConfig("clutter_fraction must be in [0, 1]");
  if (config.keypoint_jitter_px < 0.0)
    throw InvalidConfig("keypoint_jitter_px must be >= 0");

  auto rng_cam = substream(mix64(seed, kTagQueryCam), query_id);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double z = 0.35 + 0.5 * u01(rng_cam);
  const double phi = 2.0 * M_PI * u01(rng_cam);
  const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Vec3 dir(rad * std::cos(phi), rad * std::sin(phi), z);
  const Vec3 centroid = scene_centroid(scene);

  QueryView query;
  query.camera.intrinsics = {scene.config.focal, scene.config.focal,
                             scene.config.image_width / 2.0,
                             scene.config.image_height / 2.0};
  query.camera.width = scene.config.image_width;
  query.camera.height = scene.config.image_height;
  query.camera.pose = look_at(centroid + 2.5 * scene.config.extent * dir,
                              centroid);

  const ViewObservation obs = observe_camera(
      scene, query.camera, mix64(kTagQueryObs, query_id), seed);

  auto rng_kp = substream(mix64(seed, kTagQueryKp), query_id);
  std::normal_distribution<double> jitter(0.0, 1.0);
  int n_textured = 0;
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    if (!obs.visible[i] || !scene.gaussians[i].textured) continue;
    PixelPoint px = obs.pixels[i];
    if (config.keypoint_jitter_px > 0.0) {
      px.u += config.keypoint_jitter_px * jitter(rng_kp);
      px.v += config.keypoint_jitter_px * jitter(rng_kp);
      px.u = std::clamp(px.u, 0.0, static_cast<double>(query.camera.width));
      px.v = std::clamp(px.v, 0.0, static_cast<double>(query.camera.height));
    }
    query.keypoints.push_back(Keypoint{px, obs.features[i]});
    ++n_textured;
  }

  const double c = config.clutter_fraction;
  int n_clutter = 0;
  if (c >= 1.0 - 1e-12) n_clutter = 256;
  else if (c > 0.0)
    n_clutter = static_cast<int>(std::lround(n_textured * c / (1.0 - c)));
  std::uniform_real_distribution<double> su(0.0, query.camera.width);
  std::uniform_real_distribution<double> sv(0.0, query.camera.height);
  for (int j = 0; j < n_clutter; ++j) {
    Keypoint kp;
    kp.pixel = PixelPoint{su(rng_kp), sv(rng_kp)};
    kp.descriptor = random_unit_vector(rng_kp, scene.feature_dim());
    query.keypoints.push_back(std::move(kp));
  }

  if (static_cast<int>(query.keypoints.size()) > config.max_keypoints) {
    for (int i = static_cast<int>(query.keypoints.size()) - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(query.keypoints[i], query.keypoints[pick(rng_kp)]);
    }
    query.keypoints.resize(config.max_keypoints);
  }

  DepthMap unused_depth;
  splat_grids(
      SplatInput{&obs.visible, &obs.pixels, &obs.depths, &obs.features},
      query.camera.width, query.camera.height, scene.feature_dim(),
      &query.fine, &query.coarse, &unused_depth);
  return query;
}

PoseEstimate localize_coarse(const std::vector<Keypoint>& keypoints,
                             const LandmarkDB& db, const Scene& scene,
                             const RansacConfig& ransac) {
  if (!db.has_features())
    throw InvalidParams("landmark db has no fused features");
  if (keypoints.size() < 6)
    throw InvalidParams("localize_coarse needs >= 6 keypoints");

  Eigen::MatrixXd query(static_cast<Eigen::Index>(keypoints.size()),
                        db.feature_dim);
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (keypoints[i].descriptor.size() != db.feature_dim)
      throw DimensionMismatch("keypoint descriptor dim != db feature dim");
    query.row(static_cast<Eigen::Index>(i)) = keypoints[i].descriptor;
  }

  const MatchSet coarse = sparse_match(query, db.features);
  std::vector<Match2D3D> matches;
  matches.reserve(coarse.matches.size());
  for (const auto& m : coarse.matches)
    matches.push_back(Match2D3D{
        keypoints[m.query].pixel,
        scene.gaussians[db.indices[m.reference]].center, m.score});
  return ransac_pnp(matches, scene.cameras.empty()
                                 ? Intrinsics{scene.config.focal,
                                              scene.config.focal,
                                              scene.config.image_width / 2.0,
                                              scene.config.image_height / 2.0}
                                 : scene.cameras[0].intrinsics,
                    ransac);
}

namespace {

struct OccupiedCells {
  std::vector<int> xs, ys;
  Eigen::MatrixXd descriptors;
};

OccupiedCells occupied_cells(const FeatureGrid& grid) {
  OccupiedCells out;
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x)
      if (grid.occupied[grid.cell(x, y)]) {
        out.xs.push_back(x);
        out.ys.push_back(y);
      }
  out.descriptors.resize(static_cast<Eigen::Index>(out.xs.size()), grid.dim);
  for (std::size_t i = 0; i < out.xs.size(); ++i)
    out.descriptors.row(static_cast<Eigen::Index>(i)) =
        grid.features.row(grid.cell(out.xs[i], out.ys[i]));
  return out;
}

}  // namespace

RefineOutcome refine(const QueryView& query, const Pose& p_coarse,
                     const Scene& scene, const RefineConfig& config,
                     std::uint64_t seed) {
  if (config.iterations < 1) throw InvalidParams("iterations must be >= 1");

  RefineOutcome out;
  out.final_estimate.pose = p_coarse;
  Pose current = p_coarse;

  for (int iter = 0; iter < config.iterations; ++iter) {
    const RenderedView rendered = render_synthetic_view(
        scene, current, query.camera.width, query.camera.height,
        config.sigma_r, mix64(seed, kTagRefine, iter));

    const OccupiedCells qc = occupied_cells(query.coarse);
    const OccupiedCells rc = occupied_cells(rendered.coarse);
    if (qc.xs.empty() || rc.xs.empty()) {
      out.diverged = true;
      break;
    }

    const SimilarityMatrix sim =
        cosine_similarity(qc.descriptors, rc.descriptors);
    const Eigen::MatrixXd prob = dual_softmax(sim.scores, config.temperature);
    MatchSet dense = mnn(prob);
    if (config.min_probability > 0.0) {
      std::vector<MatchSet::Match> kept;
      for (const auto& m : dense.matches)
        if (m.score >= config.min_probability) kept.push_back(m);
      dense.matches = std::move(kept);
    }

    IterationStats stats;
    stats.n_coarse_dense = static_cast<int>(dense.matches.size());

    // Full-resolution pixel coordinates of the matched coarse cells.
    std::vector<PixelPoint> px_query, px_ref;
    for (const auto& m : dense.matches) {
      px_query.push_back(
          PixelPoint{(qc.xs[m.query] + 0.5) * kCoarseFactor,
                     (qc.ys[m.query] + 0.5) * kCoarseFactor});
      px_ref.push_back(
          PixelPoint{(rc.xs[m.reference] + 0.5) * kCoarseFactor,
                     (rc.ys[m.reference] + 0.5) * kCoarseFactor});
    }

    std::vector<char> keep(dense.matches.size(), 1);
    if (config.use_lgcv &&
        static_cast<int>(dense.matches.size()) > config.lgcv.k_neighbors)
      keep = lgcv_filter(px_query, px_ref, config.lgcv);

    std::vector<std::pair<Vec2, Vec2>> endpoints;
    for (std::size_t i = 0; i < dense.matches.size(); ++i) {
      if (!keep[i]) continue;
      endpoints.emplace_back(Vec2(px_query[i].u, px_query[i].v),
                             Vec2(px_ref[i].u, px_ref[i].v));
    }
    stats.n_lgcv = static_cast<int>(endpoints.size());

    const FineMatchResult fine = fine_match(endpoints, query.fine,
                                            rendered.fine,
                                            config.temperature);
    stats.n_fine = static_cast<int>(fine.matches.size());

    std::vector<PixelMatch> pixel_matches;
    pixel_matches.reserve(fine.matches.size());
    for (const auto& fm : fine.matches)
      pixel_matches.push_back(
          PixelMatch{PixelPoint{fm.query.x(), fm.query.y()},
                     PixelPoint{fm.reference.x(), fm.reference.y()},
                     fm.score});
    const LiftResult lifted = lift_to_3d(pixel_matches, rendered.depth,
                                         rendered.pose,
                                         query.camera.intrinsics);
    stats.n_lifted = static_cast<int>(lifted.matches.size());

    if (lifted.matches.size() < 6) {
      out.diverged = true;
      break;
    }
    RansacConfig ransac = config.ransac;
    ransac.seed = mix64(config.ransac.seed, seed, iter);
    try {
      stats.estimate =
          ransac_pnp(lifted.matches, query.camera.intrinsics, ransac);
    } catch (const NoConsensus&) {
      out.diverged = true;
      break;
    }
    current = stats.estimate.pose;
    out.final_estimate = stats.estimate;
    out.iterations.push_back(std::move(stats));
  }
  return out;
}

LocalizationResult localize(const Scene& scene, const LandmarkDB& db,
                            const QueryView& query,
                            const RansacConfig& coarse_ransac,
                            const RefineConfig& refine_config,
                            std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  LocalizationResult result;
  result.n_keypoints = static_cast<int>(query.keypoints.size());

  RansacConfig coarse_cfg = coarse_ransac;
  coarse_cfg.seed = mix64(coarse_ransac.seed, seed, kTagCoarse);
  result.coarse = localize_coarse(query.keypoints, db, scene, coarse_cfg);
  result.refinement =
      refine(query, result.coarse.pose, scene, refine_config, seed);

  result.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

std::vector<BenchmarkRow> run_benchmark(const Scene& scene,
                                        const LandmarkDB& db, int n_queries,
                                        const QueryConfig& query_config,
                                        const RansacConfig& coarse_ransac,
                                        const RefineConfig& refine_config,
                                        std::uint64_t seed) {
  if (n_queries < 0) throw InvalidParams("n_queries must be >= 0");
  std::vector<BenchmarkRow> rows;
  rows.reserve(n_queries);
  for (int q = 0; q < n_queries; ++q) {
    const auto query_id = static_cast<std::uint64_t>(q);
    const QueryView query = make_query_view(scene, query_id, query_config,
                                            seed);
    BenchmarkRow row;
    row.query_id = query_id;
    row.n_keypoints = static_cast<int>(query.keypoints.size());
    try {
      const LocalizationResult res = localize(scene, db, query, coarse_ransac,
                                              refine_config,
                                              mix64(seed, query_id));
      row.coarse_error = pose_error(res.coarse.pose, query.camera.pose);
      row.fine_error =
          pose_error(res.refinement.final_estimate.pose, query.camera.pose);
      row.n_coarse_inliers = res.coarse.inlier_count;
      row.iterations = static_cast<int>(res.refinement.iterations.size());
      row.diverged = res.refinement.diverged;
      if (!res.refinement.iterations.empty()) {
        const IterationStats& last = res.refinement.iterations.back();
        row.n_coarse_dense = last.n_coarse_dense;
        row.n_lgcv = last.n_lgcv;
        row.n_fine = last.n_fine;
        row.n_lifted = last.n_lifted;
      }
    } catch (const NoConsensus&) {
      row.diverged = true;
      row.coarse_error = PoseError{std::numeric_limits<double>::infinity(),
                                   180.0};
      row.fine_error = row.coarse_error;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gloc
