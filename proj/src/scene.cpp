#include "gloc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gloc/errors.hpp"
#include "gloc/rng.hpp"

namespace gloc {

namespace {

// Substream tags; part of the on-disk contract since loaded scenes
// regenerate their keypoints from these streams.
constexpr std::uint64_t kTagCenters = 0x01;
constexpr std::uint64_t kTagShape = 0x02;
constexpr std::uint64_t kTagFeatures = 0x03;
constexpr std::uint64_t kTagCameras = 0x04;
constexpr std::uint64_t kTagTextured = 0x05;
constexpr std::uint64_t kTagObs = 0x10;
constexpr std::uint64_t kTagObsShared = 0x11;
constexpr std::uint64_t kTagClutter = 0x12;
constexpr std::uint64_t kTagKeypoints = 0x13;

constexpr double kOcclusionRadiusPx = 0.5;
constexpr double kOcclusionRelDepth = 0.01;
constexpr int kClutterFallbackCount = 256;

Vec3 sample_in_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Eigen::VectorXd dir = random_unit_vector(rng, 3);
  const double r = radius * std::cbrt(u01(rng));
  return r * Vec3(dir[0], dir[1], dir[2]);
}

Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  while (q.norm() < 1e-9) q = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return canonical_quaternion(q.toRotationMatrix());
}

}  // namespace

void SceneConfig::validate() const {
  if (n_gaussians <= 0 || n_cameras <= 0)
    throw InvalidConfig("gaussian and camera counts must be positive");
  if (feature_dim < 2) throw InvalidConfig("feature_dim must be >= 2");
  if (sigma < 0.0) throw InvalidConfig("sigma must be >= 0");
  if (extent <= 0.0) throw InvalidConfig("extent must be > 0");
  if (clutter_fraction < 0.0 || clutter_fraction > 1.0)
    throw InvalidConfig("clutter_fraction must be in [0, 1]");
  if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
    throw InvalidConfig("overlap_fraction must be in [0, 1)");
  if (textured_fraction < 0.0 || textured_fraction > 1.0)
    throw InvalidConfig("textured_fraction must be in [0, 1]");
  if (noise_view_correlation < 0.0 || noise_view_correlation >= 1.0)
    throw InvalidConfig("noise_view_correlation must be in [0, 1)");
  if (image_width < 8 || image_height < 8)
    throw InvalidConfig("image resolution too small");
  if (focal <= 0.0) throw InvalidConfig("focal must be > 0");
}

Visibility compute_visibility(const Scene& scene, const Camera& camera,
                              double occlusion_radius_px) {
  const int n = static_cast<int>(scene.gaussians.size());
  Visibility vis;
  vis.visible.assign(n, 0);
  vis.pixels.assign(n, PixelPoint{});
  vis.depths.assign(n, 0.0);

  std::vector<char> in_front(n, 0);
  for (int i = 0; i < n; ++i) {
    const Vec3 p = camera.pose.apply(scene.gaussians[i].center);
    if (p.z() <= 0.0) continue;
    in_front[i] = 1;
    const auto& k = camera.intrinsics;
    vis.pixels[i] = PixelPoint{k.fx * p.x() / p.z() + k.cx,
                               k.fy * p.y() / p.z() + k.cy};
    vis.depths[i] = p.z();
  }

  const double r2 = occlusion_radius_px * occlusion_radius_px;
  for (int i = 0; i < n; ++i) {
    if (!in_front[i]) continue;
    if (!in_frustum(camera, scene.gaussians[i].center, 0.0)) continue;
    bool occluded = false;
    for (int j = 0; j < n && !occluded; ++j) {
      if (j == i || !in_front[j]) continue;
      const double du = vis.pixels[j].u - vis.pixels[i].u;
      const double dv = vis.pixels[j].v - vis.pixels[i].v;
      if (du * du + dv * dv > r2) continue;
      occluded = vis.depths[j] < (1.0 - kOcclusionRelDepth) * vis.depths[i];
    }
    vis.visible[i] = occluded ? 0 : 1;
  }
  return vis;
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Scene scene;
  scene.config = config;
  scene.seed = seed;
  scene.noise_cov = Eigen::VectorXd::Constant(config.feature_dim,
                                              config.sigma * config.sigma);

  const int n = config.n_gaussians;
  const int n_companions =
      std::min(n - 1, static_cast<int>(std::lround(config.overlap_fraction * n)));
  const int n_base = n - n_companions;

  auto rng_centers = substream(seed, kTagCenters);
  std::vector<Vec3> centers;
  centers.reserve(n);
  for (int i = 0; i < n_base; ++i)
    centers.push_back(sample_in_ball(rng_centers, config.extent));
  std::uniform_int_distribution<int> pick_base(0, n_base - 1);
  for (int i = 0; i < n_companions; ++i) {
    // Companions sit ~1e-3 extents from their base so they share render
    // rays from every camera without triggering the occlusion depth test.
    Vec3 c = centers[pick_base(rng_centers)] +
             sample_in_ball(rng_centers, 1e-3 * config.extent);
    const double norm = c.norm();
    if (norm > config.extent) c *= config.extent / norm;
    centers.push_back(c);
  }

  auto rng_shape = substream(seed, kTagShape);
  auto rng_feat = substream(seed, kTagFeatures);
  auto rng_tex = substream(seed, kTagTextured);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  scene.gaussians.reserve(n);
  for (int i = 0; i < n; ++i) {
    Gaussian g;
    g.center = centers[i];
    for (int a = 0; a < 3; ++a)
      g.scales[a] = config.extent *
                    std::exp(std::log(0.005) +
                             u01(rng_shape) * (std::log(0.05) - std::log(0.005)));
    g.orientation = random_rotation(rng_shape);
    g.opacity = 0.3 + 0.6 * u01(rng_shape);
    g.true_feature = random_unit_vector(rng_feat, config.feature_dim);
    g.textured = u01(rng_tex) < config.textured_fraction;
    scene.gaussians.push_back(std::move(g));
  }

  Vec3 centroid = Vec3::Zero();
  for (const auto& g : scene.gaussians) centroid += g.center;
  centroid /= static_cast<double>(n);

  // Cameras on an upper hemisphere around the centroid. Radius 2.5 extents
  // keeps every center strictly in front of every camera.
  auto rng_cam = substream(seed, kTagCameras);
  const double radius = 2.5 * config.extent;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  scene.cameras.reserve(config.n_cameras);
  for (int k = 0; k < config.n_cameras; ++k) {
    const double z =
        0.3 + 0.6 * (k + 0.5) / config.n_cameras + 0.04 * (u01(rng_cam) - 0.5);
    const double phi = golden * k + 0.2 * (u01(rng_cam) - 0.5);
    const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 dir(rad * std::cos(phi), rad * std::sin(phi), z);
    Camera cam;
    cam.intrinsics = {config.focal, config.focal, config.image_width / 2.0,
                      config.image_height / 2.0};
    cam.width = config.image_width;
    cam.height = config.image_height;
    cam.pose = look_at(centroid + radius * dir, centroid);
    // Snap the rotation through its canonical quaternion so the text
    // serialization round-trips bit for bit.
    cam.orientation_quat = canonical_quaternion(cam.pose.rotation);
    cam.pose.rotation = cam.orientation_quat->toRotationMatrix();
    scene.cameras.push_back(cam);
  }

  scene.keypoints_per_view.resize(config.n_cameras);
  for (int k = 0; k < config.n_cameras; ++k)
    scene.keypoints_per_view[k] = synthesize_keypoints(
        scene, k, config.clutter_fraction, mix64(seed, kTagKeypoints));
  return scene;
}

namespace {

ViewObservation observe_impl(const Scene& scene, const Camera& camera,
                             std::uint64_t stream_id, std::uint64_t seed,
                             int camera_index) {
  const int n = static_cast<int>(scene.gaussians.size());
  const int dim = scene.feature_dim();
  const double rho = scene.config.noise_view_correlation;

  Visibility vis = compute_visibility(scene, camera);
  ViewObservation obs;
  obs.camera_index = camera_index;
  obs.visible = std::move(vis.visible);
  obs.pixels = std::move(vis.pixels);
  obs.depths = std::move(vis.depths);
  obs.features.resize(n);

  const std::uint64_t key_indep = mix64(seed, kTagObs);
  const std::uint64_t key_shared = mix64(seed, kTagObsShared);
  const Eigen::VectorXd sigma = scene.noise_cov.cwiseSqrt();
  for (int i = 0; i < n; ++i) {
    if (!obs.visible[i]) continue;
    auto rng = substream(key_indep, stream_id, static_cast<std::uint64_t>(i));
    Eigen::VectorXd eps = normal_vector(rng, dim);
    if (rho > 0.0) {
      auto rng_shared = substream(key_shared, static_cast<std::uint64_t>(i));
      eps = std::sqrt(1.0 - rho) * eps +
            std::sqrt(rho) * normal_vector(rng_shared, dim);
    }
    obs.features[i] =
        scene.gaussians[i].true_feature + sigma.cwiseProduct(eps);
  }
  return obs;
}

}  // namespace

ViewObservation observe_features(const Scene& scene, int view,
                                 std::uint64_t seed) {
  if (view < 0 || view >= static_cast<int>(scene.cameras.size()))
    throw InvalidParams("view index out of range");
  return observe_impl(scene, scene.cameras[view],
                      static_cast<std::uint64_t>(view), seed, view);
}

ViewObservation observe_camera(const Scene& scene, const Camera& camera,
                               std::uint64_t stream_id, std::uint64_t seed) {
  return observe_impl(scene, camera, stream_id, seed, -1);
}

BlendResult render_feature_ray(const std::vector<RayEntry>& ordered,
                               int feature_dim) {
  BlendResult out;
  out.feature = Eigen::VectorXd::Zero(feature_dim);
  out.weights.reserve(ordered.size());
  double transmittance = 1.0;
  for (const auto& entry : ordered) {
    const double w = entry.alpha * transmittance;
    out.feature += w * entry.feature;
    out.weights.push_back(w);
    transmittance *= 1.0 - entry.alpha;
  }
  return out;
}

std::vector<Keypoint> synthesize_keypoints(const Scene& scene, int view,
                                           double clutter_fraction,
                                           std::uint64_t seed) {
  if (view < 0 || view >= static_cast<int>(scene.cameras.size()))
    throw InvalidParams("view index out of range");
  const ViewObservation obs = observe_features(scene, view, seed);

  std::vector<Keypoint> keypoints;
  int n_textured = 0;
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    if (!obs.visible[i] || !scene.gaussians[i].textured) continue;
    keypoints.push_back(Keypoint{obs.pixels[i], obs.features[i]});
    ++n_textured;
  }

  int n_clutter = 0;
  const double c = clutter_fraction;
  if (c >= 1.0 - 1e-12) {
    n_clutter = kClutterFallbackCount;
  } else if (c > 0.0) {
    n_clutter = static_cast<int>(std::lround(n_textured * c / (1.0 - c)));
  }

  auto rng = substream(mix64(seed, kTagClutter), static_cast<std::uint64_t>(view));
  std::uniform_real_distribution<double> su(0.0, scene.config.image_width);
  std::uniform_real_distribution<double> sv(0.0, scene.config.image_height);
  for (int j = 0; j < n_clutter; ++j) {
    Keypoint kp;
    kp.pixel = PixelPoint{su(rng), sv(rng)};
    kp.descriptor = random_unit_vector(rng, scene.feature_dim());
    keypoints.push_back(std::move(kp));
  }
  return keypoints;
}

std::vector<RaySample> ray_through(const Scene& scene, const Camera& camera,
                                   const PixelPoint& pixel, double radius_px) {
  std::vector<RaySample> samples;
  const double r2 = radius_px * radius_px;
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    const Vec3 p = camera.pose.apply(scene.gaussians[i].center);
    if (p.z() <= 0.0) continue;
    const auto& k = camera.intrinsics;
    const double u = k.fx * p.x() / p.z() + k.cx;
    const double v = k.fy * p.y() / p.z() + k.cy;
    const double du = u - pixel.u;
    const double dv = v - pixel.v;
    if (du * du + dv * dv > r2) continue;
    samples.push_back(
        RaySample{static_cast<int>(i), p.z(), scene.gaussians[i].opacity});
  }
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
  });
  return samples;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

void write_doubles(std::ostream& os, const double* v, int count) {
  for (int i = 0; i < count; ++i) {
    os << ' ';
    write_double(os, v[i]);
  }
}

}  // namespace

void save_scene(const Scene& scene, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  const auto& c = scene.config;
  os << "gloc-scene v1\n";
  os << "# gaussian: cx cy cz sx sy sz qw qx qy qz opacity textured f[dim]\n";
  os << "# camera: fx fy cx cy width height qw qx qy qz tx ty tz\n";
  os << "config " << c.n_gaussians << ' ' << c.n_cameras << ' '
     << c.feature_dim;
  const double cfg[] = {c.sigma,           c.extent,
                        c.clutter_fraction, c.overlap_fraction,
                        c.textured_fraction, c.noise_view_correlation};
  write_doubles(os, cfg, 6);
  os << ' ' << c.image_width << ' ' << c.image_height;
  os << ' ';
  write_double(os, c.focal);
  os << '\n';
  os << "seed " << scene.seed << '\n';
  os << "noise_cov";
  write_doubles(os, scene.noise_cov.data(), scene.noise_cov.size());
  os << '\n';
  for (const auto& g : scene.gaussians) {
    os << "gaussian";
    write_doubles(os, g.center.data(), 3);
    write_doubles(os, g.scales.data(), 3);
    const double q[] = {g.orientation.w(), g.orientation.x(),
                        g.orientation.y(), g.orientation.z()};
    write_doubles(os, q, 4);
    os << ' ';
    write_double(os, g.opacity);
    os << ' ' << (g.textured ? 1 : 0);
    write_doubles(os, g.true_feature.data(), g.true_feature.size());
    os << '\n';
  }
  for (const auto& cam : scene.cameras) {
    os << "camera";
    const double in[] = {cam.intrinsics.fx, cam.intrinsics.fy,
                         cam.intrinsics.cx, cam.intrinsics.cy};
    write_doubles(os, in, 4);
    os << ' ' << cam.width << ' ' << cam.height;
    const Eigen::Quaterniond q =
        cam.orientation_quat ? *cam.orientation_quat
                             : canonical_quaternion(cam.pose.rotation);
    const double qv[] = {q.w(), q.x(), q.y(), q.z()};
    write_doubles(os, qv, 4);
    write_doubles(os, cam.pose.translation.data(), 3);
    os << '\n';
  }
  os << "end\n";
  if (!os) throw IoError("write failed: " + path);
}

Scene load_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "gloc-scene v1")
    throw ParseError("not a gloc-scene v1 file: " + path);

  Scene scene;
  bool have_config = false, have_seed = false;
  int gaussians_seen = 0, cameras_seen = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "config") {
      auto& c = scene.config;
      ss >> c.n_gaussians >> c.n_cameras >> c.feature_dim >> c.sigma >>
          c.extent >> c.clutter_fraction >> c.overlap_fraction >>
          c.textured_fraction >> c.noise_view_correlation >> c.image_width >>
          c.image_height >> c.focal;
      if (!ss) throw ParseError("bad config line");
      have_config = true;
    } else if (tag == "seed") {
      ss >> scene.seed;
      if (!ss) throw ParseError("bad seed line");
      have_seed = true;
    } else if (tag == "noise_cov") {
      if (!have_config) throw ParseError("noise_cov before config");
      scene.noise_cov.resize(scene.config.feature_dim);
      for (int i = 0; i < scene.config.feature_dim; ++i) ss >> scene.noise_cov[i];
      if (!ss) throw ParseError("bad noise_cov line");
    } else if (tag == "gaussian") {
      if (!have_config) throw ParseError("gaussian before config");
      Gaussian g;
      double qw, qx, qy, qz;
      int textured;
      ss >> g.center.x() >> g.center.y() >> g.center.z() >> g.scales.x() >>
          g.scales.y() >> g.scales.z() >> qw >> qx >> qy >> qz >> g.opacity >>
          textured;
      g.orientation = Eigen::Quaterniond(qw, qx, qy, qz);
      g.textured = textured != 0;
      g.true_feature.resize(scene.config.feature_dim);
      for (int i = 0; i < scene.config.feature_dim; ++i) ss >> g.true_feature[i];
      if (!ss) throw ParseError("bad gaussian line");
      scene.gaussians.push_back(std::move(g));
      ++gaussians_seen;
    } else if (tag == "camera") {
      Camera cam;
      double qw, qx, qy, qz;
      ss >> cam.intrinsics.fx >> cam.intrinsics.fy >> cam.intrinsics.cx >>
          cam.intrinsics.cy >> cam.width >> cam.height >> qw >> qx >> qy >>
          qz >> cam.pose.translation.x() >> cam.pose.translation.y() >>
          cam.pose.translation.z();
      if (!ss) throw ParseError("bad camera line");
      cam.orientation_quat = Eigen::Quaterniond(qw, qx, qy, qz);
      cam.pose.rotation = cam.orientation_quat->toRotationMatrix();
      scene.cameras.push_back(cam);
      ++cameras_seen;
    } else if (tag == "end") {
      break;
    } else {
      throw ParseError("unknown record: " + tag);
    }
  }
  if (!have_config || !have_seed) throw ParseError("missing config or seed");
  if (gaussians_seen != scene.config.n_gaussians ||
      cameras_seen != scene.config.n_cameras)
    throw ParseError("record counts disagree with config");

  // Keypoints are not serialized; they regenerate bit-identically from the
  // stored seed.
  scene.keypoints_per_view.resize(scene.config.n_cameras);
  for (int k = 0; k < scene.config.n_cameras; ++k)
    scene.keypoints_per_view[k] = synthesize_keypoints(
        scene, k, scene.config.clutter_fraction, mix64(scene.seed, kTagKeypoints));
  return scene;
}

}  // namespace gloc
