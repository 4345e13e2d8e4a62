#include "gloc/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "gloc/errors.hpp"

namespace gloc {

namespace {

// 2D bucket grid over keypoints with cell size tau_d: any keypoint within
// tau_d of a query lies in the 3x3 cell neighborhood.
class KeypointGrid {
 public:
  KeypointGrid(const std::vector<Keypoint>& keypoints, double cell)
      : cell_(cell) {
    for (const auto& kp : keypoints)
      cells_[key(kp.pixel.u, kp.pixel.v)].push_back(kp.pixel);
  }

  bool any_within(const PixelPoint& q, double radius) const {
    const double r2 = radius * radius;
    const long long cu = coord(q.u);
    const long long cv = coord(q.v);
    for (long long du = -1; du <= 1; ++du)
      for (long long dv = -1; dv <= 1; ++dv) {
        const auto it = cells_.find(pack(cu + du, cv + dv));
        if (it == cells_.end()) continue;
        for (const auto& p : it->second) {
          const double dx = p.u - q.u;
          const double dy = p.v - q.v;
          if (dx * dx + dy * dy <= r2) return true;
        }
      }
    return false;
  }

 private:
  long long coord(double x) const {
    return static_cast<long long>(std::floor(x / cell_));
  }
  static std::uint64_t pack(long long a, long long b) {
    return (static_cast<std::uint64_t>(a) << 32) ^
           static_cast<std::uint64_t>(b & 0xffffffffll);
  }
  std::uint64_t key(double u, double v) const {
    return pack(coord(u), coord(v));
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<PixelPoint>> cells_;
};

}  // namespace

ConsensusScores consensus_scores(const Scene& scene, double tau_d_px) {
  if (tau_d_px <= 0.0) throw InvalidParams("tau_d must be > 0");
  if (scene.keypoints_per_view.size() != scene.cameras.size())
    throw InvalidParams("scene lacks keypoints for some views");

  const int n = static_cast<int>(scene.gaussians.size());
  ConsensusScores out;
  out.tau_d = tau_d_px;
  out.views_used = static_cast<int>(scene.cameras.size());
  out.scores.assign(n, 0);

  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    const Camera& cam = scene.cameras[v];
    const KeypointGrid grid(scene.keypoints_per_view[v], tau_d_px);
    for (int i = 0; i < n; ++i) {
      if (!in_frustum(cam, scene.gaussians[i].center, 0.0)) continue;
      const Projection proj = project(cam, scene.gaussians[i].center);
      if (grid.any_within(proj.pixel, tau_d_px)) ++out.scores[i];
    }
  }
  return out;
}

LandmarkDB kc_sample(const Scene& scene, const ConsensusScores& scores, int n,
                     int k, std::uint64_t seed) {
  if (n < 1 || k < 1) throw InvalidParams("n and k must be >= 1");
  const int g_count = static_cast<int>(scene.gaussians.size());
  if (g_count < 1) throw InvalidParams("scene has no gaussians");
  if (static_cast<int>(scores.scores.size()) != g_count)
    throw LengthMismatch("scores do not match the scene");

  std::mt19937_64 rng(seed);
  std::vector<int> anchors;
  anchors.reserve(n);
  if (n <= g_count) {
    std::vector<int> perm(g_count);
    for (int i = 0; i < g_count; ++i) perm[i] = i;
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, g_count - 1);
      std::swap(perm[i], perm[pick(rng)]);
      anchors.push_back(perm[i]);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, g_count - 1);
    for (int i = 0; i < n; ++i) anchors.push_back(pick(rng));
  }

  const int kk = std::min(k, g_count);
  std::unordered_set<int> winners;
  std::vector<std::pair<double, int>> scratch(g_count);
  for (int a : anchors) {
    const Vec3& ca = scene.gaussians[a].center;
    for (int j = 0; j < g_count; ++j)
      scratch[j] = {(scene.gaussians[j].center - ca).squaredNorm(), j};
    // Pair comparison breaks distance ties by index, so the kk-neighborhood
    // is a deterministic set.
    std::nth_element(scratch.begin(), scratch.begin() + (kk - 1),
                     scratch.end());
    int best = -1;
    for (int j = 0; j < kk; ++j) {
      const int cand = scratch[j].second;
      if (best < 0 || scores.scores[cand] > scores.scores[best] ||
          (scores.scores[cand] == scores.scores[best] && cand < best))
        best = cand;
    }
    winners.insert(best);
  }

  LandmarkDB db;
  db.tau_d = scores.tau_d;
  db.n = n;
  db.k = k;
  db.seed = seed;
  db.feature_dim = scene.feature_dim();
  db.indices.assign(winners.begin(), winners.end());
  std::sort(db.indices.begin(), db.indices.end());
  return db;
}

namespace {

void write_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

void save_landmark_db(const LandmarkDB& db, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "gloc-landmarkdb v1\n";
  os << "scene_hash " << (db.scene_hash.empty() ? "-" : db.scene_hash) << '\n';
  os << "params ";
  write_double(os, db.tau_d);
  os << ' ' << db.n << ' ' << db.k << ' ' << db.seed << '\n';
  os << "count " << db.indices.size() << '\n';
  os << "dim " << (db.has_features() ? db.feature_dim : 0) << '\n';
  for (int idx : db.indices) os << "landmark " << idx << '\n';
  if (db.has_features()) {
    for (Eigen::Index r = 0; r < db.features.rows(); ++r) {
      os << "feature " << db.indices[r];
      for (Eigen::Index c = 0; c < db.features.cols(); ++c) {
        os << ' ';
        write_double(os, db.features(r, c));
      }
      os << '\n';
    }
  }
  os << "end\n";
  if (!os) throw IoError("write failed: " + path);
}

LandmarkDB load_landmark_db(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "gloc-landmarkdb v1")
    throw ParseError("not a gloc-landmarkdb v1 file: " + path);

  LandmarkDB db;
  int count = -1, dim = 0, feature_rows = 0;
  std::unordered_map<int, int> row_of_index;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "scene_hash") {
      ss >> db.scene_hash;
      if (db.scene_hash == "-") db.scene_hash.clear();
    } else if (tag == "params") {
      ss >> db.tau_d >> db.n >> db.k >> db.seed;
      if (!ss) throw ParseError("bad params line");
    } else if (tag == "count") {
      ss >> count;
      if (!ss || count < 0) throw ParseError("bad count line");
      db.indices.reserve(count);
    } else if (tag == "dim") {
      ss >> dim;
      if (!ss || dim < 0) throw ParseError("bad dim line");
    } else if (tag == "landmark") {
      int idx;
      ss >> idx;
      if (!ss) throw ParseError("bad landmark line");
      row_of_index[idx] = static_cast<int>(db.indices.size());
      db.indices.push_back(idx);
    } else if (tag == "feature") {
      if (dim <= 0) throw ParseError("feature line without dim");
      if (db.features.rows() == 0)
        db.features.resize(static_cast<Eigen::Index>(count), dim);
      int idx;
      ss >> idx;
      const auto it = row_of_index.find(idx);
      if (it == row_of_index.end())
        throw ParseError("feature for unknown landmark");
      for (int c = 0; c < dim; ++c) ss >> db.features(it->second, c);
      if (!ss) throw ParseError("bad feature line");
      ++feature_rows;
    } else if (tag == "end") {
      break;
    } else {
      throw ParseError("unknown record: " + tag);
    }
  }
  if (count < 0 || static_cast<int>(db.indices.size()) != count)
    throw ParseError("landmark count mismatch");
  if (dim > 0 && feature_rows != count)
    throw ParseError("feature rows do not cover all landmarks");
  db.feature_dim = dim;
  return db;
}

}  // namespace gloc
