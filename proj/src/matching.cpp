#include "gloc/matching.hpp"

#include <algorithm>
#include <cmath>

#include "gloc/errors.hpp"

namespace gloc {

namespace {
constexpr double kDegenerateEdgePx = 1e-9;
}

SimilarityMatrix cosine_similarity(const Eigen::MatrixXd& query,
                                   const Eigen::MatrixXd& reference) {
  if (query.rows() == 0 || reference.rows() == 0)
    throw InvalidParams("descriptor sets must be non-empty");
  if (query.cols() != reference.cols())
    throw DimensionMismatch("descriptor dimensions disagree");

  auto normalize_rows = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double n = m.row(r).norm();
      if (n >= 1e-12) out.row(r) /= n;
      else out.row(r).setZero();
    }
    return out;
  };

  SimilarityMatrix sim;
  sim.scores = normalize_rows(query) * normalize_rows(reference).transpose();
  return sim;
}

MatchSet sparse_match(const Eigen::MatrixXd& query,
                      const Eigen::MatrixXd& reference) {
  const SimilarityMatrix sim = cosine_similarity(query, reference);
  MatchSet out;
  out.stage = MatchStage::kCoarseSparse;
  out.matches.reserve(sim.scores.rows());
  for (Eigen::Index r = 0; r < sim.scores.rows(); ++r) {
    Eigen::Index best;
    const double score = sim.scores.row(r).maxCoeff(&best);
    out.matches.push_back(
        {static_cast<int>(r), static_cast<int>(best), score});
  }
  return out;
}

Eigen::MatrixXd dual_softmax(const Eigen::MatrixXd& scores,
                             double temperature) {
  if (temperature <= 0.0) throw InvalidParams("temperature must be > 0");
  if (scores.size() == 0) throw InvalidParams("empty similarity matrix");

  const Eigen::MatrixXd s = scores / temperature;
  Eigen::MatrixXd rows(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const Eigen::ArrayXd e = (s.row(r).array() - s.row(r).maxCoeff()).exp();
    rows.row(r) = (e / e.sum()).matrix();
  }
  Eigen::MatrixXd cols(s.rows(), s.cols());
  for (Eigen::Index c = 0; c < s.cols(); ++c) {
    const Eigen::ArrayXd e = (s.col(c).array() - s.col(c).maxCoeff()).exp();
    cols.col(c) = (e / e.sum()).matrix();
  }
  return rows.cwiseProduct(cols);
}

MatchSet mnn(const Eigen::MatrixXd& prob) {
  if (prob.size() == 0) throw InvalidParams("empty matrix");
  MatchSet out;
  out.stage = MatchStage::kCoarseDense;
  std::vector<Eigen::Index> col_best(prob.cols());
  for (Eigen::Index c = 0; c < prob.cols(); ++c) prob.col(c).maxCoeff(&col_best[c]);
  for (Eigen::Index r = 0; r < prob.rows(); ++r) {
    Eigen::Index best;
    const double score = prob.row(r).maxCoeff(&best);
    if (col_best[best] == r)
      out.matches.push_back(
          {static_cast<int>(r), static_cast<int>(best), score});
  }
  return out;
}

void LGCVConfig::validate() const {
  if (k_neighbors < 2) throw InvalidParams("lgcv needs k_neighbors >= 2");
  if (tau_angular <= 0.0 || tau_angular >= 1.0)
    throw InvalidParams("tau_angular must be in (0, 1)");
  if (tau_scale <= 0.0) throw InvalidParams("tau_scale must be > 0");
  if (tau_support < 0) throw InvalidParams("tau_support must be >= 0");
  if (epsilon < 0.0) throw InvalidParams("epsilon must be >= 0");
}

std::vector<char> lgcv_filter(const std::vector<PixelPoint>& points_x,
                              const std::vector<PixelPoint>& points_y,
                              const LGCVConfig& config) {
  config.validate();
  if (points_x.size() != points_y.size())
    throw LengthMismatch("point sets differ in size");
  const int n = static_cast<int>(points_x.size());
  const int K = config.k_neighbors;
  if (n <= K)
    throw TooFewMatches("lgcv needs more matches than k_neighbors");

  const double angular_limit = 1.0 - config.tau_angular;
  std::vector<char> valid(n, 0);

  // Per-match scratch, reused across matches.
  std::vector<std::pair<double, int>> dist(n);
  std::vector<int> nbr(K);
  std::vector<Eigen::Vector2d> dx(K), dy(K), ux(K), uy(K);
  std::vector<double> lx(K), ly(K), ratio(K);

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double du = points_x[j].u - points_x[i].u;
      const double dv = points_x[j].v - points_x[i].v;
      dist[j] = {du * du + dv * dv, j};
    }
    dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
    std::nth_element(dist.begin(), dist.begin() + (K - 1), dist.end());
    for (int j = 0; j < K; ++j) nbr[j] = dist[j].second;
    std::sort(nbr.begin(), nbr.end());

    for (int j = 0; j < K; ++j) {
      const int m = nbr[j];
      dx[j] = Eigen::Vector2d(points_x[m].u - points_x[i].u,
                              points_x[m].v - points_x[i].v);
      dy[j] = Eigen::Vector2d(points_y[m].u - points_y[i].u,
                              points_y[m].v - points_y[i].v);
      lx[j] = dx[j].norm();
      ly[j] = dy[j].norm();
      ux[j] = lx[j] > 0.0 ? Eigen::Vector2d(dx[j] / lx[j])
                          : Eigen::Vector2d::Zero();
      uy[j] = ly[j] > 0.0 ? Eigen::Vector2d(dy[j] / ly[j])
                          : Eigen::Vector2d::Zero();
      ratio[j] = config.variance_rule
                     ? ly[j] / (lx[j] + config.epsilon)  // target over source
                     : lx[j] / (ly[j] + config.epsilon); // side ratio l_x/l_y
    }

    int support = 0;
    for (int a = 0; a < K; ++a) {
      for (int b = a + 1; b < K; ++b) {
        if (lx[a] < kDegenerateEdgePx || lx[b] < kDegenerateEdgePx ||
            ly[a] < kDegenerateEdgePx || ly[b] < kDegenerateEdgePx)
          continue;
        // Third edge, between the two neighbors.
        const Eigen::Vector2d ex(points_x[nbr[b]].u - points_x[nbr[a]].u,
                                 points_x[nbr[b]].v - points_x[nbr[a]].v);
        const Eigen::Vector2d ey(points_y[nbr[b]].u - points_y[nbr[a]].u,
                                 points_y[nbr[b]].v - points_y[nbr[a]].v);
        const double lex = ex.norm();
        const double ley = ey.norm();
        if (lex < kDegenerateEdgePx || ley < kDegenerateEdgePx) continue;

        // Angle at the shared vertex i.
        const double cos_x = ux[a].dot(ux[b]);
        const double cos_y = uy[a].dot(uy[b]);
        if (std::abs(cos_x - cos_y) >= angular_limit) continue;

        bool scale_ok;
        if (config.variance_rule) {
          const double r0 = ratio[a];
          const double r1 = ratio[b];
          const double r2 = r0 * r1;
          const double mean = (r0 + r1 + r2) / 3.0;
          const double var = ((r0 - mean) * (r0 - mean) +
                              (r1 - mean) * (r1 - mean) +
                              (r2 - mean) * (r2 - mean)) /
                             2.0;
          scale_ok = var < config.tau_scale;
        } else {
          const double sa = ratio[a];
          const double sb = ratio[b];
          const double sc = lex / (ley + config.epsilon);
          const double spread = std::max({std::abs(sa - sb),
                                          std::abs(sa - sc),
                                          std::abs(sb - sc)});
          scale_ok = spread < config.tau_scale;
        }
        if (scale_ok) ++support;
      }
    }
    valid[i] = support >= config.tau_support ? 1 : 0;
  }
  return valid;
}

namespace {

struct WindowCells {
  std::vector<int> cell_x, cell_y;  // grid coordinates of occupied cells
  Eigen::MatrixXd descriptors;
};

WindowCells collect_window(const Vec2& center, const FeatureGrid& grid,
                           int window) {
  const int x0 = std::clamp(static_cast<int>(std::floor(center.x())) -
                                window / 2,
                            0, std::max(0, grid.width - window));
  const int y0 = std::clamp(static_cast<int>(std::floor(center.y())) -
                                window / 2,
                            0, std::max(0, grid.height - window));
  const int x1 = std::min(grid.width, x0 + window);
  const int y1 = std::min(grid.height, y0 + window);

  WindowCells out;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      if (grid.occupied[grid.cell(x, y)]) {
        out.cell_x.push_back(x);
        out.cell_y.push_back(y);
      }
  out.descriptors.resize(static_cast<Eigen::Index>(out.cell_x.size()),
                         grid.dim);
  for (std::size_t i = 0; i < out.cell_x.size(); ++i)
    out.descriptors.row(static_cast<Eigen::Index>(i)) =
        grid.features.row(grid.cell(out.cell_x[i], out.cell_y[i]));
  return out;
}

}  // namespace

FineMatch fine_match_single(const Vec2& query_pt, const Vec2& reference_pt,
                            const FeatureGrid& query_grid,
                            const FeatureGrid& reference_grid,
                            double temperature, int window) {
  const WindowCells wq = collect_window(query_pt, query_grid, window);
  const WindowCells wr = collect_window(reference_pt, reference_grid, window);
  if (wq.cell_x.empty() || wr.cell_x.empty())
    throw EmptyWindow("window contains no occupied cells");

  const SimilarityMatrix sim = cosine_similarity(wq.descriptors, wr.descriptors);
  const Eigen::MatrixXd prob = dual_softmax(sim.scores, temperature);
  const MatchSet pairs = mnn(prob);
  if (pairs.matches.empty())
    throw EmptyWindow("no mutual pair in window");  // cannot happen: the
  // global argmax of a finite matrix is always mutual.

  // Most probable mutual pair; ties prefer the query cell nearest the
  // window center, then the lowest indices.
  const MatchSet::Match* best = nullptr;
  double best_center_d2 = 0.0;
  for (const auto& m : pairs.matches) {
    const double du = wq.cell_x[m.query] + 0.5 - query_pt.x();
    const double dv = wq.cell_y[m.query] + 0.5 - query_pt.y();
    const double d2 = du * du + dv * dv;
    if (!best || m.score > best->score ||
        (m.score == best->score && d2 < best_center_d2)) {
      best = &m;
      best_center_d2 = d2;
    }
  }

  FineMatch out;
  out.query = Vec2(wq.cell_x[best->query] + 0.5, wq.cell_y[best->query] + 0.5);
  out.reference =
      Vec2(wr.cell_x[best->reference] + 0.5, wr.cell_y[best->reference] + 0.5);
  out.score = best->score;
  return out;
}

FineMatchResult fine_match(const std::vector<std::pair<Vec2, Vec2>>& endpoints,
                           const FeatureGrid& query_grid,
                           const FeatureGrid& reference_grid,
                           double temperature, int window) {
  FineMatchResult out;
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    try {
      out.matches.push_back(fine_match_single(endpoints[i].first,
                                              endpoints[i].second, query_grid,
                                              reference_grid, temperature,
                                              window));
      out.source.push_back(static_cast<int>(i));
    } catch (const EmptyWindow&) {
      ++out.dropped;
    }
  }
  return out;
}

}  // namespace gloc
