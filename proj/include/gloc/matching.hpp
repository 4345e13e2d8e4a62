#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "gloc/geometry.hpp"
#include "gloc/grids.hpp"

namespace gloc {

/// Cosine similarities between row-descriptor sets, with the dual-softmax
/// probabilities attached once computed.
struct SimilarityMatrix {
  Eigen::MatrixXd scores;                         // in [-1, 1]
  std::optional<Eigen::MatrixXd> probabilities;   // in (0, 1]
};

/// rows(query) x rows(reference) cosine similarity. Zero-norm descriptors
/// score 0 against everything.
SimilarityMatrix cosine_similarity(const Eigen::MatrixXd& query,
                                   const Eigen::MatrixXd& reference);

enum class MatchStage { kCoarseSparse, kCoarseDense, kLgcvFiltered, kFine };

struct MatchSet {
  struct Match {
    int query = 0;
    int reference = 0;
    double score = 0.0;
  };
  MatchStage stage = MatchStage::kCoarseSparse;
  std::vector<Match> matches;
};

/// One-directional argmax matching of every query descriptor to its most
/// similar reference (no mutual check).
MatchSet sparse_match(const Eigen::MatrixXd& query,
                      const Eigen::MatrixXd& reference);

/// softmax_rows(S/t) elementwise* softmax_cols(S/t).
Eigen::MatrixXd dual_softmax(const Eigen::MatrixXd& scores,
                             double temperature);

/// Mutual argmax pairs of a probability (or score) matrix; ties break to
/// the lowest index. The result is a partial matching.
MatchSet mnn(const Eigen::MatrixXd& prob);

struct LGCVConfig {
  int k_neighbors = 8;
  double tau_angular = 0.9659;  // pass iff |cos t_x - cos t_y| < 1 - tau_a
  double tau_scale = 0.1;
  int tau_support = 4;
  double epsilon = 1e-12;  // guards ratio denominators
  // The scale check has two published forms; the max-pairwise-difference of
  // the three corresponding edge ratios is normative. The variance rule
  // (var of (R_j, R_k, R_j*R_k) over a triangle's neighbor ratios,
  // sample-variance normalization) is kept as an alternate mode.
  bool variance_rule = false;

  void validate() const;
};

/// Local geometric consistency verification over matched 2D point sets:
/// match i survives iff at least tau_support of the (K choose 2) triangle
/// pairs built from its K-neighborhood (in X, excluding self) pass both the
/// angular and the scale consistency check. Triangle pairs containing an
/// edge shorter than 1e-9 px are skipped (no support, no penalty).
/// Throws TooFewMatches when |X| <= K.
std::vector<char> lgcv_filter(const std::vector<PixelPoint>& points_x,
                              const std::vector<PixelPoint>& points_y,
                              const LGCVConfig& config);

struct FineMatch {
  Vec2 query{0.0, 0.0};      // refined continuous grid coordinates
  Vec2 reference{0.0, 0.0};
  double score = 0.0;        // dual-softmax probability of the chosen pair
};

/// Window search around one coarse endpoint pair: dual-softmax + MNN over
/// the occupied cells of the two window x window patches (clamped to the
/// grid), keeping the most probable mutual pair. Throws EmptyWindow when
/// either patch has no occupied cell.
FineMatch fine_match_single(const Vec2& query_pt, const Vec2& reference_pt,
                            const FeatureGrid& query_grid,
                            const FeatureGrid& reference_grid,
                            double temperature, int window = 8);

struct FineMatchResult {
  std::vector<FineMatch> matches;
  std::vector<int> source;  // index into the input endpoint list
  int dropped = 0;          // endpoints whose windows had no occupied cell
};

/// Batch form; endpoint pairs whose windows are empty are dropped and
/// counted instead of raising.
FineMatchResult fine_match(const std::vector<std::pair<Vec2, Vec2>>& endpoints,
                           const FeatureGrid& query_grid,
                           const FeatureGrid& reference_grid,
                           double temperature, int window = 8);

}  // namespace gloc
