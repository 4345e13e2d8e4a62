#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gloc/scene.hpp"

namespace gloc {

struct ConsensusScores {
  std::vector<int> scores;  // one per gaussian, in [0, views_used]
  double tau_d = 0.0;
  int views_used = 0;
};

/// Number of training views in which a gaussian projects within tau_d
/// pixels of some detected keypoint; only views with the center inside the
/// image bounds count. Keypoint lookup uses a per-view grid index; the
/// result is defined by the plain double loop over gaussians x keypoints.
ConsensusScores consensus_scores(const Scene& scene, double tau_d_px);

/// Sparse landmark set: indices into the scene's gaussian list plus, once
/// fused, one feature row per landmark.
struct LandmarkDB {
  std::string scene_hash;  // hash of the scene file; empty until assigned
  double tau_d = 1.0;
  int n = 20000;
  int k = 32;
  std::uint64_t seed = 0;
  std::vector<int> indices;   // unique, ascending
  Eigen::MatrixXd features;   // |indices| x dim; 0 x 0 until fused
  int feature_dim = 0;

  bool has_features() const { return features.rows() > 0; }
};

/// Consensus-guided sampling: draws n anchor gaussians (without replacement
/// while n <= |G|, with replacement beyond), replaces each anchor by the
/// highest-scoring gaussian among its k nearest centers (self included,
/// ties on distance by index, ties on score by lowest index), and collects
/// the winners as a set.
///
/// RNG contract, fixed so independent reimplementations can reproduce the
/// stream: std::mt19937_64 seeded with `seed`; without-replacement anchors
/// come from a partial Fisher-Yates shuffle of 0..|G|-1 using
/// uniform_int_distribution<int>(i, |G|-1) at step i; with-replacement
/// anchors from uniform_int_distribution<int>(0, |G|-1) per draw.
LandmarkDB kc_sample(const Scene& scene, const ConsensusScores& scores, int n,
                     int k, std::uint64_t seed);

void save_landmark_db(const LandmarkDB& db, const std::string& path);
LandmarkDB load_landmark_db(const std::string& path);

}  // namespace gloc
