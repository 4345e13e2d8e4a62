#pragma once

#include <vector>

#include <Eigen/Core>

namespace gloc {

/// Dense cell grid of D-dim descriptors. Cell (x, y) covers the pixel
/// rectangle [x, x+1) x [y, y+1); rows are stored top to bottom.
struct FeatureGrid {
  int width = 0;
  int height = 0;
  int dim = 0;
  Eigen::MatrixXd features;    // (width*height) x dim
  std::vector<char> occupied;  // per cell

  int cell(int x, int y) const { return y * width + x; }
  bool in_range(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
};

/// Per-cell depth at the feature-grid resolution; values <= 0 mean missing.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  double at(int x, int y) const { return depth[y * width + x]; }
};

}  // namespace gloc
