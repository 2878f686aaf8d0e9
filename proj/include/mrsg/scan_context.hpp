#pragma once

#include <Eigen/Core>

#include "mrsg/geometry.hpp"

namespace mrsg {

struct ScanContextConfig {
  int sectors = 60;
  int rings = 20;
  double max_radius = 10.0;
  double voxel = 0.1;
  /// Points lower than this (floor returns) are not binned.
  double min_height = 0.1;
};

/// Polar max-height grid, rings x sectors (one column per sector). Points at
/// or beyond max_radius and points below min_height are dropped; empty cells
/// hold 0.
Eigen::MatrixXf scan_context(const PointCloud& cloud, const ScanContextConfig& config);

struct ScMatch {
  double distance = 1.0;
  int shift = 0;
};

/// Minimum over column shifts s of the mean cosine dissimilarity between
/// col_j(a) and col_{(j+s) mod n}(b). Column pairs that are both empty are
/// skipped; an empty column against a non-empty one counts as dissimilarity 1.
/// Throws ConfigMismatch on differing dimensions.
ScMatch sc_distance(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b);

/// out.col(j) = m.col((j + k) mod n).
Eigen::MatrixXf shift_columns(const Eigen::MatrixXf& m, int k);

}  // namespace mrsg
