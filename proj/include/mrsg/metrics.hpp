#pragma once

#include <vector>

#include "mrsg/geometry.hpp"

namespace mrsg {

/// Rotation and translation (no scale) minimizing the squared distance
/// between `t * est[i]` and `gt[i]` translations. Throws InsufficientPoses
/// below three pairs or on a size mismatch.
Pose align_trajectories(const std::vector<Pose>& est, const std::vector<Pose>& gt);

/// Translation errors (m) of `est` against `gt` after rigid alignment.
std::vector<double> aligned_errors(const std::vector<Pose>& est, const std::vector<Pose>& gt);

/// Root mean square of the aligned translation errors, in cm.
double compute_ate(const std::vector<Pose>& est, const std::vector<Pose>& gt);

/// RMSE over the concatenated per-trajectory aligned errors, in cm. Each
/// trajectory is aligned on its own.
double aggregate_ate(const std::vector<std::vector<Pose>>& est, const std::vector<std::vector<Pose>>& gt);

/// RMSE (cm) of nearest-neighbour distances from each estimated point to the
/// reference cloud. The clouds must already share a frame. Throws
/// InsufficientPoints on an empty input.
double compute_map_rmse(const PointCloud& est, const PointCloud& gt);

}  // namespace mrsg
