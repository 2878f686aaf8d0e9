#include "mrsg/metrics.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "mrsg/errors.hpp"
#include "mrsg/point_index.hpp"

namespace mrsg {

Pose align_trajectories(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  if (est.size() != gt.size()) throw InsufficientPoses("trajectories differ in length");
  if (est.size() < 3) throw InsufficientPoses("need at least three poses, got " + std::to_string(est.size()));
  Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(est.size()));
  Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(gt.size()));
  for (std::size_t i = 0; i < est.size(); ++i) {
    src.col(static_cast<Eigen::Index>(i)) = est[i].translation;
    dst.col(static_cast<Eigen::Index>(i)) = gt[i].translation;
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
  Pose out;
  out.rotation = Eigen::Quaterniond(Mat3(t.topLeftCorner<3, 3>())).normalized();
  out.translation = t.topRightCorner<3, 1>();
  return out;
}

std::vector<double> aligned_errors(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  const Pose t = align_trajectories(est, gt);
  std::vector<double> out;
  out.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) out.push_back((t.apply(est[i].translation) - gt[i].translation).norm());
  return out;
}

namespace {

double rms_cm(const std::vector<double>& e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return 100.0 * std::sqrt(s / static_cast<double>(e.size()));
}

}  // namespace

double compute_ate(const std::vector<Pose>& est, const std::vector<Pose>& gt) { return rms_cm(aligned_errors(est, gt)); }

double aggregate_ate(const std::vector<std::vector<Pose>>& est, const std::vector<std::vector<Pose>>& gt) {
  if (est.size() != gt.size() || est.empty()) throw InsufficientPoses("no trajectories to compare");
  std::vector<double> all;
  for (std::size_t r = 0; r < est.size(); ++r) {
    const auto e = aligned_errors(est[r], gt[r]);
    all.insert(all.end(), e.begin(), e.end());
  }
  return rms_cm(all);
}

double compute_map_rmse(const PointCloud& est, const PointCloud& gt) {
  if (est.empty() || gt.empty()) throw InsufficientPoints("map RMSE needs two non-empty clouds");
  const PointIndex index(gt.points, 0.25);
  double s = 0.0;
  for (const auto& p : est.points) {
    double d = std::numeric_limits<double>::infinity();
    if (auto hit = index.nearest(p, 0.25)) {
      d = hit->distance;
    } else if (auto far = index.nearest(p, 2.0)) {
      d = far->distance;
    } else {
      for (const auto& q : gt.points) d = std::min(d, (p - q).norm());
    }
    s += d * d;
  }
  return 100.0 * std::sqrt(s / static_cast<double>(est.size()));
}

}  // namespace mrsg
