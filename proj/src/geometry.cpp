#include "mrsg/geometry.hpp"

#include <array>
#include <cmath>
#include <map>

namespace mrsg {

Pose::Pose(const Eigen::Quaterniond& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

Pose::Pose(const Mat3& r, const Vec3& t) : rotation(Eigen::Quaterniond(r).normalized()), translation(t) {}

Pose Pose::FromYaw(double yaw, const Vec3& t) {
  return {Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ())), t};
}

Pose Pose::inverse() const {
  const Eigen::Quaterniond qi = rotation.conjugate();
  return {qi, -(qi * translation)};
}

Eigen::Matrix4d Pose::homogeneous() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

double Pose::yaw() const {
  const Mat3 r = matrix();
  return std::atan2(r(1, 0), r(0, 0));
}

Pose Pose::retract(const Vec6& delta) const {
  return {rotation * rotation_exp(delta.tail<3>()), translation + rotation * delta.head<3>()};
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose inverse(const Pose& p) { return p.inverse(); }

Vec3 rotation_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const double sin_half = q.vec().norm();
  if (sin_half < 1e-12) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(sin_half, q.w());
  return q.vec() * (angle / sin_half);
}

Eigen::Quaterniond rotation_exp(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
}

Vec6 log_map(const Pose& p) {
  Vec6 out;
  out.head<3>() = p.translation;
  out.tail<3>() = rotation_log(p.rotation);
  return out;
}

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

Plane::Plane(const Vec3& n, double d, const Mat3& cov) : normal(n), offset(d), covariance(cov) {
  const double len = normal.norm();
  normal /= len;
  offset /= len;
}

Plane Plane::transformed(const Pose& t) const {
  Plane out = *this;
  out.normal = t.rotation * normal;
  out.offset = offset - out.normal.dot(t.translation);
  return out;
}

Plane Plane::retract(const Vec3& delta) const {
  Plane out = *this;
  out.normal = (normal + tangent_basis(normal) * delta.head<2>()).normalized();
  out.offset = offset + delta.z();
  return out;
}

Plane canonicalize(const Plane& p) {
  bool flip = p.offset > 0.0;
  if (p.offset == 0.0) {
    for (int i = 0; i < 3; ++i) {
      if (p.normal[i] != 0.0) {
        flip = p.normal[i] < 0.0;
        break;
      }
    }
  }
  return flip ? p.flipped() : p;
}

Plane transform_plane(const Pose& t, const Plane& plane_in_a) {
  return canonicalize(plane_in_a.transformed(t));
}

Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3& n) {
  // Built from the vertical axis so the basis is smooth for every
  // near-horizontal normal (all walls).
  Vec3 t1 = Vec3::UnitZ().cross(n);
  if (t1.norm() < 0.1) t1 = Vec3::UnitX().cross(n);
  t1.normalize();
  Eigen::Matrix<double, 3, 2> b;
  b.col(0) = t1;
  b.col(1) = n.cross(t1).normalized();
  return b;
}

Vec3 plane_difference(const Plane& a, const Plane& b) {
  const bool flip = a.normal.dot(b.normal) < 0.0;
  const Vec3 na = flip ? Vec3(-a.normal) : a.normal;
  const double da = flip ? -a.offset : a.offset;
  Vec3 r;
  r.head<2>() = tangent_basis(b.normal).transpose() * (na - b.normal);
  r.z() = da - b.offset;
  return r;
}

double normal_angle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

PointCloud transform_cloud(const Pose& t, const PointCloud& cloud) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.points.size());
  const Mat3 r = t.matrix();
  for (const auto& p : cloud.points) out.points.push_back(r * p + t.translation);
  return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  struct Accum {
    Vec3 sum = Vec3::Zero();
    int count = 0;
  };
  std::map<std::array<long long, 3>, Accum> grid;
  for (const auto& p : cloud.points) {
    const std::array<long long, 3> key{static_cast<long long>(std::floor(p.x() / voxel)),
                                       static_cast<long long>(std::floor(p.y() / voxel)),
                                       static_cast<long long>(std::floor(p.z() / voxel))};
    auto& a = grid[key];
    a.sum += p;
    ++a.count;
  }
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(grid.size());
  for (const auto& [key, a] : grid) out.points.push_back(a.sum / a.count);
  return out;
}

}  // namespace mrsg
