#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>
#include <vector>

namespace mrsg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

/// Rigid transform in 3D. `apply(p) = rotation * p + translation`.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Eigen::Quaterniond& q, const Vec3& t);
  Pose(const Mat3& r, const Vec3& t);

  static Pose Identity() { return {}; }
  static Pose FromYaw(double yaw, const Vec3& t = Vec3::Zero());
  static Pose Translation(const Vec3& t) { return {Eigen::Quaterniond::Identity(), t}; }
  static Pose Planar(double x, double y, double yaw) { return FromYaw(yaw, Vec3(x, y, 0.0)); }

  Pose inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Mat3 matrix() const { return rotation.toRotationMatrix(); }
  Eigen::Matrix4d homogeneous() const;
  double yaw() const;

  /// Right perturbation: `this * Exp(delta)` with delta = (dt, dtheta).
  Pose retract(const Vec6& delta) const;
};

/// `a * b` applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }
Pose inverse(const Pose& p);

/// Decoupled log map: (translation, rotation vector).
Vec6 log_map(const Pose& p);
Vec3 rotation_log(const Eigen::Quaterniond& q);
Eigen::Quaterniond rotation_exp(const Vec3& w);

double wrap_angle(double a);

/// Plane {p : normal . p + offset = 0}.
///
/// Planes produced by `canonicalize` / `transform_plane` follow a canonical
/// sign (offset <= 0; for offset == 0 the first nonzero normal component is
/// positive). Walls inside the graphs are kept *oriented* instead: their
/// normal faces the side the wall was observed from, which is what lets a
/// room tell its opposite walls apart.
struct Plane {
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;
  Mat3 covariance = Mat3::Identity();

  Plane() = default;
  Plane(const Vec3& n, double d, const Mat3& cov = Mat3::Identity());

  double signed_distance(const Vec3& p) const { return normal.dot(p) + offset; }

  /// Orientation-preserving re-expression: T maps frame-A points to frame B.
  Plane transformed(const Pose& t) const;

  Plane flipped() const { return Plane(-normal, -offset, covariance); }

  /// Minimal 3-DoF update: two tangent components on the normal sphere + offset.
  Plane retract(const Vec3& delta) const;
};

Plane canonicalize(const Plane& p);
/// Canonicalized re-expression of a plane.
Plane transform_plane(const Pose& t, const Plane& plane_in_a);

/// Orthonormal 3x2 basis of the tangent space of the unit sphere at n.
Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3& n);

/// Minimal difference `a (-) b` in b's tangent frame. The sign of a is aligned
/// with b first, so opposite-facing representations of one plane coincide.
Vec3 plane_difference(const Plane& a, const Plane& b);

double normal_angle(const Vec3& a, const Vec3& b);

struct PointCloud {
  std::vector<Vec3> points;
  std::string frame_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

PointCloud transform_cloud(const Pose& t, const PointCloud& cloud);

/// One output point per occupied voxel: the centroid of its points. Output is
/// ordered by voxel index, so it does not depend on the input order.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

}  // namespace mrsg
