#include <cmath>

#include "mrsg/errors.hpp"
#include "mrsg/factor_graph.hpp"

namespace mrsg {

namespace {

constexpr double kPairCos = 0.86602540378443865;  // cos(30 deg)

void check_pair(const Plane& a, const Plane& b) {
  if (a.normal.dot(b.normal) > -kPairCos) {
    throw DegeneratePair("wall pair is not anti-parallel within 30 degrees");
  }
}

}  // namespace

Vec6 residual_odometry(const Pose& ti, const Pose& tj, const Pose& meas) {
  return log_map(meas.inverse() * ti.inverse() * tj);
}

Vec3 residual_pose_plane(const Pose& t, const Plane& wall, const Plane& meas) {
  return plane_difference(wall.transformed(t.inverse()), meas);
}

Vec2 pair_axis(const Plane& w1, const Plane& w2) {
  check_pair(w1, w2);
  return (w1.normal - w2.normal).head<2>().normalized();
}

Vec2 room_center(const Plane& w1, const Plane& w2, const Plane& w3, const Plane& w4) {
  check_pair(w1, w2);
  check_pair(w3, w4);
  // Each pair's midline is where both signed distances agree:
  // (n1 - n2) . p = -(d1 - d2).
  Eigen::Matrix2d a;
  a.row(0) = (w1.normal - w2.normal).head<2>().transpose();
  a.row(1) = (w3.normal - w4.normal).head<2>().transpose();
  const Vec2 b(-(w1.offset - w2.offset), -(w3.offset - w4.offset));
  const double sin_between = std::abs(a.determinant()) / (a.row(0).norm() * a.row(1).norm());
  if (sin_between < 0.5) throw DegeneratePair("room wall pairs are near parallel");
  return a.partialPivLu().solve(b);
}

Vec2 residual_room_wall(const Vec2& room, const Plane& w1, const Plane& w2, const Plane& w3,
                        const Plane& w4) {
  return room - room_center(w1, w2, w3, w4);
}

Vec3 residual_room_match(const Pose& origin_b, const Vec2& room_a, const Vec2& room_b, const Pose& meas) {
  const Pose ca = Pose::Translation(Vec3(room_a.x(), room_a.y(), 0.0));
  const Pose cb = Pose::Translation(Vec3(room_b.x(), room_b.y(), 0.0));
  const Pose m = ca.inverse() * origin_b * cb;
  return {m.translation.x() - meas.translation.x(), m.translation.y() - meas.translation.y(),
          wrap_angle(m.yaw() - meas.yaw())};
}

Vec3 residual_wall_match(const Pose& origin_b, const Plane& wall_a, const Plane& wall_b) {
  return plane_difference(wall_b.transformed(origin_b), wall_a);
}

Vec3 residual_planar_prior(const Pose& t) {
  const Vec3 up = t.rotation * Vec3::UnitZ();
  return {t.translation.z(), up.x(), up.y()};
}

std::size_t expected_arity(FactorKind kind) {
  switch (kind) {
    case FactorKind::kOdometry:
    case FactorKind::kPosePlane:
      return 2;
    case FactorKind::kRoomWall:
      return 5;
    case FactorKind::kRoomMatch:
    case FactorKind::kWallMatch:
      return 3;
    case FactorKind::kPrior:
      return 1;
  }
  return 0;
}

int residual_dim(const Factor& f) {
  switch (f.kind) {
    case FactorKind::kOdometry:
      return 6;
    case FactorKind::kPosePlane:
    case FactorKind::kRoomMatch:
    case FactorKind::kWallMatch:
      return 3;
    case FactorKind::kRoomWall:
      return 2;
    case FactorKind::kPrior:
      if (std::holds_alternative<Pose>(f.measurement)) return 6;
      if (std::holds_alternative<Vec2Prior>(f.measurement)) return 2;
      return 3;
  }
  return 0;
}

Eigen::VectorXd factor_residual(const Factor& f, std::span<const NodeState> s) {
  switch (f.kind) {
    case FactorKind::kOdometry:
      return residual_odometry(std::get<Pose>(s[0]), std::get<Pose>(s[1]), std::get<Pose>(f.measurement));
    case FactorKind::kPosePlane:
      return residual_pose_plane(std::get<Pose>(s[0]), std::get<Plane>(s[1]), std::get<Plane>(f.measurement));
    case FactorKind::kRoomWall:
      return residual_room_wall(std::get<Vec2>(s[0]), std::get<Plane>(s[1]), std::get<Plane>(s[2]),
                                std::get<Plane>(s[3]), std::get<Plane>(s[4]));
    case FactorKind::kRoomMatch:
      return residual_room_match(std::get<Pose>(s[0]), std::get<Vec2>(s[1]), std::get<Vec2>(s[2]),
                                 std::get<RoomMatchMeasurement>(f.measurement).transform);
    case FactorKind::kWallMatch:
      return residual_wall_match(std::get<Pose>(s[0]), std::get<Plane>(s[1]), std::get<Plane>(s[2]));
    case FactorKind::kPrior:
      if (const auto* p = std::get_if<Pose>(&f.measurement)) {
        return log_map(p->inverse() * std::get<Pose>(s[0]));
      }
      if (const auto* pl = std::get_if<Plane>(&f.measurement)) {
        return plane_difference(std::get<Plane>(s[0]), *pl);
      }
      if (const auto* v = std::get_if<Vec2Prior>(&f.measurement)) {
        return std::get<Vec2>(s[0]) - v->value;
      }
      return residual_planar_prior(std::get<Pose>(s[0]));
  }
  return {};
}

}  // namespace mrsg
