#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mrsg/geometry.hpp"

namespace mrsg {

using Rng = std::mt19937_64;

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double depth() const { return y1 - y0; }
  Vec2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  bool contains(const Vec2& p, double margin = 0.0) const {
    return p.x() >= x0 - margin && p.x() <= x1 + margin && p.y() >= y0 - margin && p.y() <= y1 + margin;
  }
};

struct ClutterSpec {
  int count = 0;
  double min_size = 0.3;
  double max_size = 0.8;
  double min_height = 0.4;
  double max_height = 2.0;
  /// Objects stay inside a band along the walls, between the wall clearance
  /// and this distance from the nearest wall.
  double max_wall_distance = 0.8;
};

struct RoomSpec {
  std::string name;
  Rect rect;
  /// Corridors are world geometry only: they get walls but no room center.
  bool corridor = false;
  ClutterSpec clutter;
};

/// A gap cut into every wall side passing through `center`.
struct DoorSpec {
  Vec2 center = Vec2::Zero();
  double width = 1.0;
};

struct WorldSpec {
  std::uint64_t seed = 0;
  double wall_height = 3.0;
  double wall_clearance = 0.3;
  /// Clutter keeps this far from door centers so doorways stay passable.
  double door_keepout = 1.5;
  /// Clutter is redrawn until every pair of rooms has a Scan Context distance
  /// above this value. Zero disables the check.
  double uniqueness_threshold = 0.35;
  std::vector<RoomSpec> rooms;
  std::vector<DoorSpec> doors;
};

/// One face of a wall side: oriented plane (normal into its room) plus the
/// solid intervals along the side, measured from `start` towards `end`.
struct WallFace {
  Plane plane;
  Vec2 start = Vec2::Zero();
  Vec2 end = Vec2::Zero();
  std::vector<std::pair<double, double>> solid;
  double height = 3.0;
  int room = -1;

  double length() const { return (end - start).norm(); }
  Vec2 direction() const { return (end - start).normalized(); }
};

struct ClutterObject {
  enum class Shape { kBox, kPillar };
  Shape shape = Shape::kBox;
  Vec2 center = Vec2::Zero();
  double yaw = 0.0;
  /// Box half extents; a pillar uses half_extents.x() as its radius.
  Vec2 half_extents = Vec2::Zero();
  double height = 1.0;
  int room = -1;

  /// Horizontal radius of the footprint's bounding circle.
  double footprint_radius() const {
    return shape == Shape::kPillar ? half_extents.x() : half_extents.norm();
  }
};

struct World {
  WorldSpec spec;
  std::vector<WallFace> walls;
  std::vector<ClutterObject> clutter;
  /// Indices into spec.rooms of the four-wall rooms, and their centers.
  std::vector<int> room_index;
  std::vector<Vec2> room_centers;
  Vec3 floor_center = Vec3::Zero();
  /// Uniform surface samples of walls, floor and clutter.
  PointCloud reference;

  /// Index into spec.rooms of the rectangle containing p, or -1.
  int room_at(const Vec2& p) const;
};

struct SensorModel {
  int horizontal_rays = 360;
  int rings = 16;
  double vertical_fov_deg = 30.0;
  double max_range = 30.0;
  double range_sigma = 0.01;
  double normal_sigma = 0.01;
  double offset_sigma = 0.01;
  double odom_trans_sigma = 0.01;
  double odom_yaw_sigma = 0.002;
  /// Sensor origin above the body frame, which sits on the floor.
  double mount_height = 0.8;

  void validate() const;
  /// Same geometry with every noise term zeroed.
  SensorModel noiseless() const;
};

struct PlaneObservation {
  /// Body-frame plane, oriented towards the sensor.
  Plane plane;
  Mat3 covariance = Mat3::Zero();
  /// Index of the observed face in World::walls. Evaluation only.
  int face = -1;
};

World generate_world(const WorldSpec& spec, double reference_pitch = 0.05);

/// Distance along a unit ray to the nearest surface, or +inf.
double cast_ray(const World& world, const Vec3& origin, const Vec3& direction);

PointCloud raycast_scan(const World& world, const Pose& pose, const SensorModel& sensor, Rng& rng);

std::vector<PlaneObservation> observe_planes(const World& world, const Pose& pose, const SensorModel& sensor,
                                             Rng& rng);

Pose step_odometry(const Pose& gt_prev, const Pose& gt_next, const SensorModel& sensor, Rng& rng);

struct TrajectorySpec {
  std::vector<Vec2> waypoints;
  double start_yaw = 0.0;
  double speed = 0.5;
  double keyframe_spacing = 0.5;
};

struct GroundTruthPath {
  std::vector<Pose> poses;
  std::vector<double> stamps;
};

/// Samples the waypoint polyline every `keyframe_spacing` meters. The first
/// pose uses start_yaw; later poses face along their segment. Throws
/// InvalidSpec when a sample leaves the free space of `world`.
GroundTruthPath generate_path(const World& world, const TrajectorySpec& spec);

}  // namespace mrsg
