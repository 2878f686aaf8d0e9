#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "mrsg/factor_graph.hpp"
#include "mrsg/world.hpp"

namespace mrsg {

struct Keyframe {
  NodeId id;
  /// Raw scan in the body frame.
  PointCloud scan;
  /// Dead-reckoned pose at creation time.
  Pose odom_pose;
};

struct RoomRecord {
  NodeId room;
  /// x-pair then y-pair. Within each pair the first wall's normal points
  /// along +x (resp. +y) of the agent frame.
  std::array<NodeId, 4> walls;
  Vec2 center = Vec2::Zero();
  /// Width along the x-pair axis, depth along the y-pair axis.
  Vec2 extents = Vec2::Zero();
  std::vector<NodeId> members;
};

struct LocalParams {
  double assoc_angle_deg = 10.0;
  double assoc_offset = 0.35;
  double pair_angle_deg = 10.0;
  double min_gap = 1.5;
  double max_gap = 15.0;
  double membership_slack = 0.2;
  /// Fraction of each rectangle side that must be backed by scan points.
  double min_side_coverage = 0.5;
  double coverage_bin = 0.25;
  double coverage_distance = 0.08;
  /// Noise model used to weight factors; sigmas are floored at min_sigma.
  double odom_trans_sigma = 0.01;
  double odom_yaw_sigma = 0.002;
  double min_sigma = 1e-3;
  double room_sigma = 0.01;
  OptimizerConfig optimizer;
};

/// Per-agent four-layer graph: keyframes, walls, rooms and one floor.
class LocalSGraph {
 public:
  explicit LocalSGraph(AgentId agent, LocalParams params = {});

  /// Adds a keyframe from an odometry increment (ignored for the first
  /// keyframe, which is fixed at the identity), associates its planes and
  /// stores its scan.
  NodeId insert_keyframe(const Pose& odom_meas, PointCloud scan, const std::vector<PlaneObservation>& planes);

  /// Existing wall matching an agent-frame plane, or nothing. Offsets are
  /// compared as signed distances of `at` (the observing keyframe position),
  /// so normal noise does not grow with the distance from the agent origin.
  std::optional<NodeId> associate_plane(const Plane& obs_in_agent, const Vec3& at = Vec3::Zero()) const;

  /// Four-wall rooms around the latest keyframe not detected before.
  std::vector<RoomRecord> detect_rooms();

  /// Floor node at the mean room center (z = 0), held fixed.
  void update_floor();

  OptimizeResult optimize_local();

  /// insert_keyframe + optimize_local + detect_rooms + update_floor.
  std::vector<RoomRecord> process_keyframe(const Pose& odom_meas, PointCloud scan,
                                           const std::vector<PlaneObservation>& planes);

  AgentId agent() const { return agent_; }
  const LocalParams& params() const { return params_; }
  const FactorGraph& graph() const { return graph_; }
  FactorGraph& graph() { return graph_; }
  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  const std::vector<RoomRecord>& rooms() const { return rooms_; }
  std::vector<NodeId> wall_ids() const;

  Pose keyframe_pose(std::size_t k) const { return graph_.state<Pose>(keyframes_[k].id); }
  Pose current_pose() const;
  /// Room center and x-pair yaw from the current estimates.
  Pose room_frame(const RoomRecord& room) const;
  /// Index of a room whose rectangle holds the agent-frame point, if any.
  std::optional<std::size_t> room_containing(const Vec2& p, double slack) const;

  /// Fraction of the segment [a, b] (agent frame) along the wall backed by
  /// scan points.
  double side_coverage(const NodeId& wall, const Vec2& a, const Vec2& b) const;

 private:
  void update_coverage(const Pose& pose, const PointCloud& scan);
  void refresh_rooms();
  /// True when another wall runs through the rectangle bounded by w.
  bool has_interior_wall(const NodeId (&ids)[4], const Plane (&w)[4]) const;

  AgentId agent_;
  LocalParams params_;
  FactorGraph graph_;
  std::vector<Keyframe> keyframes_;
  std::vector<RoomRecord> rooms_;
  std::set<std::array<NodeId, 4>> room_keys_;
  std::map<NodeId, std::set<int>> coverage_;
  std::uint32_t next_wall_ = 0;
  Pose last_odom_pose_;
};

}  // namespace mrsg
