#include "doctest.h"

#include <map>
#include <set>

#include "mrsg/errors.hpp"
#include "mrsg/local_sgraph.hpp"
#include "mrsg/scenario.hpp"

using namespace mrsg;

namespace {

WorldSpec rooms_spec(std::vector<Rect> rects, std::vector<Vec2> doors = {}) {
  WorldSpec spec;
  spec.seed = 1;
  for (std::size_t i = 0; i < rects.size(); ++i) {
    RoomSpec r;
    r.name = "R" + std::to_string(i);
    r.rect = rects[i];
    spec.rooms.push_back(r);
  }
  for (const auto& d : doors) spec.doors.push_back({d, 1.0});
  return spec;
}

struct Drive {
  std::vector<Pose> gt;
  /// Which wall node each world face was associated with.
  std::map<int, std::set<NodeId>> face_walls;
  std::vector<RoomRecord> rooms;
};

/// Runs the local pipeline along `path` and records plane associations.
Drive drive(LocalSGraph& g, const World& w, const std::vector<Pose>& path, const SensorModel& s, Rng& rng) {
  Drive out;
  for (std::size_t k = 0; k < path.size(); ++k) {
    const Pose odo = k == 0 ? Pose() : step_odometry(path[k - 1], path[k], s, rng);
    const auto scan = raycast_scan(w, path[k], s, rng);
    const auto obs = observe_planes(w, path[k], s, rng);
    const std::size_t before = g.graph().factors().size();
    for (auto& r : g.process_keyframe(odo, scan, obs)) out.rooms.push_back(r);
    std::vector<NodeId> walls;
    for (std::size_t f = before; f < g.graph().factors().size(); ++f) {
      if (g.graph().factors()[f].kind == FactorKind::kPosePlane) walls.push_back(g.graph().factors()[f].nodes[1]);
    }
    REQUIRE(walls.size() == obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) out.face_walls[obs[i].face].insert(walls[i]);
    out.gt.push_back(path[k]);
  }
  return out;
}

std::vector<Pose> straight(const Vec2& a, const Vec2& b, double step, double yaw) {
  std::vector<Pose> out;
  const int n = static_cast<int>(std::round((b - a).norm() / step));
  for (int i = 0; i <= n; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / n);
    out.push_back(Pose::Planar(p.x(), p.y(), yaw));
  }
  return out;
}

double rmse_vs_gt(const LocalSGraph& g, const std::vector<Pose>& gt, bool dead_reckoning) {
  double se = 0.0;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const Pose truth = gt.front().inverse() * gt[k];
    const Pose est = dead_reckoning ? g.keyframes()[k].odom_pose : g.keyframe_pose(k);
    se += (est.translation - truth.translation).squaredNorm();
  }
  return std::sqrt(se / static_cast<double>(gt.size()));
}

Plane wall_plane(const Vec3& n, double d) { return Plane(n, d, Mat3::Identity() * 1e-4); }

PlaneObservation obs_of(const Plane& p) {
  PlaneObservation o;
  o.plane = p;
  o.covariance = Vec3(1e-4, 1e-4, 1e-4).asDiagonal();
  return o;
}

}  // namespace

TEST_CASE("first keyframe is fixed at the identity") {
  LocalSGraph g(0);
  const NodeId id = g.insert_keyframe(Pose::Planar(5, 5, 1), {}, {});
  CHECK(g.graph().node(id).fixed);
  CHECK(g.keyframe_pose(0).translation.norm() == 0.0);
  CHECK(g.graph().factors().empty());
}

TEST_CASE("plane observations create and re-use walls") {
  LocalSGraph g(0);
  const std::vector<PlaneObservation> box = {obs_of(wall_plane(Vec3(1, 0, 0), 2)), obs_of(wall_plane(Vec3(-1, 0, 0), 2)),
                                             obs_of(wall_plane(Vec3(0, 1, 0), 3)), obs_of(wall_plane(Vec3(0, -1, 0), 3))};
  g.insert_keyframe(Pose(), {}, box);
  CHECK(g.wall_ids().size() == 4);
  CHECK(g.graph().factors().size() == 4);
  g.insert_keyframe(Pose(), {}, box);
  CHECK(g.wall_ids().size() == 4);
  // One odometry factor plus four pose-plane factors.
  CHECK(g.graph().factors().size() == 9);
}

TEST_CASE("associate_plane rules") {
  LocalSGraph g(0);
  g.insert_keyframe(Pose(), {}, {obs_of(wall_plane(Vec3(1, 0, 0), 2.0)), obs_of(wall_plane(Vec3(1, 0, 0), 2.4))});
  REQUIRE(g.wall_ids().size() == 2);
  const NodeId near = g.wall_ids()[0], far = g.wall_ids()[1];
  CHECK(g.associate_plane(Plane(Vec3(1, 0, 0), 2.0)) == near);
  CHECK_FALSE(g.associate_plane(Plane(Vec3(0, 1, 0), 2.0)).has_value());
  // Candidates at offset differences 0.1 and 0.3: the closer one wins.
  CHECK(g.associate_plane(Plane(Vec3(1, 0, 0), 2.1)) == near);
  CHECK(g.associate_plane(Plane(Vec3(1, 0, 0), 2.35)) == far);
  // Facing the other way is a different wall.
  CHECK_FALSE(g.associate_plane(Plane(Vec3(-1, 0, 0), -2.0)).has_value());
}

TEST_CASE("room detection in a fully observed 4x6 room") {
  const World w = generate_world(rooms_spec({{0, 0, 4, 6}}));
  const SensorModel s = SensorModel().noiseless();
  Rng rng(1);
  LocalSGraph g(0);
  const auto path = straight(Vec2(1, 1), Vec2(2, 3), 0.5, 0.3);
  const Drive d = drive(g, w, path, s, rng);
  REQUIRE(g.rooms().size() == 1);
  // Oracle: world center expressed in the agent frame of the first pose.
  const Vec3 expected = path.front().inverse().apply(Vec3(2, 3, 0));
  CHECK((g.rooms()[0].center - expected.head<2>()).norm() < 1e-9);
  CHECK(g.rooms()[0].extents.minCoeff() == doctest::Approx(4.0));
  CHECK(g.rooms()[0].extents.maxCoeff() == doctest::Approx(6.0));
  // Re-entering or staying: no new room.
  CHECK(g.detect_rooms().empty());
  const NodeId floor{0, NodeKind::kFloor, 0};
  REQUIRE(g.graph().has_node(floor));
  CHECK((g.graph().state<Vec3>(floor) - Vec3(expected.x(), expected.y(), 0)).norm() < 1e-9);
}

TEST_CASE("three walls are not a room and no room means no floor") {
  LocalSGraph g(0);
  g.insert_keyframe(Pose(), {},
                    {obs_of(wall_plane(Vec3(1, 0, 0), 2)), obs_of(wall_plane(Vec3(-1, 0, 0), 2)),
                     obs_of(wall_plane(Vec3(0, 1, 0), 3))});
  CHECK(g.detect_rooms().empty());
  g.update_floor();
  CHECK_FALSE(g.graph().has_node(NodeId{0, NodeKind::kFloor, 0}));
}

TEST_CASE("floor is the mean of room centers") {
  // Rooms centered at (0,0) and (4,0) in the agent frame.
  const World w = generate_world(rooms_spec({{-2, -2, 2, 2}, {2, -2, 6, 2}}, {Vec2(2, 0)}));
  const SensorModel s = SensorModel().noiseless();
  Rng rng(1);
  LocalSGraph g(0);
  drive(g, w, straight(Vec2(0, 0), Vec2(4, 0), 0.5, 0.0), s, rng);
  REQUIRE(g.rooms().size() == 2);
  CHECK((g.rooms()[0].center - Vec2(0, 0)).norm() < 1e-9);
  CHECK((g.rooms()[1].center - Vec2(4, 0)).norm() < 1e-9);
  CHECK((g.graph().state<Vec3>(NodeId{0, NodeKind::kFloor, 0}) - Vec3(2, 0, 0)).norm() < 1e-9);
}

TEST_CASE("odometry-only graph equals dead reckoning") {
  SensorModel s;
  Rng rng(3);
  LocalSGraph g(0);
  const auto path = straight(Vec2(0, 0), Vec2(5, 0), 0.5, 0.0);
  for (std::size_t k = 0; k < path.size(); ++k) {
    const Pose odo = k == 0 ? Pose() : step_odometry(path[k - 1], path[k], s, rng);
    g.process_keyframe(odo, {}, {});
  }
  for (std::size_t k = 0; k < path.size(); ++k) {
    CHECK((g.keyframe_pose(k).translation - g.keyframes()[k].odom_pose.translation).norm() < 1e-9);
  }
}

TEST_CASE("SIM-A zero noise: exact trajectory and sound layers") {
  const Scenario sc = load_scenario(std::string(MRSG_SOURCE_DIR) + "/scenarios/sim_a.yaml");
  const World w = generate_world(sc.world);
  for (std::size_t r = 0; r < sc.robots.size(); ++r) {
    Rng rng(r);
    LocalSGraph g(static_cast<AgentId>(r));
    const auto path = generate_path(w, sc.robots[r]).poses;
    const Drive d = drive(g, w, path, sc.sensor.noiseless(), rng);
    CHECK(rmse_vs_gt(g, path, false) < 1e-6);
    CHECK(g.rooms().size() == 4);

    // Every room is a real room: its center maps onto a world room center.
    for (const auto& room : g.rooms()) {
      const Vec3 c = path.front().apply(Vec3(room.center.x(), room.center.y(), 0));
      double best = 1e9;
      for (const auto& wc : w.room_centers) best = std::min(best, (wc - c.head<2>()).norm());
      CHECK(best < 1e-6);
    }
    // No physical face is split over two wall nodes.
    for (const auto& [face, walls] : d.face_walls) CHECK(walls.size() == 1);

    // Layer integrity.
    std::map<NodeId, int> pose_plane, room_wall;
    for (const auto& f : g.graph().factors()) {
      if (f.kind == FactorKind::kPosePlane) ++pose_plane[f.nodes[1]];
      if (f.kind == FactorKind::kRoomWall) {
        ++room_wall[f.nodes[0]];
        for (std::size_t i = 1; i < 5; ++i) CHECK(g.graph().has_node(f.nodes[i]));
      }
    }
    for (const auto& id : g.wall_ids()) CHECK(pose_plane[id] >= 1);
    for (const auto& room : g.rooms()) CHECK(room_wall[room.room] == 1);
    CHECK(g.graph().has_node(NodeId{static_cast<AgentId>(r), NodeKind::kFloor, 0}));

    // Membership: members lie in their room rectangle (0.2 m slack).
    for (const auto& room : g.rooms()) {
      CHECK(!room.members.empty());
      const Pose frame = g.room_frame(room);
      for (const auto& m : room.members) {
        const Vec3 local = frame.inverse().apply(g.graph().state<Pose>(m).translation);
        CHECK(std::abs(local.x()) <= 0.5 * room.extents.x() + 0.2 + 1e-9);
        CHECK(std::abs(local.y()) <= 0.5 * room.extents.y() + 0.2 + 1e-9);
      }
    }
  }
}

TEST_CASE("noisy loop: optimized trajectory beats dead reckoning") {
  const World w = generate_world(rooms_spec({{0, 0, 8, 7}}));
  SensorModel s;
  s.odom_trans_sigma = 0.03;
  s.odom_yaw_sigma = 0.01;
  std::vector<Pose> path;
  for (const auto& seg : {std::pair{Vec2(2, 2), Vec2(6, 2)}, std::pair{Vec2(6, 2), Vec2(6, 5)},
                          std::pair{Vec2(6, 5), Vec2(2, 5)}, std::pair{Vec2(2, 5), Vec2(2, 2)}}) {
    const auto piece = straight(seg.first, seg.second, 0.5, std::atan2(seg.second.y() - seg.first.y(),
                                                                           seg.second.x() - seg.first.x()));
    path.insert(path.end(), piece.begin() + (path.empty() ? 0 : 1), piece.end());
  }
  int wins = 0;
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    LocalSGraph g(0);
    drive(g, w, path, s, rng);
    if (rmse_vs_gt(g, path, false) < rmse_vs_gt(g, path, true)) ++wins;
  }
  CHECK(wins == 5);
}
