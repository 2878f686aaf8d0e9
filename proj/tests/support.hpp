#pragma once

// Shared fixtures for unit and acceptance tests.

#include <random>
#include <string>

#include "mrsg/comms.hpp"
#include "mrsg/local_sgraph.hpp"
#include "mrsg/room_descriptor.hpp"
#include "mrsg/scenario.hpp"

namespace mrsg::testing {

inline const Scenario& sim_a() {
  static const Scenario sc = load_scenario(std::string(MRSG_SOURCE_DIR) + "/scenarios/sim_a.yaml");
  return sc;
}

inline const World& sim_a_world() {
  static const World w = generate_world(sim_a().world);
  return w;
}

/// Rectangular loop `inset` meters inside the room rectangle, starting at
/// the corner selected by `corner` (0..3) and going around once.
inline std::vector<Pose> room_loop(const World& w, int room, double inset, int corner = 0, double yaw = 0.3) {
  const Rect& r = w.spec.rooms[static_cast<std::size_t>(room)].rect;
  const std::vector<Vec2> c = {{r.x0 + inset, r.y0 + inset},
                               {r.x1 - inset, r.y0 + inset},
                               {r.x1 - inset, r.y1 - inset},
                               {r.x0 + inset, r.y1 - inset}};
  TrajectorySpec spec;
  spec.start_yaw = yaw;
  for (int i = 0; i <= 4; ++i) spec.waypoints.push_back(c[static_cast<std::size_t>((corner + i) % 4)]);
  return generate_path(w, spec).poses;
}

struct MappedRoom {
  RoomCloud cloud;
  /// Room frame in world coordinates.
  Pose world_frame;
  bool found = false;
};

/// Runs a local graph along `path` and returns the downsampled cloud of the
/// detected room containing the world point `inside`.
inline MappedRoom map_room(const World& w, const std::vector<Pose>& path, const SensorModel& s, std::uint64_t seed,
                           const Vec2& inside, const ScanContextConfig& cfg = {}) {
  Rng rng(seed);
  LocalSGraph g(0);
  for (std::size_t k = 0; k < path.size(); ++k) {
    const Pose odo = k == 0 ? Pose() : step_odometry(path[k - 1], path[k], s, rng);
    auto scan = raycast_scan(w, path[k], s, rng);
    g.process_keyframe(odo, std::move(scan), observe_planes(w, path[k], s, rng));
  }
  MappedRoom out;
  const Vec3 p = path.front().inverse().apply(Vec3(inside.x(), inside.y(), 0.0));
  const auto idx = g.room_containing(p.head<2>(), 0.0);
  if (!idx) return out;
  const RoomRecord& room = g.rooms()[*idx];
  out.cloud = downsample(build_room_cloud(g, room), cfg);
  out.world_frame = path.front() * g.room_frame(room);
  out.found = true;
  return out;
}

/// Maps room `room` of `w` from a loop `inset` meters inside its walls.
inline MappedRoom map_world_room(const World& w, int room, const SensorModel& s, std::uint64_t seed, int corner = 0,
                                 double inset = 2.0) {
  const auto path = room_loop(w, room, inset, corner);
  return map_room(w, path, s, seed, w.spec.rooms[static_cast<std::size_t>(room)].rect.center());
}

inline PointCloud planar_transformed(const PointCloud& c, const Pose& t) { return transform_cloud(t, c); }

/// Random message of the given type, already at wire precision so that
/// decode(encode(m)) must reproduce it exactly.
inline Envelope random_envelope(Rng& rng, MsgType type) {
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_int_distribution<int> small(0, 12);
  std::uniform_int_distribution<std::uint32_t> id(0, 1u << 20);
  Envelope env;
  env.type = type;
  env.sender = static_cast<AgentId>(rng() % 256);
  env.seq = static_cast<std::uint32_t>(rng());
  switch (type) {
    case MsgType::kDistilledGraph: {
      DistilledGraph g;
      g.sender = env.sender;
      g.seq = env.seq;
      const int nw = small(rng);
      for (int i = 0; i < nw; ++i) {
        Mat3 c;
        for (int k = 0; k < 9; ++k) c.data()[k] = 0.01 * u(rng);
        Plane p(Vec3(u(rng), u(rng), u(rng)).normalized(), u(rng), c * c.transpose());
        g.walls.push_back({id(rng), p});
      }
      const int nr = small(rng);
      for (int i = 0; i < nr; ++i) {
        DistilledRoom r;
        r.id = id(rng);
        r.center = Vec2(u(rng), u(rng));
        for (auto& w : r.walls) w = id(rng);
        g.rooms.push_back(r);
      }
      if (rng() % 2) g.floor = Vec3(u(rng), u(rng), u(rng));
      env.message = std::move(g);
      break;
    }
    case MsgType::kRoomDescriptor: {
      RoomDescriptor d;
      d.owner = env.sender;
      d.room = id(rng);
      d.config.sectors = 1 + small(rng) * 5;
      d.config.rings = 1 + small(rng) * 2;
      d.config.max_radius = std::abs(u(rng)) + 0.1;
      d.extents = Vec2(std::abs(u(rng)), std::abs(u(rng)));
      d.matrix.resize(d.config.rings, d.config.sectors);
      for (Eigen::Index k = 0; k < d.matrix.size(); ++k) {
        d.matrix.data()[k] = rng() % 3 == 0 ? 0.0f : static_cast<float>(std::abs(u(rng)) / 10.0);
      }
      env.message = std::move(d);
      break;
    }
    case MsgType::kCloudRequest:
      env.message = CloudRequest{static_cast<AgentId>(rng() % 256), id(rng)};
      break;
    case MsgType::kCloudResponse: {
      CloudResponse c;
      c.requester = static_cast<AgentId>(rng() % 256);
      c.room = id(rng);
      c.status = rng() % 4 == 0 ? CloudResponse::kUnknownRoom : CloudResponse::kOk;
      c.cloud.owner = env.sender;
      c.cloud.room = c.room;
      c.cloud.extents = Vec2(std::abs(u(rng)), std::abs(u(rng)));
      const int n = static_cast<int>(rng() % 500);
      for (int i = 0; i < n; ++i) c.cloud.cloud.points.emplace_back(u(rng), u(rng), u(rng));
      env.message = std::move(c);
      break;
    }
  }
  env.message = quantize(env.message);
  return env;
}

inline bool same_message(const Message& a, const Message& b) {
  if (a.index() != b.index()) return false;
  return std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        return x == std::get<T>(b);
      },
      a);
}

}  // namespace mrsg::testing
