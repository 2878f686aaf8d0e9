#include "mrsg/collab.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "mrsg/errors.hpp"

namespace mrsg {

namespace {

NodeId origin_id(AgentId p) { return {p, NodeKind::kOrigin, 0}; }
NodeId wall_id(AgentId p, std::uint32_t id) { return {p, NodeKind::kWall, id}; }
NodeId room_id(AgentId p, std::uint32_t id) { return {p, NodeKind::kRoom, id}; }

Pose planar_frame(const Vec2& center, const Plane& w1, const Plane& w2) {
  const Vec2 axis = pair_axis(w1, w2);
  return Pose::FromYaw(std::atan2(axis.y(), axis.x()), Vec3(center.x(), center.y(), 0.0));
}

Eigen::MatrixXd inverse_covariance(const Mat3& cov) {
  const Mat3 c = 0.5 * (cov + cov.transpose()) + 1e-12 * Mat3::Identity();
  Eigen::LDLT<Mat3> ldlt(c);
  Mat3 info = ldlt.solve(Mat3::Identity());
  return 0.5 * (info + info.transpose());
}

}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::kRooms:
      return "rooms";
    case Mode::kRoomsFA:
      return "rooms_fa";
    case Mode::kRoomsWalls:
      return "rooms_walls";
    case Mode::kFull:
      return "full";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::kRooms, Mode::kRoomsFA, Mode::kRoomsWalls, Mode::kFull}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + s + "' (rooms, rooms_fa, rooms_walls, full)");
}

bool uses_fine_alignment(Mode m) { return m == Mode::kRoomsFA || m == Mode::kFull; }
bool uses_wall_matches(Mode m) { return m == Mode::kRoomsWalls || m == Mode::kFull; }

CollabGraph::CollabGraph(const LocalSGraph& local, CollabParams params) : local_(&local), params_(params) {}

void CollabGraph::integrate_distilled(const DistilledGraph& msg) {
  auto it = peers_.find(msg.sender);
  if (it != peers_.end() && msg.seq <= it->second.snapshot.seq) {
    throw StaleMessage("distilled graph " + std::to_string(msg.seq) + " from agent " + std::to_string(msg.sender) +
                       " is not newer than " + std::to_string(it->second.snapshot.seq));
  }
  peers_[msg.sender].snapshot = msg;
}

bool CollabGraph::collaborative(AgentId p) const {
  auto it = peers_.find(p);
  return it != peers_.end() && !it->second.matches.empty();
}

std::optional<Pose> CollabGraph::peer_origin(AgentId p) const {
  auto it = peers_.find(p);
  if (it == peers_.end() || !it->second.placed) return std::nullopt;
  return it->second.origin;
}

Pose CollabGraph::peer_room_frame(AgentId p, std::uint32_t room) const {
  auto it = peers_.find(p);
  if (it == peers_.end()) throw UnknownRoom("no snapshot from agent " + std::to_string(p));
  const DistilledGraph& g = it->second.snapshot;
  for (const auto& r : g.rooms) {
    if (r.id != room) continue;
    const DistilledWall* w1 = g.wall(r.walls[0]);
    const DistilledWall* w2 = g.wall(r.walls[1]);
    if (!w1 || !w2) break;
    return planar_frame(r.center, w1->plane, w2->plane);
  }
  throw UnknownRoom("agent " + std::to_string(p) + " has no room " + std::to_string(room));
}

const RoomRecord& CollabGraph::local_room(std::uint32_t index) const {
  for (const auto& r : local_->rooms()) {
    if (r.room.index == index) return r;
  }
  throw UnknownRoom("no local room " + std::to_string(index));
}

Eigen::Matrix3d CollabGraph::match_information(const RoomMatch& m, double lever) const {
  const double sigma =
      m.registered ? std::max(m.fitness, params_.min_match_sigma) : params_.unregistered_sigma;
  const double scale = m.registered ? 1.0 : params_.non_fa_information_scale;
  return scale / (sigma * sigma) * Vec3(1.0, 1.0, lever * lever).asDiagonal().toDenseMatrix();
}

void CollabGraph::add_match_factors(const RoomMatch& match, Mode mode) {
  const RoomRecord& room = local_room(match.local_room);
  const Pose fb = peer_room_frame(match.peer, match.peer_room);
  Peer& peer = peers_.at(match.peer);
  const DistilledGraph& snap = peer.snapshot;
  const Pose fa = local_->room_frame(room);
  const Pose origin = fa * match.transform * fb.inverse();
  const double lever = std::max(1.0, 0.5 * room.extents.norm());
  const Eigen::Matrix3d info = match_information(match, lever);

  Factor rf;
  rf.kind = FactorKind::kRoomMatch;
  rf.nodes = {origin_id(match.peer), room.room, room_id(match.peer, match.peer_room)};
  rf.measurement = RoomMatchMeasurement{Pose::FromYaw(fa.yaw()) * match.transform * Pose::FromYaw(-fb.yaw())};
  rf.information = info;
  rf.robust = true;
  peer.match_factors.push_back(rf);
  peer.matches.push_back(match);
  if (!peer.placed) {
    peer.origin = origin;
    peer.placed = true;
  }
  if (!uses_wall_matches(mode)) return;

  // Pair each local wall with the peer wall whose normal lands closest once
  // the match transform is applied. Greedy on angle, one partner each.
  const DistilledRoom* pr = nullptr;
  for (const auto& r : snap.rooms) {
    if (r.id == match.peer_room) pr = &r;
  }
  struct Pair {
    double angle;
    int local, remote;
  };
  std::vector<Pair> pairs;
  const double max_angle = params_.wall_pair_angle_deg * M_PI / 180.0;
  for (int i = 0; i < 4; ++i) {
    const Plane& wa = local_->graph().state<Plane>(room.walls[static_cast<std::size_t>(i)]);
    for (int j = 0; j < 4; ++j) {
      const DistilledWall* wb = snap.wall(pr->walls[static_cast<std::size_t>(j)]);
      if (!wb) continue;
      const Plane moved = wb->plane.transformed(origin);
      const double angle = normal_angle(wa.normal, moved.normal);
      // Distances from the local room center, so a small yaw error does not
      // grow with the room's distance from the origin.
      const double gap = std::abs(wa.signed_distance(fa.translation) - moved.signed_distance(fa.translation));
      if (angle <= max_angle && gap <= params_.wall_pair_offset) {
        pairs.push_back({angle, i, j});
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return a.angle != b.angle ? a.angle < b.angle : std::tie(a.local, a.remote) < std::tie(b.local, b.remote);
  });
  std::array<int, 4> partner{-1, -1, -1, -1};
  std::array<bool, 4> taken{};
  for (const auto& p : pairs) {
    if (partner[static_cast<std::size_t>(p.local)] >= 0 || taken[static_cast<std::size_t>(p.remote)]) continue;
    partner[static_cast<std::size_t>(p.local)] = p.remote;
    taken[static_cast<std::size_t>(p.remote)] = true;
  }
  if (std::count(partner.begin(), partner.end(), -1) != 0) {
    throw WallPairingFailed("walls of local room " + std::to_string(match.local_room) + " and room " +
                            std::to_string(match.peer_room) + " of agent " + std::to_string(match.peer) +
                            " do not pair up");
  }
  // Tangent components of the normal act at the room's lever arm.
  const Eigen::Matrix3d wall_info =
      info(0, 0) * Vec3(lever * lever, lever * lever, 1.0).asDiagonal().toDenseMatrix();
  for (std::size_t i = 0; i < 4; ++i) {
    Factor wf;
    wf.kind = FactorKind::kWallMatch;
    wf.nodes = {origin_id(match.peer), room.walls[i],
                wall_id(match.peer, pr->walls[static_cast<std::size_t>(partner[i])])};
    wf.information = wall_info;
    wf.robust = true;
    peer.match_factors.push_back(wf);
  }
}

FactorGraph CollabGraph::peer_graph(AgentId p) const {
  FactorGraph g;
  const Peer& peer = peers_.at(p);
  const DistilledGraph& snap = peer.snapshot;
  g.add_node(origin_id(p), peer.origin);
  Factor planar;
  planar.kind = FactorKind::kPrior;
  planar.nodes = {origin_id(p)};
  planar.measurement = PlanarPrior{};
  planar.information = Eigen::Matrix3d::Identity() / (params_.planar_prior_sigma * params_.planar_prior_sigma);
  g.add_factor(planar);

  for (const auto& w : snap.walls) {
    g.add_node(wall_id(p, w.id), w.plane);
    Factor f;
    f.kind = FactorKind::kPrior;
    f.nodes = {wall_id(p, w.id)};
    f.measurement = w.plane;
    f.information = inverse_covariance(w.plane.covariance);
    g.add_factor(f);
  }
  for (const auto& r : snap.rooms) {
    bool complete = true;
    for (auto w : r.walls) complete = complete && snap.wall(w) != nullptr;
    if (!complete) continue;
    g.add_node(room_id(p, r.id), r.center);
    Factor f;
    f.kind = FactorKind::kRoomWall;
    f.nodes = {room_id(p, r.id)};
    for (auto w : r.walls) f.nodes.push_back(wall_id(p, w));
    f.information = Eigen::Matrix2d::Identity() / (params_.room_sigma * params_.room_sigma);
    g.add_factor(f);
  }
  return g;
}

OptimizeResult CollabGraph::optimize_collaborative() {
  FactorGraph joint = local_->graph();
  std::vector<AgentId> placed;
  for (const auto& [p, peer] : peers_) {
    if (peer.matches.empty()) continue;
    const FactorGraph pg = peer_graph(p);
    for (const auto& [id, n] : pg.nodes()) joint.add_node(id, n.state, n.fixed);
    for (const auto& f : pg.factors()) joint.add_factor(f);
    for (const auto& f : peer.match_factors) {
      bool known = true;
      for (const auto& id : f.nodes) known = known && joint.has_node(id);
      if (known) joint.add_factor(f);
    }
    placed.push_back(p);
  }
  const OptimizeResult res = optimize(joint, params_.optimizer);
  for (AgentId p : placed) peers_.at(p).origin = joint.state<Pose>(origin_id(p));
  joint_ = std::move(joint);
  joint_keyframes_ = local_->keyframes().size();
  return res;
}

std::vector<Pose> CollabGraph::trajectory() const {
  std::vector<Pose> out;
  const auto& kfs = local_->keyframes();
  out.reserve(kfs.size());
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    const bool joint = k < joint_keyframes_ && joint_.has_node(kfs[k].id);
    out.push_back(joint ? joint_.state<Pose>(kfs[k].id) : local_->keyframe_pose(k));
  }
  return out;
}

}  // namespace mrsg
