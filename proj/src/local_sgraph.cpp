#include "mrsg/local_sgraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mrsg/errors.hpp"

namespace mrsg {

namespace {

constexpr double kDeg = M_PI / 180.0;

Vec2 wall_dir(const Plane& p) {
  const Vec2 n = p.normal.head<2>().normalized();
  return {-n.y(), n.x()};
}

/// Intersection of two vertical planes as a 2D point.
std::optional<Vec2> corner(const Plane& a, const Plane& b) {
  Eigen::Matrix2d m;
  m.row(0) = a.normal.head<2>().transpose();
  m.row(1) = b.normal.head<2>().transpose();
  if (std::abs(m.determinant()) < 1e-6) return std::nullopt;
  return m.partialPivLu().solve(Vec2(-a.offset, -b.offset));
}

double horizontal_distance(const Plane& p, const Vec2& q) {
  const double s = p.normal.head<2>().norm();
  return (p.normal.head<2>().dot(q) + p.offset) / s;
}

Eigen::MatrixXd info_from_sigmas(std::initializer_list<double> sigmas, double floor) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(sigmas.size()));
  Eigen::Index i = 0;
  for (double s : sigmas) {
    const double v = std::max(s, floor);
    d(i++) = 1.0 / (v * v);
  }
  return d.asDiagonal();
}

}  // namespace

LocalSGraph::LocalSGraph(AgentId agent, LocalParams params) : agent_(agent), params_(params) {}

std::vector<NodeId> LocalSGraph::wall_ids() const {
  std::vector<NodeId> out;
  for (const auto& [id, n] : graph_.nodes()) {
    if (id.kind == NodeKind::kWall && id.owner == agent_) out.push_back(id);
  }
  return out;
}

Pose LocalSGraph::current_pose() const {
  return keyframes_.empty() ? Pose() : keyframe_pose(keyframes_.size() - 1);
}

std::optional<NodeId> LocalSGraph::associate_plane(const Plane& obs, const Vec3& at) const {
  std::optional<NodeId> best;
  double best_offset = std::numeric_limits<double>::infinity();
  const double max_angle = params_.assoc_angle_deg * kDeg;
  for (const auto& [id, n] : graph_.nodes()) {
    if (id.kind != NodeKind::kWall || id.owner != agent_) continue;
    const Plane& w = std::get<Plane>(n.state);
    if (normal_angle(w.normal, obs.normal) > max_angle) continue;
    const double doff = std::abs(w.signed_distance(at) - obs.signed_distance(at));
    if (doff > params_.assoc_offset) continue;
    if (doff < best_offset) {
      best_offset = doff;
      best = id;
    }
  }
  return best;
}

NodeId LocalSGraph::insert_keyframe(const Pose& odom_meas, PointCloud scan,
                                    const std::vector<PlaneObservation>& planes) {
  const NodeId id{agent_, NodeKind::kKeyframe, static_cast<std::uint32_t>(keyframes_.size())};
  Pose estimate;
  if (keyframes_.empty()) {
    graph_.add_node(id, Pose(), true);
    last_odom_pose_ = Pose();
  } else {
    const NodeId prev = keyframes_.back().id;
    estimate = graph_.state<Pose>(prev) * odom_meas;
    last_odom_pose_ = last_odom_pose_ * odom_meas;
    graph_.add_node(id, estimate);
    const double dist = odom_meas.translation.head<2>().norm();
    const double dyaw = std::abs(wrap_angle(odom_meas.yaw()));
    const double st = params_.odom_trans_sigma * std::sqrt(dist);
    const double sy = params_.odom_yaw_sigma * std::sqrt(dyaw);
    Factor f;
    f.kind = FactorKind::kOdometry;
    f.nodes = {prev, id};
    f.measurement = odom_meas;
    f.information = info_from_sigmas({st, st, 0.0, 0.0, 0.0, sy}, params_.min_sigma);
    graph_.add_factor(std::move(f));
  }

  for (const auto& obs : planes) {
    const Plane in_agent = obs.plane.transformed(estimate);
    NodeId wall;
    if (const auto hit = associate_plane(in_agent, estimate.translation)) {
      wall = *hit;
    } else {
      wall = {agent_, NodeKind::kWall, next_wall_++};
      Plane init = in_agent;
      init.covariance = obs.covariance;
      graph_.add_node(wall, init);
    }
    Factor f;
    f.kind = FactorKind::kPosePlane;
    f.nodes = {id, wall};
    f.measurement = obs.plane;
    f.information = info_from_sigmas({std::sqrt(obs.covariance(0, 0)), std::sqrt(obs.covariance(1, 1)),
                                      std::sqrt(obs.covariance(2, 2))},
                                     params_.min_sigma);
    graph_.add_factor(std::move(f));
  }

  update_coverage(estimate, scan);
  Keyframe kf;
  kf.id = id;
  kf.scan = std::move(scan);
  kf.odom_pose = last_odom_pose_;
  keyframes_.push_back(std::move(kf));

  // Keyframes inside a known room join it.
  const Vec2 p = estimate.translation.head<2>();
  for (auto& room : rooms_) {
    const Pose frame = room_frame(room);
    const Vec3 local = frame.inverse().apply(Vec3(p.x(), p.y(), 0.0));
    if (std::abs(local.x()) <= 0.5 * room.extents.x() + params_.membership_slack &&
        std::abs(local.y()) <= 0.5 * room.extents.y() + params_.membership_slack) {
      room.members.push_back(id);
    }
  }
  return id;
}

void LocalSGraph::update_coverage(const Pose& pose, const PointCloud& scan) {
  struct Candidate {
    NodeId id;
    Plane plane;
    Vec2 u;
  };
  std::vector<Candidate> walls;
  for (const auto& [id, n] : graph_.nodes()) {
    if (id.kind != NodeKind::kWall || id.owner != agent_) continue;
    const Plane& w = std::get<Plane>(n.state);
    walls.push_back({id, w, wall_dir(w)});
  }
  for (const Vec3& pb : scan.points) {
    if (pb.z() < 0.1) continue;
    const Vec3 p = pose.apply(pb);
    for (const auto& c : walls) {
      if (std::abs(c.plane.signed_distance(p)) > params_.coverage_distance) continue;
      const double s = c.u.dot(p.head<2>());
      coverage_[c.id].insert(static_cast<int>(std::floor(s / params_.coverage_bin)));
    }
  }
}

bool LocalSGraph::has_interior_wall(const NodeId (&ids)[4], const Plane (&w)[4]) const {
  constexpr double kMargin = 0.3;
  const double par = std::cos(params_.pair_angle_deg * kDeg);
  for (const auto& [id, n] : graph_.nodes()) {
    if (id.kind != NodeKind::kWall || id.owner != agent_) continue;
    if (std::find(ids, ids + 4, id) != ids + 4) continue;
    const Plane& o = std::get<Plane>(n.state);
    if (std::abs(o.normal.z()) > 0.2) continue;
    for (int pair = 0; pair < 2; ++pair) {
      const Plane& a = w[2 * pair];
      const Plane& b = w[2 * pair + 1];
      const Plane& c = w[2 - 2 * pair];
      const Plane& d = w[3 - 2 * pair];
      if (std::abs(o.normal.head<2>().normalized().dot(a.normal.head<2>().normalized())) < par) continue;
      const auto e0 = corner(o, c), e1 = corner(o, d);
      if (!e0 || !e1) continue;
      const Vec2 mid = 0.5 * (*e0 + *e1);
      if (horizontal_distance(a, mid) < kMargin || horizontal_distance(b, mid) < kMargin) continue;
      const double len = (*e1 - *e0).norm();
      if (len < 3.0 * kMargin) continue;
      const Vec2 dir = (*e1 - *e0) / len;
      if (side_coverage(id, *e0 + kMargin * dir, *e1 - kMargin * dir) > 0.25) return true;
    }
  }
  return false;
}

double LocalSGraph::side_coverage(const NodeId& wall, const Vec2& a, const Vec2& b) const {
  const auto it = coverage_.find(wall);
  if (it == coverage_.end()) return 0.0;
  const Vec2 u = wall_dir(graph_.state<Plane>(wall));
  double s0 = u.dot(a), s1 = u.dot(b);
  if (s0 > s1) std::swap(s0, s1);
  const int b0 = static_cast<int>(std::floor(s0 / params_.coverage_bin));
  const int b1 = static_cast<int>(std::floor(s1 / params_.coverage_bin));
  int hit = 0;
  for (int k = b0; k <= b1; ++k) hit += it->second.count(k) ? 1 : 0;
  return static_cast<double>(hit) / (b1 - b0 + 1);
}

Pose LocalSGraph::room_frame(const RoomRecord& room) const {
  const Vec2 c = graph_.state<Vec2>(room.room);
  const Vec2 axis = pair_axis(graph_.state<Plane>(room.walls[0]), graph_.state<Plane>(room.walls[1]));
  return Pose::FromYaw(std::atan2(axis.y(), axis.x()), Vec3(c.x(), c.y(), 0.0));
}

std::optional<std::size_t> LocalSGraph::room_containing(const Vec2& p, double slack) const {
  for (std::size_t i = 0; i < rooms_.size(); ++i) {
    const Pose frame = room_frame(rooms_[i]);
    const Vec3 local = frame.inverse().apply(Vec3(p.x(), p.y(), 0.0));
    if (std::abs(local.x()) <= 0.5 * rooms_[i].extents.x() + slack &&
        std::abs(local.y()) <= 0.5 * rooms_[i].extents.y() + slack) {
      return i;
    }
  }
  return std::nullopt;
}

std::vector<RoomRecord> LocalSGraph::detect_rooms() {
  std::vector<RoomRecord> found;
  if (keyframes_.empty()) return found;
  const Vec2 p = current_pose().translation.head<2>();

  struct Pair {
    NodeId a, b;  // a faces +axis
    Vec2 axis;
    double gap;
  };
  std::vector<std::pair<NodeId, Plane>> walls;
  for (const auto& [id, n] : graph_.nodes()) {
    if (id.kind != NodeKind::kWall || id.owner != agent_) continue;
    const Plane& w = std::get<Plane>(n.state);
    if (std::abs(w.normal.z()) > 0.2) continue;
    if (horizontal_distance(w, p) <= 0.0) continue;  // must face the robot
    walls.emplace_back(id, w);
  }
  const double pair_cos = std::cos(params_.pair_angle_deg * kDeg);
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < walls.size(); ++i) {
    for (std::size_t j = i + 1; j < walls.size(); ++j) {
      const Plane& a = walls[i].second;
      const Plane& b = walls[j].second;
      if (a.normal.head<2>().normalized().dot(b.normal.head<2>().normalized()) > -pair_cos) continue;
      const double gap = horizontal_distance(a, p) + horizontal_distance(b, p);
      if (gap < params_.min_gap || gap > params_.max_gap) continue;
      Pair pr{walls[i].first, walls[j].first, (a.normal - b.normal).head<2>().normalized(), gap};
      pairs.push_back(pr);
    }
  }

  const double perp = std::sin(params_.pair_angle_deg * kDeg);
  double best_area = std::numeric_limits<double>::infinity();
  std::optional<std::array<Pair, 2>> best;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const Pair& p1 = pairs[i];
      const Pair& p2 = pairs[j];
      if (std::abs(p1.axis.dot(p2.axis)) > perp) continue;
      const Plane w[4] = {graph_.state<Plane>(p1.a), graph_.state<Plane>(p1.b), graph_.state<Plane>(p2.a),
                          graph_.state<Plane>(p2.b)};
      // Corners: c_ij = wall i of pair 1 meets wall j of pair 2.
      const auto c00 = corner(w[0], w[2]), c01 = corner(w[0], w[3]);
      const auto c10 = corner(w[1], w[2]), c11 = corner(w[1], w[3]);
      if (!c00 || !c01 || !c10 || !c11) continue;
      const NodeId ids[4] = {p1.a, p1.b, p2.a, p2.b};
      const double cov[4] = {side_coverage(ids[0], *c00, *c01), side_coverage(ids[1], *c10, *c11),
                             side_coverage(ids[2], *c00, *c10), side_coverage(ids[3], *c01, *c11)};
      if (*std::min_element(cov, cov + 4) < params_.min_side_coverage) continue;
      if (has_interior_wall(ids, w)) continue;
      const double area = p1.gap * p2.gap;
      if (area < best_area) {
        best_area = area;
        best = std::array<Pair, 2>{p1, p2};
      }
    }
  }
  if (!best) return found;

  // x-pair is the one whose axis is closer to the agent x axis; the first
  // wall of each pair faces the positive agent axis.
  Pair px = (*best)[0], py = (*best)[1];
  if (std::abs(px.axis.x()) < std::abs(py.axis.x())) std::swap(px, py);
  auto orient = [&](Pair& pr, int component) {
    if (graph_.state<Plane>(pr.a).normal[component] < graph_.state<Plane>(pr.b).normal[component]) {
      std::swap(pr.a, pr.b);
    }
  };
  orient(px, 0);
  orient(py, 1);
  std::array<NodeId, 4> quad = {px.a, px.b, py.a, py.b};
  std::array<NodeId, 4> key = quad;
  std::sort(key.begin(), key.end());
  if (room_keys_.count(key)) return found;

  RoomRecord rec;
  rec.room = {agent_, NodeKind::kRoom, static_cast<std::uint32_t>(rooms_.size())};
  rec.walls = quad;
  const Plane w1 = graph_.state<Plane>(quad[0]), w2 = graph_.state<Plane>(quad[1]);
  const Plane w3 = graph_.state<Plane>(quad[2]), w4 = graph_.state<Plane>(quad[3]);
  try {
    rec.center = room_center(w1, w2, w3, w4);
  } catch (const DegeneratePair&) {
    return found;
  }
  rec.extents = {horizontal_distance(w1, rec.center) + horizontal_distance(w2, rec.center),
                 horizontal_distance(w3, rec.center) + horizontal_distance(w4, rec.center)};
  graph_.add_node(rec.room, rec.center);
  Factor f;
  f.kind = FactorKind::kRoomWall;
  f.nodes = {rec.room, quad[0], quad[1], quad[2], quad[3]};
  f.information = info_from_sigmas({params_.room_sigma, params_.room_sigma}, params_.min_sigma);
  graph_.add_factor(std::move(f));

  const Pose frame = room_frame(rec);
  for (std::size_t k = 0; k < keyframes_.size(); ++k) {
    const Vec3 local = frame.inverse().apply(keyframe_pose(k).translation);
    if (std::abs(local.x()) <= 0.5 * rec.extents.x() + params_.membership_slack &&
        std::abs(local.y()) <= 0.5 * rec.extents.y() + params_.membership_slack) {
      rec.members.push_back(keyframes_[k].id);
    }
  }
  room_keys_.insert(key);
  rooms_.push_back(rec);
  found.push_back(rec);
  return found;
}

void LocalSGraph::update_floor() {
  if (rooms_.empty()) return;
  Vec2 mean = Vec2::Zero();
  for (const auto& r : rooms_) mean += graph_.state<Vec2>(r.room);
  mean /= static_cast<double>(rooms_.size());
  const NodeId id{agent_, NodeKind::kFloor, 0};
  const Vec3 state(mean.x(), mean.y(), 0.0);
  if (graph_.has_node(id)) {
    graph_.node(id).state = state;
  } else {
    graph_.add_node(id, state, true);
  }
}

void LocalSGraph::refresh_rooms() {
  for (auto& r : rooms_) {
    r.center = graph_.state<Vec2>(r.room);
    const Plane w1 = graph_.state<Plane>(r.walls[0]), w2 = graph_.state<Plane>(r.walls[1]);
    const Plane w3 = graph_.state<Plane>(r.walls[2]), w4 = graph_.state<Plane>(r.walls[3]);
    r.extents = {horizontal_distance(w1, r.center) + horizontal_distance(w2, r.center),
                 horizontal_distance(w3, r.center) + horizontal_distance(w4, r.center)};
  }
}

OptimizeResult LocalSGraph::optimize_local() {
  const OptimizeResult res = optimize(graph_, params_.optimizer);
  refresh_rooms();
  return res;
}

std::vector<RoomRecord> LocalSGraph::process_keyframe(const Pose& odom_meas, PointCloud scan,
                                                      const std::vector<PlaneObservation>& planes) {
  insert_keyframe(odom_meas, std::move(scan), planes);
  optimize_local();
  auto rooms = detect_rooms();
  update_floor();
  return rooms;
}

}  // namespace mrsg
