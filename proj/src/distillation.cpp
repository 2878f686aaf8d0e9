#include "mrsg/distillation.hpp"

#include <cmath>

#include "mrsg/errors.hpp"

namespace mrsg {

const DistilledWall* DistilledGraph::wall(std::uint32_t id) const {
  for (const auto& w : walls) {
    if (w.id == id) return &w;
  }
  return nullptr;
}

DistilledGraph distill(const LocalSGraph& g, std::uint32_t seq) {
  DistilledGraph out;
  out.sender = g.agent();
  out.seq = seq;
  const FactorGraph& graph = g.graph();
  const auto ids = g.wall_ids();

  std::map<NodeId, Eigen::MatrixXd> cov;
  if (!ids.empty()) {
    try {
      cov = marginal_covariances(graph, ids, g.params().optimizer);
    } catch (const Error&) {
      cov.clear();
    }
  }
  for (const auto& id : ids) {
    DistilledWall w;
    w.id = id.index;
    w.plane = graph.state<Plane>(id);
    if (auto it = cov.find(id); it != cov.end() && it->second.rows() == 3) w.plane.covariance = it->second;
    out.walls.push_back(w);
  }
  for (const auto& r : g.rooms()) {
    DistilledRoom d;
    d.id = r.room.index;
    d.center = graph.state<Vec2>(r.room);
    for (int i = 0; i < 4; ++i) d.walls[i] = r.walls[i].index;
    out.rooms.push_back(d);
  }
  const NodeId floor{g.agent(), NodeKind::kFloor, 0};
  if (graph.has_node(floor)) out.floor = graph.state<Vec3>(floor);
  return out;
}

bool should_rebroadcast(const DistilledGraph& prev, const DistilledGraph& next, double offset_tol,
                        double angle_tol_deg, double center_tol) {
  if (prev.walls.size() != next.walls.size() || prev.rooms.size() != next.rooms.size() ||
      prev.floor.has_value() != next.floor.has_value()) {
    return true;
  }
  const double cos_tol = std::cos(angle_tol_deg * M_PI / 180.0);
  for (const auto& w : next.walls) {
    const DistilledWall* p = prev.wall(w.id);
    if (!p) return true;
    if (std::abs(p->plane.offset - w.plane.offset) > offset_tol) return true;
    if (p->plane.normal.dot(w.plane.normal) < cos_tol) return true;
  }
  for (std::size_t i = 0; i < next.rooms.size(); ++i) {
    const DistilledRoom* p = nullptr;
    for (const auto& r : prev.rooms) {
      if (r.id == next.rooms[i].id) p = &r;
    }
    if (!p) return true;
    if ((p->center - next.rooms[i].center).norm() > center_tol) return true;
  }
  return false;
}

}  // namespace mrsg
