#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mrsg/local_sgraph.hpp"

namespace mrsg {

struct DistilledWall {
  std::uint32_t id = 0;
  /// Sender agent frame; `plane.covariance` is the 3x3 tangent marginal.
  Plane plane;
};

struct DistilledRoom {
  std::uint32_t id = 0;
  Vec2 center = Vec2::Zero();
  /// Same order as RoomRecord::walls.
  std::array<std::uint32_t, 4> walls{};
};

/// Origin-anchored summary of a local graph: walls, rooms and floor only.
struct DistilledGraph {
  AgentId sender = 0;
  std::uint32_t seq = 0;
  std::vector<DistilledWall> walls;
  std::vector<DistilledRoom> rooms;
  std::optional<Vec3> floor;

  const DistilledWall* wall(std::uint32_t id) const;
};

/// Snapshot of `g`. Wall covariances are marginals of the current local
/// problem; when the marginal cannot be computed the stored plane covariance
/// is kept.
DistilledGraph distill(const LocalSGraph& g, std::uint32_t seq);

/// Change gate between two snapshots of the same sender.
bool should_rebroadcast(const DistilledGraph& prev, const DistilledGraph& next, double offset_tol = 0.05,
                        double angle_tol_deg = 2.0, double center_tol = 0.05);

}  // namespace mrsg
