#pragma once

#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "mrsg/local_sgraph.hpp"
#include "mrsg/scan_context.hpp"

namespace mrsg {

/// Union of a room's member scans in the room frame (origin at the room
/// center on the floor, x along the room's x-pair axis).
struct RoomCloud {
  AgentId owner = 0;
  std::uint32_t room = 0;
  Vec2 extents = Vec2::Zero();
  PointCloud cloud;
};

struct RoomDescriptor {
  AgentId owner = 0;
  std::uint32_t room = 0;
  Vec2 extents = Vec2::Zero();
  ScanContextConfig config;
  Eigen::MatrixXf matrix;
};

/// Throws EmptyRoomCloud when the room has no members or cropping to
/// extents + margin leaves nothing.
RoomCloud build_room_cloud(const LocalSGraph& g, const RoomRecord& room, double margin = 1.0);

/// Voxel-downsampled copy at the descriptor voxel size: what is sent to peers
/// and what fine alignment runs on.
RoomCloud downsample(const RoomCloud& rc, const ScanContextConfig& config);

RoomDescriptor make_descriptor(const RoomCloud& rc, const ScanContextConfig& config);

struct RoomCandidate {
  std::uint32_t local_room = 0;
  AgentId peer = 0;
  std::uint32_t peer_room = 0;
  double distance = 1.0;
  int shift = 0;
  /// shift * 2*pi / sectors: rotation taking the local room frame onto the
  /// peer's.
  double yaw_seed = 0.0;
};

using RoomPairKey = std::tuple<std::uint32_t, AgentId, std::uint32_t>;

/// Pairs within `threshold`, ascending by distance, skipping `matched`.
std::vector<RoomCandidate> match_rooms(const std::vector<RoomDescriptor>& local,
                                       const std::map<std::pair<AgentId, std::uint32_t>, RoomDescriptor>& peers,
                                       double threshold, const std::set<RoomPairKey>& matched = {});

struct RegistrationConfig {
  double voxel = 0.5;
  int max_iterations = 50;
  double tolerance = 1e-6;
  /// Nearest-neighbour search radius in the refinement and fitness.
  double max_correspondence = 0.5;
  int normal_neighbors = 10;
  /// Neighbourhoods flatter than this (smallest eigenvalue share) get a normal.
  double planarity = 0.05;
  double fitness_threshold = 0.07;
};

struct AlignResult {
  bool accepted = false;
  /// Maps cloud b coordinates into cloud a's frame.
  Pose transform;
  /// Mean distance of b's points to their correspondences in a: point-to-plane
  /// where a has a normal, point-to-point otherwise, capped at
  /// max_correspondence (the value used for points without a neighbour).
  double fitness = 0.0;
  int iterations = 0;
};

/// Planar (x, y, yaw) registration: voxelized distribution-to-distribution
/// from the seed, then trimmed point-to-plane refinement. Throws EmptyCloud.
AlignResult fine_align(const PointCloud& a, const PointCloud& b, double yaw_seed,
                       const RegistrationConfig& config = {});

}  // namespace mrsg
