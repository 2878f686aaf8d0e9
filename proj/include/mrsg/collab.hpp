#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrsg/distillation.hpp"
#include "mrsg/local_sgraph.hpp"

namespace mrsg {

/// Ablation switches: inter-robot room factors only, with or without fine
/// alignment, optionally adding wall-to-wall factors.
enum class Mode { kRooms, kRoomsFA, kRoomsWalls, kFull };

const char* to_string(Mode m);
/// Accepts rooms, rooms_fa, rooms_walls and full. Throws ConfigError.
Mode parse_mode(const std::string& s);
bool uses_fine_alignment(Mode m);
bool uses_wall_matches(Mode m);

/// An accepted room correspondence with a peer.
struct RoomMatch {
  std::uint32_t local_room = 0;
  AgentId peer = 0;
  std::uint32_t peer_room = 0;
  /// Peer room frame to local room frame.
  Pose transform;
  double sc_distance = 0.0;
  /// Registration fitness; unused when `registered` is false.
  double fitness = 0.0;
  bool registered = false;
};

struct CollabParams {
  double wall_pair_angle_deg = 15.0;
  /// Paired walls must also agree in their distance from the local room
  /// center after the match transform.
  double wall_pair_offset = 0.5;
  /// Lower bound of the fitness used as match sigma.
  double min_match_sigma = 0.01;
  /// Sigma of an unregistered match before the information scale.
  double unregistered_sigma = 0.07;
  double non_fa_information_scale = 0.1;
  double room_sigma = 0.01;
  double planar_prior_sigma = 1e-3;
  OptimizerConfig optimizer;
};

/// One agent's collaborative graph: its local graph plus, per peer, a free
/// origin node, the peer's walls and rooms (in the peer frame, held by
/// priors) and the inter-robot match factors.
class CollabGraph {
 public:
  struct Peer {
    /// Latest integrated snapshot, in the peer frame.
    DistilledGraph snapshot;
    /// Peer origin in the local frame; identity until the first match.
    Pose origin;
    bool placed = false;
    std::vector<RoomMatch> matches;
    std::vector<Factor> match_factors;
  };

  explicit CollabGraph(const LocalSGraph& local, CollabParams params = {});

  /// Throws StaleMessage (graph unchanged) unless msg.seq is newer than the
  /// last one integrated from that sender.
  void integrate_distilled(const DistilledGraph& msg);

  /// Adds the room match factor and, in wall modes, four wall match factors.
  /// Throws UnknownRoom when either room is unknown, and WallPairingFailed
  /// after keeping only the room factor when the walls cannot be paired.
  void add_match_factors(const RoomMatch& match, Mode mode);

  /// Joint optimization over local and matched-peer nodes with the local
  /// origin fixed. Local estimates are kept here; the local graph is not
  /// modified.
  OptimizeResult optimize_collaborative();

  bool has_peer(AgentId p) const { return peers_.count(p) != 0; }
  bool collaborative(AgentId p) const;
  const std::map<AgentId, Peer>& peers() const { return peers_; }
  /// Peer origin in the local frame, once a match placed it.
  std::optional<Pose> peer_origin(AgentId p) const;
  /// Frame of a peer room (center, x-pair yaw) in the peer frame, from the
  /// latest snapshot. Throws UnknownRoom.
  Pose peer_room_frame(AgentId p, std::uint32_t room) const;

  /// The peer's origin, imported walls and rooms, their priors and
  /// room-wall factors, and the match factors.
  FactorGraph peer_graph(AgentId p) const;
  /// Graph of the last joint optimization (empty before the first).
  const FactorGraph& joint_graph() const { return joint_; }
  /// Local keyframe poses from the last joint optimization, or from the
  /// local graph when it is newer.
  std::vector<Pose> trajectory() const;

  const LocalSGraph& local() const { return *local_; }
  const CollabParams& params() const { return params_; }

 private:
  const RoomRecord& local_room(std::uint32_t index) const;
  Eigen::Matrix3d match_information(const RoomMatch& m, double lever) const;

  const LocalSGraph* local_;
  CollabParams params_;
  std::map<AgentId, Peer> peers_;
  FactorGraph joint_;
  std::size_t joint_keyframes_ = 0;
};

}  // namespace mrsg
