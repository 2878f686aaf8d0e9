#pragma once

#include <map>
#include <string>
#include <vector>

#include "mrsg/collab.hpp"
#include "mrsg/comms.hpp"
#include "mrsg/scenario.hpp"

namespace mrsg {

struct RunOptions {
  std::uint64_t seed = 1;
  Accounting accounting = Accounting::kBroadcast;
  int delay_ticks = 0;
  double drop_probability = 0.0;
  /// Zero every noise term of the scenario's sensor.
  bool noiseless = false;
  /// Keep trajectories, maps and graphs for export.
  bool keep_artifacts = false;
  /// Upper bound on message-exchange rounds after the last keyframe.
  int max_drain_ticks = 50;
};

struct RobotReport {
  AgentId id = 0;
  std::size_t keyframes = 0;
  std::size_t walls = 0;
  std::size_t rooms = 0;
  double ate_cm = 0.0;
  double odometry_ate_cm = 0.0;
  std::size_t matches = 0;
  std::size_t wall_pairing_failures = 0;
  std::size_t rejected_alignments = 0;
  /// Cost of the last collaborative optimization (local cost when isolated).
  double final_cost = 0.0;

  bool operator==(const RobotReport&) const = default;
};

struct OriginError {
  AgentId observer = 0;
  AgentId peer = 0;
  double translation_m = 0.0;
  double rotation_deg = 0.0;

  bool operator==(const OriginError&) const = default;
};

struct MatchRecord {
  AgentId observer = 0;
  std::uint32_t local_room = 0;
  AgentId peer = 0;
  std::uint32_t peer_room = 0;
  double sc_distance = 0.0;
  double fitness = 0.0;
  bool registered = false;
  /// True when the two rooms are the same world room.
  bool correct = false;

  bool operator==(const MatchRecord&) const = default;
};

struct RunReport {
  std::string scenario;
  Mode mode = Mode::kFull;
  std::uint64_t seed = 0;
  Accounting accounting = Accounting::kBroadcast;
  bool noiseless = false;

  std::vector<RobotReport> robots;
  double ate_cm = 0.0;
  double odometry_ate_cm = 0.0;
  double map_rmse_cm = 0.0;
  /// Robots whose keyframes made it into the merged map.
  std::size_t map_robots = 0;
  std::vector<OriginError> origin_errors;
  std::vector<MatchRecord> matches;
  /// Every accepted optimizer step lowered the cost.
  bool monotone_costs = true;
  std::map<MsgType, TrafficCounter> traffic;
  TrafficCounter total;
  std::uint64_t ticks = 0;
  /// Wall-clock seconds; the only field allowed to differ between reruns.
  double seconds = 0.0;

  /// Every peer placed by every robot.
  bool fully_connected() const;
  double max_origin_error_m() const;
  double max_origin_error_deg() const;
  double max_final_cost() const;
  double mb(MsgType t) const;
  double total_mb() const;
};

/// Field-by-field equality ignoring `seconds`.
bool same_results(const RunReport& a, const RunReport& b);

/// Per-robot outputs for export.
struct RobotArtifacts {
  AgentId id = 0;
  std::vector<double> stamps;
  /// Agent frame (the robot's first ground-truth pose is the identity).
  std::vector<Pose> ground_truth;
  std::vector<Pose> estimate;
  std::vector<Pose> odometry;
  /// Keyframe scans at the estimated poses, voxel-downsampled, agent frame.
  PointCloud map;
  /// Joint graph of the last collaborative optimization, else the local one.
  FactorGraph graph;
  std::vector<RoomRecord> rooms;
  /// Estimated origin of each placed peer in this robot's frame.
  std::map<AgentId, Pose> peer_origins;
};

struct RunResult {
  RunReport report;
  std::vector<RobotArtifacts> robots;
};

/// Deterministic round-robin co-simulation of every robot of the scenario,
/// once per mode. Sensing and local graphs are shared by the modes; each mode
/// has its own channel and collaborative graphs, so a mode's result does not
/// depend on which other modes run alongside it.
std::vector<RunResult> run_scenario(const Scenario& scenario, const std::vector<Mode>& modes,
                                    const RunOptions& options = {});

RunResult run_scenario(const Scenario& scenario, Mode mode, const RunOptions& options = {});
RunResult run_scenario(const std::string& path, Mode mode, const RunOptions& options = {});

}  // namespace mrsg
