#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "mrsg/geometry.hpp"

namespace mrsg {

using AgentId = std::uint8_t;

enum class NodeKind : std::uint8_t { kKeyframe = 0, kWall = 1, kRoom = 2, kFloor = 3, kOrigin = 4 };

const char* to_string(NodeKind kind);

struct NodeId {
  AgentId owner = 0;
  NodeKind kind = NodeKind::kKeyframe;
  std::uint32_t index = 0;

  auto operator<=>(const NodeId&) const = default;
  std::string str() const;
};

/// Pose (keyframe, origin) | Plane (wall) | planar center (room) | 3D center (floor).
using NodeState = std::variant<Pose, Plane, Vec2, Vec3>;

int tangent_dim(const NodeState& s);
NodeState retract(const NodeState& s, const Eigen::VectorXd& delta);

struct GraphNode {
  NodeId id;
  NodeState state;
  bool fixed = false;
};

enum class FactorKind : std::uint8_t { kOdometry, kPosePlane, kRoomWall, kRoomMatch, kWallMatch, kPrior };

const char* to_string(FactorKind kind);

/// Pins z, roll and pitch of a pose (both agents move on the same floor).
struct PlanarPrior {};

/// Room-match measurement: planar transform from the peer room's
/// center-anchored, agent-axis-aligned frame into the local one.
struct RoomMatchMeasurement {
  Pose transform;
};

/// Prior on a planar room center.
struct Vec2Prior {
  Vec2 value;
};

using Measurement = std::variant<std::monostate, Pose, Plane, PlanarPrior, RoomMatchMeasurement, Vec2Prior>;

struct Factor {
  FactorKind kind = FactorKind::kPrior;
  std::vector<NodeId> nodes;
  Measurement measurement;
  Eigen::MatrixXd information;
  bool robust = false;
};

std::size_t expected_arity(FactorKind kind);
int residual_dim(const Factor& f);

// Residuals. All are zero when the states agree with the measurement.

Vec6 residual_odometry(const Pose& ti, const Pose& tj, const Pose& meas);
Vec3 residual_pose_plane(const Pose& t, const Plane& wall, const Plane& meas);

/// Walls w1,w2 form one anti-parallel pair, w3,w4 the other. Throws
/// DegeneratePair when a pair is not anti-parallel within 30 degrees or the
/// two pair axes are near parallel.
Vec2 room_center(const Plane& w1, const Plane& w2, const Plane& w3, const Plane& w4);
/// Unit axis (xy) of an anti-parallel pair: normalize(n1 - n2).
Vec2 pair_axis(const Plane& w1, const Plane& w2);
Vec2 residual_room_wall(const Vec2& room, const Plane& w1, const Plane& w2, const Plane& w3,
                        const Plane& w4);

Vec3 residual_room_match(const Pose& origin_b, const Vec2& room_a, const Vec2& room_b, const Pose& meas);
Vec3 residual_wall_match(const Pose& origin_b, const Plane& wall_a, const Plane& wall_b);
Vec3 residual_planar_prior(const Pose& t);

/// Raw (unwhitened) residual of a factor given its node states in order.
Eigen::VectorXd factor_residual(const Factor& f, std::span<const NodeState> states);

class FactorGraph {
 public:
  GraphNode& add_node(const NodeId& id, NodeState state, bool fixed = false);
  void add_factor(Factor f);

  bool has_node(const NodeId& id) const { return nodes_.count(id) != 0; }
  const GraphNode& node(const NodeId& id) const;
  GraphNode& node(const NodeId& id);

  const std::map<NodeId, GraphNode>& nodes() const { return nodes_; }
  std::map<NodeId, GraphNode>& nodes() { return nodes_; }
  const std::vector<Factor>& factors() const { return factors_; }

  template <typename T>
  const T& state(const NodeId& id) const {
    return std::get<T>(node(id).state);
  }

  std::vector<NodeState> states_of(const Factor& f) const;
  Eigen::VectorXd residual(const Factor& f) const { return factor_residual(f, states_of(f)); }

  /// 0.5 * sum of (robustified) squared Mahalanobis norms.
  double cost(double huber_delta = 1.0) const;

 private:
  std::map<NodeId, GraphNode> nodes_;
  std::vector<Factor> factors_;
};

struct OptimizerConfig {
  int max_iterations = 100;
  double lambda_init = 1e-4;
  double relative_cost_tolerance = 1e-9;
  double update_tolerance = 1e-10;
  double jacobian_step = 1e-7;
  double huber_delta = 1.0;
};

struct OptimizeResult {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  /// Cost after each accepted step, starting with the initial cost.
  std::vector<double> accepted_costs;
};

/// Levenberg-Marquardt over all non-fixed nodes. Throws SingularSystem when a
/// connected component has neither a fixed node nor a full-rank prior, or the
/// damped system cannot be factorized.
OptimizeResult optimize(FactorGraph& graph, const OptimizerConfig& config = {});

/// Central-difference Jacobian of one factor's raw residual with respect to
/// the tangent of node `which` (index into f.nodes).
Eigen::MatrixXd numeric_jacobian(const Factor& f, std::span<const NodeState> states, std::size_t which,
                                 double step);

/// Marginal covariance blocks (tangent coordinates) of the requested nodes.
std::map<NodeId, Eigen::MatrixXd> marginal_covariances(const FactorGraph& graph, std::span<const NodeId> ids,
                                                       const OptimizerConfig& config = {});

}  // namespace mrsg
