#include "mrsg/factor_graph.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <numeric>

#include "mrsg/errors.hpp"

namespace mrsg {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kKeyframe:
      return "keyframe";
    case NodeKind::kWall:
      return "wall";
    case NodeKind::kRoom:
      return "room";
    case NodeKind::kFloor:
      return "floor";
    case NodeKind::kOrigin:
      return "origin";
  }
  return "?";
}

const char* to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::kOdometry:
      return "odometry";
    case FactorKind::kPosePlane:
      return "pose_plane";
    case FactorKind::kRoomWall:
      return "room_wall";
    case FactorKind::kRoomMatch:
      return "room_match";
    case FactorKind::kWallMatch:
      return "wall_match";
    case FactorKind::kPrior:
      return "prior";
  }
  return "?";
}

std::string NodeId::str() const {
  return std::to_string(owner) + ":" + to_string(kind) + ":" + std::to_string(index);
}

int tangent_dim(const NodeState& s) {
  struct Visitor {
    int operator()(const Pose&) const { return 6; }
    int operator()(const Plane&) const { return 3; }
    int operator()(const Vec2&) const { return 2; }
    int operator()(const Vec3&) const { return 3; }
  };
  return std::visit(Visitor{}, s);
}

NodeState retract(const NodeState& s, const Eigen::VectorXd& d) {
  struct Visitor {
    const Eigen::VectorXd& d;
    NodeState operator()(const Pose& p) const { return p.retract(d.head<6>()); }
    NodeState operator()(const Plane& p) const { return p.retract(d.head<3>()); }
    NodeState operator()(const Vec2& v) const { return Vec2(v + d.head<2>()); }
    NodeState operator()(const Vec3& v) const { return Vec3(v + d.head<3>()); }
  };
  return std::visit(Visitor{d}, s);
}

namespace {

bool kind_matches(NodeKind kind, const NodeState& s) {
  switch (kind) {
    case NodeKind::kKeyframe:
    case NodeKind::kOrigin:
      return std::holds_alternative<Pose>(s);
    case NodeKind::kWall:
      return std::holds_alternative<Plane>(s);
    case NodeKind::kRoom:
      return std::holds_alternative<Vec2>(s);
    case NodeKind::kFloor:
      return std::holds_alternative<Vec3>(s);
  }
  return false;
}

// s = squared Mahalanobis norm. Returns (rho(s), rho'(s)).
std::pair<double, double> huber(double s, double delta) {
  const double d2 = delta * delta;
  if (s <= d2) return {s, 1.0};
  const double r = std::sqrt(s);
  return {2.0 * delta * r - d2, delta / r};
}

double factor_cost(const Factor& f, const Eigen::VectorXd& r, double delta) {
  const double s = r.dot(f.information * r);
  return f.robust ? huber(s, delta).first : s;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Variable layout over non-fixed nodes, in map order.
struct Layout {
  std::map<NodeId, int> offset;
  int size = 0;
};

Layout make_layout(const FactorGraph& g) {
  Layout l;
  for (const auto& [id, n] : g.nodes()) {
    if (n.fixed) continue;
    l.offset[id] = l.size;
    l.size += tangent_dim(n.state);
  }
  return l;
}

void check_gauge(const FactorGraph& g) {
  std::map<NodeId, int> index;
  for (const auto& [id, n] : g.nodes()) index.emplace(id, static_cast<int>(index.size()));
  UnionFind uf(static_cast<int>(index.size()));
  for (const auto& f : g.factors()) {
    for (std::size_t i = 1; i < f.nodes.size(); ++i) uf.unite(index.at(f.nodes[0]), index.at(f.nodes[i]));
  }
  std::vector<bool> anchored(index.size(), false);
  for (const auto& [id, n] : g.nodes()) {
    if (n.fixed) anchored[uf.find(index.at(id))] = true;
  }
  // A prior covering every tangent direction of its node also fixes the gauge.
  for (const auto& f : g.factors()) {
    if (f.kind == FactorKind::kPrior && residual_dim(f) == tangent_dim(g.node(f.nodes[0]).state)) {
      anchored[uf.find(index.at(f.nodes[0]))] = true;
    }
  }
  for (const auto& [id, n] : g.nodes()) {
    if (!anchored[uf.find(index.at(id))]) {
      throw SingularSystem("connected component of node " + id.str() + " has no fixed node");
    }
  }
}

struct Linearization {
  Eigen::SparseMatrix<double> hessian;
  Eigen::VectorXd gradient;
};

Linearization linearize(const FactorGraph& g, const Layout& layout, const OptimizerConfig& cfg) {
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.size);
  for (const auto& f : g.factors()) {
    const auto states = g.states_of(f);
    const Eigen::VectorXd r = factor_residual(f, states);
    double w = 1.0;
    if (f.robust) w = huber(r.dot(f.information * r), cfg.huber_delta).second;

    std::vector<Eigen::MatrixXd> jac(f.nodes.size());
    std::vector<int> off(f.nodes.size(), -1);
    for (std::size_t i = 0; i < f.nodes.size(); ++i) {
      auto it = layout.offset.find(f.nodes[i]);
      if (it == layout.offset.end()) continue;
      off[i] = it->second;
      jac[i] = numeric_jacobian(f, states, i, cfg.jacobian_step);
    }
    const Eigen::MatrixXd omega = w * f.information;
    for (std::size_t i = 0; i < f.nodes.size(); ++i) {
      if (off[i] < 0) continue;
      const Eigen::MatrixXd jt_omega = jac[i].transpose() * omega;
      grad.segment(off[i], jac[i].cols()) += jt_omega * r;
      for (std::size_t j = 0; j < f.nodes.size(); ++j) {
        if (off[j] < 0) continue;
        const Eigen::MatrixXd block = jt_omega * jac[j];
        for (int a = 0; a < block.rows(); ++a) {
          for (int b = 0; b < block.cols(); ++b) {
            triplets.emplace_back(off[i] + a, off[j] + b, block(a, b));
          }
        }
      }
    }
  }
  Linearization lin;
  lin.hessian.resize(layout.size, layout.size);
  lin.hessian.setFromTriplets(triplets.begin(), triplets.end());
  lin.gradient = std::move(grad);
  return lin;
}

void apply_update(FactorGraph& g, const Layout& layout, const Eigen::VectorXd& delta) {
  for (const auto& [id, off] : layout.offset) {
    auto& n = g.node(id);
    n.state = retract(n.state, delta.segment(off, tangent_dim(n.state)));
  }
}

}  // namespace

GraphNode& FactorGraph::add_node(const NodeId& id, NodeState state, bool fixed) {
  if (!kind_matches(id.kind, state)) throw std::invalid_argument("state kind mismatch for node " + id.str());
  auto [it, inserted] = nodes_.emplace(id, GraphNode{id, std::move(state), fixed});
  if (!inserted) throw std::invalid_argument("duplicate node " + id.str());
  return it->second;
}

void FactorGraph::add_factor(Factor f) {
  if (f.nodes.size() != expected_arity(f.kind)) {
    throw std::invalid_argument(std::string("bad arity for factor ") + to_string(f.kind));
  }
  for (const auto& id : f.nodes) {
    if (!has_node(id)) throw std::invalid_argument("factor references missing node " + id.str());
  }
  const int dim = residual_dim(f);
  if (f.information.rows() != dim || f.information.cols() != dim) {
    throw std::invalid_argument(std::string("information size mismatch for ") + to_string(f.kind));
  }
  factors_.push_back(std::move(f));
}

const GraphNode& FactorGraph::node(const NodeId& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("no node " + id.str());
  return it->second;
}

GraphNode& FactorGraph::node(const NodeId& id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("no node " + id.str());
  return it->second;
}

std::vector<NodeState> FactorGraph::states_of(const Factor& f) const {
  std::vector<NodeState> out;
  out.reserve(f.nodes.size());
  for (const auto& id : f.nodes) out.push_back(node(id).state);
  return out;
}

double FactorGraph::cost(double huber_delta) const {
  double total = 0.0;
  for (const auto& f : factors_) total += factor_cost(f, residual(f), huber_delta);
  return 0.5 * total;
}

Eigen::MatrixXd numeric_jacobian(const Factor& f, std::span<const NodeState> states, std::size_t which,
                                 double step) {
  std::vector<NodeState> work(states.begin(), states.end());
  const int dim = tangent_dim(states[which]);
  Eigen::MatrixXd jac(residual_dim(f), dim);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(dim);
  for (int k = 0; k < dim; ++k) {
    delta[k] = step;
    work[which] = retract(states[which], delta);
    const Eigen::VectorXd plus = factor_residual(f, work);
    delta[k] = -step;
    work[which] = retract(states[which], delta);
    const Eigen::VectorXd minus = factor_residual(f, work);
    delta[k] = 0.0;
    Eigen::VectorXd diff = plus - minus;
    // Angular residual components must not jump across the +-pi cut.
    if (f.kind == FactorKind::kRoomMatch) diff[2] = wrap_angle(diff[2]);
    jac.col(k) = diff / (2.0 * step);
  }
  return jac;
}

OptimizeResult optimize(FactorGraph& graph, const OptimizerConfig& cfg) {
  check_gauge(graph);
  OptimizeResult result;
  double cost = graph.cost(cfg.huber_delta);
  result.initial_cost = cost;
  result.accepted_costs.push_back(cost);
  const Layout layout = make_layout(graph);
  if (layout.size == 0 || cost == 0.0) {
    result.final_cost = cost;
    return result;
  }

  double lambda = cfg.lambda_init;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const Linearization lin = linearize(graph, layout, cfg);
    bool accepted = false;
    bool done = false;
    while (!accepted) {
      Eigen::SparseMatrix<double> damped = lin.hessian;
      for (int i = 0; i < layout.size; ++i) damped.coeffRef(i, i) += lambda;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
      if (solver.info() != Eigen::Success || (solver.vectorD().array() <= 0.0).any()) {
        throw SingularSystem("damped normal equations are not positive definite");
      }
      const Eigen::VectorXd delta = solver.solve(-lin.gradient);
      if (!delta.allFinite()) throw SingularSystem("non-finite update");
      if (delta.norm() < cfg.update_tolerance) {
        done = true;
        break;
      }
      const auto saved = graph.nodes();
      apply_update(graph, layout, delta);
      const double new_cost = graph.cost(cfg.huber_delta);
      if (std::isfinite(new_cost) && new_cost < cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        cost = new_cost;
        result.accepted_costs.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < cfg.relative_cost_tolerance || cost == 0.0) done = true;
      } else {
        graph.nodes() = saved;
        lambda *= 10.0;
        if (lambda > 1e12) {
          done = true;
          break;
        }
      }
    }
    ++result.iterations;
    if (done) break;
  }
  result.final_cost = cost;
  return result;
}

std::map<NodeId, Eigen::MatrixXd> marginal_covariances(const FactorGraph& graph, std::span<const NodeId> ids,
                                                       const OptimizerConfig& cfg) {
  std::map<NodeId, Eigen::MatrixXd> out;
  if (ids.empty()) return out;
  check_gauge(graph);
  const Layout layout = make_layout(graph);
  const Linearization lin = linearize(graph, layout, cfg);
  Eigen::SparseMatrix<double> h = lin.hessian;
  // A tiny diagonal keeps weakly observed directions finite.
  for (int i = 0; i < layout.size; ++i) h.coeffRef(i, i) += 1e-9;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h);
  if (solver.info() != Eigen::Success) throw SingularSystem("information matrix is singular");
  for (const auto& id : ids) {
    auto it = layout.offset.find(id);
    if (it == layout.offset.end()) continue;
    const int dim = tangent_dim(graph.node(id).state);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(layout.size, dim);
    for (int k = 0; k < dim; ++k) rhs(it->second + k, k) = 1.0;
    const Eigen::MatrixXd cols = solver.solve(rhs);
    Eigen::MatrixXd block = cols.middleRows(it->second, dim);
    out[id] = 0.5 * (block + block.transpose());
  }
  return out;
}

}  // namespace mrsg
