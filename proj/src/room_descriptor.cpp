#include "mrsg/room_descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "mrsg/errors.hpp"
#include "mrsg/point_index.hpp"

namespace mrsg {

RoomCloud build_room_cloud(const LocalSGraph& g, const RoomRecord& room, double margin) {
  if (room.members.empty()) throw EmptyRoomCloud("room " + room.room.str() + " has no member keyframes");
  const Pose to_room = g.room_frame(room).inverse();
  const double hx = 0.5 * room.extents.x() + margin;
  const double hy = 0.5 * room.extents.y() + margin;

  RoomCloud out;
  out.owner = g.agent();
  out.room = room.room.index;
  out.extents = room.extents;
  out.cloud.frame_id = "room";
  for (const auto& kf : g.keyframes()) {
    if (std::find(room.members.begin(), room.members.end(), kf.id) == room.members.end()) continue;
    const Pose t = to_room * g.graph().state<Pose>(kf.id);
    for (const auto& p : kf.scan.points) {
      const Vec3 q = t.apply(p);
      if (std::abs(q.x()) <= hx && std::abs(q.y()) <= hy) out.cloud.points.push_back(q);
    }
  }
  if (out.cloud.points.empty()) throw EmptyRoomCloud("room " + room.room.str() + " cloud is empty after cropping");
  return out;
}

RoomCloud downsample(const RoomCloud& rc, const ScanContextConfig& config) {
  RoomCloud out = rc;
  out.cloud = voxel_downsample(rc.cloud, config.voxel);
  out.cloud.frame_id = rc.cloud.frame_id;
  return out;
}

RoomDescriptor make_descriptor(const RoomCloud& rc, const ScanContextConfig& config) {
  RoomDescriptor d;
  d.owner = rc.owner;
  d.room = rc.room;
  d.extents = rc.extents;
  d.config = config;
  d.matrix = scan_context(rc.cloud, config);
  return d;
}

std::vector<RoomCandidate> match_rooms(const std::vector<RoomDescriptor>& local,
                                       const std::map<std::pair<AgentId, std::uint32_t>, RoomDescriptor>& peers,
                                       double threshold, const std::set<RoomPairKey>& matched) {
  std::vector<RoomCandidate> out;
  for (const auto& a : local) {
    for (const auto& [key, b] : peers) {
      if (matched.count({a.room, key.first, key.second})) continue;
      const ScMatch m = sc_distance(a.matrix, b.matrix);
      if (m.distance > threshold) continue;
      RoomCandidate c;
      c.local_room = a.room;
      c.peer = key.first;
      c.peer_room = key.second;
      c.distance = m.distance;
      c.shift = m.shift;
      c.yaw_seed = 2.0 * M_PI * m.shift / a.config.sectors;
      out.push_back(c);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RoomCandidate& x, const RoomCandidate& y) { return x.distance < y.distance; });
  return out;
}

namespace {

struct Planar {
  double x = 0.0, y = 0.0, yaw = 0.0;

  Mat3 rotation() const { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }
  Vec3 apply(const Vec3& p) const { return rotation() * p + Vec3(x, y, 0.0); }
  /// d apply / d(x, y, yaw).
  Mat3 jacobian(const Vec3& p) const {
    const Vec3 rp = rotation() * p;
    Mat3 j = Mat3::Zero();
    j(0, 0) = 1.0;
    j(1, 1) = 1.0;
    j(0, 2) = -rp.y();
    j(1, 2) = rp.x();
    return j;
  }
  void update(const Vec3& d) {
    x += d.x();
    y += d.y();
    yaw += d.z();
  }
};

/// GICP-style regularization: keep the eigenvectors, flatten the spectrum to
/// a thin disc.
Mat3 regularize(const Mat3& cov) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 v(1e-3, 1.0, 1.0);
  return es.eigenvectors() * v.asDiagonal() * es.eigenvectors().transpose();
}

Mat3 covariance_of(const std::vector<Vec3>& pts, const std::vector<PointIndex::Hit>& hits) {
  Vec3 mean = Vec3::Zero();
  for (const auto& h : hits) mean += pts[h.index];
  mean /= static_cast<double>(hits.size());
  Mat3 c = Mat3::Zero();
  for (const auto& h : hits) {
    const Vec3 d = pts[h.index] - mean;
    c += d * d.transpose();
  }
  return c / static_cast<double>(hits.size());
}

struct Voxel {
  Vec3 mean;
  Mat3 cov;
};

using VoxelKey = std::array<std::int64_t, 3>;
struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    return static_cast<std::size_t>(k[0] * 73856093LL ^ k[1] * 19349663LL ^ k[2] * 83492791LL);
  }
};

VoxelKey voxel_key(const Vec3& p, double v) {
  return {static_cast<std::int64_t>(std::floor(p.x() / v)), static_cast<std::int64_t>(std::floor(p.y() / v)),
          static_cast<std::int64_t>(std::floor(p.z() / v))};
}

std::unordered_map<VoxelKey, Voxel, VoxelKeyHash> voxelize(const std::vector<Vec3>& pts, double v) {
  std::unordered_map<VoxelKey, std::vector<Vec3>, VoxelKeyHash> bins;
  for (const auto& p : pts) bins[voxel_key(p, v)].push_back(p);
  std::unordered_map<VoxelKey, Voxel, VoxelKeyHash> out;
  for (const auto& [k, ps] : bins) {
    if (ps.size() < 4) continue;
    Vec3 mean = Vec3::Zero();
    for (const auto& p : ps) mean += p;
    mean /= static_cast<double>(ps.size());
    Mat3 c = Mat3::Zero();
    for (const auto& p : ps) c += (p - mean) * (p - mean).transpose();
    out[k] = {mean, regularize(c / static_cast<double>(ps.size()))};
  }
  return out;
}

/// Distribution-to-distribution Gauss-Newton against a voxel map of a.
int vgicp(const std::vector<Vec3>& a, const std::vector<Vec3>& b, Planar& t, const RegistrationConfig& cfg) {
  const auto voxels = voxelize(a, cfg.voxel);
  const PointIndex b_index(b, cfg.voxel);
  std::vector<Mat3> b_cov(b.size(), Mat3::Identity());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto hits = b_index.knn(b[i], static_cast<std::size_t>(cfg.normal_neighbors), cfg.voxel);
    if (hits.size() >= 4) b_cov[i] = regularize(covariance_of(b, hits));
  }
  static const int offsets[7][3] = {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    const Mat3 r = t.rotation();
    Mat3 h = Mat3::Zero();
    Vec3 g = Vec3::Zero();
    for (std::size_t i = 0; i < b.size(); ++i) {
      const Vec3 q = t.apply(b[i]);
      const VoxelKey k = voxel_key(q, cfg.voxel);
      const Mat3 j = t.jacobian(b[i]);
      const Mat3 rc = r * b_cov[i] * r.transpose();
      for (const auto& o : offsets) {
        const auto v = voxels.find({k[0] + o[0], k[1] + o[1], k[2] + o[2]});
        if (v == voxels.end()) continue;
        const Mat3 omega = (v->second.cov + rc).inverse();
        const Vec3 res = v->second.mean - q;
        h += j.transpose() * omega * j;
        g += j.transpose() * omega * res;
      }
    }
    if (h.determinant() <= 0.0) break;
    const Vec3 d = (h + 1e-9 * Mat3::Identity()).ldlt().solve(g);
    t.update(d);
    if (d.norm() < cfg.tolerance) {
      ++it;
      break;
    }
  }
  return it;
}

struct Target {
  PointIndex index;
  std::vector<Vec3> normals;
  std::vector<bool> has_normal;
};

Target make_target(const std::vector<Vec3>& a, const RegistrationConfig& cfg) {
  Target t{PointIndex(a, cfg.max_correspondence), std::vector<Vec3>(a.size(), Vec3::Zero()),
           std::vector<bool>(a.size(), false)};
  const double radius = std::min(0.3, cfg.max_correspondence);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto hits = t.index.knn(a[i], static_cast<std::size_t>(cfg.normal_neighbors), radius);
    if (hits.size() < 5) continue;
    Eigen::SelfAdjointEigenSolver<Mat3> es(covariance_of(a, hits));
    const Vec3 ev = es.eigenvalues();
    const double total = ev.sum();
    if (total <= 0.0 || ev(0) / total > cfg.planarity) continue;
    t.normals[i] = es.eigenvectors().col(0);
    t.has_normal[i] = true;
  }
  return t;
}

/// Trimmed point-to-plane Gauss-Newton; correspondences re-found each step.
int point_to_plane(const Target& tgt, const std::vector<Vec3>& b, Planar& t, const RegistrationConfig& cfg) {
  const auto& a = tgt.index.points();
  int it = 0;
  std::vector<double> res;
  std::vector<Eigen::RowVector3d> rows;
  for (; it < cfg.max_iterations; ++it) {
    res.clear();
    rows.clear();
    for (const auto& p : b) {
      const Vec3 q = t.apply(p);
      const auto hit = tgt.index.nearest(q, cfg.max_correspondence);
      if (!hit || !tgt.has_normal[hit->index]) continue;
      const Vec3& n = tgt.normals[hit->index];
      res.push_back(n.dot(q - a[hit->index]));
      rows.push_back(n.transpose() * t.jacobian(p));
    }
    if (res.size() < 6) break;
    std::vector<double> mags(res.size());
    for (std::size_t i = 0; i < res.size(); ++i) mags[i] = std::abs(res[i]);
    auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
    std::nth_element(mags.begin(), mid, mags.end());
    const double gate = std::max(3.0 * 1.4826 * *mid, 1e-6);
    Mat3 h = Mat3::Zero();
    Vec3 g = Vec3::Zero();
    for (std::size_t i = 0; i < res.size(); ++i) {
      if (std::abs(res[i]) > gate) continue;
      h += rows[i].transpose() * rows[i];
      g -= rows[i].transpose() * res[i];
    }
    if (h.determinant() <= 1e-12) break;
    const Vec3 d = h.ldlt().solve(g);
    t.update(d);
    if (d.norm() < 1e-3 * cfg.tolerance) {
      ++it;
      break;
    }
  }
  return it;
}

double fitness_of(const Target& tgt, const std::vector<Vec3>& b, const Planar& t, const RegistrationConfig& cfg) {
  const auto& a = tgt.index.points();
  double sum = 0.0;
  for (const auto& p : b) {
    const Vec3 q = t.apply(p);
    const auto hit = tgt.index.nearest(q, cfg.max_correspondence);
    if (!hit) {
      sum += cfg.max_correspondence;
    } else if (tgt.has_normal[hit->index]) {
      sum += std::abs(tgt.normals[hit->index].dot(q - a[hit->index]));
    } else {
      sum += hit->distance;
    }
  }
  return sum / static_cast<double>(b.size());
}

}  // namespace

AlignResult fine_align(const PointCloud& a, const PointCloud& b, double yaw_seed, const RegistrationConfig& config) {
  if (a.points.empty() || b.points.empty()) throw EmptyCloud("fine_align needs two non-empty clouds");
  Planar t;
  t.yaw = -yaw_seed;
  AlignResult out;
  out.iterations = vgicp(a.points, b.points, t, config);
  const Target tgt = make_target(a.points, config);
  out.iterations += point_to_plane(tgt, b.points, t, config);
  out.transform = Pose::Planar(t.x, t.y, std::remainder(t.yaw, 2.0 * M_PI));
  out.fitness = fitness_of(tgt, b.points, t, config);
  out.accepted = out.fitness <= config.fitness_threshold;
  return out;
}

}  // namespace mrsg
