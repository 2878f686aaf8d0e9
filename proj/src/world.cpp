#include "mrsg/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mrsg/errors.hpp"
#include "mrsg/scan_context.hpp"

namespace mrsg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double overlap_area(const Rect& a, const Rect& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

/// Inward-facing faces of a rectangle: south, north, west, east.
std::vector<WallFace> rect_faces(const Rect& r, double height, int room) {
  std::vector<WallFace> faces(4);
  faces[0].start = {r.x0, r.y0};
  faces[0].end = {r.x1, r.y0};
  faces[0].plane = Plane(Vec3(0, 1, 0), -r.y0);
  faces[1].start = {r.x0, r.y1};
  faces[1].end = {r.x1, r.y1};
  faces[1].plane = Plane(Vec3(0, -1, 0), r.y1);
  faces[2].start = {r.x0, r.y0};
  faces[2].end = {r.x0, r.y1};
  faces[2].plane = Plane(Vec3(1, 0, 0), -r.x0);
  faces[3].start = {r.x1, r.y0};
  faces[3].end = {r.x1, r.y1};
  faces[3].plane = Plane(Vec3(-1, 0, 0), r.x1);
  for (auto& f : faces) {
    f.height = height;
    f.room = room;
  }
  return faces;
}

void cut_doors(WallFace& face, const std::vector<DoorSpec>& doors) {
  const double len = face.length();
  const Vec2 u = face.direction();
  std::vector<std::pair<double, double>> gaps;
  for (const auto& d : doors) {
    const Vec2 rel = d.center - face.start;
    const double along = rel.dot(u);
    const double across = std::abs(rel.x() * u.y() - rel.y() * u.x());
    if (across > 1e-6 || along <= 0.0 || along >= len) continue;
    gaps.emplace_back(along - 0.5 * d.width, along + 0.5 * d.width);
  }
  std::sort(gaps.begin(), gaps.end());
  double cursor = 0.0;
  face.solid.clear();
  for (const auto& [g0, g1] : gaps) {
    if (g0 > cursor) face.solid.emplace_back(cursor, g0);
    cursor = std::max(cursor, g1);
  }
  if (cursor < len) face.solid.emplace_back(cursor, len);
}

double distance_to_rect_boundary(const Rect& r, const Vec2& p) {
  return std::min({p.x() - r.x0, r.x1 - p.x(), p.y() - r.y0, r.y1 - p.y()});
}

std::vector<ClutterObject> place_clutter(const WorldSpec& spec, Rng& rng) {
  std::vector<ClutterObject> out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int ri = 0; ri < static_cast<int>(spec.rooms.size()); ++ri) {
    const RoomSpec& room = spec.rooms[ri];
    const ClutterSpec& c = room.clutter;
    const std::size_t first = out.size();
    for (int k = 0; k < c.count; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
        ClutterObject obj;
        obj.room = ri;
        obj.shape = unit(rng) < 0.6 ? ClutterObject::Shape::kBox : ClutterObject::Shape::kPillar;
        const double s0 = c.min_size + (c.max_size - c.min_size) * unit(rng);
        const double s1 = c.min_size + (c.max_size - c.min_size) * unit(rng);
        if (obj.shape == ClutterObject::Shape::kBox) {
          obj.half_extents = {0.5 * s0, 0.5 * s1};
          obj.yaw = (unit(rng) - 0.5) * M_PI;
        } else {
          obj.half_extents = {0.25 * s0, 0.25 * s0};
        }
        obj.height = c.min_height + (c.max_height - c.min_height) * unit(rng);
        const double r = obj.footprint_radius();
        const Rect& rr = room.rect;
        obj.center = {rr.x0 + rr.width() * unit(rng), rr.y0 + rr.depth() * unit(rng)};
        const double wall_dist = distance_to_rect_boundary(rr, obj.center) - r;
        if (wall_dist < spec.wall_clearance || wall_dist > c.max_wall_distance) continue;
        bool ok = true;
        for (const auto& d : spec.doors) {
          if ((d.center - obj.center).norm() < spec.door_keepout + r) ok = false;
        }
        for (std::size_t j = first; j < out.size() && ok; ++j) {
          if ((out[j].center - obj.center).norm() < out[j].footprint_radius() + r + 0.2) ok = false;
        }
        if (!ok) continue;
        out.push_back(obj);
        placed = true;
      }
    }
  }
  return out;
}

// Ray / primitive intersections. Return the hit distance or +inf.

double hit_face(const WallFace& f, const Vec3& o, const Vec3& d) {
  const double denom = f.plane.normal.dot(d);
  if (std::abs(denom) < 1e-12) return kInf;
  const double t = -f.plane.signed_distance(o) / denom;
  if (t <= 1e-9) return kInf;
  const Vec3 p = o + t * d;
  if (p.z() < 0.0 || p.z() > f.height) return kInf;
  const double s = (p.head<2>() - f.start).dot(f.direction());
  for (const auto& [a, b] : f.solid) {
    if (s >= a && s <= b) return t;
  }
  return kInf;
}

double hit_box(const ClutterObject& c, const Vec3& o, const Vec3& d) {
  const double cy = std::cos(c.yaw), sy = std::sin(c.yaw);
  const Vec2 rel = o.head<2>() - c.center;
  const Vec3 lo(cy * rel.x() + sy * rel.y(), -sy * rel.x() + cy * rel.y(), o.z());
  const Vec3 ld(cy * d.x() + sy * d.y(), -sy * d.x() + cy * d.y(), d.z());
  const Vec3 bmin(-c.half_extents.x(), -c.half_extents.y(), 0.0);
  const Vec3 bmax(c.half_extents.x(), c.half_extents.y(), c.height);
  double t0 = 1e-9, t1 = kInf;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(ld[i]) < 1e-15) {
      if (lo[i] < bmin[i] || lo[i] > bmax[i]) return kInf;
      continue;
    }
    double a = (bmin[i] - lo[i]) / ld[i], b = (bmax[i] - lo[i]) / ld[i];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return kInf;
  }
  return t0;
}

double hit_pillar(const ClutterObject& c, const Vec3& o, const Vec3& d) {
  const double r = c.half_extents.x();
  const Vec2 rel = o.head<2>() - c.center;
  double best = kInf;
  const double a = d.head<2>().squaredNorm();
  if (a > 1e-15) {
    const double b = rel.dot(d.head<2>());
    const double cc = rel.squaredNorm() - r * r;
    const double disc = b * b - a * cc;
    if (disc >= 0.0) {
      const double t = (-b - std::sqrt(disc)) / a;
      if (t > 1e-9) {
        const double z = o.z() + t * d.z();
        if (z >= 0.0 && z <= c.height) best = t;
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    const double t = (c.height - o.z()) / d.z();
    if (t > 1e-9 && t < best && (rel + t * d.head<2>()).norm() <= r) best = t;
  }
  return best;
}

double hit_clutter(const ClutterObject& c, const Vec3& o, const Vec3& d) {
  return c.shape == ClutterObject::Shape::kBox ? hit_box(c, o, d) : hit_pillar(c, o, d);
}

void sample_reference(World& w, double pitch) {
  auto& pts = w.reference.points;
  for (const auto& f : w.walls) {
    const Vec2 u = f.direction();
    for (const auto& [a, b] : f.solid) {
      for (double s = a; s <= b + 1e-9; s += pitch) {
        for (double z = 0.0; z <= f.height + 1e-9; z += pitch) {
          const Vec2 q = f.start + s * u;
          pts.emplace_back(q.x(), q.y(), z);
        }
      }
    }
  }
  for (const auto& room : w.spec.rooms) {
    for (double x = room.rect.x0; x <= room.rect.x1 + 1e-9; x += pitch) {
      for (double y = room.rect.y0; y <= room.rect.y1 + 1e-9; y += pitch) pts.emplace_back(x, y, 0.0);
    }
  }
  for (const auto& c : w.clutter) {
    const double cy = std::cos(c.yaw), sy = std::sin(c.yaw);
    auto to_world = [&](double lx, double ly, double z) {
      return Vec3(c.center.x() + cy * lx - sy * ly, c.center.y() + sy * lx + cy * ly, z);
    };
    if (c.shape == ClutterObject::Shape::kBox) {
      const double hx = c.half_extents.x(), hy = c.half_extents.y();
      for (double z = 0.0; z <= c.height + 1e-9; z += pitch) {
        for (double s = -hx; s <= hx + 1e-9; s += pitch) {
          pts.push_back(to_world(s, -hy, z));
          pts.push_back(to_world(s, hy, z));
        }
        for (double s = -hy; s <= hy + 1e-9; s += pitch) {
          pts.push_back(to_world(-hx, s, z));
          pts.push_back(to_world(hx, s, z));
        }
      }
      for (double x = -hx; x <= hx + 1e-9; x += pitch) {
        for (double y = -hy; y <= hy + 1e-9; y += pitch) pts.push_back(to_world(x, y, c.height));
      }
    } else {
      const double r = c.half_extents.x();
      const int n = std::max(8, static_cast<int>(std::ceil(2.0 * M_PI * r / pitch)));
      for (double z = 0.0; z <= c.height + 1e-9; z += pitch) {
        for (int i = 0; i < n; ++i) {
          const double a = 2.0 * M_PI * i / n;
          pts.push_back(to_world(r * std::cos(a), r * std::sin(a), z));
        }
      }
      for (double x = -r; x <= r + 1e-9; x += pitch) {
        for (double y = -r; y <= r + 1e-9; y += pitch) {
          if (x * x + y * y <= r * r) pts.push_back(to_world(x, y, c.height));
        }
      }
    }
  }
}

/// Scan Context of each four-wall room built from zero-noise scans at a few
/// interior poses, in a frame at the room center.
std::vector<Eigen::MatrixXf> room_signatures(const World& w) {
  SensorModel sensor;
  sensor = sensor.noiseless();
  ScanContextConfig sc;
  Rng unused(0);
  std::vector<Eigen::MatrixXf> out;
  for (std::size_t k = 0; k < w.room_index.size(); ++k) {
    const Rect& r = w.spec.rooms[w.room_index[k]].rect;
    const Vec2 c = r.center();
    PointCloud merged;
    const double ox = 0.25 * r.width(), oy = 0.25 * r.depth();
    for (const Vec2& off : {Vec2(0, 0), Vec2(ox, oy), Vec2(-ox, oy), Vec2(ox, -oy), Vec2(-ox, -oy)}) {
      const Pose pose = Pose::Planar(c.x() + off.x(), c.y() + off.y(), 0.0);
      const PointCloud scan = raycast_scan(w, pose, sensor, unused);
      for (const Vec3& p : scan.points) {
        const Vec3 q = pose.apply(p) - Vec3(c.x(), c.y(), 0.0);
        if (std::abs(q.x()) <= 0.5 * r.width() + 1.0 && std::abs(q.y()) <= 0.5 * r.depth() + 1.0) {
          merged.points.push_back(q);
        }
      }
    }
    out.push_back(scan_context(voxel_downsample(merged, sc.voxel), sc));
  }
  return out;
}

bool clutter_unique(const World& w, double threshold) {
  const auto sig = room_signatures(w);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    for (std::size_t j = i + 1; j < sig.size(); ++j) {
      if (w.spec.rooms[w.room_index[i]].clutter.count == 0 || w.spec.rooms[w.room_index[j]].clutter.count == 0) {
        continue;
      }
      if (sc_distance(sig[i], sig[j]).distance <= threshold) return false;
    }
  }
  return true;
}

}  // namespace

int World::room_at(const Vec2& p) const {
  for (int i = 0; i < static_cast<int>(spec.rooms.size()); ++i) {
    if (spec.rooms[i].rect.contains(p)) return i;
  }
  return -1;
}

void SensorModel::validate() const {
  if (horizontal_rays < 1 || rings < 1) throw InvalidSpec("sensor needs at least one ray");
  if (!(max_range > 0.0)) throw InvalidSpec("sensor max range must be positive");
  for (double s : {range_sigma, normal_sigma, offset_sigma, odom_trans_sigma, odom_yaw_sigma}) {
    if (s < 0.0) throw InvalidSpec("noise sigma must be non-negative");
  }
}

SensorModel SensorModel::noiseless() const {
  SensorModel s = *this;
  s.range_sigma = s.normal_sigma = s.offset_sigma = s.odom_trans_sigma = s.odom_yaw_sigma = 0.0;
  return s;
}

World generate_world(const WorldSpec& spec, double reference_pitch) {
  for (std::size_t i = 0; i < spec.rooms.size(); ++i) {
    const Rect& r = spec.rooms[i].rect;
    if (!(r.width() > 0.0 && r.depth() > 0.0)) throw InvalidSpec("room " + spec.rooms[i].name + " is empty");
    for (std::size_t j = i + 1; j < spec.rooms.size(); ++j) {
      if (overlap_area(r, spec.rooms[j].rect) > 1e-9) {
        throw InvalidSpec("rooms " + spec.rooms[i].name + " and " + spec.rooms[j].name + " overlap");
      }
    }
  }
  if (!(spec.wall_height > 0.0)) throw InvalidSpec("wall height must be positive");

  World w;
  w.spec = spec;
  for (int i = 0; i < static_cast<int>(spec.rooms.size()); ++i) {
    for (auto& f : rect_faces(spec.rooms[i].rect, spec.wall_height, i)) {
      cut_doors(f, spec.doors);
      w.walls.push_back(std::move(f));
    }
    if (!spec.rooms[i].corridor) {
      w.room_index.push_back(i);
      w.room_centers.push_back(spec.rooms[i].rect.center());
    }
  }
  if (!w.room_centers.empty()) {
    Vec2 mean = Vec2::Zero();
    for (const auto& c : w.room_centers) mean += c;
    mean /= static_cast<double>(w.room_centers.size());
    w.floor_center = Vec3(mean.x(), mean.y(), 0.0);
  }

  Rng rng(spec.seed);
  constexpr int kMaxAttempts = 50;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    w.clutter = place_clutter(spec, rng);
    if (spec.uniqueness_threshold <= 0.0 || w.room_index.size() < 2) break;
    if (clutter_unique(w, spec.uniqueness_threshold)) break;
    if (attempt + 1 == kMaxAttempts) throw InvalidSpec("could not generate distinguishable room clutter");
  }
  sample_reference(w, reference_pitch);
  return w;
}

double cast_ray(const World& world, const Vec3& o, const Vec3& d) {
  double best = kInf;
  for (const auto& f : world.walls) best = std::min(best, hit_face(f, o, d));
  for (const auto& c : world.clutter) best = std::min(best, hit_clutter(c, o, d));
  if (d.z() < -1e-15) best = std::min(best, -o.z() / d.z());
  return best;
}

PointCloud raycast_scan(const World& world, const Pose& pose, const SensorModel& sensor, Rng& rng) {
  sensor.validate();
  PointCloud out;
  out.frame_id = "body";
  std::normal_distribution<double> noise(0.0, 1.0);
  const Vec3 origin_body(0.0, 0.0, sensor.mount_height);
  const Vec3 origin = pose.apply(origin_body);
  const Mat3 r = pose.matrix();
  const double half_fov = 0.5 * sensor.vertical_fov_deg * M_PI / 180.0;
  for (int ring = 0; ring < sensor.rings; ++ring) {
    const double phi = sensor.rings == 1 ? 0.0 : -half_fov + 2.0 * half_fov * ring / (sensor.rings - 1);
    for (int i = 0; i < sensor.horizontal_rays; ++i) {
      const double theta = 2.0 * M_PI * i / sensor.horizontal_rays;
      const Vec3 dir_body(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta), std::sin(phi));
      const double t = cast_ray(world, origin, r * dir_body);
      if (!(t <= sensor.max_range)) continue;
      const double range = sensor.range_sigma > 0.0 ? t + sensor.range_sigma * noise(rng) : t;
      out.points.push_back(origin_body + range * dir_body);
    }
  }
  return out;
}

std::vector<PlaneObservation> observe_planes(const World& world, const Pose& pose, const SensorModel& sensor,
                                             Rng& rng) {
  sensor.validate();
  std::vector<PlaneObservation> out;
  std::normal_distribution<double> noise(0.0, 1.0);
  const Vec3 origin = pose.apply(Vec3(0.0, 0.0, sensor.mount_height));
  const Pose world_to_body = pose.inverse();
  constexpr double kStep = 0.25;
  for (int fi = 0; fi < static_cast<int>(world.walls.size()); ++fi) {
    const WallFace& f = world.walls[fi];
    if (f.plane.signed_distance(origin) <= 1e-9) continue;
    const Vec2 u = f.direction();
    const double z = std::clamp(origin.z(), 0.0, f.height);
    const double foot = (origin.head<2>() - f.start).dot(u);
    std::vector<std::pair<double, Vec3>> candidates;
    for (const auto& [a0, b0] : f.solid) {
      // Stay off the interval ends: a corner point is shared with the
      // perpendicular wall and would count as visible through it.
      const double inset = std::min(0.05, 0.25 * (b0 - a0));
      const double a = a0 + inset, b = b0 - inset;
      auto add = [&](double s) {
        const Vec2 q = f.start + s * u;
        const Vec3 p(q.x(), q.y(), z);
        candidates.emplace_back((p - origin).norm(), p);
      };
      add(std::clamp(foot, a, b));
      for (double s = a; s <= b; s += kStep) add(s);
      add(b);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    bool visible = false;
    for (const auto& [dist, p] : candidates) {
      if (dist > sensor.max_range) break;
      if (dist < 1e-9) continue;
      const Vec3 dir = (p - origin) / dist;
      if (cast_ray(world, origin, dir) >= dist - 1e-6) {
        visible = true;
        break;
      }
    }
    if (!visible) continue;
    PlaneObservation obs;
    obs.face = fi;
    Plane body = f.plane.transformed(world_to_body);
    if (sensor.normal_sigma > 0.0 || sensor.offset_sigma > 0.0) {
      body = body.retract(Vec3(sensor.normal_sigma * noise(rng), sensor.normal_sigma * noise(rng),
                               sensor.offset_sigma * noise(rng)));
    }
    obs.covariance = Vec3(sensor.normal_sigma * sensor.normal_sigma, sensor.normal_sigma * sensor.normal_sigma,
                          sensor.offset_sigma * sensor.offset_sigma)
                         .asDiagonal();
    body.covariance = obs.covariance;
    obs.plane = body;
    out.push_back(obs);
  }
  return out;
}

Pose step_odometry(const Pose& gt_prev, const Pose& gt_next, const SensorModel& sensor, Rng& rng) {
  const Pose rel = gt_prev.inverse() * gt_next;
  if (sensor.odom_trans_sigma == 0.0 && sensor.odom_yaw_sigma == 0.0) return rel;
  std::normal_distribution<double> noise(0.0, 1.0);
  // Variance grows linearly with distance travelled and angle turned.
  const double st = sensor.odom_trans_sigma * std::sqrt(rel.translation.head<2>().norm());
  const double sy = sensor.odom_yaw_sigma * std::sqrt(std::abs(wrap_angle(rel.yaw())));
  const double nx = st * noise(rng), ny = st * noise(rng), nyaw = sy * noise(rng);
  return rel * Pose::Planar(nx, ny, nyaw);
}

GroundTruthPath generate_path(const World& world, const TrajectorySpec& spec) {
  if (!(spec.keyframe_spacing > 0.0)) throw InvalidSpec("keyframe spacing must be positive");
  if (!(spec.speed > 0.0)) throw InvalidSpec("speed must be positive");
  if (spec.waypoints.empty()) throw InvalidSpec("trajectory needs at least one waypoint");
  GroundTruthPath path;
  auto free_at = [&](const Vec2& p) {
    if (world.room_at(p) < 0) return false;
    for (const auto& c : world.clutter) {
      if ((c.center - p).norm() < c.footprint_radius() + world.spec.wall_clearance) return false;
    }
    return true;
  };
  auto push = [&](const Vec2& p, double yaw, double s) {
    if (!free_at(p)) {
      throw InvalidSpec("trajectory sample (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                        ") is not in free space");
    }
    path.poses.push_back(Pose::Planar(p.x(), p.y(), yaw));
    path.stamps.push_back(s / spec.speed);
  };
  push(spec.waypoints.front(), spec.start_yaw, 0.0);
  double travelled = 0.0;
  double next = spec.keyframe_spacing;
  for (std::size_t i = 1; i < spec.waypoints.size(); ++i) {
    const Vec2 a = spec.waypoints[i - 1], b = spec.waypoints[i];
    const double len = (b - a).norm();
    if (len < 1e-12) continue;
    const double yaw = std::atan2(b.y() - a.y(), b.x() - a.x());
    while (next <= travelled + len + 1e-9) {
      push(a + (b - a) * ((next - travelled) / len), yaw, next);
      next += spec.keyframe_spacing;
    }
    travelled += len;
  }
  return path;
}

}  // namespace mrsg
