#include "mrsg/scenario.hpp"

#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "mrsg/errors.hpp"

namespace mrsg {

namespace {

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (const auto v = node[key]) out = v.as<T>();
}

Vec2 read_vec2(const YAML::Node& node) {
  if (!node.IsSequence() || node.size() != 2) throw ConfigError("expected a [x, y] pair");
  return {node[0].as<double>(), node[1].as<double>()};
}

RoomSpec read_room(const YAML::Node& n) {
  RoomSpec r;
  read(n, "name", r.name);
  read(n, "corridor", r.corridor);
  const auto rect = n["rect"];
  if (!rect || !rect.IsSequence() || rect.size() != 4) throw ConfigError("room '" + r.name + "' needs rect: [x0, y0, x1, y1]");
  r.rect = {rect[0].as<double>(), rect[1].as<double>(), rect[2].as<double>(), rect[3].as<double>()};
  if (const auto c = n["clutter"]) {
    read(c, "count", r.clutter.count);
    read(c, "min_size", r.clutter.min_size);
    read(c, "max_size", r.clutter.max_size);
    read(c, "min_height", r.clutter.min_height);
    read(c, "max_height", r.clutter.max_height);
    read(c, "max_wall_distance", r.clutter.max_wall_distance);
  }
  return r;
}

WorldSpec read_world(const YAML::Node& n) {
  WorldSpec w;
  read(n, "seed", w.seed);
  read(n, "wall_height", w.wall_height);
  read(n, "wall_clearance", w.wall_clearance);
  read(n, "door_keepout", w.door_keepout);
  read(n, "uniqueness_threshold", w.uniqueness_threshold);
  for (const auto& r : n["rooms"]) w.rooms.push_back(read_room(r));
  for (const auto& d : n["doors"]) {
    DoorSpec door;
    door.center = read_vec2(d["center"]);
    read(d, "width", door.width);
    w.doors.push_back(door);
  }
  if (w.rooms.empty()) throw ConfigError("world has no rooms");
  return w;
}

void read_sensor(const YAML::Node& n, SensorModel& s) {
  read(n, "horizontal_rays", s.horizontal_rays);
  read(n, "rings", s.rings);
  read(n, "vertical_fov_deg", s.vertical_fov_deg);
  read(n, "max_range", s.max_range);
  read(n, "range_sigma", s.range_sigma);
  read(n, "normal_sigma", s.normal_sigma);
  read(n, "offset_sigma", s.offset_sigma);
  read(n, "odom_trans_sigma", s.odom_trans_sigma);
  read(n, "odom_yaw_sigma", s.odom_yaw_sigma);
  read(n, "mount_height", s.mount_height);
}

void read_pipeline(const YAML::Node& n, PipelineParams& p) {
  read(n, "sectors", p.descriptor.sectors);
  read(n, "rings", p.descriptor.rings);
  read(n, "max_radius", p.descriptor.max_radius);
  read(n, "voxel", p.descriptor.voxel);
  read(n, "min_height", p.descriptor.min_height);
  read(n, "sc_threshold", p.sc_threshold);
  read(n, "icp_threshold", p.icp_threshold);
  read(n, "distill_every", p.distill_every);
  read(n, "collab_optimize_every", p.collab_optimize_every);
  read(n, "non_fa_information_scale", p.non_fa_information_scale);
}

}  // namespace

Scenario parse_scenario(const std::string& yaml_text) {
  Scenario sc;
  try {
    const YAML::Node root = YAML::Load(yaml_text);
    read(root, "name", sc.name);
    if (!root["world"]) throw ConfigError("scenario has no world section");
    sc.world = read_world(root["world"]);
    if (const auto s = root["sensor"]) read_sensor(s, sc.sensor);
    if (const auto p = root["pipeline"]) read_pipeline(p, sc.pipeline);
    for (const auto& r : root["robots"]) {
      TrajectorySpec t;
      read(r, "start_yaw", t.start_yaw);
      read(r, "speed", t.speed);
      read(r, "keyframe_spacing", t.keyframe_spacing);
      for (const auto& w : r["waypoints"]) t.waypoints.push_back(read_vec2(w));
      sc.robots.push_back(std::move(t));
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("scenario parse error: ") + e.what());
  }
  if (sc.robots.empty()) throw ConfigError("scenario has no robots");
  if (sc.robots.size() > 255) throw ConfigError("at most 255 robots are supported");
  sc.sensor.validate();
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

}  // namespace mrsg
