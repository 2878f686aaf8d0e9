// Command-line front end: runs one scenario in one mode and writes the
// report, traffic table, trajectories, maps and graph dumps to a directory.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mrsg/errors.hpp"
#include "mrsg/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mrsg;

namespace {

json pose_json(const Pose& p) {
  const auto& q = p.rotation;
  return {{"t", {p.translation.x(), p.translation.y(), p.translation.z()}},
          {"q", {q.x(), q.y(), q.z(), q.w()}},
          {"yaw", p.yaw()}};
}

json report_json(const RunResult& res) {
  const RunReport& r = res.report;
  json j;
  j["scenario"] = r.scenario;
  j["mode"] = to_string(r.mode);
  j["seed"] = r.seed;
  j["accounting"] = r.accounting == Accounting::kBroadcast ? "broadcast" : "per-receiver";
  j["noiseless"] = r.noiseless;
  j["ate_cm"] = r.ate_cm;
  j["odometry_ate_cm"] = r.odometry_ate_cm;
  j["map_rmse_cm"] = r.map_rmse_cm;
  j["map_robots"] = r.map_robots;
  j["fully_connected"] = r.fully_connected();
  j["monotone_costs"] = r.monotone_costs;
  j["ticks"] = r.ticks;
  j["seconds"] = r.seconds;
  for (const auto& rb : r.robots) {
    json o = {{"id", rb.id},
              {"keyframes", rb.keyframes},
              {"walls", rb.walls},
              {"rooms", rb.rooms},
              {"ate_cm", rb.ate_cm},
              {"odometry_ate_cm", rb.odometry_ate_cm},
              {"matches", rb.matches},
              {"wall_pairing_failures", rb.wall_pairing_failures},
              {"rejected_alignments", rb.rejected_alignments},
              {"final_cost", rb.final_cost}};
    for (const auto& art : res.robots) {
      if (art.id != rb.id) continue;
      for (const auto& [p, origin] : art.peer_origins) o["peer_origins"][std::to_string(p)] = pose_json(origin);
    }
    j["robots"].push_back(o);
  }
  j["origin_errors"] = json::array();
  for (const auto& e : r.origin_errors) {
    j["origin_errors"].push_back(
        {{"observer", e.observer}, {"peer", e.peer}, {"translation_m", e.translation_m}, {"rotation_deg", e.rotation_deg}});
  }
  j["matches"] = json::array();
  for (const auto& m : r.matches) {
    j["matches"].push_back({{"observer", m.observer},
                            {"local_room", m.local_room},
                            {"peer", m.peer},
                            {"peer_room", m.peer_room},
                            {"sc_distance", m.sc_distance},
                            {"fitness", m.fitness},
                            {"registered", m.registered},
                            {"correct", m.correct}});
  }
  for (const auto& [t, c] : r.traffic) {
    j["traffic"][to_string(t)] = {{"messages", c.messages}, {"bytes", c.bytes}, {"mb", r.mb(t)}};
  }
  j["traffic"]["total"] = {{"messages", r.total.messages}, {"bytes", r.total.bytes}, {"mb", r.total_mb()}};
  return j;
}

void write_stats(const RunReport& r, const fs::path& path) {
  std::ofstream f(path);
  f << "type,messages,bytes,mb\n" << std::setprecision(10);
  for (const auto& [t, c] : r.traffic) f << to_string(t) << ',' << c.messages << ',' << c.bytes << ',' << r.mb(t) << '\n';
  f << "total," << r.total.messages << ',' << r.total.bytes << ',' << r.total_mb() << '\n';
}

void write_pose(std::ostream& f, const Pose& p) {
  const auto& q = p.rotation;
  f << ',' << p.translation.x() << ',' << p.translation.y() << ',' << p.translation.z() << ',' << q.x() << ',' << q.y()
    << ',' << q.z() << ',' << q.w();
}

void write_trajectory(const RobotArtifacts& a, const fs::path& path) {
  std::ofstream f(path);
  f << std::setprecision(12) << "stamp";
  for (const char* s : {"", "gt_", "odom_"}) {
    for (const char* c : {"x", "y", "z", "qx", "qy", "qz", "qw"}) f << ',' << s << c;
  }
  f << '\n';
  for (std::size_t k = 0; k < a.estimate.size(); ++k) {
    f << a.stamps[k];
    write_pose(f, a.estimate[k]);
    write_pose(f, a.ground_truth[k]);
    write_pose(f, a.odometry[k]);
    f << '\n';
  }
}

void write_map(const RobotArtifacts& a, const fs::path& path) {
  std::ofstream f(path);
  f << std::setprecision(7);
  for (const auto& p : a.map.points) f << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

/// Nodes grouped by layer, then the factors between them.
json graph_json(const RobotArtifacts& a) {
  json j;
  j["robot"] = a.id;
  for (const char* layer : {"keyframe", "wall", "room", "floor", "origin"}) j["layers"][layer] = json::array();
  for (const auto& [id, n] : a.graph.nodes()) {
    json node = {{"id", id.str()}, {"owner", id.owner}, {"index", id.index}, {"fixed", n.fixed}};
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Pose>) {
            node["pose"] = pose_json(s);
          } else if constexpr (std::is_same_v<T, Plane>) {
            node["normal"] = {s.normal.x(), s.normal.y(), s.normal.z()};
            node["offset"] = s.offset;
          } else if constexpr (std::is_same_v<T, Vec2>) {
            node["center"] = {s.x(), s.y()};
          } else {
            node["value"] = {s.x(), s.y(), s.z()};
          }
        },
        n.state);
    j["layers"][to_string(id.kind)].push_back(node);
  }
  j["factors"] = json::array();
  for (const auto& f : a.graph.factors()) {
    json nodes = json::array();
    for (const auto& id : f.nodes) nodes.push_back(id.str());
    j["factors"].push_back({{"kind", to_string(f.kind)}, {"nodes", nodes}});
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-robot situational graph simulator"};
  app.require_subcommand(1);
  CLI::App* run = app.add_subcommand("run", "Simulate a scenario and export results");

  std::string scenario, mode_name = "full", accounting = "broadcast", out = "out";
  std::uint64_t seed = 1;
  RunOptions opt;
  run->add_option("scenario", scenario, "Scenario YAML file")->required()->check(CLI::ExistingFile);
  run->add_option("--mode", mode_name, "rooms | rooms_fa | rooms_walls | full")
      ->check(CLI::IsMember({"rooms", "rooms_fa", "rooms_walls", "full"}));
  run->add_option("--seed", seed, "Noise seed");
  run->add_option("--accounting", accounting, "broadcast | per-receiver")
      ->check(CLI::IsMember({"broadcast", "per-receiver"}));
  run->add_option("--out", out, "Output directory");
  run->add_option("--delay", opt.delay_ticks, "Channel delay in ticks")->check(CLI::NonNegativeNumber);
  run->add_option("--drop", opt.drop_probability, "Message drop probability")->check(CLI::Range(0.0, 1.0));
  run->add_flag("--noiseless", opt.noiseless, "Zero every sensor noise term");

  CLI11_PARSE(app, argc, argv);

  try {
    opt.seed = seed;
    opt.accounting = accounting == "broadcast" ? Accounting::kBroadcast : Accounting::kPerReceiver;
    opt.keep_artifacts = true;
    const RunResult res = run_scenario(scenario, parse_mode(mode_name), opt);

    const fs::path dir(out);
    fs::create_directories(dir);
    std::ofstream(dir / "report.json") << std::setw(2) << report_json(res) << '\n';
    write_stats(res.report, dir / "stats.csv");
    for (const auto& a : res.robots) {
      const std::string id = std::to_string(a.id);
      write_trajectory(a, dir / ("trajectory_" + id + ".csv"));
      write_map(a, dir / ("map_" + id + ".xyz"));
      std::ofstream(dir / ("graph_" + id + ".json")) << graph_json(a) << '\n';
    }

    const RunReport& r = res.report;
    std::cout << std::fixed << std::setprecision(2) << r.scenario << " mode=" << to_string(r.mode) << " seed=" << r.seed
              << " ATE=" << r.ate_cm << "cm (odometry " << r.odometry_ate_cm << "cm) map=" << r.map_rmse_cm
              << "cm data=" << std::setprecision(4) << r.total_mb() << "MB origin=" << r.max_origin_error_m() << "m/"
              << r.max_origin_error_deg() << "deg -> " << dir.string() << '\n';
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
