#include "mrsg/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <set>

#include "mrsg/errors.hpp"
#include "mrsg/metrics.hpp"
#include "mrsg/room_descriptor.hpp"

namespace mrsg {

namespace {

constexpr double kMapVoxel = 0.1;

bool monotone(const OptimizeResult& r) {
  for (std::size_t i = 1; i < r.accepted_costs.size(); ++i) {
    if (r.accepted_costs[i] > r.accepted_costs[i - 1]) return false;
  }
  return true;
}

/// Sensing, local mapping and everything derived from it. Identical for
/// every mode, so it is computed once.
struct Robot {
  AgentId id = 0;
  GroundTruthPath path;
  Rng rng;
  std::unique_ptr<LocalSGraph> local;
  std::vector<Pose> odometry;
  std::size_t next = 0;
  bool monotone = true;

  std::uint32_t distill_seq = 0;
  std::optional<DistilledGraph> last_distilled;
  std::set<std::uint32_t> visited;
  std::set<std::uint32_t> described;
  std::map<std::uint32_t, RoomCloud> clouds;
  std::vector<RoomDescriptor> descriptors;

  /// Produced by the current step, published by every mode.
  std::optional<DistilledGraph> outgoing_graph;
  std::vector<RoomDescriptor> outgoing_descriptors;

  /// Registrations keyed by (local room, peer, peer room).
  std::map<RoomPairKey, AlignResult> alignments;

  bool done() const { return next >= path.poses.size(); }
};

/// Per-mode state of one robot.
struct Agent {
  Robot* robot = nullptr;
  std::unique_ptr<CollabGraph> collab;
  std::map<std::pair<AgentId, std::uint32_t>, RoomDescriptor> peer_descriptors;
  std::map<std::pair<AgentId, std::uint32_t>, RoomCloud> peer_clouds;
  std::set<RoomPairKey> tried;
  std::uint32_t msg_seq = 0;
  bool pending_optimize = false;
  int keyframes_since_optimize = 0;
  bool monotone = true;
  std::size_t pairing_failures = 0;
  std::size_t rejected = 0;
  double last_cost = 0.0;
  bool optimized = false;
  std::vector<MatchRecord> matches;
};

struct ModeRun {
  Mode mode;
  std::unique_ptr<Channel> channel;
  std::vector<Agent> agents;
  std::uint64_t ticks = 0;
  bool draining = true;
};

class Simulation {
 public:
  Simulation(const Scenario& sc, const std::vector<Mode>& modes, const RunOptions& opt)
      : sc_(sc), opt_(opt), world_(generate_world(sc.world)) {
    sensor_ = opt.noiseless ? sc.sensor.noiseless() : sc.sensor;
    sensor_.validate();
    if (sc.robots.size() < 2 || sc.robots.size() > 255) throw ConfigError("need between 2 and 255 robots");
    for (std::size_t r = 0; r < sc.robots.size(); ++r) {
      Robot& rb = robots_.emplace_back();
      rb.id = static_cast<AgentId>(r);
      rb.path = generate_path(world_, sc.robots[r]);
      std::seed_seq seq{opt.seed, static_cast<std::uint64_t>(r)};
      rb.rng.seed(seq);
      LocalParams lp;
      lp.odom_trans_sigma = sc.sensor.odom_trans_sigma;
      lp.odom_yaw_sigma = sc.sensor.odom_yaw_sigma;
      rb.local = std::make_unique<LocalSGraph>(rb.id, lp);
    }
    registration_.fitness_threshold = sc.pipeline.icp_threshold;
    collab_params_.non_fa_information_scale = sc.pipeline.non_fa_information_scale;
    collab_params_.unregistered_sigma = sc.pipeline.icp_threshold;
    for (Mode m : modes) {
      ModeRun& run = runs_.emplace_back();
      run.mode = m;
      ChannelConfig cc;
      cc.agents = static_cast<int>(robots_.size());
      cc.delay_ticks = opt.delay_ticks;
      cc.drop_probability = opt.drop_probability;
      cc.accounting = opt.accounting;
      cc.seed = opt.seed;
      run.channel = std::make_unique<Channel>(cc);
      for (auto& rb : robots_) {
        Agent& a = run.agents.emplace_back();
        a.robot = &rb;
        a.collab = std::make_unique<CollabGraph>(*rb.local, collab_params_);
      }
    }
  }

  std::vector<RunResult> run() {
    const auto t0 = std::chrono::steady_clock::now();
    bool sensing = true;
    while (sensing) {
      sensing = false;
      for (auto& rb : robots_) {
        const bool fresh = !rb.done();
        if (fresh) sense(rb);
        for (auto& run : runs_) step(run, run.agents[rb.id], fresh);
      }
      for (const auto& rb : robots_) sensing = sensing || !rb.done();
      for (auto& run : runs_) {
        run.channel->tick();
        ++run.ticks;
      }
    }
    for (auto& rb : robots_) finish(rb);
    for (auto& run : runs_) {
      for (auto& a : run.agents) publish(run, a);
    }
    // Each mode drains on its own so its tick count ignores the others.
    for (int i = 0; i < opt_.max_drain_ticks; ++i) {
      for (auto& run : runs_) {
        if (!run.draining) continue;
        const auto before = run.channel->stats().total.messages;
        bool busy = false;
        for (auto& a : run.agents) busy = step(run, a, false) || busy;
        busy = busy || run.channel->stats().total.messages != before;
        run.channel->tick();
        ++run.ticks;
        run.draining = busy;
      }
    }
    for (auto& run : runs_) {
      for (auto& a : run.agents) optimize(a, true);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<RunResult> out;
    for (auto& run : runs_) {
      RunResult r = report(run);
      r.report.ticks = run.ticks;
      r.report.seconds = seconds;
      out.push_back(std::move(r));
    }
    return out;
  }

 private:
  void sense(Robot& rb) {
    const auto& poses = rb.path.poses;
    const std::size_t k = rb.next++;
    const Pose odo = k == 0 ? Pose() : step_odometry(poses[k - 1], poses[k], sensor_, rb.rng);
    rb.odometry.push_back(k == 0 ? Pose() : rb.odometry.back() * odo);
    PointCloud scan = raycast_scan(world_, poses[k], sensor_, rb.rng);
    const auto planes = observe_planes(world_, poses[k], sensor_, rb.rng);
    LocalSGraph& g = *rb.local;
    g.insert_keyframe(odo, std::move(scan), planes);
    rb.monotone = monotone(g.optimize_local()) && rb.monotone;
    g.detect_rooms();
    g.update_floor();

    rb.outgoing_graph.reset();
    rb.outgoing_descriptors.clear();
    if ((k + 1) % static_cast<std::size_t>(std::max(1, sc_.pipeline.distill_every)) == 0) distill_if_changed(rb);

    // A room is described once the robot has been inside it and left.
    const auto inside = g.room_containing(g.current_pose().translation.head<2>(), 0.0);
    if (inside) rb.visited.insert(g.rooms()[*inside].room.index);
    for (const auto& room : g.rooms()) {
      const std::uint32_t id = room.room.index;
      const bool here = inside && g.rooms()[*inside].room.index == id;
      if (rb.visited.count(id) && !here) describe(rb, room);
    }
  }

  void finish(Robot& rb) {
    rb.outgoing_graph.reset();
    rb.outgoing_descriptors.clear();
    distill_if_changed(rb);
    for (const auto& room : rb.local->rooms()) describe(rb, room);
  }

  void distill_if_changed(Robot& rb) {
    DistilledGraph d = distill(*rb.local, rb.distill_seq + 1);
    if (d.walls.empty()) return;
    if (rb.last_distilled && !should_rebroadcast(*rb.last_distilled, d)) return;
    ++rb.distill_seq;
    rb.last_distilled = d;
    rb.outgoing_graph = std::move(d);
  }

  void describe(Robot& rb, const RoomRecord& room) {
    const std::uint32_t id = room.room.index;
    if (rb.described.count(id)) return;
    rb.described.insert(id);
    try {
      RoomCloud rc = downsample(build_room_cloud(*rb.local, room), sc_.pipeline.descriptor);
      rc.owner = rb.id;
      RoomDescriptor d = make_descriptor(rc, sc_.pipeline.descriptor);
      rb.clouds[id] = std::move(rc);
      rb.descriptors.push_back(d);
      rb.outgoing_descriptors.push_back(std::move(d));
    } catch (const EmptyRoomCloud&) {
    }
  }

  void publish(ModeRun& run, Agent& a) {
    Robot& rb = *a.robot;
    if (rb.outgoing_graph) {
      run.channel->broadcast(rb.id, encode({MsgType::kDistilledGraph, rb.id, rb.outgoing_graph->seq, *rb.outgoing_graph}));
    }
    for (const auto& d : rb.outgoing_descriptors) {
      run.channel->broadcast(rb.id, encode({MsgType::kRoomDescriptor, rb.id, ++a.msg_seq, d}));
    }
  }

  /// One communication round of agent `a`. Returns true when it did work.
  bool step(ModeRun& run, Agent& a, bool fresh_keyframe) {
    Robot& rb = *a.robot;
    bool busy = false;
    if (fresh_keyframe) publish(run, a);
    for (const Bytes& bytes : run.channel->poll(rb.id)) {
      busy = true;
      handle(run, a, decode(bytes));
    }
    busy = match(run, a) || busy;
    if (fresh_keyframe && a.optimized) ++a.keyframes_since_optimize;
    if (a.pending_optimize ||
        (a.optimized && a.keyframes_since_optimize >= std::max(1, sc_.pipeline.collab_optimize_every))) {
      optimize(a, false);
    }
    return busy;
  }

  void handle(ModeRun& run, Agent& a, const Envelope& env) {
    Robot& rb = *a.robot;
    switch (env.type) {
      case MsgType::kDistilledGraph:
        try {
          a.collab->integrate_distilled(std::get<DistilledGraph>(env.message));
        } catch (const StaleMessage&) {
        }
        break;
      case MsgType::kRoomDescriptor: {
        const auto& d = std::get<RoomDescriptor>(env.message);
        a.peer_descriptors[{env.sender, d.room}] = d;
        break;
      }
      case MsgType::kCloudRequest: {
        const auto& req = std::get<CloudRequest>(env.message);
        CloudResponse resp;
        try {
          resp = serve_cloud_request(env.sender, req, rb.clouds);
        } catch (const UnknownRoom&) {
          resp.requester = env.sender;
          resp.room = req.room;
          resp.status = CloudResponse::kUnknownRoom;
        }
        run.channel->send(rb.id, env.sender, encode({MsgType::kCloudResponse, rb.id, ++a.msg_seq, resp}));
        break;
      }
      case MsgType::kCloudResponse: {
        const auto& resp = std::get<CloudResponse>(env.message);
        run.channel->complete_request(rb.id, env.sender, resp.room);
        if (resp.status == CloudResponse::kOk) a.peer_clouds[{env.sender, resp.room}] = resp.cloud;
        break;
      }
    }
  }

  bool match(ModeRun& run, Agent& a) {
    Robot& rb = *a.robot;
    if (rb.descriptors.empty() || a.peer_descriptors.empty()) return false;
    bool busy = false;
    const auto candidates = match_rooms(rb.descriptors, a.peer_descriptors, sc_.pipeline.sc_threshold, a.tried);
    for (const auto& c : candidates) {
      const RoomPairKey key{c.local_room, c.peer, c.peer_room};
      if (a.tried.count(key) || already_paired(a, c)) continue;
      // The peer's walls for this room must have arrived.
      try {
        a.collab->peer_room_frame(c.peer, c.peer_room);
      } catch (const UnknownRoom&) {
        continue;
      }
      RoomMatch m;
      m.local_room = c.local_room;
      m.peer = c.peer;
      m.peer_room = c.peer_room;
      m.sc_distance = c.distance;
      if (uses_fine_alignment(run.mode)) {
        auto cloud = a.peer_clouds.find({c.peer, c.peer_room});
        if (cloud == a.peer_clouds.end()) {
          busy = run.channel->request_cloud(rb.id, c.peer, c.peer_room, ++a.msg_seq) || busy;
          continue;
        }
        auto it = rb.alignments.find(key);
        if (it == rb.alignments.end()) {
          it = rb.alignments
                   .emplace(key, fine_align(rb.clouds.at(c.local_room).cloud, cloud->second.cloud, c.yaw_seed,
                                            registration_))
                   .first;
        }
        a.tried.insert(key);
        busy = true;
        if (!it->second.accepted) {
          ++a.rejected;
          continue;
        }
        m.transform = it->second.transform;
        m.fitness = it->second.fitness;
        m.registered = true;
      } else {
        m.transform = Pose::FromYaw(-c.yaw_seed);
        a.tried.insert(key);
        busy = true;
      }
      accept(run, a, m);
    }
    return busy;
  }

  static bool already_paired(const Agent& a, const RoomCandidate& c) {
    for (const auto& m : a.matches) {
      if (m.peer == c.peer && (m.local_room == c.local_room || m.peer_room == c.peer_room)) return true;
    }
    return false;
  }

  void accept(ModeRun& run, Agent& a, const RoomMatch& m) {
    try {
      a.collab->add_match_factors(m, run.mode);
    } catch (const WallPairingFailed&) {
      ++a.pairing_failures;
    }
    MatchRecord rec;
    rec.observer = a.robot->id;
    rec.local_room = m.local_room;
    rec.peer = m.peer;
    rec.peer_room = m.peer_room;
    rec.sc_distance = m.sc_distance;
    rec.fitness = m.fitness;
    rec.registered = m.registered;
    rec.correct = world_room(a.robot->id, m.local_room) == world_room(m.peer, m.peer_room) &&
                  world_room(a.robot->id, m.local_room) >= 0;
    a.matches.push_back(rec);
    a.pending_optimize = true;
  }

  /// World room index of a robot's room, from its estimated center.
  int world_room(AgentId r, std::uint32_t room) const {
    const Robot& rb = robots_[r];
    for (const auto& rec : rb.local->rooms()) {
      if (rec.room.index != room) continue;
      const Vec2 c = rb.local->graph().state<Vec2>(rec.room);
      return world_.room_at(rb.path.poses.front().apply(Vec3(c.x(), c.y(), 0.0)).head<2>());
    }
    return -1;
  }

  void optimize(Agent& a, bool final) {
    bool any = false;
    for (const auto& [p, peer] : a.collab->peers()) any = any || a.collab->collaborative(p);
    if (!any) {
      if (final) a.last_cost = a.robot->local->graph().cost();
      return;
    }
    if (final && !a.pending_optimize && a.keyframes_since_optimize == 0 && a.optimized) return;
    const OptimizeResult res = a.collab->optimize_collaborative();
    a.monotone = monotone(res) && a.monotone;
    a.last_cost = res.final_cost;
    a.optimized = true;
    a.pending_optimize = false;
    a.keyframes_since_optimize = 0;
  }

  std::vector<Pose> ground_truth(const Robot& rb) const {
    std::vector<Pose> out;
    const Pose inv = rb.path.poses.front().inverse();
    for (const auto& p : rb.path.poses) out.push_back(inv * p);
    return out;
  }

  PointCloud keyframe_map(const Robot& rb, const std::vector<Pose>& est, const Pose& to_frame) const {
    PointCloud merged;
    const auto& kfs = rb.local->keyframes();
    for (std::size_t k = 0; k < kfs.size(); ++k) {
      const Pose t = to_frame * est[k];
      for (const auto& p : kfs[k].scan.points) merged.points.push_back(t.apply(p));
    }
    return voxel_downsample(merged, kMapVoxel);
  }

  RunResult report(ModeRun& run) {
    RunResult out;
    RunReport& r = out.report;
    r.scenario = sc_.name;
    r.mode = run.mode;
    r.seed = opt_.seed;
    r.accounting = opt_.accounting;
    r.noiseless = opt_.noiseless;

    std::vector<std::vector<Pose>> est, gt, odo;
    for (auto& a : run.agents) {
      const Robot& rb = *a.robot;
      est.push_back(a.collab->trajectory());
      gt.push_back(ground_truth(rb));
      odo.push_back(rb.odometry);
      RobotReport rr;
      rr.id = rb.id;
      rr.keyframes = rb.local->keyframes().size();
      rr.walls = rb.local->wall_ids().size();
      rr.rooms = rb.local->rooms().size();
      rr.ate_cm = compute_ate(est.back(), gt.back());
      rr.odometry_ate_cm = compute_ate(odo.back(), gt.back());
      rr.matches = a.matches.size();
      rr.wall_pairing_failures = a.pairing_failures;
      rr.rejected_alignments = a.rejected;
      rr.final_cost = a.last_cost;
      r.robots.push_back(rr);
      r.matches.insert(r.matches.end(), a.matches.begin(), a.matches.end());
      r.monotone_costs = r.monotone_costs && a.monotone && rb.monotone;

      for (const auto& [p, peer] : a.collab->peers()) {
        const auto o = a.collab->peer_origin(p);
        if (!o) continue;
        const Pose truth = rb.path.poses.front().inverse() * robots_[p].path.poses.front();
        const Pose diff = truth.inverse() * *o;
        OriginError e;
        e.observer = rb.id;
        e.peer = p;
        e.translation_m = (o->translation - truth.translation).norm();
        e.rotation_deg = Eigen::AngleAxisd(diff.rotation).angle() * 180.0 / M_PI;
        r.origin_errors.push_back(e);
      }
    }
    r.ate_cm = aggregate_ate(est, gt);
    r.odometry_ate_cm = aggregate_ate(odo, gt);

    // Merged map in robot 0's frame, placed in the world through robot 0's
    // trajectory alignment.
    const Agent& lead = run.agents.front();
    std::vector<Pose> world_gt = robots_.front().path.poses;
    const Pose to_world = align_trajectories(est.front(), world_gt);
    PointCloud merged;
    for (std::size_t i = 0; i < run.agents.size(); ++i) {
      Pose frame;
      if (i != 0) {
        const auto o = lead.collab->peer_origin(static_cast<AgentId>(i));
        if (!o) continue;
        frame = *o;
      }
      ++r.map_robots;
      for (const auto& p : keyframe_map(robots_[i], est[i], to_world * frame).points) merged.points.push_back(p);
    }
    r.map_rmse_cm = compute_map_rmse(voxel_downsample(merged, kMapVoxel), world_.reference);

    const ChannelStats stats = run.channel->stats();
    for (MsgType t : {MsgType::kDistilledGraph, MsgType::kRoomDescriptor, MsgType::kCloudRequest,
                      MsgType::kCloudResponse}) {
      r.traffic[t] = stats.by_type(t);
    }
    r.total = stats.total;

    if (opt_.keep_artifacts) {
      for (std::size_t i = 0; i < run.agents.size(); ++i) {
        const Agent& a = run.agents[i];
        const Robot& rb = *a.robot;
        RobotArtifacts art;
        art.id = rb.id;
        art.stamps = rb.path.stamps;
        art.ground_truth = gt[i];
        art.estimate = est[i];
        art.odometry = odo[i];
        art.map = keyframe_map(rb, est[i], Pose());
        art.graph = a.optimized ? a.collab->joint_graph() : rb.local->graph();
        art.rooms = rb.local->rooms();
        for (const auto& [p, peer] : a.collab->peers()) {
          if (auto o = a.collab->peer_origin(p)) art.peer_origins[p] = *o;
        }
        out.robots.push_back(std::move(art));
      }
    }
    return out;
  }

  const Scenario& sc_;
  RunOptions opt_;
  World world_;
  SensorModel sensor_;
  RegistrationConfig registration_;
  CollabParams collab_params_;
  std::vector<Robot> robots_;
  std::vector<ModeRun> runs_;
};

}  // namespace

bool RunReport::fully_connected() const {
  const std::size_t n = robots.size();
  return origin_errors.size() == n * (n - 1);
}

double RunReport::max_origin_error_m() const {
  double m = 0.0;
  for (const auto& e : origin_errors) m = std::max(m, e.translation_m);
  return m;
}

double RunReport::max_origin_error_deg() const {
  double m = 0.0;
  for (const auto& e : origin_errors) m = std::max(m, e.rotation_deg);
  return m;
}

double RunReport::max_final_cost() const {
  double m = 0.0;
  for (const auto& r : robots) m = std::max(m, r.final_cost);
  return m;
}

double RunReport::mb(MsgType t) const {
  auto it = traffic.find(t);
  return it == traffic.end() ? 0.0 : static_cast<double>(it->second.bytes) / 1e6;
}

double RunReport::total_mb() const { return static_cast<double>(total.bytes) / 1e6; }

bool same_results(const RunReport& a, const RunReport& b) {
  auto same_traffic = [](const std::map<MsgType, TrafficCounter>& x, const std::map<MsgType, TrafficCounter>& y) {
    if (x.size() != y.size()) return false;
    for (auto i = x.begin(), j = y.begin(); i != x.end(); ++i, ++j) {
      if (i->first != j->first || i->second.bytes != j->second.bytes || i->second.messages != j->second.messages) {
        return false;
      }
    }
    return true;
  };
  return a.scenario == b.scenario && a.mode == b.mode && a.seed == b.seed && a.accounting == b.accounting &&
         a.noiseless == b.noiseless && a.robots == b.robots && a.ate_cm == b.ate_cm &&
         a.odometry_ate_cm == b.odometry_ate_cm && a.map_rmse_cm == b.map_rmse_cm && a.map_robots == b.map_robots &&
         a.origin_errors == b.origin_errors && a.matches == b.matches && a.monotone_costs == b.monotone_costs &&
         same_traffic(a.traffic, b.traffic) && a.total.bytes == b.total.bytes &&
         a.total.messages == b.total.messages && a.ticks == b.ticks;
}

std::vector<RunResult> run_scenario(const Scenario& scenario, const std::vector<Mode>& modes,
                                    const RunOptions& options) {
  Simulation sim(scenario, modes, options);
  return sim.run();
}

RunResult run_scenario(const Scenario& scenario, Mode mode, const RunOptions& options) {
  return std::move(run_scenario(scenario, std::vector<Mode>{mode}, options).front());
}

RunResult run_scenario(const std::string& path, Mode mode, const RunOptions& options) {
  return run_scenario(load_scenario(path), mode, options);
}

}  // namespace mrsg
