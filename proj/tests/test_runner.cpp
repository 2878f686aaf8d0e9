#include "doctest.h"

#include "mrsg/errors.hpp"
#include "mrsg/runner.hpp"

using namespace mrsg;

namespace {

const Scenario& pair_scenario() {
  static const Scenario sc = load_scenario(std::string(MRSG_SOURCE_DIR) + "/scenarios/pair.yaml");
  return sc;
}

const std::vector<Mode> kModes{Mode::kRooms, Mode::kRoomsFA, Mode::kRoomsWalls, Mode::kFull};

/// All four modes side by side, seed 1, with artifacts.
const std::vector<RunResult>& all_modes() {
  static const std::vector<RunResult> r = [] {
    RunOptions o;
    o.keep_artifacts = true;
    return run_scenario(pair_scenario(), kModes, o);
  }();
  return r;
}

const RunReport& report(Mode m) {
  for (const auto& r : all_modes()) {
    if (r.report.mode == m) return r.report;
  }
  throw std::logic_error("mode missing");
}

}  // namespace

TEST_CASE("a mode's result does not depend on its companions") {
  const RunResult alone = run_scenario(pair_scenario(), Mode::kFull);
  CHECK(same_results(alone.report, report(Mode::kFull)));
  CHECK(alone.robots.empty());
}

TEST_CASE("reruns are identical") {
  const RunResult a = run_scenario(pair_scenario(), Mode::kRooms);
  const RunResult b = run_scenario(pair_scenario(), Mode::kRooms);
  CHECK(same_results(a.report, b.report));
  CHECK(same_results(a.report, report(Mode::kRooms)));

  RunOptions other;
  other.seed = 2;
  const RunResult c = run_scenario(pair_scenario(), Mode::kRooms, other);
  CHECK_FALSE(same_results(a.report, c.report));
}

TEST_CASE("every mode connects both robots and beats odometry") {
  for (Mode m : kModes) {
    CAPTURE(to_string(m));
    const RunReport& r = report(m);
    CHECK(r.fully_connected());
    CHECK(r.monotone_costs);
    REQUIRE(r.robots.size() == 2);
    CHECK(r.ate_cm < r.odometry_ate_cm);
    CHECK(r.map_robots == 2);
    // Both directions of the relative placement.
    REQUIRE(r.origin_errors.size() == 2);
    CHECK(r.max_origin_error_m() < 0.2);
    CHECK(r.max_origin_error_deg() < 2.0);
    for (const auto& match : r.matches) {
      CHECK(match.correct);
      CHECK(match.sc_distance <= pair_scenario().pipeline.sc_threshold);
      CHECK(match.registered == uses_fine_alignment(m));
    }
  }
}

TEST_CASE("traffic accounting") {
  for (Mode m : kModes) {
    CAPTURE(to_string(m));
    const RunReport& r = report(m);
    TrafficCounter sum;
    for (const auto& [type, c] : r.traffic) {
      sum.messages += c.messages;
      sum.bytes += c.bytes;
    }
    CHECK(sum.messages == r.total.messages);
    CHECK(sum.bytes == r.total.bytes);
    CHECK(r.mb(MsgType::kDistilledGraph) > 0.0);
    CHECK(r.mb(MsgType::kRoomDescriptor) > 0.0);
    if (!uses_fine_alignment(m)) {
      CHECK(r.mb(MsgType::kCloudRequest) == 0.0);
      CHECK(r.mb(MsgType::kCloudResponse) == 0.0);
    } else {
      CHECK(r.mb(MsgType::kCloudResponse) > 0.0);
    }
  }
  CHECK(report(Mode::kRooms).total_mb() < 0.1 * report(Mode::kRoomsFA).total_mb());
  CHECK(report(Mode::kRoomsWalls).total_mb() < 0.1 * report(Mode::kFull).total_mb());
  // Walls ride along in the distilled graph: no extra bytes for using them.
  CHECK(report(Mode::kRooms).total.bytes == report(Mode::kRoomsWalls).total.bytes);
}

TEST_CASE("with two robots both accountings agree") {
  RunOptions o;
  o.accounting = Accounting::kPerReceiver;
  const RunResult r = run_scenario(pair_scenario(), Mode::kRooms, o);
  CHECK(r.report.total.bytes == report(Mode::kRooms).total.bytes);
  CHECK(r.report.ate_cm == report(Mode::kRooms).ate_cm);
}

TEST_CASE("artifacts") {
  for (const auto& res : all_modes()) {
    CAPTURE(to_string(res.report.mode));
    REQUIRE(res.robots.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      const RobotArtifacts& a = res.robots[i];
      const RobotReport& rr = res.report.robots[i];
      CHECK(a.id == rr.id);
      CHECK(a.stamps.size() == rr.keyframes);
      CHECK(a.ground_truth.size() == rr.keyframes);
      CHECK(a.estimate.size() == rr.keyframes);
      CHECK(a.odometry.size() == rr.keyframes);
      CHECK(std::is_sorted(a.stamps.begin(), a.stamps.end()));
      CHECK(a.ground_truth.front().translation.norm() < 1e-12);
      CHECK(a.estimate.front().translation.norm() < 1e-9);
      CHECK_FALSE(a.map.empty());
      CHECK(a.rooms.size() == rr.rooms);
      CHECK(a.graph.nodes().size() > rr.keyframes);
      CHECK(a.peer_origins.size() == 1);
    }
  }
}

TEST_CASE("the two origin estimates compose to the identity") {
  for (const auto& res : all_modes()) {
    CAPTURE(to_string(res.report.mode));
    const Pose loop = res.robots[0].peer_origins.at(1) * res.robots[1].peer_origins.at(0);
    // Twice the bound on each estimate.
    CHECK(loop.translation.norm() < 0.2);
    CHECK(std::abs(wrap_angle(loop.yaw())) * 180.0 / M_PI < 2.0);
  }
}

TEST_CASE("zero noise") {
  RunOptions o;
  o.noiseless = true;
  const RunResult r = run_scenario(pair_scenario(), Mode::kFull, o);
  CHECK(r.report.noiseless);
  CHECK(r.report.fully_connected());
  CHECK(r.report.ate_cm < 1e-6);
  CHECK(r.report.max_origin_error_m() < 1e-6);
  CHECK(r.report.max_final_cost() < 1e-10);
}

TEST_CASE("scenario needs two robots") {
  Scenario one = pair_scenario();
  one.robots.resize(1);
  CHECK_THROWS_AS(run_scenario(one, Mode::kRooms), ConfigError);
  CHECK_THROWS_AS(run_scenario(std::string(MRSG_SOURCE_DIR) + "/scenarios/missing.yaml", Mode::kRooms), ConfigError);
}
