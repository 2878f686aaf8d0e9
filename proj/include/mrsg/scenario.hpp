#pragma once

#include <string>
#include <vector>

#include "mrsg/scan_context.hpp"
#include "mrsg/world.hpp"

namespace mrsg {

/// Tunables of the per-agent pipeline that a scenario file may override.
struct PipelineParams {
  ScanContextConfig descriptor;
  double sc_threshold = 0.35;
  double icp_threshold = 0.07;
  /// Keyframes between distilled-graph change checks.
  int distill_every = 5;
  /// Keyframes between collaborative optimizations once matched.
  int collab_optimize_every = 10;
  /// Information of a non-registered room match relative to a registered one.
  double non_fa_information_scale = 0.1;
};

struct Scenario {
  std::string name;
  WorldSpec world;
  SensorModel sensor;
  std::vector<TrajectorySpec> robots;
  PipelineParams pipeline;
};

/// Throws ConfigError on malformed input.
Scenario parse_scenario(const std::string& yaml_text);
Scenario load_scenario(const std::string& path);

}  // namespace mrsg
