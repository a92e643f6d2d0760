#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "toa_slam/eval.hpp"
#include "toa_slam/pipeline.hpp"
#include "toa_slam/simulate.hpp"

namespace toa_slam {

/// Backend settings for a scenario: noise levels from the config, T_go
/// started from the truth moved by the configured perturbation.
BackendConfig backend_config_for(const ScenarioConfig& config, const ScenarioData& data);

/// Copy of `config` with each station's sigma and bias pinned to the values
/// drawn for `data`, so the scenario replays without the preset draw.
ScenarioConfig resolved_config(const ScenarioConfig& config, const ScenarioData& data);

/// Stations of a resolved config. Throws ConfigError when a sigma or bias is
/// still unresolved.
std::vector<BaseStation> stations_of(const ScenarioConfig& resolved);

EvalReport evaluate_run(const ScenarioConfig& config, const ScenarioData& data,
                        const BackendEstimate& estimate, bool toa_used);

struct ExperimentResult {
  ScenarioData data;
  BackendEstimate estimate;
  EvalReport report;
};

/// Simulate, run the back-end and evaluate. use_toa = false is the
/// odometry-only baseline on the same simulated data.
ExperimentResult run_experiment(const ScenarioConfig& config, bool use_toa = true);

struct RunManifest {
  std::string config_source;
  ScenarioConfig config;  // resolved
  std::map<std::string, std::string> artifacts;  // name -> path relative to the manifest
  std::map<std::string, std::string> run;        // run options, empty after simulate
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest parse_manifest(const std::string& text, const std::string& source = "<manifest>");

/// The toa-slam executable. Returns 0 on success, 1 when the scenario
/// fails, 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace toa_slam
