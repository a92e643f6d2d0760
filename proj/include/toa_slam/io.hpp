#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "toa_slam/geometry.hpp"
#include "toa_slam/simulate.hpp"
#include "toa_slam/types.hpp"

namespace toa_slam {

/// TUM trajectory: `timestamp tx ty tz qx qy qz qw` per line, '#' comments.
Trajectory read_tum(const std::filesystem::path& path);
Trajectory parse_tum(std::istream& in, const std::string& source = "<stream>");
void write_tum(const std::filesystem::path& path, const Trajectory& trajectory);
void write_tum(std::ostream& out, const Trajectory& trajectory);

/// Odometry streams are stored as the integrated trajectory (identity start).
Trajectory odometry_to_trajectory(const std::vector<OdometryMeasurement>& odometry);
std::vector<OdometryMeasurement> trajectory_to_odometry(const Trajectory& trajectory);

/// CSV with header `timestamp,station_id,range_m`.
std::vector<ToaMeasurement> read_toa_csv(const std::filesystem::path& path);
std::vector<ToaMeasurement> parse_toa_csv(std::istream& in, const std::string& source = "<stream>");
void write_toa_csv(const std::filesystem::path& path, const std::vector<ToaMeasurement>& toa);

/// CSV with header `t_from,t_to,tx,ty,tz,qx,qy,qz,qw`.
std::vector<LoopClosureMeasurement> read_loop_closure_csv(const std::filesystem::path& path);
void write_loop_closure_csv(const std::filesystem::path& path,
                            const std::vector<LoopClosureMeasurement>& closures);

/// JSON scenario config. Unknown keys and type mismatches raise ConfigError
/// carrying the line of the offending entry when it can be located.
ScenarioConfig parse_config(const std::string& text, const std::string& source = "<config>");
ScenarioConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ScenarioConfig& config);

/// Bundled configs: aerolab_28ghz, aerolab_78ghz, sequential_3bs, uwbvo_mh,
/// tetrahedral, diamond, z_shape, asymmetric, clustered.
const std::vector<std::string>& preset_names();
ScenarioConfig preset_config(const std::string& name);

/// `--config` accepts a file path or a preset name.
ScenarioConfig resolve_config(const std::string& path_or_preset);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace toa_slam
