#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toa_slam/geometry.hpp"
#include "toa_slam/types.hpp"

namespace toa_slam {

struct Box {
  Vec3 center{0.0, 0.0, 2.5};
  Vec3 size{5.0, 5.0, 5.0};

  bool contains(const Vec3& p, double tol = 1e-9) const;
  Vec3 clamp(const Vec3& p) const;
};

struct Waypoint {
  double time = 0.0;  // s
  Vec3 position = Vec3::Zero();
  std::optional<double> yaw;  // rad; derived from the direction of travel when absent
};

struct TrajectorySpec {
  std::vector<Waypoint> waypoints;
  double rate_hz = 100.0;
  Box box;
};

/// Piecewise cubic Hermite position (finite-difference tangents, rest at the
/// ends) and slerp orientation through the waypoints, sampled at rate_hz.
/// Throws TooFewWaypoints below two waypoints.
Trajectory generate_trajectory(const TrajectorySpec& spec);

/// Smooth box-filling waypoint set (one waypoint every 2 s).
std::vector<Waypoint> lissajous_waypoints(double duration_s, const Box& box, double phase = 0.0);

struct OdometryNoiseModel {
  double sigma_translation = 0.002;  // m per step
  double sigma_rotation = 0.0005;    // rad per step
  double scale_drift = 1.0;          // multiplies every measured translation
  // Velocity bias random walk, m/s per sqrt(s); 0 disables. Terminal drift
  // over a run of T seconds grows like q T^1.5 / sqrt(3).
  double velocity_bias_walk = 0.0;
};

std::vector<OdometryMeasurement> corrupt_odometry(const Trajectory& ground_truth,
                                                  const OdometryNoiseModel& model,
                                                  std::uint64_t seed);

/// Chains relative measurements starting at `start`.
Trajectory integrate_odometry(const RigidTransform& start,
                              const std::vector<OdometryMeasurement>& odometry);

/// One range per grid time k / rate inside the trajectory span and the
/// station's active intervals: |p - L| + N(bias, sigma^2), redrawn while
/// non-positive. Merged by timestamp, ties broken by station id.
std::vector<ToaMeasurement> simulate_toa(const Trajectory& ground_truth,
                                         const std::vector<BaseStation>& stations,
                                         double rate_hz, std::uint64_t seed);

using VisibilitySchedule = std::map<int, std::vector<Interval>>;

/// Keeps measurements whose station has an interval containing the
/// timestamp. Stations missing from the schedule are dropped entirely.
std::vector<ToaMeasurement> apply_visibility_schedule(const std::vector<ToaMeasurement>& stream,
                                                      const VisibilitySchedule& schedule);

/// Non-overlapping single-station windows: BS1 10-40 s, BS2 50-70 s, BS3 80-100 s.
VisibilitySchedule sequential_schedule();

struct LoopClosureSettings {
  int keyframe_stride = 10;
  int window = 10;
  double radius = 0.3;            // m
  double sigma_translation = 0.01;  // m
  double sigma_rotation = 0.5 * 3.14159265358979323846 / 180.0;
};

/// Emulated place recognition: pairs keyframes (every stride-th pose) whose
/// true positions lie within `radius` and whose indices differ by more than
/// 3 * window. At most one closure per window of keyframes.
std::vector<LoopClosureMeasurement> detect_loop_closures(const Trajectory& ground_truth,
                                                         const LoopClosureSettings& settings,
                                                         std::uint64_t seed);

enum class FrequencyPreset { Ghz28, Ghz78, Custom };

struct NoiseEnvelope {
  double sigma_min, sigma_max;  // m
  double bias_min, bias_max;    // m
};

/// Per-station noise ranges observed in the simulated 28/78 GHz campaigns.
NoiseEnvelope noise_envelope(FrequencyPreset preset);

/// Draws sigma and bias uniformly inside the preset envelope.
void assign_preset_noise(std::vector<BaseStation>& stations, FrequencyPreset preset,
                         std::uint64_t seed);

/// Named station layouts: "aerolab", "tetrahedral", "diamond", "z_shape",
/// "asymmetric", "clustered", "uwbvo".
std::vector<BaseStation> station_layout(const std::string& name);
const std::vector<std::string>& gdop_layout_names();

/// Everything a backend run consumes, plus the truth it is scored against.
struct ScenarioData {
  Trajectory ground_truth;  // global frame
  std::vector<OdometryMeasurement> odometry;
  std::vector<ToaMeasurement> toa;
  std::vector<LoopClosureMeasurement> loop_closures;
  std::vector<BaseStation> stations;
  RigidTransform true_transform;  // T_go: the first ground-truth pose
};

struct StationConfig {
  int id = 0;
  Vec3 position = Vec3::Zero();
  std::optional<double> sigma;  // drawn from the frequency preset when absent
  std::optional<double> bias;
  std::optional<std::vector<Interval>> intervals;  // full coverage when absent
};

/// Complete experiment description.
struct ScenarioConfig {
  enum class TrajectoryKind { Lissajous, Waypoints, TumFile };

  std::string name = "scenario";
  std::uint64_t seed = 1;

  TrajectoryKind trajectory_kind = TrajectoryKind::Lissajous;
  std::vector<Waypoint> waypoints;
  std::string tum_path;
  double duration_s = 120.0;
  double odometry_rate_hz = 100.0;
  Box box;

  OdometryNoiseModel odometry;
  FrequencyPreset frequency = FrequencyPreset::Ghz78;
  std::vector<StationConfig> stations;
  double toa_rate_hz = 10.0;

  PipelineMode mode;
  bool toa_enabled = true;
  LoopClosureSettings loop_closure;

  double perturbation_translation_m = 1.0;
  double perturbation_rotation_deg = 30.0;
};

/// Resolves station noise, generates truth, odometry, ranges, and loop
/// closures. Identical (config, seed) gives bit-identical data.
ScenarioData build_scenario(const ScenarioConfig& config);

/// Rotation of `angle` about a random axis and a translation of `distance`
/// along a random direction, drawn from `seed`.
RigidTransform random_perturbation(double distance, double angle, std::uint64_t seed);

}  // namespace toa_slam
