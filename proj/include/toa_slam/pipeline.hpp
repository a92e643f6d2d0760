#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "toa_slam/factors.hpp"
#include "toa_slam/geometry.hpp"
#include "toa_slam/graph.hpp"
#include "toa_slam/types.hpp"

namespace toa_slam {

struct TriggerThresholds {
  double normalized_residual = 3.0;
  double motion_m = 5.0;
  double elapsed_s = 10.0;
  int keyframes = 20;
};

struct RefinementTriggerState {
  double max_normalized_residual = 0.0;
  double accumulated_motion_m = 0.0;
  double elapsed_s = 0.0;
  int keyframes = 0;
};

/// True iff any quantity strictly exceeds its threshold.
bool should_trigger_global_refinement(const RefinementTriggerState& state,
                                      const TriggerThresholds& thresholds);

struct BackendConfig {
  int keyframe_stride = 10;  // odometry samples per keyframe
  int window = 10;           // keyframes per local refinement
  int covisibility_skip = 2;
  double covisibility_inflation = 4.0;  // covariance factor over the chained odometry
  TriggerThresholds thresholds;

  RigidTransform initial_transform;  // T_go guess (Known stations)
  double initial_scale = 1.0;

  // Per odometry sample; the keyframe edge covariance is stride times this.
  double odometry_sigma_translation = 0.002;
  double odometry_sigma_rotation = 0.0005;
  double loop_closure_sigma_translation = 0.01;
  double loop_closure_sigma_rotation = 0.5 * 3.14159265358979323846 / 180.0;

  double huber_delta = 3.0;  // whitened
  double association_window = 0.02;  // s
  double bias_prior_sigma = 0.5;      // m, weak regularizer before marginal updates

  // Known stations: keyframes with ranges and path extent before T_go is first refined.
  int min_init_keyframes = 20;
  double min_init_extent_m = 1.0;
  // Unknown stations: observations and spread before a station is trilaterated.
  int min_station_observations = 100;
  double min_station_spread_m = 0.15;

  OptimizeSettings optimizer;
};

struct BackendStats {
  int keyframes = 0;
  int tracking_steps = 0;
  int local_refinements = 0;
  int global_refinements = 0;
  int transformation_refinements = 0;
  int scale_refinements = 0;
  int toa_used = 0;
  int toa_dropped = 0;
  int loop_closures_used = 0;
};

struct BackendEstimate {
  Trajectory keyframes;  // local frame, metric after scale propagation
  Trajectory global;     // s (T_go T_oc) per keyframe
  RigidTransform transform;
  double scale = 1.0;  // cumulative local-to-metric factor
  std::map<int, double> biases;
  std::map<int, Vec3> stations;  // estimates (Unknown) or the known positions
  bool transform_initialized = false;
  BackendStats stats;
};

/// Factor graph plus the bookkeeping the refinement routines need. Members
/// are public so tests can audit values and fixed flags directly.
class BackendGraph {
 public:
  BackendGraph(const std::vector<BaseStation>& stations, PipelineMode mode, BackendConfig config);

  /// First keyframe is the local origin and stays fixed.
  std::size_t add_keyframe(double timestamp, const RigidTransform& local_pose);
  FactorId add_odometry(std::size_t from, std::size_t to, const RigidTransform& relative);
  FactorId add_covisibility(std::size_t from, std::size_t to, const RigidTransform& relative);
  FactorId add_loop_closure(std::size_t from, std::size_t to, const RigidTransform& relative);
  /// Range from station `station_id` at keyframe `kf`; the factor stays
  /// inactive until T_go (Known) or the station (Unknown) is initialized.
  FactorId add_toa(std::size_t kf, int station_id, double range);

  bool toa_active(FactorId id) const;
  std::vector<FactorId> active_toa_factors() const;
  std::vector<FactorId> relative_factors() const;
  double normalized_residual(FactorId id) const;

  /// Unknown stations: linear trilateration from the station's ranges.
  /// Returns false when the observations are too few or ill-conditioned.
  bool try_initialize_station(int station_id);

  /// Multiplies local translations, T_go and relative measurements by the
  /// current scale value and resets it to 1.
  void propagate_scale();
  void update_priors();

  BackendEstimate estimate() const;

  FactorGraph graph;
  PipelineMode mode;
  BackendConfig config;

  std::vector<VariableId> poses;
  std::vector<double> times;
  VariableId transform;
  VariableId scale;
  std::map<int, VariableId> biases;
  std::map<int, VariableId> station_vars;
  std::map<int, double> station_sigma;
  std::map<int, bool> station_ready;
  bool transform_initialized = false;
  double cumulative_scale = 1.0;

  std::vector<FactorId> odometry_factors;
  std::vector<FactorId> covisibility_factors;
  std::vector<FactorId> loop_closure_factors;
  std::vector<FactorId> toa_factors;
  std::map<FactorId, int> toa_station;
  std::vector<RelativePoseFactor*> relative_pose_factors;
  BackendStats stats;

 private:
  Mat6 keyframe_information() const;
  FactorId add_relative(std::size_t from, std::size_t to, const RigidTransform& relative,
                        const Mat6& info, RelativePoseRole role);
};

/// Optimizes only `pose` against its odometry factor and the listed ranges.
OptimizeReport tracking_pose_step(FactorGraph& graph, VariableId pose, FactorId odometry,
                                  std::span<const FactorId> toa,
                                  const OptimizeSettings& settings = {});

/// Keyframes [first, last] free together with T_go (Known), biases and
/// initialized stations (Unknown); factors touching the window plus priors.
OptimizeReport local_window_refinement(BackendGraph& bg, std::size_t first, std::size_t last);

/// All keyframes (origin excepted), T_go, biases and stations over every
/// active factor, priors excluded.
OptimizeReport global_map_refinement(BackendGraph& bg);

/// T_go and biases only, over the ToA factors. Throws NoToaFactors.
OptimizeReport transformation_refinement(BackendGraph& bg);

/// Scale, T_go (or stations when unknown) and biases over the ToA factors,
/// then propagates the scale into the map. Throws NotMonocular, NoToaFactors.
OptimizeReport scale_refinement(BackendGraph& bg);

/// Known stations: first T_go estimate by multi-start search. Starts are the
/// current guess turned by each of the 24 axis-aligned rotations, crossed
/// with a scale grid in the monocular mode. Leaves the lowest-cost (T_go,
/// scale, biases) in place without propagating the scale.
void initialize_transform(BackendGraph& bg);

/// Streams in timestamp order through tracking, local and triggered global
/// refinement. Throws EmptyStream, NonMonotonicTimestamps.
BackendEstimate run_backend(const std::vector<OdometryMeasurement>& odometry,
                            const std::vector<ToaMeasurement>& toa,
                            const std::vector<LoopClosureMeasurement>& loop_closures,
                            const std::vector<BaseStation>& stations, PipelineMode mode,
                            const BackendConfig& config = {});

}  // namespace toa_slam
