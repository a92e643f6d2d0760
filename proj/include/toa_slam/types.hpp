#pragma once

#include <limits>
#include <string_view>
#include <vector>

#include "toa_slam/geometry.hpp"

namespace toa_slam {

/// Half-open time interval [start, end) in seconds.
struct Interval {
  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();

  bool contains(double t) const { return t >= start && t < end; }
};

struct BaseStation {
  int id = 0;
  Vec3 position = Vec3::Zero();  // global frame, m
  double sigma = 0.15;           // m
  double bias = 0.0;             // constant range offset, m
  std::vector<Interval> intervals{Interval{}};

  bool active_at(double t) const;
};

struct ToaMeasurement {
  double timestamp = 0.0;
  int station_id = 0;
  double range = 0.0;  // m
};

/// Relative motion between two consecutive odometry samples, expressed in
/// the earlier pose's frame.
struct OdometryMeasurement {
  double t_from = 0.0;
  double t_to = 0.0;
  RigidTransform relative;
};

struct LoopClosureMeasurement {
  double t_from = 0.0;
  double t_to = 0.0;
  RigidTransform relative;
};

enum class SensorClass { RangeScaled, Monocular };
enum class StationKnowledge { Known, Unknown };

struct PipelineMode {
  SensorClass sensor = SensorClass::RangeScaled;
  StationKnowledge stations = StationKnowledge::Known;
  bool loop_closure = false;
};

std::string_view to_string(SensorClass s);
std::string_view to_string(StationKnowledge k);

}  // namespace toa_slam
