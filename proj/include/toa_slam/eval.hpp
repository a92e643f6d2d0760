#pragma once

#include <optional>
#include <string>
#include <vector>

#include "toa_slam/geometry.hpp"
#include "toa_slam/pipeline.hpp"
#include "toa_slam/types.hpp"

namespace toa_slam {

enum class Alignment { None, SE3, Sim3 };

struct AteResult {
  double rmse = 0.0;   // m
  double scale = 1.0;  // recovered by Sim3, 1 otherwise
  std::size_t pairs = 0;
};

/// RMSE of translation residuals after the requested alignment of the
/// timestamp-associated poses. Throws TooFewPoses below three pairs and
/// AssociationFailure when nothing associates.
AteResult ate_rmse(const Trajectory& estimate, const Trajectory& reference, Alignment alignment,
                   double max_dt = 0.02);

/// 100 |recovered / truth - 1|
double scale_error_pct(double recovered, double truth);

/// 100 (baseline - variant) / baseline; positive means the variant is better.
double improvement_pct(double baseline, double variant);

/// sqrt(trace((G^T G)^-1)), rows of G the unit vectors from the receiver to
/// each station plus a trailing 1. Throws SingularGeometry.
double gdop(const Vec3& receiver, const std::vector<Vec3>& stations);

struct GdopProfile {
  double mean = 0.0;
  double max = 0.0;
  std::vector<double> timestamps;
  std::vector<double> values;  // NaN for excluded singular samples
  std::size_t singular = 0;
};

/// Per-sample GDOP; singular samples are excluded and counted. Throws
/// AllSingular when no sample is usable.
GdopProfile gdop_profile(const Trajectory& trajectory, const std::vector<Vec3>& stations);

struct EvalReport {
  double local_ate_se3 = 0.0;
  std::optional<double> local_ate_sim3;  // monocular
  double unscaled_local_ate = 0.0;       // SE3 on the trajectory before scale correction
  std::optional<double> global_ate;      // absent without a global frame
  std::optional<double> scale_error;     // %
  std::optional<double> recovered_scale;
  std::optional<double> global_to_local_ratio;
  std::optional<double> gdop_mean;
  std::optional<double> gdop_max;
  std::optional<double> improvement;  // % vs baseline
  std::string baseline_name;
  bool baseline_failed = false;
};

struct EvalInputs {
  const BackendEstimate* estimate = nullptr;
  const Trajectory* ground_truth = nullptr;
  PipelineMode mode;
  bool toa_used = true;
  std::optional<double> true_scale;  // metric / odometry units
  std::vector<Vec3> stations;        // for GDOP; empty skips it
};

/// Local error is Sim3 ATE in the monocular mode and SE3 ATE otherwise;
/// global error is the unaligned ATE of the reported global trajectory.
EvalReport evaluate(const EvalInputs& in);

/// Baseline local error for improvement rows; non-positive or missing means
/// the baseline failed.
void attach_improvement(EvalReport& report, const std::string& baseline_name,
                        std::optional<double> baseline_local_ate);

double local_error(const EvalReport& report);

std::string eval_csv_header();
std::string eval_csv_row(const std::string& label, const EvalReport& report);

/// `timestamp,gdop` with excluded samples written as `nan`.
std::string gdop_series_csv(const GdopProfile& profile);

}  // namespace toa_slam
