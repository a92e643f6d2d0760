#include "toa_slam/eval.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "toa_slam/errors.hpp"

namespace toa_slam {

AteResult ate_rmse(const Trajectory& estimate, const Trajectory& reference, Alignment alignment,
                   double max_dt) {
  const auto pairs = associate(estimate, reference, max_dt);
  if (pairs.empty()) throw Error(ErrorCode::AssociationFailure, "no estimate pose matches a reference timestamp");
  if (pairs.size() < 3) throw Error(ErrorCode::TooFewPoses, "ATE needs at least three associated poses");
  std::vector<Vec3> est, ref;
  for (const auto& [i, j] : pairs) {
    est.push_back(estimate[i].pose.translation());
    ref.push_back(reference[j].pose.translation());
  }
  SimilarityTransform T;
  if (alignment == Alignment::SE3) T.rigid = align_se3(std::span<const Vec3>(est), std::span<const Vec3>(ref));
  if (alignment == Alignment::Sim3) T = align_sim3(std::span<const Vec3>(est), std::span<const Vec3>(ref));
  double sum = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) sum += (ref[k] - T * est[k]).squaredNorm();
  return {std::sqrt(sum / static_cast<double>(est.size())), T.scale, est.size()};
}

double scale_error_pct(double recovered, double truth) {
  if (!(truth > 0.0)) throw Error(ErrorCode::InvalidArgument, "true scale must be positive");
  return 100.0 * std::abs(recovered / truth - 1.0);
}

double improvement_pct(double baseline, double variant) {
  if (!(baseline > 0.0)) throw Error(ErrorCode::InvalidArgument, "baseline metric must be positive");
  return 100.0 * (baseline - variant) / baseline;
}

double gdop(const Vec3& receiver, const std::vector<Vec3>& stations) {
  if (stations.size() < 4) throw Error(ErrorCode::InvalidArgument, "GDOP needs at least four stations");
  Eigen::MatrixXd G(static_cast<Eigen::Index>(stations.size()), 4);
  for (std::size_t i = 0; i < stations.size(); ++i) {
    const Vec3 d = stations[i] - receiver;
    const double r = d.norm();
    if (r < 1e-9) throw Error(ErrorCode::SingularGeometry, "receiver coincides with a station");
    G.row(static_cast<Eigen::Index>(i)) << (d / r).transpose(), 1.0;
  }
  const Eigen::Matrix4d N = G.transpose() * G;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(N);
  const auto& ev = eig.eigenvalues();
  if (!(ev(0) > 1e-10 * ev(3))) throw Error(ErrorCode::SingularGeometry, "station geometry is rank-deficient");
  return std::sqrt((eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose()).trace());
}

GdopProfile gdop_profile(const Trajectory& trajectory, const std::vector<Vec3>& stations) {
  GdopProfile p;
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& s : trajectory) {
    p.timestamps.push_back(s.timestamp);
    try {
      const double g = gdop(s.pose.translation(), stations);
      p.values.push_back(g);
      sum += g;
      p.max = used == 0 ? g : std::max(p.max, g);
      ++used;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingularGeometry) throw;
      p.values.push_back(std::numeric_limits<double>::quiet_NaN());
      ++p.singular;
    }
  }
  if (used == 0) throw Error(ErrorCode::AllSingular, "every trajectory sample has singular geometry");
  p.mean = sum / static_cast<double>(used);
  return p;
}

EvalReport evaluate(const EvalInputs& in) {
  if (!in.estimate || !in.ground_truth) throw Error(ErrorCode::InvalidArgument, "evaluate needs an estimate and ground truth");
  const BackendEstimate& est = *in.estimate;
  const Trajectory& gt = *in.ground_truth;
  EvalReport r;
  r.local_ate_se3 = ate_rmse(est.keyframes, gt, Alignment::SE3).rmse;

  Trajectory raw = est.keyframes;
  for (auto& p : raw) p.pose = p.pose.with_translation(p.pose.translation() / est.scale);
  r.unscaled_local_ate = ate_rmse(raw, gt, Alignment::SE3).rmse;

  if (in.mode.sensor == SensorClass::Monocular) {
    r.local_ate_sim3 = ate_rmse(est.keyframes, gt, Alignment::Sim3).rmse;
    if (in.toa_used) r.recovered_scale = est.scale;
    if (in.toa_used && in.true_scale) r.scale_error = scale_error_pct(est.scale, *in.true_scale);
  }
  if (in.toa_used && est.transform_initialized) {
    r.global_ate = ate_rmse(est.global, gt, Alignment::None).rmse;
    const double aligned = ate_rmse(est.global, gt, Alignment::SE3).rmse;
    if (aligned > 0.0) r.global_to_local_ratio = *r.global_ate / aligned;
  }
  if (in.stations.size() >= 4) {
    try {
      const GdopProfile g = gdop_profile(gt, in.stations);
      r.gdop_mean = g.mean;
      r.gdop_max = g.max;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllSingular) throw;
    }
  }
  return r;
}

double local_error(const EvalReport& report) {
  return report.local_ate_sim3 ? *report.local_ate_sim3 : report.local_ate_se3;
}

void attach_improvement(EvalReport& report, const std::string& baseline_name,
                        std::optional<double> baseline_local_ate) {
  report.baseline_name = baseline_name;
  if (!baseline_local_ate || !(*baseline_local_ate > 0.0)) {
    report.baseline_failed = true;
    report.improvement.reset();
    return;
  }
  report.baseline_failed = false;
  report.improvement = improvement_pct(*baseline_local_ate, local_error(report));
}

namespace {

std::string num(std::optional<double> v) {
  if (!v) return "N/A";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

std::string eval_csv_header() {
  return "label,local_ate_se3_m,local_ate_sim3_m,unscaled_local_ate_m,global_ate_m,scale_error_pct,"
         "recovered_scale,global_to_local_ratio,gdop_mean,gdop_max,baseline,improvement_pct";
}

std::string eval_csv_row(const std::string& label, const EvalReport& r) {
  std::ostringstream ss;
  ss << label << ',' << num(r.local_ate_se3) << ',' << num(r.local_ate_sim3) << ','
     << num(r.unscaled_local_ate) << ',' << num(r.global_ate) << ',' << num(r.scale_error) << ','
     << num(r.recovered_scale) << ',' << num(r.global_to_local_ratio) << ',' << num(r.gdop_mean) << ','
     << num(r.gdop_max) << ',' << (r.baseline_name.empty() ? "N/A" : r.baseline_name) << ',';
  if (r.baseline_failed)
    ss << "undefined (baseline failed)";
  else
    ss << num(r.improvement);
  return ss.str();
}

std::string gdop_series_csv(const GdopProfile& profile) {
  std::ostringstream ss;
  ss << "timestamp,gdop\n";
  for (std::size_t i = 0; i < profile.values.size(); ++i) {
    char buf[96];
    if (std::isnan(profile.values[i]))
      std::snprintf(buf, sizeof buf, "%.6f,nan\n", profile.timestamps[i]);
    else
      std::snprintf(buf, sizeof buf, "%.6f,%.9f\n", profile.timestamps[i], profile.values[i]);
    ss << buf;
  }
  return ss.str();
}

}  // namespace toa_slam
