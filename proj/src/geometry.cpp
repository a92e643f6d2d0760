#include "toa_slam/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "toa_slam/errors.hpp"

namespace toa_slam {

namespace {

// Coefficients of the SO3/SE3 Jacobians. Each switches to a Taylor series
// where the closed form loses precision to cancellation.
constexpr double kSeriesAngle = 1e-3;

double coeff_a(double theta) {  // (1 - cos t) / t^2
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  }
  const double s = std::sin(0.5 * theta);
  return 2.0 * s * s / (theta * theta);
}

double coeff_b(double theta) {  // (t - sin t) / t^3
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  }
  return (theta - std::sin(theta)) / (theta * theta * theta);
}

double coeff_c(double theta) {  // (t^2 + 2 cos t - 2) / (2 t^4)
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    return 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
  }
  const double t2 = theta * theta;
  return (t2 + 2.0 * std::cos(theta) - 2.0) / (2.0 * t2 * t2);
}

double coeff_d(double theta) {  // (2t - 3 sin t + t cos t) / (2 t^5)
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    return 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
  }
  const double t2 = theta * theta;
  return (2.0 * theta - 3.0 * std::sin(theta) + theta * std::cos(theta)) / (2.0 * t2 * t2 * theta);
}

double coeff_inv(double theta) {  // 1/t^2 - cot(t/2) / (2t)
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  }
  return 1.0 / (theta * theta) - std::cos(0.5 * theta) / (2.0 * theta * std::sin(0.5 * theta));
}

// Coupling block of the SE3 left Jacobian.
Mat3 se3_q_block(const Vec3& w, const Vec3& v) {
  const double theta = w.norm();
  const Mat3 W = hat(w);
  const Mat3 V = hat(v);
  const Mat3 WV = W * V;
  const Mat3 VW = V * W;
  const Mat3 WVW = WV * W;
  return 0.5 * V + coeff_b(theta) * (WV + VW + WVW) +
         coeff_c(theta) * (W * WV + VW * W - 3.0 * WVW) + coeff_d(theta) * (WVW * W + W * WVW);
}

}  // namespace

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Quaterniond qi = rotation_.conjugate();
  return {qi, -(qi * translation_)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
}

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

Eigen::Quaterniond so3_exp(const Vec3& w) {
  const double theta = w.norm();
  double real = 0.0;
  double k = 0.0;  // sin(t/2) / t
  if (theta < kSmallAngle) {
    real = 1.0 - theta * theta / 8.0;
    k = 0.5 - theta * theta / 48.0;
  } else {
    real = std::cos(0.5 * theta);
    k = std::sin(0.5 * theta) / theta;
  }
  Eigen::Quaterniond q(real, k * w.x(), k * w.y(), k * w.z());
  q.normalize();
  return q;
}

Vec3 so3_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < kSmallAngle) {
    // 2 atan(n / w) / n ~ 2 / w (1 - n^2 / (3 w^2))
    const double w = q.w();
    return (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * v;
  }
  const double theta = 2.0 * std::atan2(n, q.w());
  return (theta / n) * v;
}

Mat3 so3_left_jacobian(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = hat(w);
  return Mat3::Identity() + coeff_a(theta) * W + coeff_b(theta) * W * W;
}

Mat3 so3_left_jacobian_inverse(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = hat(w);
  return Mat3::Identity() - 0.5 * W + coeff_inv(theta) * W * W;
}

RigidTransform se3_exp(const Twist& xi) {
  return {so3_exp(xi.rotation), so3_left_jacobian(xi.rotation) * xi.translation};
}

Twist se3_log(const RigidTransform& T) {
  const Vec3 w = so3_log(T.rotation());
  return {w, so3_left_jacobian_inverse(w) * T.translation()};
}

Mat6 se3_adjoint(const RigidTransform& T) {
  const Mat3 R = T.rotation_matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = R;
  ad.bottomLeftCorner<3, 3>() = hat(T.translation()) * R;
  ad.bottomRightCorner<3, 3>() = R;
  return ad;
}

Mat6 se3_left_jacobian(const Twist& xi) {
  const Mat3 J = so3_left_jacobian(xi.rotation);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = J;
  out.bottomLeftCorner<3, 3>() = se3_q_block(xi.rotation, xi.translation);
  out.bottomRightCorner<3, 3>() = J;
  return out;
}

Mat6 se3_left_jacobian_inverse(const Twist& xi) {
  const Mat3 Ji = so3_left_jacobian_inverse(xi.rotation);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = Ji;
  out.bottomLeftCorner<3, 3>() = -Ji * se3_q_block(xi.rotation, xi.translation) * Ji;
  out.bottomRightCorner<3, 3>() = Ji;
  return out;
}

Mat6 se3_right_jacobian_inverse(const Twist& xi) {
  return se3_left_jacobian_inverse({-xi.rotation, -xi.translation});
}

double rotation_angle(const Eigen::Quaterniond& q) { return so3_log(q).norm(); }

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& estimate,
                                                           const Trajectory& reference,
                                                           double max_dt) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (reference.empty()) return pairs;
  pairs.reserve(estimate.size());
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double t = estimate[i].timestamp;
    auto it = std::lower_bound(reference.begin(), reference.end(), t,
                               [](const StampedPose& p, double ts) { return p.timestamp < ts; });
    std::size_t best = reference.size();
    double best_dt = max_dt;
    for (auto cand : {it, it == reference.begin() ? it : std::prev(it)}) {
      if (cand == reference.end()) continue;
      const double dt = std::abs(cand->timestamp - t);
      if (dt <= best_dt) {
        best_dt = dt;
        best = static_cast<std::size_t>(cand - reference.begin());
      }
    }
    if (best < reference.size()) pairs.emplace_back(i, best);
  }
  return pairs;
}

namespace {

struct UmeyamaResult {
  SimilarityTransform sim;
  double estimate_variance = 0.0;
};

UmeyamaResult umeyama(std::span<const Vec3> estimate, std::span<const Vec3> reference,
                      bool with_scale) {
  if (estimate.size() != reference.size()) {
    throw Error(ErrorCode::InvalidArgument, "alignment inputs differ in length");
  }
  if (estimate.size() < 3) {
    throw Error(ErrorCode::TooFewPoses, "alignment needs at least 3 associated poses");
  }
  const double n = static_cast<double>(estimate.size());
  Vec3 mu_x = Vec3::Zero();
  Vec3 mu_y = Vec3::Zero();
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    mu_x += estimate[i];
    mu_y += reference[i];
  }
  mu_x /= n;
  mu_y /= n;

  Mat3 sigma = Mat3::Zero();
  double var_x = 0.0;
  double var_y = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const Vec3 dx = estimate[i] - mu_x;
    const Vec3 dy = reference[i] - mu_y;
    sigma += dy * dx.transpose();
    var_x += dx.squaredNorm();
    var_y += dy.squaredNorm();
  }
  sigma /= n;
  var_x /= n;
  var_y /= n;

  if (with_scale && var_x <= 1e-24 * std::max(1.0, var_y)) {
    throw Error(ErrorCode::ZeroVariance, "estimate points are coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  // Rank < 2 leaves the rotation about the remaining axis undetermined.
  if (d(0) <= 1e-15 || d(1) <= 1e-10 * d(0)) {
    throw Error(ErrorCode::DegenerateGeometry, "centered point covariance is rank-deficient");
  }
  const Mat3& U = svd.matrixU();
  const Mat3& V = svd.matrixV();
  Mat3 S = Mat3::Identity();
  if (U.determinant() * V.determinant() < 0.0) S(2, 2) = -1.0;
  const Mat3 R = U * S * V.transpose();
  const double scale = with_scale ? (d.asDiagonal() * S).trace() / var_x : 1.0;
  const Vec3 t = mu_y - scale * R * mu_x;
  return {{scale, RigidTransform(R, t)}, var_x};
}

std::pair<std::vector<Vec3>, std::vector<Vec3>> associated_positions(const Trajectory& estimate,
                                                                     const Trajectory& reference,
                                                                     double max_dt) {
  const auto pairs = associate(estimate, reference, max_dt);
  std::vector<Vec3> est;
  std::vector<Vec3> ref;
  est.reserve(pairs.size());
  ref.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    est.push_back(estimate[i].pose.translation());
    ref.push_back(reference[j].pose.translation());
  }
  return {std::move(est), std::move(ref)};
}

}  // namespace

RigidTransform align_se3(std::span<const Vec3> estimate, std::span<const Vec3> reference) {
  return umeyama(estimate, reference, false).sim.rigid;
}

SimilarityTransform align_sim3(std::span<const Vec3> estimate, std::span<const Vec3> reference) {
  return umeyama(estimate, reference, true).sim;
}

RigidTransform align_se3(const Trajectory& estimate, const Trajectory& reference, double max_dt) {
  const auto [est, ref] = associated_positions(estimate, reference, max_dt);
  return align_se3(std::span<const Vec3>(est), std::span<const Vec3>(ref));
}

SimilarityTransform align_sim3(const Trajectory& estimate, const Trajectory& reference,
                               double max_dt) {
  const auto [est, ref] = associated_positions(estimate, reference, max_dt);
  return align_sim3(std::span<const Vec3>(est), std::span<const Vec3>(ref));
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InvalidInitialValue: return "InvalidInitialValue";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NoFreeVariables: return "NoFreeVariables";
    case ErrorCode::NeverOptimized: return "NeverOptimized";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::NoToaFactors: return "NoToaFactors";
    case ErrorCode::NotMonocular: return "NotMonocular";
    case ErrorCode::TooFewWaypoints: return "TooFewWaypoints";
    case ErrorCode::TooFewPoses: return "TooFewPoses";
    case ErrorCode::AssociationFailure: return "AssociationFailure";
    case ErrorCode::SingularGeometry: return "SingularGeometry";
    case ErrorCode::AllSingular: return "AllSingular";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace toa_slam
