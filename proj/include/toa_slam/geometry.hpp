#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <utility>
#include <vector>

namespace toa_slam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Angle below which exp/log switch to their series expansions.
inline constexpr double kSmallAngle = 1e-8;

/// Tangent vector of SE3, rotational part first.
struct Twist {
  Vec3 rotation = Vec3::Zero();     // rad
  Vec3 translation = Vec3::Zero();  // m

  Vec6 vector() const {
    Vec6 v;
    v << rotation, translation;
    return v;
  }
  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
};

/// SE3 element stored as a unit quaternion plus translation. The quaternion is
/// renormalized on construction, so every operation producing a transform
/// keeps |q| = 1 to machine precision.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Eigen::Quaterniond& rotation, const Vec3& translation)
      : rotation_(rotation.normalized()), translation_(translation) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : RigidTransform(Eigen::Quaterniond(rotation), translation) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Eigen::Quaterniond::Identity(), t}; }

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
  const Vec3& translation() const { return translation_; }
  Eigen::Matrix4d matrix() const;

  RigidTransform inverse() const;
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }
  RigidTransform operator*(const RigidTransform& other) const;

  RigidTransform with_translation(const Vec3& t) const { return {rotation_, t}; }

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// p -> scale * R p + t
struct SimilarityTransform {
  double scale = 1.0;
  RigidTransform rigid;

  Vec3 operator*(const Vec3& p) const {
    return scale * (rigid.rotation() * p) + rigid.translation();
  }
};

struct StampedPose {
  double timestamp = 0.0;
  RigidTransform pose;
};
using Trajectory = std::vector<StampedPose>;

Mat3 hat(const Vec3& w);

Eigen::Quaterniond so3_exp(const Vec3& w);
Vec3 so3_log(const Eigen::Quaterniond& q);
Mat3 so3_left_jacobian(const Vec3& w);
Mat3 so3_left_jacobian_inverse(const Vec3& w);
inline Mat3 so3_right_jacobian(const Vec3& w) { return so3_left_jacobian(-w); }
inline Mat3 so3_right_jacobian_inverse(const Vec3& w) { return so3_left_jacobian_inverse(-w); }

RigidTransform se3_exp(const Twist& xi);
Twist se3_log(const RigidTransform& T);

/// (a∘b)(p) = a(b(p))
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform inverse(const RigidTransform& T) { return T.inverse(); }

/// Adjoint in (rotation, translation) ordering: T exp(xi) T^-1 = exp(Ad xi).
Mat6 se3_adjoint(const RigidTransform& T);
Mat6 se3_left_jacobian(const Twist& xi);
Mat6 se3_left_jacobian_inverse(const Twist& xi);
Mat6 se3_right_jacobian_inverse(const Twist& xi);

/// Rotation angle in [0, pi].
double rotation_angle(const Eigen::Quaterniond& q);

/// Nearest-neighbour timestamp association; pairs are (estimate index,
/// reference index). Estimate poses without a reference within `max_dt` are
/// dropped.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& estimate,
                                                           const Trajectory& reference,
                                                           double max_dt = 0.02);

/// Closed-form rigid alignment: returns T minimizing sum |ref_i - T est_i|^2.
RigidTransform align_se3(std::span<const Vec3> estimate, std::span<const Vec3> reference);

/// Closed-form similarity alignment (Umeyama), uniform weights.
SimilarityTransform align_sim3(std::span<const Vec3> estimate, std::span<const Vec3> reference);

RigidTransform align_se3(const Trajectory& estimate, const Trajectory& reference,
                         double max_dt = 0.02);
SimilarityTransform align_sim3(const Trajectory& estimate, const Trajectory& reference,
                               double max_dt = 0.02);

}  // namespace toa_slam
