#include "toa_slam/factors.hpp"

#include <cmath>

#include "toa_slam/errors.hpp"

namespace toa_slam {

namespace {

constexpr double kMinRange = 1e-9;

Vec3 scaled_global_position(const ToaState& s) {
  return s.scale * (s.transform * s.pose.translation());
}

}  // namespace

double toa_residual(const ToaState& state, double measured_range) {
  const double calculated = (scaled_global_position(state) - state.station).norm();
  return calculated - (measured_range - state.bias);
}

ToaJacobians toa_jacobians(const ToaState& state) {
  const Vec3 p = scaled_global_position(state);
  const Vec3 diff = p - state.station;
  const double range = diff.norm();
  if (range <= kMinRange) {
    throw Error(ErrorCode::DegenerateRange, "camera maps onto the station position");
  }
  const Vec3 u = diff / range;
  const Mat3 R_go = state.transform.rotation_matrix();
  const Mat3 R_oc = state.pose.rotation_matrix();

  ToaJacobians J;
  // Right perturbation of T_oc moves its translation by R_oc v.
  J.pose.head<3>().setZero();
  J.pose.tail<3>() = state.scale * u.transpose() * R_go * R_oc;
  // Right perturbation of T_go: R_go Exp(w) t_oc + t_go + R_go v.
  J.transform.head<3>() = -state.scale * u.transpose() * R_go * hat(state.pose.translation());
  J.transform.tail<3>() = state.scale * u.transpose() * R_go;
  J.log_scale = u.dot(p);
  J.bias = 1.0;
  J.station = -u.transpose();
  return J;
}

Vec6 relative_pose_residual(const RigidTransform& from, const RigidTransform& to,
                            const RigidTransform& measured) {
  return se3_log(measured.inverse() * from.inverse() * to).vector();
}

namespace {

std::vector<VariableId> toa_variables(const ToaFactorSpec& spec) {
  std::vector<VariableId> vars{spec.pose, spec.transform, spec.bias};
  if (spec.scale) vars.push_back(*spec.scale);
  vars.push_back(spec.station);
  return vars;
}

}  // namespace

ToaFactor::ToaFactor(const ToaFactorSpec& spec, RobustKernel kernel)
    : Factor(toa_variables(spec), Eigen::MatrixXd::Constant(1, 1, spec.information), kernel),
      spec_(spec) {
  if (!(spec.measured_range > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "measured range must be positive");
  }
  if (!(spec.information > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "range information must be positive");
  }
}

ToaState ToaFactor::state(std::span<const Variable* const> values) const {
  ToaState s;
  s.pose = values[0]->se3();
  s.transform = values[1]->se3();
  s.bias = values[2]->bias();
  std::size_t next = 3;
  if (spec_.scale) s.scale = values[next++]->scale();
  s.station = values[next]->point();
  return s;
}

Eigen::VectorXd ToaFactor::evaluate(std::span<const Variable* const> values,
                                    std::vector<Eigen::MatrixXd>* jacobians) const {
  const ToaState s = state(values);
  Eigen::VectorXd r(1);
  r(0) = toa_residual(s, spec_.measured_range);
  if (jacobians) {
    const ToaJacobians J = toa_jacobians(s);
    jacobians->resize(values.size());
    (*jacobians)[0] = J.pose;
    (*jacobians)[1] = J.transform;
    (*jacobians)[2] = Eigen::MatrixXd::Constant(1, 1, J.bias);
    std::size_t next = 3;
    if (spec_.scale) (*jacobians)[next++] = Eigen::MatrixXd::Constant(1, 1, J.log_scale);
    (*jacobians)[next] = J.station;
  }
  return r;
}

RelativePoseFactor::RelativePoseFactor(VariableId from, VariableId to,
                                       const RigidTransform& measured, const Mat6& information,
                                       RelativePoseRole role)
    : Factor({from, to}, information), measured_(measured), role_(role) {}

std::string_view RelativePoseFactor::type_name() const {
  switch (role_) {
    case RelativePoseRole::Odometry: return "odometry";
    case RelativePoseRole::Covisibility: return "covisibility";
    case RelativePoseRole::LoopClosure: return "loop_closure";
  }
  return "relative_pose";
}

Eigen::VectorXd RelativePoseFactor::evaluate(std::span<const Variable* const> values,
                                             std::vector<Eigen::MatrixXd>* jacobians) const {
  const RigidTransform& Ti = values[0]->se3();
  const RigidTransform& Tj = values[1]->se3();
  const Vec6 r = relative_pose_residual(Ti, Tj, measured_);
  if (jacobians) {
    const Mat6 Jr_inv = se3_right_jacobian_inverse(Twist::from_vector(r));
    jacobians->resize(2);
    (*jacobians)[0] = -Jr_inv * se3_adjoint(Tj.inverse() * Ti);
    (*jacobians)[1] = Jr_inv;
  }
  return r;
}

PriorFactor::PriorFactor(VariableId id, VariableKind kind, const VariableValue& mean,
                         const Eigen::MatrixXd& information)
    : Factor({id}, information), kind_(kind), mean_(mean) {}

Eigen::VectorXd PriorFactor::evaluate(std::span<const Variable* const> values,
                                      std::vector<Eigen::MatrixXd>* jacobians) const {
  const Variable& v = *values[0];
  if (jacobians) {
    jacobians->resize(1);
    (*jacobians)[0] = local_coordinates_jacobian(kind_, mean_, v.value());
  }
  return local_coordinates(kind_, mean_, v.value());
}

}  // namespace toa_slam
