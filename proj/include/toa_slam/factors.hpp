#pragma once

#include <Eigen/Core>

#include <optional>

#include "toa_slam/geometry.hpp"
#include "toa_slam/graph.hpp"

namespace toa_slam {

/// Inputs of one range residual. `pose` is T_oc (camera in the local frame),
/// `transform` is T_go (local to global).
struct ToaState {
  RigidTransform pose;
  RigidTransform transform;
  double scale = 1.0;
  double bias = 0.0;  // m
  Vec3 station = Vec3::Zero();
};

/// e = |s t_gc - L| - (d_meas - tau), t_gc the translation of T_go T_oc.
double toa_residual(const ToaState& state, double measured_range);

struct ToaJacobians {
  Eigen::Matrix<double, 1, 6> pose;
  Eigen::Matrix<double, 1, 6> transform;
  double log_scale = 0.0;
  double bias = 1.0;
  Eigen::RowVector3d station;
};

/// Partials of toa_residual. Throws DegenerateRange when the scaled camera
/// position coincides with the station.
ToaJacobians toa_jacobians(const ToaState& state);

/// log(dT^-1 T_i^-1 T_j)
Vec6 relative_pose_residual(const RigidTransform& from, const RigidTransform& to,
                            const RigidTransform& measured);

struct ToaFactorSpec {
  VariableId pose;
  VariableId transform;
  VariableId bias;
  std::optional<VariableId> scale;  // absent: s = 1
  VariableId station;
  double measured_range = 0.0;  // m
  double information = 1.0;     // 1 / sigma^2, m^-2
};

class ToaFactor final : public Factor {
 public:
  ToaFactor(const ToaFactorSpec& spec, RobustKernel kernel = RobustKernel::none());

  int dimension() const override { return 1; }
  std::string_view type_name() const override { return "toa"; }
  Eigen::VectorXd evaluate(std::span<const Variable* const> values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;

  const ToaFactorSpec& spec() const { return spec_; }
  double measured_range() const { return spec_.measured_range; }
  ToaState state(std::span<const Variable* const> values) const;

 private:
  ToaFactorSpec spec_;
};

enum class RelativePoseRole { Odometry, Covisibility, LoopClosure };

class RelativePoseFactor final : public Factor {
 public:
  RelativePoseFactor(VariableId from, VariableId to, const RigidTransform& measured,
                     const Mat6& information, RelativePoseRole role = RelativePoseRole::Odometry);

  int dimension() const override { return 6; }
  std::string_view type_name() const override;
  Eigen::VectorXd evaluate(std::span<const Variable* const> values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;

  const RigidTransform& measured() const { return measured_; }
  void set_measured(const RigidTransform& measured) { measured_ = measured; }
  RelativePoseRole role() const { return role_; }

 private:
  RigidTransform measured_;
  RelativePoseRole role_;
};

/// Residual mean ⊖ x on any variable kind.
class PriorFactor final : public Factor {
 public:
  PriorFactor(VariableId id, VariableKind kind, const VariableValue& mean,
              const Eigen::MatrixXd& information);

  int dimension() const override { return tangent_dimension(kind_); }
  std::string_view type_name() const override { return "prior"; }
  Eigen::VectorXd evaluate(std::span<const Variable* const> values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;

 private:
  VariableKind kind_;
  VariableValue mean_;
};

}  // namespace toa_slam
