#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "toa_slam/geometry.hpp"

namespace toa_slam {

enum class VariableKind { Pose, Transform, Bias, Scale, StationPosition };

std::string_view to_string(VariableKind kind);
int tangent_dimension(VariableKind kind);

/// Storage for any variable kind; only the member matching the kind is used.
/// Scale is held as log(s).
struct VariableValue {
  RigidTransform se3;
  Vec3 point = Vec3::Zero();
  double scalar = 0.0;
};

struct VariableId {
  std::uint32_t index = 0;
  auto operator<=>(const VariableId&) const = default;
};

struct FactorId {
  std::uint32_t index = 0;
  auto operator<=>(const FactorId&) const = default;
};

class Variable {
 public:
  Variable(VariableKind kind, VariableValue value, bool fixed);

  VariableKind kind() const { return kind_; }
  int dimension() const { return tangent_dimension(kind_); }
  bool fixed() const { return fixed_; }

  const VariableValue& value() const { return value_; }
  const RigidTransform& se3() const { return value_.se3; }
  const Vec3& point() const { return value_.point; }
  double bias() const { return value_.scalar; }
  double log_scale() const { return value_.scalar; }
  double scale() const;

  const Eigen::MatrixXd& prior_information() const { return prior_information_; }
  const VariableValue& prior_mean() const { return prior_mean_; }
  bool has_prior() const;

  void set_value(const VariableValue& v) { value_ = v; }
  void set_fixed(bool fixed) { fixed_ = fixed; }
  void set_prior(const VariableValue& mean, const Eigen::MatrixXd& information);
  void clear_prior();

 private:
  VariableKind kind_;
  VariableValue value_;
  bool fixed_;
  Eigen::MatrixXd prior_information_;
  VariableValue prior_mean_;
};

/// x ⊕ delta. SE3 kinds use right perturbation T exp(delta).
VariableValue retract(VariableKind kind, const VariableValue& x, const Eigen::VectorXd& delta);

/// to ⊖ from, the tangent vector with retract(from, result) = to.
Eigen::VectorXd local_coordinates(VariableKind kind, const VariableValue& from,
                                  const VariableValue& to);

/// d(to ⊖ from) / d(delta) where `to` is perturbed as retract(to, delta).
Eigen::MatrixXd local_coordinates_jacobian(VariableKind kind, const VariableValue& from,
                                           const VariableValue& to);

struct RobustKernel {
  enum class Type { None, Huber };
  Type type = Type::None;
  double delta = 1.0;  // in whitened units

  static RobustKernel none() { return {}; }
  static RobustKernel huber(double delta) { return {Type::Huber, delta}; }

  /// rho(s) for squared whitened residual s.
  double rho(double s) const;
  /// rho'(s), the IRLS weight.
  double weight(double s) const;
};

/// A residual block over an ordered list of variables. Jacobians are taken
/// with respect to each variable's tangent perturbation (see retract).
class Factor {
 public:
  Factor(std::vector<VariableId> variables, Eigen::MatrixXd information,
         RobustKernel kernel = RobustKernel::none());
  virtual ~Factor() = default;

  virtual int dimension() const = 0;
  virtual std::string_view type_name() const = 0;

  /// Residual at `values` (one entry per connected variable, same order).
  /// When `jacobians` is non-null it receives one dimension x dof block per
  /// variable.
  virtual Eigen::VectorXd evaluate(std::span<const Variable* const> values,
                                   std::vector<Eigen::MatrixXd>* jacobians) const = 0;

  const std::vector<VariableId>& variables() const { return variables_; }
  const Eigen::MatrixXd& information() const { return information_; }
  const RobustKernel& kernel() const { return kernel_; }
  void set_kernel(RobustKernel kernel) { kernel_ = kernel; }

 private:
  std::vector<VariableId> variables_;
  Eigen::MatrixXd information_;
  RobustKernel kernel_;
};

struct OptimizeSettings {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-10;
  /// Relative cost decrease below which an accepted step counts as converged.
  double function_tolerance = 1e-12;
  double initial_damping = 1e-4;
  double damping_floor = 1e-12;
  double damping_ceiling = 1e8;
  /// Systems with fewer free tangent dimensions than this use a dense Cholesky.
  std::size_t dense_threshold = 64;
};

/// Restricts one optimize call. Variables flagged fixed are never free;
/// when `free_variables` is set, every variable outside it is held fixed too.
struct OptimizeScope {
  std::optional<std::vector<FactorId>> factors;
  std::optional<std::vector<VariableId>> free_variables;
  bool use_priors = true;
};

enum class ConvergenceReason { Gradient, Step, MaxIterations };
std::string_view to_string(ConvergenceReason reason);

struct OptimizeReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  ConvergenceReason reason = ConvergenceReason::MaxIterations;
  bool marginal_information_updated = false;
};

/// Sparse factor graph with a Levenberg-Marquardt solver. Single writer:
/// mutation and optimize need exclusive access.
class FactorGraph {
 public:
  FactorGraph() = default;
  FactorGraph(const FactorGraph&) = delete;
  FactorGraph& operator=(const FactorGraph&) = delete;
  FactorGraph(FactorGraph&&) = default;
  FactorGraph& operator=(FactorGraph&&) = default;

  VariableId add_variable(VariableKind kind, const VariableValue& value, bool fixed = false);
  VariableId add_pose(const RigidTransform& pose, bool fixed = false);
  VariableId add_transform(const RigidTransform& transform, bool fixed = false);
  VariableId add_bias(double bias_m, bool fixed = false);
  /// Takes the scale itself (not its log); throws InvalidInitialValue when s <= 0.
  VariableId add_scale(double scale, bool fixed = false);
  VariableId add_station(const Vec3& position, bool fixed = false);

  FactorId add_factor(std::unique_ptr<Factor> factor);

  std::size_t variable_count() const { return variables_.size(); }
  std::size_t factor_count() const { return factors_.size(); }

  const Variable& variable(VariableId id) const;
  Variable& variable(VariableId id);
  const Factor& factor(FactorId id) const;
  const std::vector<FactorId>& factors_of(VariableId id) const;

  void set_fixed(VariableId id, bool fixed) { variable(id).set_fixed(fixed); }

  /// Robustified cost sum rho(e^T Omega e) over the scope's factors, plus
  /// prior terms of its free variables.
  double cost(const OptimizeScope& scope = {}) const;

  OptimizeReport optimize(const OptimizeSettings& settings = {}, const OptimizeScope& scope = {});

  /// Replaces each listed variable's prior by its Gauss-Newton Hessian block
  /// sum J^T W Omega J over all graph factors touching it, anchored at the
  /// current value. Variables touched by no factor keep their prior.
  void update_marginal_information(std::span<const VariableId> ids);

  /// Gauss-Newton Hessian block of one variable (all graph factors, priors
  /// excluded).
  Eigen::MatrixXd hessian_block(VariableId id) const;

  bool has_optimized() const { return optimized_once_; }

 private:
  struct System;

  std::vector<const Variable*> gather(const Factor& f) const;
  std::vector<FactorId> active_factors(const OptimizeScope& scope,
                                       const std::vector<char>& free) const;
  std::vector<char> free_mask(const OptimizeScope& scope) const;

  std::vector<Variable> variables_;
  std::vector<std::unique_ptr<Factor>> factors_;
  std::vector<std::vector<FactorId>> adjacency_;
  bool optimized_once_ = false;
};

/// Residual of one factor at the given values.
Eigen::VectorXd evaluate_factor(const Factor& factor, std::span<const Variable> values,
                                std::vector<Eigen::MatrixXd>* jacobians = nullptr);

/// Largest absolute deviation between the factor's analytic Jacobians and
/// central differences taken through retract at `values`.
double numeric_jacobian_check(const Factor& factor, std::span<const Variable> values,
                              double epsilon = 1e-6);

}  // namespace toa_slam
