#include "toa_slam/graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>

#include "toa_slam/errors.hpp"

namespace toa_slam {

std::string_view to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::Pose: return "Pose";
    case VariableKind::Transform: return "Transform";
    case VariableKind::Bias: return "Bias";
    case VariableKind::Scale: return "Scale";
    case VariableKind::StationPosition: return "StationPosition";
  }
  return "Unknown";
}

int tangent_dimension(VariableKind kind) {
  switch (kind) {
    case VariableKind::Pose:
    case VariableKind::Transform: return 6;
    case VariableKind::Bias:
    case VariableKind::Scale: return 1;
    case VariableKind::StationPosition: return 3;
  }
  return 0;
}

std::string_view to_string(ConvergenceReason reason) {
  switch (reason) {
    case ConvergenceReason::Gradient: return "gradient";
    case ConvergenceReason::Step: return "step";
    case ConvergenceReason::MaxIterations: return "max-iter";
  }
  return "unknown";
}

Variable::Variable(VariableKind kind, VariableValue value, bool fixed)
    : kind_(kind), value_(std::move(value)), fixed_(fixed) {
  const int n = tangent_dimension(kind);
  prior_information_ = Eigen::MatrixXd::Zero(n, n);
  prior_mean_ = value_;
}

double Variable::scale() const { return std::exp(value_.scalar); }

bool Variable::has_prior() const { return prior_information_.cwiseAbs().maxCoeff() > 0.0; }

void Variable::set_prior(const VariableValue& mean, const Eigen::MatrixXd& information) {
  if (information.rows() != dimension() || information.cols() != dimension()) {
    throw Error(ErrorCode::InvalidArgument, "prior information size does not match variable");
  }
  prior_mean_ = mean;
  prior_information_ = 0.5 * (information + information.transpose());
}

void Variable::clear_prior() { prior_information_.setZero(); }

VariableValue retract(VariableKind kind, const VariableValue& x, const Eigen::VectorXd& delta) {
  VariableValue out = x;
  switch (kind) {
    case VariableKind::Pose:
    case VariableKind::Transform:
      out.se3 = x.se3 * se3_exp(Twist::from_vector(delta.head<6>()));
      break;
    case VariableKind::Bias:
    case VariableKind::Scale:
      out.scalar = x.scalar + delta(0);
      break;
    case VariableKind::StationPosition:
      out.point = x.point + delta.head<3>();
      break;
  }
  return out;
}

Eigen::VectorXd local_coordinates(VariableKind kind, const VariableValue& from,
                                  const VariableValue& to) {
  switch (kind) {
    case VariableKind::Pose:
    case VariableKind::Transform:
      return se3_log(from.se3.inverse() * to.se3).vector();
    case VariableKind::Bias:
    case VariableKind::Scale:
      return Eigen::VectorXd::Constant(1, to.scalar - from.scalar);
    case VariableKind::StationPosition:
      return to.point - from.point;
  }
  return {};
}

Eigen::MatrixXd local_coordinates_jacobian(VariableKind kind, const VariableValue& from,
                                           const VariableValue& to) {
  switch (kind) {
    case VariableKind::Pose:
    case VariableKind::Transform:
      return se3_right_jacobian_inverse(se3_log(from.se3.inverse() * to.se3));
    default: {
      const int n = tangent_dimension(kind);
      return Eigen::MatrixXd::Identity(n, n);
    }
  }
}

double RobustKernel::rho(double s) const {
  if (type == Type::None) return s;
  const double d2 = delta * delta;
  if (s <= d2) return s;
  return 2.0 * delta * std::sqrt(s) - d2;
}

double RobustKernel::weight(double s) const {
  if (type == Type::None) return 1.0;
  if (s <= delta * delta) return 1.0;
  return delta / std::sqrt(s);
}

Factor::Factor(std::vector<VariableId> variables, Eigen::MatrixXd information, RobustKernel kernel)
    : variables_(std::move(variables)), information_(std::move(information)), kernel_(kernel) {}

VariableId FactorGraph::add_variable(VariableKind kind, const VariableValue& value, bool fixed) {
  switch (kind) {
    case VariableKind::Bias:
    case VariableKind::Scale:
      if (!std::isfinite(value.scalar)) {
        throw Error(ErrorCode::InvalidInitialValue, "scalar variable must be finite");
      }
      break;
    case VariableKind::StationPosition:
      if (!value.point.allFinite()) {
        throw Error(ErrorCode::InvalidInitialValue, "station position must be finite");
      }
      break;
    default:
      if (!value.se3.translation().allFinite() || !value.se3.rotation().coeffs().allFinite()) {
        throw Error(ErrorCode::InvalidInitialValue, "transform must be finite");
      }
  }
  variables_.emplace_back(kind, value, fixed);
  adjacency_.emplace_back();
  return VariableId{static_cast<std::uint32_t>(variables_.size() - 1)};
}

VariableId FactorGraph::add_pose(const RigidTransform& pose, bool fixed) {
  return add_variable(VariableKind::Pose, {pose, Vec3::Zero(), 0.0}, fixed);
}

VariableId FactorGraph::add_transform(const RigidTransform& transform, bool fixed) {
  return add_variable(VariableKind::Transform, {transform, Vec3::Zero(), 0.0}, fixed);
}

VariableId FactorGraph::add_bias(double bias_m, bool fixed) {
  return add_variable(VariableKind::Bias, {RigidTransform{}, Vec3::Zero(), bias_m}, fixed);
}

VariableId FactorGraph::add_scale(double scale, bool fixed) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::InvalidInitialValue, "scale must be positive");
  }
  return add_variable(VariableKind::Scale, {RigidTransform{}, Vec3::Zero(), std::log(scale)}, fixed);
}

VariableId FactorGraph::add_station(const Vec3& position, bool fixed) {
  return add_variable(VariableKind::StationPosition, {RigidTransform{}, position, 0.0}, fixed);
}

FactorId FactorGraph::add_factor(std::unique_ptr<Factor> factor) {
  if (!factor) throw Error(ErrorCode::InvalidArgument, "null factor");
  const int dim = factor->dimension();
  const auto& info = factor->information();
  if (info.rows() != dim || info.cols() != dim) {
    throw Error(ErrorCode::InvalidArgument, "information size does not match residual dimension");
  }
  if ((info - info.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, info.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::InvalidArgument, "information matrix is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidArgument, "information matrix is not positive definite");
  }
  for (const auto& v : factor->variables()) {
    if (v.index >= variables_.size()) throw Error(ErrorCode::InvalidArgument, "unknown variable id");
  }
  const FactorId id{static_cast<std::uint32_t>(factors_.size())};
  for (const auto& v : factor->variables()) {
    auto& adj = adjacency_[v.index];
    if (adj.empty() || adj.back() != id) adj.push_back(id);
  }
  factors_.push_back(std::move(factor));
  return id;
}

const Variable& FactorGraph::variable(VariableId id) const {
  if (id.index >= variables_.size()) throw Error(ErrorCode::InvalidArgument, "unknown variable id");
  return variables_[id.index];
}

Variable& FactorGraph::variable(VariableId id) {
  if (id.index >= variables_.size()) throw Error(ErrorCode::InvalidArgument, "unknown variable id");
  return variables_[id.index];
}

const Factor& FactorGraph::factor(FactorId id) const {
  if (id.index >= factors_.size()) throw Error(ErrorCode::InvalidArgument, "unknown factor id");
  return *factors_[id.index];
}

const std::vector<FactorId>& FactorGraph::factors_of(VariableId id) const {
  if (id.index >= adjacency_.size()) throw Error(ErrorCode::InvalidArgument, "unknown variable id");
  return adjacency_[id.index];
}

std::vector<const Variable*> FactorGraph::gather(const Factor& f) const {
  std::vector<const Variable*> out;
  out.reserve(f.variables().size());
  for (const auto& v : f.variables()) out.push_back(&variables_[v.index]);
  return out;
}

std::vector<char> FactorGraph::free_mask(const OptimizeScope& scope) const {
  std::vector<char> free(variables_.size(), 0);
  if (scope.free_variables) {
    for (const auto& id : *scope.free_variables) {
      if (id.index >= variables_.size()) throw Error(ErrorCode::InvalidArgument, "unknown variable id");
      free[id.index] = !variables_[id.index].fixed();
    }
  } else {
    for (std::size_t i = 0; i < variables_.size(); ++i) free[i] = !variables_[i].fixed();
  }
  return free;
}

std::vector<FactorId> FactorGraph::active_factors(const OptimizeScope& scope,
                                                  const std::vector<char>& free) const {
  std::vector<FactorId> out;
  auto touches_free = [&](const Factor& f) {
    return std::any_of(f.variables().begin(), f.variables().end(),
                       [&](VariableId v) { return free[v.index] != 0; });
  };
  if (scope.factors) {
    for (const auto& id : *scope.factors) {
      if (touches_free(factor(id))) out.push_back(id);
    }
  } else {
    for (std::uint32_t i = 0; i < factors_.size(); ++i) {
      if (touches_free(*factors_[i])) out.push_back(FactorId{i});
    }
  }
  return out;
}

namespace {

double squared_whitened(const Eigen::VectorXd& r, const Eigen::MatrixXd& info) {
  return r.dot(info * r);
}

double prior_cost(const Variable& v) {
  const Eigen::VectorXd r = local_coordinates(v.kind(), v.prior_mean(), v.value());
  return squared_whitened(r, v.prior_information());
}

}  // namespace

double FactorGraph::cost(const OptimizeScope& scope) const {
  const auto free = free_mask(scope);
  const auto active = active_factors(scope, free);
  double total = 0.0;
  for (const auto& id : active) {
    const Factor& f = *factors_[id.index];
    const auto vals = gather(f);
    const Eigen::VectorXd r = f.evaluate(vals, nullptr);
    total += f.kernel().rho(squared_whitened(r, f.information()));
  }
  if (scope.use_priors) {
    std::vector<char> touched(variables_.size(), 0);
    for (const auto& id : active) {
      for (const auto& v : factors_[id.index]->variables()) touched[v.index] = 1;
    }
    for (std::size_t i = 0; i < variables_.size(); ++i) {
      if (free[i] && touched[i] && variables_[i].has_prior()) total += prior_cost(variables_[i]);
    }
  }
  return total;
}

struct FactorGraph::System {
  std::vector<FactorId> factors;
  std::vector<std::uint32_t> vars;  // free variables in the system
  std::vector<int> offset;          // per graph variable, -1 when not in system
  std::vector<std::uint32_t> prior_vars;
  int dim = 0;
  bool dense = true;
};

OptimizeReport FactorGraph::optimize(const OptimizeSettings& settings, const OptimizeScope& scope) {
  System sys;
  const auto free = free_mask(scope);
  sys.factors = active_factors(scope, free);
  sys.offset.assign(variables_.size(), -1);
  for (const auto& fid : sys.factors) {
    for (const auto& v : factors_[fid.index]->variables()) {
      if (free[v.index] && sys.offset[v.index] < 0) {
        sys.offset[v.index] = 0;
        sys.vars.push_back(v.index);
      }
    }
  }
  if (sys.vars.empty()) throw Error(ErrorCode::NoFreeVariables, "no free variable touched by a factor");
  std::sort(sys.vars.begin(), sys.vars.end());
  for (auto v : sys.vars) {
    sys.offset[v] = sys.dim;
    sys.dim += variables_[v].dimension();
    if (scope.use_priors && variables_[v].has_prior()) sys.prior_vars.push_back(v);
  }
  sys.dense = static_cast<std::size_t>(sys.dim) < settings.dense_threshold;
  optimized_once_ = true;

  const int n = sys.dim;

  auto total_cost = [&]() {
    double c = 0.0;
    for (const auto& fid : sys.factors) {
      const Factor& f = *factors_[fid.index];
      const Eigen::VectorXd r = f.evaluate(gather(f), nullptr);
      c += f.kernel().rho(squared_whitened(r, f.information()));
    }
    for (auto v : sys.prior_vars) c += prior_cost(variables_[v]);
    return c;
  };

  Eigen::VectorXd g(n);
  Eigen::MatrixXd H_dense;
  Eigen::SparseMatrix<double> H_sparse;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower> sparse_solver;
  bool pattern_analyzed = false;

  // Accumulates into the lower triangle of H; the caller passes blocks with
  // row offset >= column offset.
  auto add_block = [&](int row, int col, const Eigen::MatrixXd& block) {
    if (sys.dense) {
      H_dense.block(row, col, block.rows(), block.cols()) += block;
      return;
    }
    for (int i = 0; i < block.rows(); ++i) {
      for (int j = 0; j < block.cols(); ++j) {
        if (row + i >= col + j) triplets.emplace_back(row + i, col + j, block(i, j));
      }
    }
  };

  auto linearize = [&]() {
    double c = 0.0;
    g.setZero();
    if (sys.dense) {
      H_dense.setZero(n, n);
    } else {
      triplets.clear();
    }
    std::vector<Eigen::MatrixXd> jac;
    for (const auto& fid : sys.factors) {
      const Factor& f = *factors_[fid.index];
      const Eigen::VectorXd r = f.evaluate(gather(f), &jac);
      const double s = squared_whitened(r, f.information());
      c += f.kernel().rho(s);
      const double w = f.kernel().weight(s);
      const Eigen::MatrixXd W = w * f.information();
      const auto& vars = f.variables();
      for (std::size_t a = 0; a < vars.size(); ++a) {
        const int oa = sys.offset[vars[a].index];
        if (oa < 0) continue;
        const Eigen::MatrixXd JaW = jac[a].transpose() * W;
        g.segment(oa, jac[a].cols()) += JaW * r;
        for (std::size_t b = 0; b < vars.size(); ++b) {
          const int ob = sys.offset[vars[b].index];
          if (ob < 0 || oa < ob) continue;
          add_block(oa, ob, JaW * jac[b]);
        }
      }
    }
    for (auto v : sys.prior_vars) {
      const Variable& var = variables_[v];
      const Eigen::VectorXd r = local_coordinates(var.kind(), var.prior_mean(), var.value());
      const Eigen::MatrixXd J = local_coordinates_jacobian(var.kind(), var.prior_mean(), var.value());
      const Eigen::MatrixXd JtP = J.transpose() * var.prior_information();
      c += squared_whitened(r, var.prior_information());
      g.segment(sys.offset[v], r.size()) += JtP * r;
      add_block(sys.offset[v], sys.offset[v], JtP * J);
    }
    if (sys.dense) {
      H_dense.template triangularView<Eigen::StrictlyUpper>() = H_dense.transpose();
    } else {
      // Diagonal entries are always present so damping never changes the pattern.
      for (int i = 0; i < n; ++i) triplets.emplace_back(i, i, 0.0);
      H_sparse.resize(n, n);
      H_sparse.setFromTriplets(triplets.begin(), triplets.end());
    }
    return c;
  };

  auto diagonal = [&]() {
    Eigen::VectorXd d(n);
    if (sys.dense) {
      d = H_dense.diagonal();
    } else {
      d = H_sparse.diagonal();
    }
    return d.cwiseMax(1e-6).cwiseMin(1e32).eval();
  };

  auto solve = [&](double lambda, const Eigen::VectorXd& diag, Eigen::VectorXd& delta) {
    if (sys.dense) {
      Eigen::MatrixXd A = H_dense;
      A.diagonal() += lambda * diag;
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() != Eigen::Success) return false;
      delta = llt.solve(-g);
    } else {
      Eigen::SparseMatrix<double> A = H_sparse;
      for (int i = 0; i < n; ++i) A.coeffRef(i, i) += lambda * diag(i);
      if (!pattern_analyzed) {
        sparse_solver.analyzePattern(A);
        pattern_analyzed = true;
      }
      sparse_solver.factorize(A);
      if (sparse_solver.info() != Eigen::Success) return false;
      delta = sparse_solver.solve(-g);
    }
    return delta.allFinite();
  };

  auto parameter_norm = [&]() {
    double s = 0.0;
    for (auto v : sys.vars) {
      const Variable& var = variables_[v];
      switch (var.kind()) {
        case VariableKind::Pose:
        case VariableKind::Transform:
          s += var.se3().translation().squaredNorm() + 1.0;
          break;
        case VariableKind::StationPosition:
          s += var.point().squaredNorm();
          break;
        default:
          s += var.value().scalar * var.value().scalar;
      }
    }
    return std::sqrt(s);
  };

  std::vector<VariableValue> saved(sys.vars.size());
  auto apply = [&](const Eigen::VectorXd& delta) {
    for (std::size_t k = 0; k < sys.vars.size(); ++k) {
      Variable& var = variables_[sys.vars[k]];
      saved[k] = var.value();
      var.set_value(retract(var.kind(), var.value(), delta.segment(sys.offset[sys.vars[k]], var.dimension())));
    }
  };
  auto restore = [&]() {
    for (std::size_t k = 0; k < sys.vars.size(); ++k) variables_[sys.vars[k]].set_value(saved[k]);
  };

  OptimizeReport report;
  double lambda = settings.initial_damping;
  double current = total_cost();
  report.initial_cost = current;
  report.reason = ConvergenceReason::MaxIterations;

  bool done = false;
  while (!done && report.iterations < settings.max_iterations) {
    current = linearize();
    if (current <= 0.0 || g.lpNorm<Eigen::Infinity>() <= settings.gradient_tolerance) {
      report.reason = ConvergenceReason::Gradient;
      break;
    }
    ++report.iterations;
    const Eigen::VectorXd diag = diagonal();
    Eigen::VectorXd delta;
    while (true) {
      if (!solve(lambda, diag, delta)) {
        lambda *= 10.0;
        if (lambda > settings.damping_ceiling) {
          throw Error(ErrorCode::SingularSystem, "normal equations not positive definite");
        }
        continue;
      }
      if (delta.norm() <= settings.step_tolerance * (parameter_norm() + settings.step_tolerance)) {
        report.reason = ConvergenceReason::Step;
        done = true;
        break;
      }
      apply(delta);
      const double candidate = total_cost();
      if (std::isfinite(candidate) && candidate < current) {
        lambda = std::max(lambda / 10.0, settings.damping_floor);
        if (current - candidate <= settings.function_tolerance * current) {
          report.reason = ConvergenceReason::Step;
          done = true;
        }
        current = candidate;
        break;
      }
      restore();
      lambda *= 10.0;
      if (lambda > settings.damping_ceiling) {
        report.reason = ConvergenceReason::Step;
        done = true;
        break;
      }
    }
  }
  report.final_cost = total_cost();
  return report;
}

Eigen::MatrixXd FactorGraph::hessian_block(VariableId id) const {
  const Variable& var = variable(id);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(var.dimension(), var.dimension());
  std::vector<Eigen::MatrixXd> jac;
  for (const auto& fid : adjacency_[id.index]) {
    const Factor& f = *factors_[fid.index];
    const Eigen::VectorXd r = f.evaluate(gather(f), &jac);
    const double w = f.kernel().weight(squared_whitened(r, f.information()));
    const auto& vars = f.variables();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(f.dimension(), var.dimension());
    for (std::size_t a = 0; a < vars.size(); ++a) {
      if (vars[a] == id) J += jac[a];
    }
    H += w * J.transpose() * f.information() * J;
  }
  return 0.5 * (H + H.transpose());
}

void FactorGraph::update_marginal_information(std::span<const VariableId> ids) {
  if (!optimized_once_) {
    throw Error(ErrorCode::NeverOptimized, "marginal information requires a prior optimize call");
  }
  for (const auto& id : ids) {
    if (factors_of(id).empty()) continue;
    Variable& var = variable(id);
    var.set_prior(var.value(), hessian_block(id));
  }
}

Eigen::VectorXd evaluate_factor(const Factor& factor, std::span<const Variable> values,
                                std::vector<Eigen::MatrixXd>* jacobians) {
  std::vector<const Variable*> ptrs;
  ptrs.reserve(values.size());
  for (const auto& v : values) ptrs.push_back(&v);
  return factor.evaluate(ptrs, jacobians);
}

double numeric_jacobian_check(const Factor& factor, std::span<const Variable> values,
                              double epsilon) {
  if (!(epsilon > 1e-10 && epsilon < 1e-3)) {
    throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (1e-10, 1e-3)");
  }
  std::vector<Eigen::MatrixXd> analytic;
  evaluate_factor(factor, values, &analytic);
  std::vector<Variable> work(values.begin(), values.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < work.size(); ++k) {
    const Variable original = work[k];
    const int dof = original.dimension();
    for (int d = 0; d < dof; ++d) {
      Eigen::VectorXd step = Eigen::VectorXd::Zero(dof);
      step(d) = epsilon;
      work[k].set_value(retract(original.kind(), original.value(), step));
      const Eigen::VectorXd plus = evaluate_factor(factor, work);
      work[k].set_value(retract(original.kind(), original.value(), -step));
      const Eigen::VectorXd minus = evaluate_factor(factor, work);
      work[k].set_value(original.value());
      const Eigen::VectorXd numeric = (plus - minus) / (2.0 * epsilon);
      worst = std::max(worst, (numeric - analytic[k].col(d)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace toa_slam
