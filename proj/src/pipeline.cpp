#include "toa_slam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <Eigen/Dense>

#include "toa_slam/errors.hpp"

namespace toa_slam {

bool should_trigger_global_refinement(const RefinementTriggerState& s, const TriggerThresholds& t) {
  return s.max_normalized_residual > t.normalized_residual || s.accumulated_motion_m > t.motion_m ||
         s.elapsed_s > t.elapsed_s || s.keyframes > t.keyframes;
}

// ---------------------------------------------------------------- BackendGraph

BackendGraph::BackendGraph(const std::vector<BaseStation>& stations, PipelineMode m, BackendConfig c)
    : mode(m), config(std::move(c)) {
  const bool unknown = mode.stations == StationKnowledge::Unknown;
  transform = graph.add_transform(unknown ? RigidTransform::identity() : config.initial_transform, unknown);
  scale = graph.add_scale(config.initial_scale, mode.sensor == SensorClass::RangeScaled);
  for (const auto& bs : stations) {
    if (biases.count(bs.id)) throw Error(ErrorCode::InvalidArgument, "duplicate station id " + std::to_string(bs.id));
    // Unknown stations: the range offset is absorbed by the position estimate
    // along the line of sight, so the bias is held at zero.
    const VariableId b = graph.add_bias(0.0, unknown);
    Eigen::MatrixXd info(1, 1);
    info(0, 0) = 1.0 / (config.bias_prior_sigma * config.bias_prior_sigma);
    graph.variable(b).set_prior(graph.variable(b).value(), info);
    biases[bs.id] = b;
    station_vars[bs.id] = unknown ? graph.add_station(Vec3::Zero()) : graph.add_station(bs.position, true);
    station_sigma[bs.id] = std::max(bs.sigma, 1e-3);
    station_ready[bs.id] = !unknown;
  }
}

std::size_t BackendGraph::add_keyframe(double timestamp, const RigidTransform& local_pose) {
  if (!times.empty() && !(timestamp > times.back()))
    throw Error(ErrorCode::NonMonotonicTimestamps, "keyframe timestamps must increase");
  poses.push_back(graph.add_pose(poses.empty() ? RigidTransform::identity() : local_pose, poses.empty()));
  times.push_back(timestamp);
  ++stats.keyframes;
  return poses.size() - 1;
}

Mat6 BackendGraph::keyframe_information() const {
  const double n = config.keyframe_stride;
  const double st = std::max(config.odometry_sigma_translation * std::sqrt(n) * cumulative_scale, 1e-4);
  const double sr = std::max(config.odometry_sigma_rotation * std::sqrt(n), 1e-5);
  Vec6 d;
  d << Vec3::Constant(1.0 / (sr * sr)), Vec3::Constant(1.0 / (st * st));
  return d.asDiagonal();
}

FactorId BackendGraph::add_relative(std::size_t from, std::size_t to, const RigidTransform& relative,
                                    const Mat6& info, RelativePoseRole role) {
  auto f = std::make_unique<RelativePoseFactor>(poses.at(from), poses.at(to), relative, info, role);
  relative_pose_factors.push_back(f.get());
  return graph.add_factor(std::move(f));
}

FactorId BackendGraph::add_odometry(std::size_t from, std::size_t to, const RigidTransform& relative) {
  const FactorId id = add_relative(from, to, relative, keyframe_information(), RelativePoseRole::Odometry);
  odometry_factors.push_back(id);
  return id;
}

FactorId BackendGraph::add_covisibility(std::size_t from, std::size_t to, const RigidTransform& relative) {
  const double chained = static_cast<double>(to - from);
  const Mat6 info = keyframe_information() / (chained * config.covisibility_inflation);
  const FactorId id = add_relative(from, to, relative, info, RelativePoseRole::Covisibility);
  covisibility_factors.push_back(id);
  return id;
}

FactorId BackendGraph::add_loop_closure(std::size_t from, std::size_t to, const RigidTransform& relative) {
  const double st = std::max(config.loop_closure_sigma_translation * cumulative_scale, 1e-6);
  const double sr = std::max(config.loop_closure_sigma_rotation, 1e-7);
  Vec6 d;
  d << Vec3::Constant(1.0 / (sr * sr)), Vec3::Constant(1.0 / (st * st));
  const FactorId id = add_relative(from, to, relative, d.asDiagonal(), RelativePoseRole::LoopClosure);
  loop_closure_factors.push_back(id);
  ++stats.loop_closures_used;
  return id;
}

FactorId BackendGraph::add_toa(std::size_t kf, int station_id, double range) {
  auto it = biases.find(station_id);
  if (it == biases.end()) throw Error(ErrorCode::InvalidArgument, "unknown station id " + std::to_string(station_id));
  if (!(range > 0.0)) throw Error(ErrorCode::InvalidArgument, "range must be positive");
  ToaFactorSpec spec;
  spec.pose = poses.at(kf);
  spec.transform = transform;
  spec.bias = it->second;
  if (mode.sensor == SensorClass::Monocular) spec.scale = scale;
  spec.station = station_vars.at(station_id);
  spec.measured_range = range;
  const double sigma = station_sigma.at(station_id);
  spec.information = 1.0 / (sigma * sigma);
  const FactorId id = graph.add_factor(std::make_unique<ToaFactor>(spec, RobustKernel::huber(config.huber_delta)));
  toa_factors.push_back(id);
  toa_station[id] = station_id;
  ++stats.toa_used;
  return id;
}

bool BackendGraph::toa_active(FactorId id) const {
  if (mode.stations == StationKnowledge::Known) return transform_initialized;
  return station_ready.at(toa_station.at(id));
}

std::vector<FactorId> BackendGraph::active_toa_factors() const {
  std::vector<FactorId> out;
  for (const auto& id : toa_factors)
    if (toa_active(id)) out.push_back(id);
  return out;
}

std::vector<FactorId> BackendGraph::relative_factors() const {
  std::vector<FactorId> out = odometry_factors;
  out.insert(out.end(), covisibility_factors.begin(), covisibility_factors.end());
  out.insert(out.end(), loop_closure_factors.begin(), loop_closure_factors.end());
  return out;
}

double BackendGraph::normalized_residual(FactorId id) const {
  const Factor& f = graph.factor(id);
  std::vector<const Variable*> vals;
  for (const auto& v : f.variables()) vals.push_back(&graph.variable(v));
  const Eigen::VectorXd r = f.evaluate(vals, nullptr);
  return std::sqrt(r.dot(f.information() * r));
}

bool BackendGraph::try_initialize_station(int station_id) {
  if (mode.stations != StationKnowledge::Unknown || station_ready.at(station_id)) return false;
  std::vector<Vec3> p;
  std::vector<double> d;
  const double s = graph.variable(scale).scale();
  for (const auto& id : toa_factors) {
    if (toa_station.at(id) != station_id) continue;
    const auto& spec = static_cast<const ToaFactor&>(graph.factor(id)).spec();
    p.push_back(graph.variable(spec.pose).se3().translation());
    d.push_back(spec.measured_range);
  }
  const auto n = static_cast<int>(p.size());
  if (n < config.min_station_observations) return false;

  Vec3 mean = Vec3::Zero();
  for (const auto& x : p) mean += x;
  mean /= n;
  Mat3 cov = Mat3::Zero();
  for (const auto& x : p) cov += (x - mean) * (x - mean).transpose();
  cov /= n;
  const double spread = std::sqrt(std::max(Eigen::SelfAdjointEigenSolver<Mat3>(cov).eigenvalues()(0), 0.0));
  if (spread < config.min_station_spread_m / std::max(s, 1e-9)) return false;

  // For a given scale c: d^2 - c^2 |q|^2 = -2 c q.(L - c mean) + |L - c mean|^2
  // with q = p - mean, linear in L. Monocular starts scan c over a log grid
  // and keep the fit with the lowest range residual.
  auto fit = [&](double c, Vec3& L) {
    Eigen::MatrixXd A(n, 4);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      const Vec3 q = c * (p[i] - mean);
      A.row(i) << -2.0 * q.transpose(), 1.0;
      y(i) = d[i] * d[i] - q.squaredNorm();
    }
    const Eigen::VectorXd x = A.colPivHouseholderQr().solve(y);
    L = x.head<3>() + c * mean;
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = (c * p[i] - L).norm() - d[i];
      cost += e * e;
    }
    return L.allFinite() ? cost : std::numeric_limits<double>::infinity();
  };
  const bool solve_scale = mode.sensor == SensorClass::Monocular && stats.scale_refinements == 0 &&
                           std::none_of(station_ready.begin(), station_ready.end(),
                                        [](const auto& kv) { return kv.second; });
  Vec3 L;
  double best_scale = s;
  double best = fit(s, L);
  if (solve_scale) {
    constexpr int kSteps = 80;
    for (int k = 0; k <= kSteps; ++k) {
      const double c = s * std::exp(std::log(0.25) + std::log(16.0) * k / kSteps);
      Vec3 Lc;
      const double cost = fit(c, Lc);
      if (cost < best) {
        best = cost;
        best_scale = c;
        L = Lc;
      }
    }
  }
  if (!std::isfinite(best)) return false;
  if (best_scale != s) graph.variable(scale).set_value(VariableValue{{}, {}, std::log(best_scale)});
  graph.variable(station_vars.at(station_id)).set_value(VariableValue{{}, L, 0.0});
  station_ready[station_id] = true;
  // Anchor the new station so a local window cannot drag it off with a
  // handful of ranges before the next global refinement.
  if (graph.has_optimized()) graph.update_marginal_information(std::vector<VariableId>{station_vars.at(station_id)});
  return true;
}

void BackendGraph::propagate_scale() {
  const double s = graph.variable(scale).scale();
  for (const auto& id : poses) {
    Variable& v = graph.variable(id);
    v.set_value(VariableValue{v.se3().with_translation(s * v.se3().translation()), {}, 0.0});
  }
  Variable& tr = graph.variable(transform);
  tr.set_value(VariableValue{tr.se3().with_translation(s * tr.se3().translation()), {}, 0.0});
  if (tr.has_prior()) {
    VariableValue mean = tr.prior_mean();
    mean.se3 = mean.se3.with_translation(s * mean.se3.translation());
    tr.set_prior(mean, tr.prior_information());
  }
  for (auto* f : relative_pose_factors)
    f->set_measured(f->measured().with_translation(s * f->measured().translation()));
  Variable& sv = graph.variable(scale);
  sv.set_value(VariableValue{{}, {}, 0.0});
  if (sv.has_prior()) sv.set_prior(VariableValue{{}, {}, 0.0}, sv.prior_information());
  cumulative_scale *= s;
}

void BackendGraph::update_priors() {
  std::vector<VariableId> ids;
  if (!graph.variable(transform).fixed() && transform_initialized) ids.push_back(transform);
  if (!graph.variable(scale).fixed()) ids.push_back(scale);
  for (const auto& [sid, b] : biases) {
    if (!station_ready.at(sid) || (mode.stations == StationKnowledge::Known && !transform_initialized)) continue;
    if (!graph.variable(b).fixed()) ids.push_back(b);
    if (mode.stations == StationKnowledge::Unknown) ids.push_back(station_vars.at(sid));
  }
  if (!ids.empty() && graph.has_optimized()) graph.update_marginal_information(ids);
}

BackendEstimate BackendGraph::estimate() const {
  BackendEstimate e;
  const double s = graph.variable(scale).scale();
  e.transform = graph.variable(transform).se3();
  e.scale = cumulative_scale * s;
  e.transform_initialized = mode.stations == StationKnowledge::Known && transform_initialized;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const RigidTransform& P = graph.variable(poses[i]).se3();
    e.keyframes.push_back({times[i], P.with_translation(s * P.translation())});
    const RigidTransform G = e.transform * P;
    e.global.push_back({times[i], G.with_translation(s * G.translation())});
  }
  for (const auto& [sid, b] : biases) e.biases[sid] = graph.variable(b).bias();
  for (const auto& [sid, v] : station_vars) e.stations[sid] = graph.variable(v).point();
  e.stats = stats;
  return e;
}

// ---------------------------------------------------------------- routines

OptimizeReport tracking_pose_step(FactorGraph& graph, VariableId pose, FactorId odometry,
                                  std::span<const FactorId> toa, const OptimizeSettings& settings) {
  OptimizeScope scope;
  std::vector<FactorId> factors{odometry};
  factors.insert(factors.end(), toa.begin(), toa.end());
  scope.factors = std::move(factors);
  scope.free_variables = std::vector<VariableId>{pose};
  scope.use_priors = false;
  return graph.optimize(settings, scope);
}

namespace {

// Biases and (unknown) station positions of stations whose ranges are in use.
void add_station_unknowns(const BackendGraph& bg, std::vector<VariableId>& free) {
  for (const auto& [sid, b] : bg.biases) {
    if (!bg.station_ready.at(sid)) continue;
    if (bg.mode.stations == StationKnowledge::Known && !bg.transform_initialized) continue;
    if (!bg.graph.variable(b).fixed()) free.push_back(b);
    if (bg.mode.stations == StationKnowledge::Unknown) free.push_back(bg.station_vars.at(sid));
  }
}

OptimizeReport run_scoped(BackendGraph& bg, std::vector<FactorId> factors, std::vector<VariableId> free,
                          bool use_priors) {
  OptimizeScope scope;
  std::sort(factors.begin(), factors.end());
  factors.erase(std::unique(factors.begin(), factors.end()), factors.end());
  scope.factors = std::move(factors);
  scope.free_variables = std::move(free);
  scope.use_priors = use_priors;
  return bg.graph.optimize(bg.config.optimizer, scope);
}

}  // namespace

OptimizeReport local_window_refinement(BackendGraph& bg, std::size_t first, std::size_t last) {
  if (last >= bg.poses.size() || last <= first)
    throw Error(ErrorCode::InvalidArgument, "local window needs at least two keyframes");
  std::vector<VariableId> free;
  std::vector<FactorId> factors;
  for (std::size_t i = first; i <= last; ++i) {
    free.push_back(bg.poses[i]);
    for (const auto& f : bg.graph.factors_of(bg.poses[i])) {
      auto it = bg.toa_station.find(f);
      if (it == bg.toa_station.end() || bg.toa_active(f)) factors.push_back(f);
    }
  }
  if (bg.mode.stations == StationKnowledge::Known && bg.transform_initialized) free.push_back(bg.transform);
  add_station_unknowns(bg, free);
  ++bg.stats.local_refinements;
  return run_scoped(bg, std::move(factors), std::move(free), true);
}

OptimizeReport global_map_refinement(BackendGraph& bg) {
  if (bg.poses.size() < 2) throw Error(ErrorCode::InvalidArgument, "global refinement needs two keyframes");
  std::vector<VariableId> free(bg.poses.begin() + 1, bg.poses.end());
  if (bg.mode.stations == StationKnowledge::Known && bg.transform_initialized) free.push_back(bg.transform);
  add_station_unknowns(bg, free);
  std::vector<FactorId> factors = bg.relative_factors();
  const auto toa = bg.active_toa_factors();
  factors.insert(factors.end(), toa.begin(), toa.end());
  ++bg.stats.global_refinements;
  return run_scoped(bg, std::move(factors), std::move(free), false);
}

OptimizeReport transformation_refinement(BackendGraph& bg) {
  if (bg.toa_factors.empty()) throw Error(ErrorCode::NoToaFactors, "transformation refinement needs ranges");
  if (bg.mode.stations == StationKnowledge::Known) bg.transform_initialized = true;
  const auto toa = bg.active_toa_factors();
  if (toa.empty()) throw Error(ErrorCode::NoToaFactors, "no initialized station has ranges");
  std::vector<VariableId> free{bg.transform};
  for (const auto& [sid, b] : bg.biases)
    if (bg.station_ready.at(sid) && !bg.graph.variable(b).fixed()) free.push_back(b);
  ++bg.stats.transformation_refinements;
  return run_scoped(bg, toa, std::move(free), false);
}

OptimizeReport scale_refinement(BackendGraph& bg) {
  if (bg.mode.sensor != SensorClass::Monocular)
    throw Error(ErrorCode::NotMonocular, "scale refinement requires the monocular mode");
  if (bg.toa_factors.empty()) throw Error(ErrorCode::NoToaFactors, "scale refinement needs ranges");
  if (bg.mode.stations == StationKnowledge::Known) bg.transform_initialized = true;
  const auto toa = bg.active_toa_factors();
  if (toa.empty()) throw Error(ErrorCode::NoToaFactors, "no initialized station has ranges");
  std::vector<VariableId> free{bg.scale, bg.transform};
  add_station_unknowns(bg, free);
  ++bg.stats.scale_refinements;
  const OptimizeReport report = run_scoped(bg, toa, std::move(free), false);
  bg.propagate_scale();
  return report;
}

namespace {

// The 24 proper rotations mapping coordinate axes onto coordinate axes.
std::vector<Eigen::Quaterniond> axis_rotations() {
  std::vector<Eigen::Quaterniond> out;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      if (a == b) continue;
      for (double sa : {1.0, -1.0})
        for (double sb : {1.0, -1.0}) {
          Mat3 R = Mat3::Zero();
          R(a, 0) = sa;
          R(b, 1) = sb;
          R.col(2) = R.col(0).cross(R.col(1));
          out.emplace_back(R);
        }
    }
  return out;
}

}  // namespace

void initialize_transform(BackendGraph& bg) {
  if (bg.mode.stations != StationKnowledge::Known)
    throw Error(ErrorCode::InvalidArgument, "transform search needs known stations");
  if (bg.toa_factors.empty()) throw Error(ErrorCode::NoToaFactors, "transform search needs ranges");
  const bool monocular = bg.mode.sensor == SensorClass::Monocular;
  bg.transform_initialized = true;
  std::vector<VariableId> free{bg.transform};
  if (monocular) free.push_back(bg.scale);
  for (const auto& [sid, b] : bg.biases)
    if (!bg.graph.variable(b).fixed()) free.push_back(b);

  std::vector<VariableValue> start;
  for (const auto& v : free) start.push_back(bg.graph.variable(v).value());
  std::vector<VariableValue> best_values = start;
  double best = std::numeric_limits<double>::infinity();
  const RigidTransform T0 = bg.graph.variable(bg.transform).se3();
  const double s0 = bg.graph.variable(bg.scale).scale();
  const int half_octaves = monocular ? 6 : 0;  // scale grid over [1/8, 8]
  for (const auto& q : axis_rotations()) {
    for (int k = -half_octaves; k <= half_octaves; ++k) {
      for (std::size_t i = 0; i < free.size(); ++i) bg.graph.variable(free[i]).set_value(start[i]);
      bg.graph.variable(bg.transform).set_value(VariableValue{T0 * RigidTransform(q, Vec3::Zero()), {}, 0.0});
      if (monocular)
        bg.graph.variable(bg.scale).set_value(VariableValue{{}, {}, std::log(s0) + 0.5 * k * std::log(2.0)});
      const auto report = run_scoped(bg, bg.toa_factors, free, false);
      if (report.final_cost < best) {
        best = report.final_cost;
        for (std::size_t i = 0; i < free.size(); ++i) best_values[i] = bg.graph.variable(free[i]).value();
      }
    }
  }
  for (std::size_t i = 0; i < free.size(); ++i) bg.graph.variable(free[i]).set_value(best_values[i]);
}

// ---------------------------------------------------------------- driver

namespace {

struct Stream {
  std::vector<double> times;                 // keyframe timestamps
  std::vector<RigidTransform> relatives;     // keyframe k-1 -> k, raw units
  std::vector<std::vector<ToaMeasurement>> toa;  // per keyframe
  std::vector<std::vector<LoopClosureMeasurement>> closures;  // per later keyframe
  int dropped = 0;
};

std::ptrdiff_t nearest_keyframe(const std::vector<double>& times, double t, double window) {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  std::ptrdiff_t best = -1;
  double best_dt = window;
  for (auto c : {it, it == times.begin() ? it : it - 1}) {
    if (c == times.end()) continue;
    const double dt = std::abs(*c - t);
    if (dt <= best_dt) {
      best_dt = dt;
      best = c - times.begin();
    }
  }
  return best;
}

Stream build_stream(const std::vector<OdometryMeasurement>& odometry,
                    const std::vector<ToaMeasurement>& toa,
                    const std::vector<LoopClosureMeasurement>& closures, const BackendConfig& cfg) {
  if (cfg.keyframe_stride < 1 || cfg.window < 2)
    throw Error(ErrorCode::InvalidArgument, "keyframe stride must be >= 1 and window >= 2");
  if (odometry.size() < static_cast<std::size_t>(cfg.keyframe_stride))
    throw Error(ErrorCode::EmptyStream, "odometry shorter than one keyframe interval");
  for (std::size_t i = 0; i < odometry.size(); ++i) {
    if (!(odometry[i].t_to > odometry[i].t_from) ||
        (i > 0 && odometry[i].t_from < odometry[i - 1].t_to - 1e-9))
      throw Error(ErrorCode::NonMonotonicTimestamps, "odometry timestamps must increase");
  }
  for (std::size_t i = 1; i < toa.size(); ++i)
    if (toa[i].timestamp < toa[i - 1].timestamp)
      throw Error(ErrorCode::NonMonotonicTimestamps, "ToA timestamps must not decrease");

  Stream s;
  s.times.push_back(odometry.front().t_from);
  RigidTransform acc;
  for (std::size_t i = 0; i < odometry.size(); ++i) {
    acc = acc * odometry[i].relative;
    if ((i + 1) % static_cast<std::size_t>(cfg.keyframe_stride) == 0) {
      s.times.push_back(odometry[i].t_to);
      s.relatives.push_back(acc);
      acc = RigidTransform::identity();
    }
  }
  s.toa.resize(s.times.size());
  for (const auto& m : toa) {
    const auto k = nearest_keyframe(s.times, m.timestamp, cfg.association_window);
    if (k < 0) {
      ++s.dropped;
      continue;
    }
    s.toa[static_cast<std::size_t>(k)].push_back(m);
  }
  s.closures.resize(s.times.size());
  for (const auto& c : closures) {
    const auto a = nearest_keyframe(s.times, c.t_from, cfg.association_window);
    const auto b = nearest_keyframe(s.times, c.t_to, cfg.association_window);
    if (a < 0 || b <= a) continue;
    s.closures[static_cast<std::size_t>(b)].push_back(c);
  }
  return s;
}

RigidTransform scaled(const RigidTransform& T, double s) { return T.with_translation(s * T.translation()); }

class Driver {
 public:
  Driver(const std::vector<BaseStation>& stations, PipelineMode mode, const BackendConfig& cfg)
      : bg_(stations, mode, cfg) {}

  BackendEstimate run(const Stream& s) {
    bg_.stats.toa_dropped = s.dropped;
    bg_.add_keyframe(s.times[0], RigidTransform::identity());
    add_ranges(0, s.toa[0]);
    last_refine_time_ = s.times[0];

    for (std::size_t k = 1; k < s.times.size(); ++k) {
      const RigidTransform rel = scaled(s.relatives[k - 1], bg_.cumulative_scale);
      const RigidTransform prev = bg_.graph.variable(bg_.poses[k - 1]).se3();
      bg_.add_keyframe(s.times[k], prev * rel);
      const FactorId odom = bg_.add_odometry(k - 1, k, rel);
      odometry_edges_.push_back(bg_.relative_pose_factors.back());
      if (k >= static_cast<std::size_t>(bg_.config.covisibility_skip)) {
        RigidTransform chain;
        const std::size_t from = k - static_cast<std::size_t>(bg_.config.covisibility_skip);
        for (std::size_t j = from; j < k; ++j)
          chain = chain * odometry_edges_[j]->measured();
        bg_.add_covisibility(from, k, chain);
      }

      const auto ranges = add_ranges(k, s.toa[k]);
      std::vector<FactorId> active;
      for (const auto& f : ranges)
        if (bg_.toa_active(f)) active.push_back(f);
      if (!active.empty()) {
        tracking_pose_step(bg_.graph, bg_.poses[k], odom, active, bg_.config.optimizer);
        for (const auto& f : active)
          trigger_.max_normalized_residual = std::max(trigger_.max_normalized_residual, bg_.normalized_residual(f));
      }
      ++bg_.stats.tracking_steps;

      if (bg_.mode.loop_closure) {
        for (const auto& c : s.closures[k]) {
          const auto a = nearest_keyframe(bg_.times, c.t_from, bg_.config.association_window);
          if (a < 0) continue;
          bg_.add_loop_closure(static_cast<std::size_t>(a), k, scaled(c.relative, bg_.cumulative_scale));
          loop_pending_ = true;
        }
      }

      trigger_.accumulated_motion_m += rel.translation().norm();
      trigger_.elapsed_s = s.times[k] - last_refine_time_;
      ++trigger_.keyframes;

      const auto W = static_cast<std::size_t>(bg_.config.window);
      if (k % W == 0) local_window_refinement(bg_, k + 1 - W, k);

      if (loop_pending_ || should_trigger_global_refinement(trigger_, bg_.config.thresholds))
        refine(s.times[k]);
    }
    if (trigger_.keyframes > 0) refine(s.times.back());
    return bg_.estimate();
  }

 private:
  std::vector<FactorId> add_ranges(std::size_t k, const std::vector<ToaMeasurement>& ms) {
    std::vector<FactorId> out;
    for (const auto& m : ms) {
      if (!bg_.biases.count(m.station_id) || !(m.range > 0.0)) {
        ++bg_.stats.toa_dropped;
        continue;
      }
      out.push_back(bg_.add_toa(k, m.station_id, m.range));
      ++observations_[m.station_id];
      if (kf_with_range_.empty() || kf_with_range_.back() != k) kf_with_range_.push_back(k);
    }
    if (bg_.mode.stations == StationKnowledge::Unknown) {
      for (auto& [sid, n] : observations_) {
        if (bg_.station_ready.at(sid) || n < bg_.config.min_station_observations) continue;
        if (n - last_attempt_[sid] < 10 && last_attempt_[sid] > 0) continue;
        last_attempt_[sid] = n;
        bg_.try_initialize_station(sid);
      }
    }
    return out;
  }

  bool known_ready_to_initialize() const {
    if (static_cast<int>(kf_with_range_.size()) < bg_.config.min_init_keyframes) return false;
    const Vec3 origin = bg_.graph.variable(bg_.poses[kf_with_range_.front()]).se3().translation();
    double extent = 0.0;
    for (auto k : kf_with_range_)
      extent = std::max(extent, (bg_.graph.variable(bg_.poses[k]).se3().translation() - origin).norm());
    return extent * bg_.graph.variable(bg_.scale).scale() >= bg_.config.min_init_extent_m;
  }

  void refine(double now) {
    const bool monocular = bg_.mode.sensor == SensorClass::Monocular;
    if (bg_.mode.stations == StationKnowledge::Known) {
      if (!bg_.toa_factors.empty() && (bg_.transform_initialized || known_ready_to_initialize())) {
        if (!bg_.transform_initialized) initialize_transform(bg_);
        transformation_refinement(bg_);
        if (monocular) scale_refinement(bg_);
      }
    } else if (monocular && !bg_.active_toa_factors().empty()) {
      scale_refinement(bg_);
    }
    if (bg_.poses.size() >= 2) global_map_refinement(bg_);
    bg_.update_priors();
    trigger_ = {};
    last_refine_time_ = now;
    loop_pending_ = false;
  }

  BackendGraph bg_;
  RefinementTriggerState trigger_;
  double last_refine_time_ = 0.0;
  bool loop_pending_ = false;
  std::vector<const RelativePoseFactor*> odometry_edges_;  // [j]: keyframe j -> j+1
  std::vector<std::size_t> kf_with_range_;
  std::map<int, int> observations_;
  std::map<int, int> last_attempt_;
};

}  // namespace

BackendEstimate run_backend(const std::vector<OdometryMeasurement>& odometry,
                            const std::vector<ToaMeasurement>& toa,
                            const std::vector<LoopClosureMeasurement>& loop_closures,
                            const std::vector<BaseStation>& stations, PipelineMode mode,
                            const BackendConfig& config) {
  if (odometry.empty()) throw Error(ErrorCode::EmptyStream, "odometry stream is empty");
  const Stream s = build_stream(odometry, toa, loop_closures, config);
  Driver driver(stations, mode, config);
  return driver.run(s);
}

}  // namespace toa_slam
