#include "toa_slam/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "toa_slam/errors.hpp"
#include "toa_slam/io.hpp"

namespace toa_slam {

bool BaseStation::active_at(double t) const {
  return std::any_of(intervals.begin(), intervals.end(),
                     [t](const Interval& iv) { return iv.contains(t); });
}

std::string_view to_string(SensorClass s) {
  return s == SensorClass::Monocular ? "monocular" : "range_scaled";
}

std::string_view to_string(StationKnowledge k) {
  return k == StationKnowledge::Unknown ? "unknown" : "known";
}

namespace {

// Independent sub-stream per (seed, purpose, index).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t tag, std::uint32_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    tag, index};
  return std::mt19937_64(seq);
}

enum StreamTag : std::uint32_t {
  kOdometry = 1,
  kToa = 2,
  kLoop = 3,
  kPreset = 4,
  kPerturb = 5,
};

Vec3 gaussian_vec(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng), y = n(rng), z = n(rng);
  return sigma * Vec3(x, y, z);
}

Vec3 unit_vec(std::mt19937_64& rng) {
  for (;;) {
    Vec3 v = gaussian_vec(rng, 1.0);
    if (v.norm() > 1e-6) return v.normalized();
  }
}

Eigen::Quaterniond yaw_quaternion(double yaw) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

// Position at t by linear interpolation of the trajectory samples.
Vec3 position_at(const Trajectory& traj, double t) {
  auto it = std::lower_bound(traj.begin(), traj.end(), t,
                             [](const StampedPose& p, double v) { return p.timestamp < v; });
  if (it == traj.begin()) return it->pose.translation();
  if (it == traj.end()) return traj.back().pose.translation();
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double h = b.timestamp - a.timestamp;
  if (h <= 0.0) return b.pose.translation();
  const double u = (t - a.timestamp) / h;
  return (1.0 - u) * a.pose.translation() + u * b.pose.translation();
}

}  // namespace

bool Box::contains(const Vec3& p, double tol) const {
  return ((p - center).cwiseAbs() - 0.5 * size).maxCoeff() <= tol;
}

Vec3 Box::clamp(const Vec3& p) const {
  const Vec3 lo = center - 0.5 * size;
  const Vec3 hi = center + 0.5 * size;
  return p.cwiseMax(lo).cwiseMin(hi);
}

Trajectory generate_trajectory(const TrajectorySpec& spec) {
  const auto& wp = spec.waypoints;
  if (wp.size() < 2) throw Error(ErrorCode::TooFewWaypoints, "at least two waypoints are required");
  if (!(spec.rate_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "trajectory rate must be positive");
  for (std::size_t i = 0; i < wp.size(); ++i) {
    if (i > 0 && wp[i].time < wp[i - 1].time)
      throw Error(ErrorCode::InvalidArgument, "waypoint times must be non-decreasing");
    if (!spec.box.contains(wp[i].position, 1e-9))
      throw Error(ErrorCode::InvalidArgument,
                  "waypoint " + std::to_string(i) + " lies outside the bounding box");
  }

  const std::size_t n = wp.size();
  std::vector<Vec3> tangent(n, Vec3::Zero());
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double dt = wp[i + 1].time - wp[i - 1].time;
    if (dt > 0.0) tangent[i] = (wp[i + 1].position - wp[i - 1].position) / dt;
  }

  // Yaw per waypoint: explicit, else heading of travel through it.
  std::vector<double> yaw(n, 0.0);
  double last_heading = 0.0;
  bool have_heading = false;
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 dir = tangent[i];
    if (dir.head<2>().norm() < 1e-9 && i + 1 < n) dir = wp[i + 1].position - wp[i].position;
    if (dir.head<2>().norm() < 1e-9 && i > 0) dir = wp[i].position - wp[i - 1].position;
    if (dir.head<2>().norm() >= 1e-9) {
      last_heading = std::atan2(dir.y(), dir.x());
      if (!have_heading) {
        for (std::size_t j = 0; j < i; ++j)
          if (!wp[j].yaw) yaw[j] = last_heading;
      }
      have_heading = true;
    }
    yaw[i] = wp[i].yaw ? *wp[i].yaw : last_heading;
  }

  const double t0 = wp.front().time;
  const double t1 = wp.back().time;
  const auto samples = static_cast<long>(std::floor((t1 - t0) * spec.rate_hz + 1e-9));
  Trajectory out;
  out.reserve(static_cast<std::size_t>(samples) + 1);
  std::size_t seg = 0;
  for (long k = 0; k <= samples; ++k) {
    const double t = t0 + static_cast<double>(k) / spec.rate_hz;
    while (seg + 2 < n && t >= wp[seg + 1].time) ++seg;
    const auto& a = wp[seg];
    const auto& b = wp[seg + 1];
    const double h = b.time - a.time;
    Vec3 p;
    Eigen::Quaterniond q;
    if (h <= 0.0) {
      p = b.position;
      q = yaw_quaternion(yaw[seg + 1]);
    } else {
      const double u = std::clamp((t - a.time) / h, 0.0, 1.0);
      const double u2 = u * u, u3 = u2 * u;
      const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
      const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
      p = h00 * a.position + h10 * h * tangent[seg] + h01 * b.position + h11 * h * tangent[seg + 1];
      q = yaw_quaternion(yaw[seg]).slerp(u, yaw_quaternion(yaw[seg + 1]));
    }
    out.push_back({t, RigidTransform(q, spec.box.clamp(p))});
  }
  return out;
}

std::vector<Waypoint> lissajous_waypoints(double duration_s, const Box& box, double phase) {
  if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const Vec3 amp(0.35 * box.size.x(), 0.35 * box.size.y(), 0.25 * box.size.z());
  std::vector<Waypoint> out;
  const auto count = static_cast<int>(std::ceil(duration_s / 2.0 - 1e-9));
  for (int i = 0; i <= count; ++i) {
    const double t = std::min(2.0 * i, duration_s);
    const Vec3 offset(amp.x() * std::sin(kTwoPi * t / 37.0 + phase),
                      amp.y() * std::sin(kTwoPi * t / 29.0 + 0.5 + phase),
                      amp.z() * std::sin(kTwoPi * t / 23.0 + 1.0 + phase));
    out.push_back({t, box.center + offset, std::nullopt});
  }
  return out;
}

std::vector<OdometryMeasurement> corrupt_odometry(const Trajectory& ground_truth,
                                                  const OdometryNoiseModel& model,
                                                  std::uint64_t seed) {
  if (model.sigma_translation < 0.0 || model.sigma_rotation < 0.0 || model.velocity_bias_walk < 0.0)
    throw Error(ErrorCode::InvalidArgument, "odometry noise sigma must be non-negative");
  if (!(model.scale_drift > 0.0))
    throw Error(ErrorCode::InvalidArgument, "odometry scale drift must be positive");

  auto rng = make_rng(seed, kOdometry);
  std::vector<OdometryMeasurement> out;
  if (ground_truth.size() < 2) return out;
  out.reserve(ground_truth.size() - 1);
  Vec3 walk = Vec3::Zero();
  for (std::size_t i = 0; i + 1 < ground_truth.size(); ++i) {
    const RigidTransform rel = ground_truth[i].pose.inverse() * ground_truth[i + 1].pose;
    Twist noise;
    noise.rotation = gaussian_vec(rng, model.sigma_rotation);
    noise.translation = gaussian_vec(rng, model.sigma_translation);
    RigidTransform noisy = rel * se3_exp(noise);
    if (model.velocity_bias_walk > 0.0) {
      const double dt = ground_truth[i + 1].timestamp - ground_truth[i].timestamp;
      walk += gaussian_vec(rng, model.velocity_bias_walk * std::sqrt(dt));
      noisy = noisy.with_translation(noisy.translation() + dt * walk);
    }
    noisy = noisy.with_translation(model.scale_drift * noisy.translation());
    out.push_back({ground_truth[i].timestamp, ground_truth[i + 1].timestamp, noisy});
  }
  return out;
}

Trajectory integrate_odometry(const RigidTransform& start,
                              const std::vector<OdometryMeasurement>& odometry) {
  Trajectory out;
  out.reserve(odometry.size() + 1);
  out.push_back({odometry.empty() ? 0.0 : odometry.front().t_from, start});
  for (const auto& m : odometry) out.push_back({m.t_to, out.back().pose * m.relative});
  return out;
}

std::vector<ToaMeasurement> simulate_toa(const Trajectory& ground_truth,
                                         const std::vector<BaseStation>& stations,
                                         double rate_hz, std::uint64_t seed) {
  if (stations.empty()) throw Error(ErrorCode::InvalidArgument, "no base stations configured");
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "ToA rate must be positive");
  std::vector<ToaMeasurement> out;
  if (ground_truth.empty()) return out;

  const double t0 = ground_truth.front().timestamp;
  const double t1 = ground_truth.back().timestamp;
  const auto k0 = static_cast<long>(std::ceil(t0 * rate_hz - 1e-9));
  const auto k1 = static_cast<long>(std::floor(t1 * rate_hz + 1e-9));

  for (const auto& bs : stations) {
    if (!(bs.sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "station sigma must be non-negative");
    auto rng = make_rng(seed, kToa, static_cast<std::uint32_t>(bs.id));
    std::normal_distribution<double> noise(bs.bias, bs.sigma);
    for (long k = k0; k <= k1; ++k) {
      const double t = static_cast<double>(k) / rate_hz;
      if (!bs.active_at(t)) continue;
      const double truth = (position_at(ground_truth, t) - bs.position).norm();
      double d = bs.sigma > 0.0 ? truth + noise(rng) : truth + bs.bias;
      for (int tries = 0; d <= 0.0; ++tries) {
        if (tries >= 1000 || bs.sigma == 0.0)
          throw Error(ErrorCode::InvalidArgument,
                      "station " + std::to_string(bs.id) + " cannot produce a positive range");
        d = truth + noise(rng);
      }
      out.push_back({t, bs.id, d});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ToaMeasurement& a, const ToaMeasurement& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.station_id < b.station_id;
  });
  return out;
}

std::vector<ToaMeasurement> apply_visibility_schedule(const std::vector<ToaMeasurement>& stream,
                                                      const VisibilitySchedule& schedule) {
  std::vector<ToaMeasurement> out;
  for (const auto& m : stream) {
    auto it = schedule.find(m.station_id);
    if (it == schedule.end()) continue;
    const bool visible = std::any_of(it->second.begin(), it->second.end(),
                                     [&](const Interval& iv) { return iv.contains(m.timestamp); });
    if (visible) out.push_back(m);
  }
  return out;
}

VisibilitySchedule sequential_schedule() {
  return {{1, {{10.0, 40.0}}}, {2, {{50.0, 70.0}}}, {3, {{80.0, 100.0}}}};
}

std::vector<LoopClosureMeasurement> detect_loop_closures(const Trajectory& ground_truth,
                                                         const LoopClosureSettings& settings,
                                                         std::uint64_t seed) {
  if (settings.keyframe_stride < 1 || settings.window < 1)
    throw Error(ErrorCode::InvalidArgument, "loop-closure stride and window must be positive");
  auto rng = make_rng(seed, kLoop);
  std::vector<std::size_t> kf;
  for (std::size_t i = 0; i < ground_truth.size(); i += settings.keyframe_stride) kf.push_back(i);

  std::vector<LoopClosureMeasurement> out;
  const long min_gap = 3L * settings.window;
  long last = -static_cast<long>(settings.window);
  for (long j = 0; j < static_cast<long>(kf.size()); ++j) {
    if (j - last < settings.window) continue;
    const Vec3 pj = ground_truth[kf[j]].pose.translation();
    long best = -1;
    double best_d = settings.radius;
    for (long i = 0; j - i > min_gap; ++i) {
      const double d = (ground_truth[kf[i]].pose.translation() - pj).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best < 0) continue;
    const auto& a = ground_truth[kf[best]];
    const auto& b = ground_truth[kf[j]];
    Twist noise;
    noise.rotation = gaussian_vec(rng, settings.sigma_rotation);
    noise.translation = gaussian_vec(rng, settings.sigma_translation);
    out.push_back({a.timestamp, b.timestamp, (a.pose.inverse() * b.pose) * se3_exp(noise)});
    last = j;
  }
  return out;
}

NoiseEnvelope noise_envelope(FrequencyPreset preset) {
  switch (preset) {
    case FrequencyPreset::Ghz28:
      return {0.2764, 0.4132, -0.1941, 0.0828};
    case FrequencyPreset::Ghz78:
      return {0.1425, 0.1958, -0.0871, 0.0312};
    case FrequencyPreset::Custom:
      break;
  }
  throw Error(ErrorCode::InvalidArgument, "custom frequency preset has no noise envelope");
}

void assign_preset_noise(std::vector<BaseStation>& stations, FrequencyPreset preset,
                         std::uint64_t seed) {
  const NoiseEnvelope env = noise_envelope(preset);
  for (auto& bs : stations) {
    auto rng = make_rng(seed, kPreset, static_cast<std::uint32_t>(bs.id));
    std::uniform_real_distribution<double> sigma(env.sigma_min, env.sigma_max);
    std::uniform_real_distribution<double> bias(env.bias_min, env.bias_max);
    bs.sigma = sigma(rng);
    bs.bias = bias(rng);
  }
}

std::vector<BaseStation> station_layout(const std::string& name) {
  auto make = [](std::initializer_list<Vec3> pts) {
    std::vector<BaseStation> v;
    int id = 1;
    for (const auto& p : pts) {
      BaseStation bs;
      bs.id = id++;
      bs.position = p;
      v.push_back(bs);
    }
    return v;
  };
  if (name == "aerolab")
    return make({{2.5, -2.5, 4.5}, {2.5, 2.5, 4.0}, {-2.5, 2.5, 5.0}, {-6.5, -2.5, 2.0}});
  if (name == "tetrahedral") return make({{0, 0, 3}, {-4, -4, 0}, {4, -4, 0}, {0, 4, 0}});
  if (name == "diamond") return make({{0, -5, 0.5}, {5, 0, 1}, {0, 5, 0.5}, {-5, 0, 1}});
  if (name == "z_shape") return make({{-5, -5, 0.5}, {5, -5, 3}, {-5, 5, 3}, {5, 5, 0.5}});
  if (name == "asymmetric") return make({{-5, -2, 3}, {2, -5, 1}, {5, 3, 2}, {-1, 5, 0.5}});
  if (name == "clustered") return make({{-5, -3, 1}, {-5, -1, 2}, {-5, 1, 1}, {-5, 3, 2}});
  if (name == "uwbvo") {
    auto v = make({{10, 10, 10}});
    v[0].sigma = 0.05;
    return v;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown station layout '" + name + "'");
}

const std::vector<std::string>& gdop_layout_names() {
  static const std::vector<std::string> names{"tetrahedral", "diamond", "z_shape", "asymmetric",
                                              "clustered"};
  return names;
}

RigidTransform random_perturbation(double distance, double angle, std::uint64_t seed) {
  auto rng = make_rng(seed, kPerturb);
  const Vec3 axis = unit_vec(rng);
  const Vec3 dir = unit_vec(rng);
  return RigidTransform(so3_exp(angle * axis), distance * dir);
}

ScenarioData build_scenario(const ScenarioConfig& config) {
  if (!(config.odometry_rate_hz > 0.0) || !(config.toa_rate_hz > 0.0))
    throw Error(ErrorCode::ConfigError, "rates must be positive");
  if (!(config.duration_s > 0.0)) throw Error(ErrorCode::ConfigError, "duration must be positive");

  ScenarioData data;
  switch (config.trajectory_kind) {
    case ScenarioConfig::TrajectoryKind::Lissajous:
      data.ground_truth = generate_trajectory(
          {lissajous_waypoints(config.duration_s, config.box), config.odometry_rate_hz, config.box});
      break;
    case ScenarioConfig::TrajectoryKind::Waypoints:
      data.ground_truth =
          generate_trajectory({config.waypoints, config.odometry_rate_hz, config.box});
      break;
    case ScenarioConfig::TrajectoryKind::TumFile:
      data.ground_truth = read_tum(config.tum_path);
      break;
  }
  if (data.ground_truth.size() < 2)
    throw Error(ErrorCode::ConfigError, "trajectory has fewer than two poses");

  // Stations: explicit values win, the preset fills the rest.
  std::vector<BaseStation> drawn;
  for (const auto& sc : config.stations) {
    BaseStation bs;
    bs.id = sc.id;
    bs.position = sc.position;
    drawn.push_back(bs);
  }
  if (config.frequency != FrequencyPreset::Custom)
    assign_preset_noise(drawn, config.frequency, config.seed);
  for (std::size_t i = 0; i < config.stations.size(); ++i) {
    const auto& sc = config.stations[i];
    auto& bs = drawn[i];
    if (config.frequency == FrequencyPreset::Custom) {
      bs.sigma = 0.15;
      bs.bias = 0.0;
    }
    if (sc.sigma) bs.sigma = *sc.sigma;
    if (sc.bias) bs.bias = *sc.bias;
    if (sc.intervals) bs.intervals = *sc.intervals;
    if (!(bs.sigma >= 0.0))
      throw Error(ErrorCode::ConfigError, "station " + std::to_string(bs.id) + " has negative sigma");
  }
  data.stations = drawn;

  data.true_transform = data.ground_truth.front().pose;
  data.odometry = corrupt_odometry(data.ground_truth, config.odometry, config.seed);
  if (config.toa_enabled && !data.stations.empty())
    data.toa = simulate_toa(data.ground_truth, data.stations, config.toa_rate_hz, config.seed);
  data.loop_closures = detect_loop_closures(data.ground_truth, config.loop_closure, config.seed);
  // closures come from the same front end, so they share its scale
  for (auto& lc : data.loop_closures)
    lc.relative = lc.relative.with_translation(config.odometry.scale_drift * lc.relative.translation());
  return data;
}

}  // namespace toa_slam
