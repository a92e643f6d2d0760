#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "test_support.hpp"
#include "toa_slam/io.hpp"
#include "toa_slam/simulate.hpp"

using namespace toa_slam;
using namespace toa_slam::testing;

namespace {

Trajectory constant_trajectory(const Vec3& p, double duration, double rate) {
  Trajectory t;
  const auto n = static_cast<int>(std::lround(duration * rate));
  for (int k = 0; k <= n; ++k) t.push_back({k / rate, RigidTransform::from_translation(p)});
  return t;
}

double path_length(const Trajectory& t) {
  double s = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) s += (t[i].pose.translation() - t[i - 1].pose.translation()).norm();
  return s;
}

TrajectorySpec square_loop() {
  TrajectorySpec spec;
  spec.waypoints = {{0.0, {-1, -1, 2}, {}}, {4.0, {1, -1, 2}, {}}, {8.0, {1, 1, 2.5}, {}},
                    {12.0, {-1, 1, 2}, {}}, {16.0, {-1, -1, 2}, {}}};
  spec.rate_hz = 100.0;
  return spec;
}

}  // namespace

TEST_CASE("generate_trajectory: identical waypoints give a constant pose sequence") {
  TrajectorySpec spec;
  spec.waypoints = {{0.0, {0.5, 0.5, 2.0}, 0.3}, {2.0, {0.5, 0.5, 2.0}, 0.3}};
  const auto traj = generate_trajectory(spec);
  REQUIRE(traj.size() == 201);
  for (const auto& p : traj) {
    CHECK((p.pose.translation() - Vec3(0.5, 0.5, 2.0)).norm() == 0.0);
    CHECK(rotation_angle(p.pose.rotation() * traj.front().pose.rotation().inverse()) < 1e-12);
  }
}

TEST_CASE("generate_trajectory: closed square loop returns to its start") {
  const auto traj = generate_trajectory(square_loop());
  CHECK(traj.front().timestamp == 0.0);
  CHECK(traj.back().timestamp == doctest::Approx(16.0).epsilon(1e-12));
  CHECK((traj.front().pose.translation() - traj.back().pose.translation()).norm() < 1e-9);
}

TEST_CASE("generate_trajectory: sample-to-sample motion bounded by the Hermite speed bound") {
  // For cubic Hermite segments |p'| <= 1.5 |chord| / h + |m_i| + |m_i+1|.
  const auto spec = square_loop();
  const auto& w = spec.waypoints;
  std::vector<Vec3> m(w.size(), Vec3::Zero());
  for (std::size_t i = 1; i + 1 < w.size(); ++i)
    m[i] = (w[i + 1].position - w[i - 1].position) / (w[i + 1].time - w[i - 1].time);
  double vmax = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const double h = w[i + 1].time - w[i].time;
    vmax = std::max(vmax, 1.5 * (w[i + 1].position - w[i].position).norm() / h + m[i].norm() + m[i + 1].norm());
  }
  const auto traj = generate_trajectory(spec);
  const double dt = 1.0 / spec.rate_hz;
  double max_jump = 0.0, max_dv = 0.0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    max_jump = std::max(max_jump, (traj[k].pose.translation() - traj[k - 1].pose.translation()).norm());
    if (k >= 2) {
      const Vec3 v1 = (traj[k].pose.translation() - traj[k - 1].pose.translation()) / dt;
      const Vec3 v0 = (traj[k - 1].pose.translation() - traj[k - 2].pose.translation()) / dt;
      max_dv = std::max(max_dv, (v1 - v0).norm());
    }
  }
  CHECK(max_jump <= vmax * dt + 1e-12);
  // C1: no velocity discontinuity at the knots (second differences stay small).
  CHECK(max_dv < 0.01);
}

TEST_CASE("generate_trajectory: confined to its box; rejects too few or outside waypoints") {
  Box box;
  const auto traj = generate_trajectory({lissajous_waypoints(120.0, box), 100.0, box});
  CHECK(traj.size() == 12001);
  for (const auto& p : traj) CHECK(box.contains(p.pose.translation()));

  TrajectorySpec one;
  one.waypoints = {{0.0, {0, 0, 1}, {}}};
  CHECK(error_code_of([&] { generate_trajectory(one); }) == ErrorCode::TooFewWaypoints);
  TrajectorySpec outside;
  outside.waypoints = {{0.0, {0, 0, 1}, {}}, {1.0, {9, 0, 1}, {}}};
  CHECK(error_code_of([&] { generate_trajectory(outside); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("corrupt_odometry: zero noise reproduces ground truth; drift scales path length") {
  Box box;
  const auto gt = generate_trajectory({lissajous_waypoints(30.0, box), 100.0, box});
  OdometryNoiseModel clean{0.0, 0.0, 1.0, 0.0};
  const auto integrated = integrate_odometry(gt.front().pose, corrupt_odometry(gt, clean, 3));
  REQUIRE(integrated.size() == gt.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    worst = std::max(worst, (integrated[i].pose.translation() - gt[i].pose.translation()).norm());
    CHECK(integrated[i].timestamp == gt[i].timestamp);
  }
  CHECK(worst < 1e-9);

  OdometryNoiseModel half{0.0, 0.0, 0.5, 0.0};
  const auto scaled = integrate_odometry(RigidTransform::identity(), corrupt_odometry(gt, half, 3));
  CHECK(std::abs(path_length(scaled) - 0.5 * path_length(gt)) < 1e-9);
}

TEST_CASE("corrupt_odometry: terminal drift follows the random-walk square-root law") {
  // Terminal error of N isotropic N(0, s^2 I3) steps has mean s sqrt(N) E|chi_3|
  // with E|chi_3| = 2 sqrt(2 / pi).
  const auto gt = constant_trajectory(Vec3(0, 0, 1), 10.0, 100.0);
  const OdometryNoiseModel model{0.01, 0.0, 1.0, 0.0};
  const double predicted = 0.01 * std::sqrt(1000.0) * 2.0 * std::sqrt(2.0 / std::numbers::pi);
  double mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto est = integrate_odometry(gt.front().pose, corrupt_odometry(gt, model, seed));
    mean += (est.back().pose.translation() - gt.back().pose.translation()).norm() / 20.0;
  }
  CHECK(std::abs(mean / predicted - 1.0) < 0.30);
}

TEST_CASE("corrupt_odometry: deterministic per seed") {
  Box box;
  const auto gt = generate_trajectory({lissajous_waypoints(10.0, box), 100.0, box});
  const OdometryNoiseModel model{0.002, 0.0005, 1.0, 5e-4};
  const auto a = corrupt_odometry(gt, model, 11);
  const auto b = corrupt_odometry(gt, model, 11);
  const auto c = corrupt_odometry(gt, model, 12);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].relative.matrix() == b[i].relative.matrix();
    differs = differs || a[i].relative.matrix() != c[i].relative.matrix();
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("simulate_toa: noiseless ranges are exact and on the rate grid") {
  Box box;
  const auto gt = generate_trajectory({lissajous_waypoints(20.0, box), 100.0, box});
  auto stations = station_layout("aerolab");
  for (auto& s : stations) s.sigma = 0.0;
  const auto toa = simulate_toa(gt, stations, 10.0, 5);
  CHECK(toa.size() == 4 * 201);
  for (const auto& m : toa) {
    const double k = m.timestamp * 10.0;
    CHECK(std::abs(k - std::round(k)) < 1e-9);
    const auto idx = static_cast<std::size_t>(std::lround(m.timestamp * 100.0));
    const double truth = (gt[idx].pose.translation() - stations[m.station_id - 1].position).norm();
    CHECK(std::abs(m.range - truth) < 1e-12);
  }
  // merged by timestamp, ties by station id
  for (std::size_t i = 1; i < toa.size(); ++i) {
    const bool ordered = toa[i - 1].timestamp < toa[i].timestamp ||
                         (toa[i - 1].timestamp == toa[i].timestamp && toa[i - 1].station_id < toa[i].station_id);
    CHECK(ordered);
  }
}

TEST_CASE("simulate_toa: 78 GHz station class statistics over 10^4 draws") {
  // sigma 14.25 cm, mean -1.72 cm for one station class at 78 GHz.
  const Vec3 receiver(0, 0, 1);
  const auto gt = constant_trajectory(receiver, 999.9, 10.0);
  BaseStation bs;
  bs.id = 4;
  bs.position = Vec3(-6.5, -2.5, 2.0);
  bs.sigma = 0.1425;
  bs.bias = -0.0172;
  const auto toa = simulate_toa(gt, {bs}, 10.0, 2024);
  REQUIRE(toa.size() == 10000);
  const double truth = (receiver - bs.position).norm();
  double mean = 0.0;
  for (const auto& m : toa) mean += (m.range - truth) / 1e4;
  double var = 0.0;
  for (const auto& m : toa) var += std::pow(m.range - truth - mean, 2) / (1e4 - 1);
  CHECK(std::abs(std::sqrt(var) / 0.1425 - 1.0) < 0.05);
  CHECK(std::abs(mean - -0.0172) < 0.005);
}

TEST_CASE("simulate_toa: ranges stay positive close to a station") {
  const auto gt = constant_trajectory(Vec3(0, 0, 1), 100.0, 10.0);
  BaseStation bs;
  bs.id = 1;
  bs.position = Vec3(0, 0, 1.2);
  bs.sigma = 0.3;
  const auto toa = simulate_toa(gt, {bs}, 10.0, 9);
  CHECK(toa.size() == 1001);
  CHECK(std::all_of(toa.begin(), toa.end(), [](const ToaMeasurement& m) { return m.range > 0.0; }));
}

TEST_CASE("simulate_toa: deterministic and honours station intervals") {
  Box box;
  const auto gt = generate_trajectory({lissajous_waypoints(60.0, box), 100.0, box});
  auto stations = station_layout("aerolab");
  stations[1].intervals = {{5.0, 15.0}, {30.0, 31.0}};
  const auto a = simulate_toa(gt, stations, 10.0, 77);
  const auto b = simulate_toa(gt, stations, 10.0, 77);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].range == b[i].range);
    CHECK(a[i].timestamp == b[i].timestamp);
  }
  for (const auto& m : a)
    if (m.station_id == 2) CHECK(stations[1].active_at(m.timestamp));
}

TEST_CASE("apply_visibility_schedule: full, sequential and empty schedules") {
  Box box;
  const auto gt = generate_trajectory({lissajous_waypoints(120.0, box), 100.0, box});
  const auto stations = station_layout("aerolab");
  const auto toa = simulate_toa(gt, stations, 10.0, 1);

  VisibilitySchedule full;
  for (const auto& s : stations) full[s.id] = {Interval{}};
  CHECK(apply_visibility_schedule(toa, full).size() == toa.size());

  const auto seq = apply_visibility_schedule(toa, sequential_schedule());
  CHECK(!seq.empty());
  int counts[5] = {0, 0, 0, 0, 0};
  for (const auto& m : seq) {
    ++counts[m.station_id];
    if (m.station_id == 1) CHECK((m.timestamp >= 10.0 && m.timestamp <= 40.0));
    if (m.station_id == 2) CHECK((m.timestamp >= 50.0 && m.timestamp <= 70.0));
    if (m.station_id == 3) CHECK((m.timestamp >= 80.0 && m.timestamp <= 100.0));
  }
  CHECK(counts[1] == 300);
  CHECK(counts[2] == 200);
  CHECK(counts[3] == 200);
  CHECK(counts[4] == 0);

  CHECK(apply_visibility_schedule(toa, {}).empty());
}

TEST_CASE("station layouts carry the published coordinates") {
  const auto aerolab = station_layout("aerolab");
  REQUIRE(aerolab.size() == 4);
  CHECK(aerolab[0].position == Vec3(2.5, -2.5, 4.5));
  CHECK(aerolab[1].position == Vec3(2.5, 2.5, 4.0));
  CHECK(aerolab[2].position == Vec3(-2.5, 2.5, 5.0));
  CHECK(aerolab[3].position == Vec3(-6.5, -2.5, 2.0));

  const auto tetra = station_layout("tetrahedral");
  CHECK(tetra[0].position == Vec3(0, 0, 3));
  CHECK(tetra[3].position == Vec3(0, 4, 0));
  CHECK(station_layout("clustered")[2].position == Vec3(-5, 1, 1));
  CHECK(station_layout("z_shape")[1].position == Vec3(5, -5, 3));
  CHECK(station_layout("diamond")[1].position == Vec3(5, 0, 1));
  CHECK(station_layout("asymmetric")[2].position == Vec3(5, 3, 2));

  const auto uwb = station_layout("uwbvo");
  REQUIRE(uwb.size() == 1);
  CHECK(uwb[0].position == Vec3(10, 10, 10));
  CHECK(uwb[0].sigma == 0.05);
  CHECK(uwb[0].bias == 0.0);
  CHECK(preset_config("uwbvo_mh").toa_rate_hz == 5.0);

  CHECK(gdop_layout_names().size() == 5);
  CHECK(error_code_of([] { station_layout("nope"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("frequency presets draw inside their envelopes") {
  for (auto preset : {FrequencyPreset::Ghz28, FrequencyPreset::Ghz78}) {
    const auto env = noise_envelope(preset);
    auto stations = station_layout("aerolab");
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      assign_preset_noise(stations, preset, seed);
      for (const auto& s : stations) {
        CHECK(s.sigma >= env.sigma_min);
        CHECK(s.sigma <= env.sigma_max);
        CHECK(s.bias >= env.bias_min);
        CHECK(s.bias <= env.bias_max);
      }
    }
  }
  CHECK(noise_envelope(FrequencyPreset::Ghz78).sigma_max < noise_envelope(FrequencyPreset::Ghz28).sigma_min);
}

TEST_CASE("detect_loop_closures: revisits only, separated in time") {
  // Two laps of the same circle.
  std::vector<Waypoint> wps;
  for (int i = 0; i <= 40; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 20.0;
    wps.push_back({i * 1.0, Vec3(1.5 * std::cos(a), 1.5 * std::sin(a), 2.0), std::nullopt});
  }
  const auto gt = generate_trajectory({wps, 100.0, Box{}});
  LoopClosureSettings settings;
  settings.sigma_translation = 0.0;
  settings.sigma_rotation = 0.0;
  const auto closures = detect_loop_closures(gt, settings, 1);
  REQUIRE(!closures.empty());
  for (const auto& c : closures) {
    const auto i = static_cast<std::size_t>(std::lround(c.t_from * 100.0));
    const auto j = static_cast<std::size_t>(std::lround(c.t_to * 100.0));
    CHECK((gt[i].pose.translation() - gt[j].pose.translation()).norm() < settings.radius);
    CHECK((j - i) / 10 > static_cast<std::size_t>(3 * settings.window));
    const auto truth = gt[i].pose.inverse() * gt[j].pose;
    CHECK((truth.translation() - c.relative.translation()).norm() < 1e-9);
  }
}

TEST_CASE("random_perturbation has the requested magnitude") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto T = random_perturbation(1.0, 30.0 * std::numbers::pi / 180.0, seed);
    CHECK(T.translation().norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rotation_angle(T.rotation()) == doctest::Approx(30.0 * std::numbers::pi / 180.0).epsilon(1e-9));
  }
}

TEST_CASE("build_scenario: bit-identical for identical config and seed") {
  auto cfg = preset_config("aerolab_78ghz");
  cfg.duration_s = 20.0;
  const auto a = build_scenario(cfg);
  const auto b = build_scenario(cfg);
  REQUIRE(a.toa.size() == b.toa.size());
  for (std::size_t i = 0; i < a.toa.size(); ++i) CHECK(a.toa[i].range == b.toa[i].range);
  for (std::size_t i = 0; i < a.odometry.size(); ++i)
    CHECK(a.odometry[i].relative.matrix() == b.odometry[i].relative.matrix());
  CHECK(a.true_transform.matrix() == a.ground_truth.front().pose.matrix());
  // explicit station values override the preset draw
  cfg.stations[0].sigma = 0.01;
  cfg.stations[0].bias = 0.02;
  const auto c = build_scenario(cfg);
  CHECK(c.stations[0].sigma == 0.01);
  CHECK(c.stations[0].bias == 0.02);
  CHECK(c.stations[1].sigma == a.stations[1].sigma);
}
