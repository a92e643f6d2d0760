// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance [criterion ...]   (default: all of 1-10)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "toa_slam/cli.hpp"
#include "toa_slam/errors.hpp"
#include "toa_slam/eval.hpp"
#include "toa_slam/factors.hpp"
#include "toa_slam/io.hpp"
#include "toa_slam/pipeline.hpp"
#include "toa_slam/simulate.hpp"

using namespace toa_slam;
namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 5;

struct Outcome {
  bool pass;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec3 random_vec3(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

RigidTransform random_transform(std::mt19937_64& rng, double translation_scale) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi - 1e-3);
  Vec3 axis = random_vec3(rng, 1.0);
  while (axis.norm() < 1e-3) axis = random_vec3(rng, 1.0);
  return se3_exp(Twist{axis.normalized() * angle(rng), random_vec3(rng, translation_scale)});
}

VariableValue pose_value(const RigidTransform& T) { return {T, Vec3::Zero(), 0.0}; }
VariableValue vec_value(const Vec3& v) { return {{}, v, 0.0}; }
VariableValue scalar_value(double x) { return {{}, Vec3::Zero(), x}; }

// ---------------------------------------------------------------- 1

Outcome jacobian_suite() {
  const Stopwatch clock;
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> log_scale(std::log(0.3), std::log(3.0));
  std::uniform_real_distribution<double> range(0.5, 12.0);
  std::uniform_real_distribution<double> bias(-0.3, 0.3);

  struct Worst {
    std::string name;
    double value = 0.0;
  };
  std::vector<Worst> worst;
  auto check = [&](const std::string& name, const std::function<double()>& one) {
    Worst w{name, 0.0};
    for (int i = 0; i < 100; ++i) w.value = std::max(w.value, one());
    worst.push_back(w);
  };

  for (bool with_scale : {false, true}) {
    check(with_scale ? "toa(scaled)" : "toa", [&] {
      std::vector<Variable> v;
      v.emplace_back(VariableKind::Pose, pose_value(random_transform(rng, 3.0)), false);
      v.emplace_back(VariableKind::Transform, pose_value(random_transform(rng, 3.0)), false);
      v.emplace_back(VariableKind::Bias, scalar_value(bias(rng)), false);
      if (with_scale) v.emplace_back(VariableKind::Scale, scalar_value(log_scale(rng)), false);
      v.emplace_back(VariableKind::StationPosition, vec_value(random_vec3(rng, 6.0)), false);
      ToaFactorSpec spec;
      spec.pose = {0};
      spec.transform = {1};
      spec.bias = {2};
      if (with_scale) spec.scale = VariableId{3};
      spec.station = {with_scale ? 4u : 3u};
      spec.measured_range = range(rng);
      spec.information = 1.0 / (0.15 * 0.15);
      return numeric_jacobian_check(ToaFactor(spec, RobustKernel::huber(3.0)), v, 1e-6);
    });
  }
  check("relative_pose", [&] {
    std::vector<Variable> v;
    v.emplace_back(VariableKind::Pose, pose_value(random_transform(rng, 2.0)), false);
    v.emplace_back(VariableKind::Pose, pose_value(random_transform(rng, 2.0)), false);
    return numeric_jacobian_check(RelativePoseFactor({0}, {1}, random_transform(rng, 2.0), Mat6::Identity()), v,
                                  1e-6);
  });
  for (VariableKind kind : {VariableKind::Pose, VariableKind::Transform}) {
    check(std::string("prior(") + std::string(to_string(kind)) + ")", [&, kind] {
      std::vector<Variable> v{Variable(kind, pose_value(random_transform(rng, 2.0)), false)};
      return numeric_jacobian_check(PriorFactor({0}, kind, pose_value(random_transform(rng, 2.0)), Mat6::Identity()),
                                    v, 1e-6);
    });
  }
  // Linear residuals: a wider step only trims roundoff.
  check("prior(station)", [&] {
    std::vector<Variable> v{Variable(VariableKind::StationPosition, vec_value(random_vec3(rng, 5.0)), false)};
    return numeric_jacobian_check(PriorFactor({0}, VariableKind::StationPosition, vec_value(random_vec3(rng, 5.0)),
                                              Eigen::Matrix3d::Identity()),
                                  v, 1e-4);
  });
  for (VariableKind kind : {VariableKind::Bias, VariableKind::Scale}) {
    check(std::string("prior(") + std::string(to_string(kind)) + ")", [&, kind] {
      std::vector<Variable> v{Variable(kind, scalar_value(bias(rng)), false)};
      return numeric_jacobian_check(PriorFactor({0}, kind, scalar_value(bias(rng)), Eigen::MatrixXd::Identity(1, 1)),
                                    v, 1e-4);
    });
  }

  const double t = clock.seconds();
  bool ok = t < 5.0;
  std::string detail;
  for (const auto& w : worst) {
    ok = ok && w.value < 1e-5;
    detail += fmt("%s %.1e; ", w.name.c_str(), w.value);
  }
  return {ok, detail + fmt("%.2f s (gate 1e-5, < 5 s)", t)};
}

// ---------------------------------------------------------------- 2

Outcome alignment_oracle() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> scale(0.2, 5.0);
  double se3_err = 0.0, sim3_err = 0.0;
  for (int k = 0; k < 20; ++k) {
    std::vector<Vec3> ref;
    for (int i = 0; i < 60; ++i) ref.push_back(random_vec3(rng, 4.0));
    const RigidTransform T = random_transform(rng, 5.0);
    const double s = scale(rng);
    // est = T^-1 applied to ref, so the recovered alignment must be T
    std::vector<Vec3> est_rigid, est_sim;
    for (const auto& p : ref) {
      est_rigid.push_back(T.inverse() * p);
      est_sim.push_back((T.inverse() * p) / s);
    }
    const RigidTransform a = align_se3(est_rigid, ref);
    se3_err = std::max(se3_err, (a.matrix() - T.matrix()).cwiseAbs().maxCoeff());
    const SimilarityTransform b = align_sim3(est_sim, ref);
    sim3_err = std::max({sim3_err, std::abs(b.scale - s), (b.rigid.matrix() - T.matrix()).cwiseAbs().maxCoeff()});
  }

  int ordered = 0;
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int k = 0; k < 50; ++k) {
    Trajectory ref, est;
    const RigidTransform T = random_transform(rng, 2.0);
    const double s = scale(rng);
    for (int i = 0; i < 80; ++i) {
      const double t = 0.1 * i;
      const Vec3 p(std::cos(0.3 * i) * 2.0, std::sin(0.2 * i) * 1.5, 0.05 * i);
      ref.push_back({t, RigidTransform::from_translation(p)});
      const Vec3 q = s * (T * p) + Vec3(noise(rng), noise(rng), noise(rng));
      est.push_back({t, RigidTransform::from_translation(q)});
    }
    const double none = ate_rmse(est, ref, Alignment::None).rmse;
    const double se3 = ate_rmse(est, ref, Alignment::SE3).rmse;
    const double sim3 = ate_rmse(est, ref, Alignment::Sim3).rmse;
    if (none >= se3 && se3 >= sim3 - 1e-12) ++ordered;
  }
  const bool ok = se3_err < 1e-9 && sim3_err < 1e-9 && ordered == 50;
  return {ok, fmt("SE3 recovery %.1e, Sim3 recovery %.1e (gate 1e-9); ordering %d/50", se3_err, sim3_err, ordered)};
}

// ---------------------------------------------------------------- 3

Outcome noise_statistics() {
  const Stopwatch clock;
  constexpr int kDraws = 10000;
  const Vec3 receiver(1.0, -0.5, 1.5);
  Trajectory still{{0.0, RigidTransform::from_translation(receiver)},
                   {(kDraws - 1) / 100.0, RigidTransform::from_translation(receiver)}};
  BaseStation bs;
  bs.id = 4;
  bs.position = Vec3(-6.5, -2.5, 2.0);
  bs.sigma = 0.1425;
  bs.bias = -0.0172;
  const auto toa = simulate_toa(still, {bs}, 100.0, 78);
  const double truth = (receiver - bs.position).norm();
  double sum = 0.0, sq = 0.0;
  for (const auto& m : toa) sum += m.range - truth;
  const double n = static_cast<double>(toa.size());
  const double mean = sum / n;
  for (const auto& m : toa) sq += (m.range - truth - mean) * (m.range - truth - mean);
  const double sd = std::sqrt(sq / (n - 1.0));
  const double t = clock.seconds();
  const bool ok = toa.size() == kDraws && std::abs(sd - 0.1425) <= 0.05 * 0.1425 && std::abs(mean + 0.0172) <= 0.005 &&
                  t < 1.0;
  return {ok, fmt("%zu draws: std %.4f m (0.1425 +-5%%), mean %.4f m (-0.0172 +-0.005), %.3f s", toa.size(), sd,
                  mean, t)};
}

// ---------------------------------------------------------------- 4

Outcome global_localization() {
  const Stopwatch clock;
  double sum = 0.0;
  std::string per_seed;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    ScenarioConfig c = preset_config("aerolab_78ghz");
    c.seed = static_cast<std::uint64_t>(seed);
    const auto r = run_experiment(c);
    const double g = r.report.global_ate.value_or(INFINITY);
    sum += g;
    per_seed += fmt("%.3f ", g);
  }
  const double mean = sum / kSeeds;
  const double t = clock.seconds();
  return {mean <= 0.30 && t < 120.0,
          fmt("global ATE per seed [ %s] mean %.3f m (gate 0.30), %.1f s (< 120 s)", per_seed.c_str(), mean, t)};
}

// ---------------------------------------------------------------- 5

Outcome monocular_scale() {
  double worst = 0.0;
  std::string detail;
  for (double k : {0.5, 2.0}) {
    detail += fmt("k=%.1f [ ", k);
    for (int seed = 1; seed <= kSeeds; ++seed) {
      ScenarioConfig c = preset_config("aerolab_78ghz");
      c.seed = static_cast<std::uint64_t>(seed);
      c.mode.sensor = SensorClass::Monocular;
      c.odometry.scale_drift = k;
      const auto r = run_experiment(c);
      const double e = std::abs(r.report.scale_error.value_or(INFINITY));
      worst = std::max(worst, e);
      detail += fmt("%.2f ", e);
    }
    detail += "] ";
  }
  return {worst <= 2.0, detail + fmt("%% scale error, worst %.2f%% (gate 2%%)", worst)};
}

// ---------------------------------------------------------------- 6

double improvement_over_no_toa(const ScenarioConfig& c) {
  const double with = local_error(run_experiment(c, true).report);
  const double without = local_error(run_experiment(c, false).report);
  return improvement_pct(without, with);
}

Outcome sequential_benefit() {
  double sum = 0.0;
  std::string per_seed;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    ScenarioConfig c = preset_config("sequential_3bs");
    c.seed = static_cast<std::uint64_t>(seed);
    const double imp = improvement_over_no_toa(c);
    sum += imp;
    per_seed += fmt("%.2f ", imp);
  }
  const double mean = sum / kSeeds;
  return {mean > 0.0, fmt("improvement per seed [ %s] mean %.2f%% (gate > 0)", per_seed.c_str(), mean)};
}

// ---------------------------------------------------------------- 7

Outcome loop_closure_alternative() {
  // Three Unknown stations, range-scaled odometry with accumulated white
  // noise as the drift source, loop closure off.
  double none = 0.0, seq = 0.0, cont = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    ScenarioConfig c = preset_config("aerolab_78ghz");
    c.seed = static_cast<std::uint64_t>(seed);
    c.stations.resize(3);
    c.mode = {SensorClass::RangeScaled, StationKnowledge::Unknown, false};
    none += local_error(run_experiment(c, false).report);
    cont += local_error(run_experiment(c, true).report);
    auto schedule = sequential_schedule();
    for (auto& s : c.stations) s.intervals = schedule[s.id];
    seq += local_error(run_experiment(c, true).report);
  }
  none /= kSeeds;
  seq /= kSeeds;
  cont /= kSeeds;
  const double imp = improvement_pct(none, cont);
  const bool ok = none > seq && seq >= cont && imp >= 10.0;
  return {ok, fmt("mean local ATE: no ToA %.4f, sequential %.4f, continuous %.4f m; continuous improvement %.1f%% "
                  "(gate >= 10%%)",
                  none, seq, cont, imp)};
}

// ---------------------------------------------------------------- 8

double dense_inverse_gdop(const Vec3& receiver, const std::vector<Vec3>& stations) {
  Eigen::MatrixXd G(stations.size(), 4);
  for (std::size_t i = 0; i < stations.size(); ++i) {
    const Vec3 u = (stations[i] - receiver).normalized();
    G.row(static_cast<Eigen::Index>(i)) << u.x(), u.y(), u.z(), 1.0;
  }
  const Eigen::Matrix4d N = G.transpose() * G;
  return std::sqrt(N.inverse().trace());
}

// Mean GDOP of the tetrahedral layout over the box-filling preset trajectory,
// frozen from the dense-inverse oracle.
constexpr double kTetrahedralMeanGdop = 2.2445450522374;

Outcome gdop_study() {
  const Stopwatch clock;
  const ScenarioConfig c = preset_config("tetrahedral");
  const Trajectory traj = build_scenario(c).ground_truth;
  std::vector<std::pair<double, std::string>> ranking;
  double oracle_gap = 0.0, tetra = 0.0, tetra_oracle = 0.0;
  for (const auto& name : gdop_layout_names()) {
    std::vector<Vec3> stations;
    for (const auto& s : station_layout(name)) stations.push_back(s.position);
    const GdopProfile p = gdop_profile(traj, stations);
    double oracle_sum = 0.0;
    for (const auto& s : traj) oracle_sum += dense_inverse_gdop(s.pose.translation(), stations);
    const double oracle_mean = oracle_sum / static_cast<double>(traj.size());
    oracle_gap = std::max(oracle_gap, std::abs(oracle_mean - p.mean) / oracle_mean);
    if (name == "tetrahedral") {
      tetra = p.mean;
      tetra_oracle = oracle_mean;
    }
    ranking.emplace_back(p.mean, name);
  }
  std::sort(ranking.begin(), ranking.end());
  std::string order;
  for (const auto& [m, n] : ranking) order += fmt("%s %.3f, ", n.c_str(), m);
  const double t = clock.seconds();
  const bool ok = ranking.front().second == "tetrahedral" && ranking.back().second == "clustered" &&
                  oracle_gap < 1e-9 && std::abs(tetra_oracle - kTetrahedralMeanGdop) < 1e-11 && t < 10.0;
  return {ok, fmt("ranking %stetrahedral %.13f (oracle %.13f, pinned %.13f), %.2f s (< 10 s)", order.c_str(), tetra,
                  tetra_oracle, kTetrahedralMeanGdop, t)};
}

// ---------------------------------------------------------------- 9

double worst_bias_error(bool noiseless, std::uint64_t seed) {
  ScenarioConfig c = preset_config("aerolab_78ghz");
  c.seed = seed;
  const NoiseEnvelope env = noise_envelope(FrequencyPreset::Ghz28);
  std::mt19937_64 rng(seed * 7919 + (noiseless ? 0 : 1));
  std::uniform_real_distribution<double> bias(env.bias_min, env.bias_max);
  for (auto& s : c.stations) {
    s.bias = bias(rng);
    if (noiseless) s.sigma = 0.0;
  }
  const auto r = run_experiment(c);
  double worst = 0.0;
  for (const auto& s : r.data.stations) {
    const auto it = r.estimate.biases.find(s.id);
    worst = std::max(worst, it == r.estimate.biases.end() ? INFINITY : std::abs(it->second - s.bias));
  }
  return worst;
}

Outcome bias_identifiability() {
  double exact = 0.0, noisy = 0.0;
  std::string exact_seeds, noisy_seeds;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const double e = worst_bias_error(true, static_cast<std::uint64_t>(seed));
    const double n = worst_bias_error(false, static_cast<std::uint64_t>(seed));
    exact = std::max(exact, e);
    noisy = std::max(noisy, n);
    exact_seeds += fmt("%.4f ", e);
    noisy_seeds += fmt("%.4f ", n);
  }
  return {exact <= 0.02 && noisy <= 0.05,
          fmt("worst station bias error per seed: noiseless [ %s] max %.4f m (gate 0.02), 78 GHz [ %s] max %.4f m "
              "(gate 0.05)",
              exact_seeds.c_str(), exact, noisy_seeds.c_str(), noisy)};
}

// ---------------------------------------------------------------- 10

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "toa-slam");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "toa_slam_acceptance_determinism";
  fs::remove_all(dir);
  int codes = cli({"simulate", "--config", "sequential_3bs", "--seed", "4", "--out", (dir / "sim").string()});
  const std::string manifest = (dir / "sim" / "manifest.json").string();
  codes += cli({"run", "--manifest", manifest, "--baseline", "--out", (dir / "a").string()});
  codes += cli({"run", "--manifest", manifest, "--baseline", "--out", (dir / "b").string()});
  int compared = 0, identical = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename();
    ++compared;
    if (fs::exists(dir / "b" / name) && read_text_file(entry.path()) == read_text_file(dir / "b" / name)) ++identical;
  }
  fs::remove_all(dir);
  return {codes == 0 && compared >= 5 && identical == compared,
          fmt("exit codes sum %d, %d/%d output files byte-identical", codes, identical, compared)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"jacobian suite", jacobian_suite},
      {"alignment oracle", alignment_oracle},
      {"78 GHz noise statistics", noise_statistics},
      {"global localization", global_localization},
      {"monocular scale recovery", monocular_scale},
      {"sequential-station benefit", sequential_benefit},
      {"loop-closure alternative", loop_closure_alternative},
      {"GDOP study", gdop_study},
      {"bias identifiability", bias_identifiability},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", number, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
