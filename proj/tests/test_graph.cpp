#include <algorithm>
#include <numbers>

#include "doctest.h"
#include "test_support.hpp"
#include "toa_slam/errors.hpp"
#include "toa_slam/factors.hpp"
#include "toa_slam/graph.hpp"

using namespace toa_slam;
using namespace toa_slam::testing;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected toa_slam::Error");
  return ErrorCode::InvalidArgument;
}

// Closed-form intersection of three spheres; returns both mirror solutions.
std::pair<Vec3, Vec3> trilaterate(const std::array<Vec3, 3>& c, const std::array<double, 3>& r) {
  const Vec3 ex = (c[1] - c[0]).normalized();
  const double i = ex.dot(c[2] - c[0]);
  const Vec3 ey = (c[2] - c[0] - i * ex).normalized();
  const Vec3 ez = ex.cross(ey);
  const double d = (c[1] - c[0]).norm();
  const double j = ey.dot(c[2] - c[0]);
  const double x = (r[0] * r[0] - r[1] * r[1] + d * d) / (2 * d);
  const double y = (r[0] * r[0] - r[2] * r[2] + i * i + j * j) / (2 * j) - i * x / j;
  const double z = std::sqrt(std::max(0.0, r[0] * r[0] - x * x - y * y));
  const Vec3 base = c[0] + x * ex + y * ey;
  return {base + z * ez, base - z * ez};
}

struct RangeFixture {
  FactorGraph graph;
  VariableId transform;
  VariableId bias;
  VariableId station;
  std::vector<VariableId> poses;
  std::vector<FactorId> factors;

  RangeFixture(const Vec3& station_guess, bool station_fixed = false) {
    transform = graph.add_transform(RigidTransform::identity(), true);
    bias = graph.add_bias(0.0, true);
    station = graph.add_station(station_guess, station_fixed);
  }

  FactorId add_range(const Vec3& position, double range, RobustKernel kernel = RobustKernel::none(),
                     double sigma = 0.1) {
    poses.push_back(graph.add_pose(RigidTransform::from_translation(position), true));
    ToaFactorSpec spec{poses.back(), transform, bias, std::nullopt, station, range, 1.0 / (sigma * sigma)};
    factors.push_back(graph.add_factor(std::make_unique<ToaFactor>(spec, kernel)));
    return factors.back();
  }
};

}  // namespace

TEST_CASE("add_variable reads back and validates") {
  FactorGraph g;
  const auto s = g.add_scale(1.0);
  CHECK(g.variable(s).scale() == 1.0);
  CHECK(code_of([&] { g.add_scale(-1.0); }) == ErrorCode::InvalidInitialValue);
  CHECK(code_of([&] { g.add_scale(0.0); }) == ErrorCode::InvalidInitialValue);
  CHECK(code_of([&] { g.add_station(Vec3(NAN, 0, 0)); }) == ErrorCode::InvalidInitialValue);

  const auto p = g.add_pose(RigidTransform::identity());
  CHECK(code_of([&] { g.optimize(); }) == ErrorCode::NoFreeVariables);
  CHECK(g.variable(p).se3().translation().norm() == 0.0);
  CHECK(rotation_angle(g.variable(p).se3().rotation()) == 0.0);
}

TEST_CASE("station trilateration matches closed-form oracle") {
  const Vec3 truth(1.2, -0.7, 2.5);
  const std::array<Vec3, 3> centers{Vec3(0, 0, 0), Vec3(3, 0, 0.2), Vec3(0.5, 2.5, -0.3)};
  std::array<double, 3> ranges{};
  for (int i = 0; i < 3; ++i) ranges[i] = (truth - centers[i]).norm();
  const auto [a, b] = trilaterate(centers, ranges);
  const Vec3 oracle = (a - truth).norm() < (b - truth).norm() ? a : b;
  REQUIRE((oracle - truth).norm() < 1e-9);

  RangeFixture fx(oracle + Vec3(0.4, -0.3, 0.5));
  for (int i = 0; i < 3; ++i) fx.add_range(centers[i], ranges[i]);
  const auto report = fx.graph.optimize();
  CHECK((fx.graph.variable(fx.station).point() - oracle).norm() < 1e-6);
  CHECK(report.final_cost <= report.initial_cost);
}

TEST_CASE("consistent graph converges immediately") {
  RangeFixture fx(Vec3(1, 1, 1));
  fx.add_range(Vec3(0, 0, 0), std::sqrt(3.0));
  fx.add_range(Vec3(2, 0, 0), std::sqrt(3.0));
  fx.add_range(Vec3(0, 3, 0), std::sqrt(1 + 4 + 1.0));
  const auto report = fx.graph.optimize();
  CHECK(report.iterations <= 1);
  CHECK(report.final_cost == doctest::Approx(0.0));
}

TEST_CASE("huber kernel limits the pull of an outlier") {
  const Vec3 truth(0.5, 0.2, 2.0);
  const std::vector<Vec3> centers{Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 3, 0),
                                  Vec3(3, 3, 0.5), Vec3(-2, 1, 0.2), Vec3(1, -2, 4)};
  auto solve = [&](RobustKernel kernel) {
    RangeFixture fx(truth + Vec3(0.1, 0.1, 0.1));
    for (std::size_t i = 0; i < centers.size(); ++i) {
      double r = (truth - centers[i]).norm();
      if (i == 2) r += 100.0;
      fx.add_range(centers[i], r, kernel, 0.05);
    }
    fx.graph.optimize();
    return (fx.graph.variable(fx.station).point() - truth).norm();
  };
  const double pull_plain = solve(RobustKernel::none());
  const double pull_huber = solve(RobustKernel::huber(1.0));
  CHECK(pull_plain > 1.0);
  CHECK(pull_huber < 0.01 * pull_plain);
}

TEST_CASE("accepted steps never increase the cost") {
  std::mt19937_64 rng(5);
  const Vec3 truth(1.0, 2.0, 3.0);
  std::normal_distribution<double> noise(0.0, 0.2);
  RangeFixture fx(Vec3(-3, 4, 0));
  for (int i = 0; i < 12; ++i) {
    const Vec3 c = random_vec3(rng, 4.0);
    fx.add_range(c, (truth - c).norm() + noise(rng), RobustKernel::huber(2.0), 0.2);
  }
  double previous = fx.graph.cost();
  const Vec3 start = fx.graph.variable(fx.station).point();
  for (int iters = 1; iters <= 15; ++iters) {
    fx.graph.variable(fx.station).set_value({{}, start, 0.0});
    OptimizeSettings s;
    s.max_iterations = iters;
    const auto report = fx.graph.optimize(s);
    CHECK(report.final_cost <= report.initial_cost);
    CHECK(report.final_cost <= previous + 1e-12);
    previous = report.final_cost;
  }
}

TEST_CASE("single prior pins a free pose to its mean") {
  std::mt19937_64 rng(7);
  FactorGraph g;
  const auto other = g.add_pose(random_transform(rng), true);
  const auto pose = g.add_pose(random_transform(rng));
  const RigidTransform mean = random_transform(rng);
  g.add_factor(std::make_unique<PriorFactor>(pose, VariableKind::Pose, VariableValue{mean, Vec3::Zero(), 0.0},
                                             Eigen::MatrixXd(Mat6::Identity() * 100.0)));
  const RigidTransform before_other = g.variable(other).se3();
  g.optimize();
  const RigidTransform got = g.variable(pose).se3();
  CHECK(rotation_angle(got.rotation().conjugate() * mean.rotation()) < 1e-9);
  CHECK((got.translation() - mean.translation()).norm() < 1e-9);
  CHECK(g.variable(other).se3().translation() == before_other.translation());
}

namespace {

// Small noisy pose chain with a loop closure; factor order controlled by `order`.
double chain_cost(const std::vector<int>& order) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 0.02);
  FactorGraph g;
  std::vector<RigidTransform> truth;
  std::vector<VariableId> ids;
  for (int i = 0; i < 8; ++i) {
    truth.push_back(se3_exp({Vec3(0, 0, 0.3 * i), Vec3(std::cos(0.8 * i), std::sin(0.8 * i), 0.1 * i)}));
    ids.push_back(g.add_pose(truth.back(), i == 0));
  }
  std::vector<std::unique_ptr<Factor>> factors;
  auto noisy = [&](const RigidTransform& T) {
    return T * se3_exp({Vec3(n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng))});
  };
  for (int i = 0; i + 1 < 8; ++i) {
    factors.push_back(std::make_unique<RelativePoseFactor>(ids[i], ids[i + 1],
                                                           noisy(truth[i].inverse() * truth[i + 1]),
                                                           Mat6::Identity() * 100.0));
  }
  factors.push_back(std::make_unique<RelativePoseFactor>(ids[0], ids[7], noisy(truth[0].inverse() * truth[7]),
                                                         Mat6::Identity() * 100.0, RelativePoseRole::LoopClosure));
  for (int k : order) g.add_factor(std::move(factors[k]));
  return g.optimize().final_cost;
}

}  // namespace

TEST_CASE("factor insertion order does not change the converged cost") {
  std::vector<int> order{0, 1, 2, 3, 4, 5, 6, 7};
  const double base = chain_cost(order);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(order.begin(), order.end(), rng);
    CHECK(std::abs(chain_cost(order) - base) < 1e-9);
  }
}

TEST_CASE("dense and sparse solvers agree") {
  auto run = [](std::size_t threshold) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 0.05);
    FactorGraph g;
    std::vector<VariableId> ids;
    for (int i = 0; i < 30; ++i) ids.push_back(g.add_pose(RigidTransform::from_translation({0.1 * i, 0, 0}), i == 0));
    for (int i = 0; i + 1 < 30; ++i) {
      const RigidTransform m = se3_exp({Vec3(n(rng), n(rng), 0.05), Vec3(0.3 + n(rng), n(rng), n(rng))});
      g.add_factor(std::make_unique<RelativePoseFactor>(ids[i], ids[i + 1], m, Mat6::Identity()));
    }
    OptimizeSettings s;
    s.dense_threshold = threshold;
    g.optimize(s);
    return g.variable(ids.back()).se3().translation();
  };
  CHECK((run(1000) - run(0)).norm() < 1e-8);
}

TEST_CASE("log-parameterized scale stays positive") {
  FactorGraph g;
  const auto s = g.add_scale(1.0);
  const auto tr = g.add_transform(RigidTransform::identity(), true);
  const auto b = g.add_bias(0.0, true);
  const auto st = g.add_station(Vec3::Zero(), true);
  // ranges demand a scale of 0.01
  for (int i = 1; i <= 5; ++i) {
    const auto p = g.add_pose(RigidTransform::from_translation({1.0 * i, 0.5, 0}), true);
    const double d = 0.01 * Vec3(1.0 * i, 0.5, 0).norm();
    g.add_factor(std::make_unique<ToaFactor>(ToaFactorSpec{p, tr, b, s, st, d, 1e4}));
  }
  g.optimize();
  CHECK(g.variable(s).scale() > 0.0);
  CHECK(g.variable(s).scale() == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("biases are identifiable from well-distributed stations") {
  std::mt19937_64 rng(3);
  const std::vector<Vec3> stations{Vec3(2.5, -2.5, 4.5), Vec3(2.5, 2.5, 4.0), Vec3(-2.5, 2.5, 5.0),
                                   Vec3(-6.5, -2.5, 2.0)};
  const std::vector<double> biases{0.042, -0.0121, 0.0419, 0.0828};
  FactorGraph g;
  const RigidTransform T_true = se3_exp({Vec3(0.1, -0.05, 0.4), Vec3(0.3, -0.2, 0.1)});
  const auto tr = g.add_transform(RigidTransform::identity());
  std::vector<VariableId> b_ids;
  std::vector<VariableId> s_ids;
  for (const auto& s : stations) {
    b_ids.push_back(g.add_bias(0.0));
    s_ids.push_back(g.add_station(s, true));
  }
  for (int i = 0; i < 30; ++i) {
    const Vec3 p(2.0 * std::cos(0.4 * i), 1.5 * std::sin(0.7 * i), 1.0 + 0.8 * std::sin(0.3 * i));
    const auto pose = g.add_pose(RigidTransform::from_translation(p), true);
    for (std::size_t k = 0; k < stations.size(); ++k) {
      const double d = (T_true * p - stations[k]).norm() + biases[k];
      g.add_factor(std::make_unique<ToaFactor>(ToaFactorSpec{pose, tr, b_ids[k], std::nullopt, s_ids[k], d, 100.0}));
    }
  }
  g.optimize();
  for (std::size_t k = 0; k < stations.size(); ++k) {
    CHECK(std::abs(g.variable(b_ids[k]).bias() - biases[k]) < 1e-6);
  }
}

TEST_CASE("marginal information update") {
  FactorGraph g;
  const auto tr = g.add_transform(RigidTransform::identity());
  const auto b = g.add_bias(0.0, true);
  const auto lonely = g.add_bias(0.5);
  CHECK(code_of([&] { g.update_marginal_information(std::vector<VariableId>{tr}); }) ==
        ErrorCode::NeverOptimized);
  const std::vector<Vec3> stations{Vec3(2.5, -2.5, 4.5), Vec3(2.5, 2.5, 4.0), Vec3(-2.5, 2.5, 5.0),
                                   Vec3(-6.5, -2.5, 2.0), Vec3(0, 0, 6)};
  std::vector<VariableId> st;
  for (const auto& s : stations) st.push_back(g.add_station(s, true));
  for (int i = 0; i < 10; ++i) {
    const Vec3 p(std::cos(0.6 * i), std::sin(0.6 * i), 1.0 + 0.1 * i);
    const auto pose = g.add_pose(RigidTransform::from_translation(p), true);
    for (std::size_t k = 0; k < stations.size(); ++k) {
      g.add_factor(std::make_unique<ToaFactor>(
          ToaFactorSpec{pose, tr, b, std::nullopt, st[k], (p - stations[k]).norm(), 1.0 / 0.0225}));
    }
  }
  const double trace_before = g.variable(tr).prior_information().trace();
  const Eigen::MatrixXd lonely_before = g.variable(lonely).prior_information();
  g.optimize({}, {.free_variables = std::vector<VariableId>{tr}});
  const std::vector<VariableId> ids{tr, lonely};
  g.update_marginal_information(ids);
  const Eigen::MatrixXd once = g.variable(tr).prior_information();
  CHECK(once.trace() > trace_before);
  CHECK((once - once.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(g.variable(lonely).prior_information() == lonely_before);
  g.update_marginal_information(ids);
  CHECK((g.variable(tr).prior_information() - once).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("numeric_jacobian_check rejects bad epsilon") {
  std::vector<Variable> v{Variable(VariableKind::Bias, {}, false)};
  const PriorFactor p({0}, VariableKind::Bias, {}, Eigen::MatrixXd::Identity(1, 1));
  CHECK(code_of([&] { numeric_jacobian_check(p, v, 1e-2); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { numeric_jacobian_check(p, v, 1e-11); }) == ErrorCode::InvalidArgument);
}
