#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "swingcert/dynamics.hpp"
#include "swingcert/error.hpp"

using namespace swingcert;
using Catch::Approx;

namespace {

NetworkModel make_model(const Matrix& k, const Vector& p, const Vector& d, const Vector& j) {
  std::vector<Machine> ms(static_cast<std::size_t>(k.rows()));
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    ms[i].id = "m" + std::to_string(i);
    ms[i].p_ref = p(e);
    ms[i].droop = d(e);
    ms[i].inertia = j(e);
  }
  return NetworkModel(ms, k);
}

NetworkModel random_model(oracle::Rng& rng, std::size_t n, double inertia = 0.1) {
  const Matrix k = oracle::random_connected_k(rng, n);
  const auto e = static_cast<Eigen::Index>(n);
  Vector p(e), d(e), j(e);
  for (Eigen::Index i = 0; i < e; ++i) {
    p(i) = rng.uniform(-0.5, 0.5);
    d(i) = rng.uniform(0.5, 2.0);
    j(i) = inertia;
  }
  return make_model(k, p, d, j);
}

double swing_energy(const NetworkModel& m, const Vector& theta, const Vector& omega) {
  double e = oracle::coupling_energy(m.k(), theta);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto a = static_cast<Eigen::Index>(i);
    e += 0.5 * m.machine(i).inertia * omega(a) * omega(a) - m.machine(i).p_ref * theta(a);
  }
  return e;
}

}  // namespace

TEST_CASE("right-hand sides on a two-machine pair") {
  Matrix k(2, 2);
  k << 0, 2, 2, 0;
  const auto model = make_model(k, (Vector(2) << 0.5, -0.5).finished(),
                                (Vector(2) << 1.0, 2.0).finished(), (Vector(2) << 0.5, 0.25).finished());
  SystemState s{(Vector(2) << 0.3, -0.1).finished(), (Vector(2) << 0.2, -0.4).finished(), 0.0};
  const double flow = 2.0 * std::sin(0.4);
  const auto d = full_rhs(s, model, k);
  CHECK(d.dtheta(0) == 0.2);
  CHECK(d.domega(0) == Approx((-1.0 * 0.2 + 0.5 - flow) / 0.5));
  CHECK(d.domega(1) == Approx((-2.0 * -0.4 - 0.5 + flow) / 0.25));
  const Vector r = reduced_rhs(s.theta, model, k);
  CHECK(r(0) == Approx(0.5 - flow));
  CHECK(r(1) == Approx((-0.5 + flow) / 2.0));
}

TEST_CASE("full dynamics refuse zero inertia") {
  Matrix k(2, 2);
  k << 0, 1, 1, 0;
  const auto model = make_model(k, Vector::Zero(2), Vector::Ones(2), Vector::Zero(2));
  SystemState s{Vector::Zero(2), Vector::Zero(2), 0.0};
  CHECK_THROWS_AS(full_rhs(s, model, k), Error);
  IntegratorConfig cfg;
  cfg.horizon = 0.1;
  CHECK_THROWS_AS(integrate(model, s, {}, cfg, Mode::Full), Error);
  CHECK_NOTHROW(integrate(model, s, {}, cfg, Mode::Reduced));
}

TEST_CASE("reduced Jacobian matches central differences") {
  oracle::Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.index(5);
    const auto model = random_model(rng, n);
    Vector theta(static_cast<Eigen::Index>(n));
    for (auto& x : theta) x = rng.uniform(-3.0, 3.0);
    const Matrix jac = reduced_jacobian(theta, model, model.k());
    const Matrix fd = oracle::central_jacobian(
        [&](const Vector& x) { return reduced_rhs(x, model, model.k()); }, theta, 1e-5);
    CHECK((jac - fd).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(jac.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("switch schedule ordering") {
  Matrix k(2, 2);
  k << 0, 1, 1, 0;
  SwitchSchedule s;
  s.add(1.0, k, "a");
  CHECK_THROWS_AS(s.add(1.0, k, "b"), Error);
  CHECK_THROWS_AS(s.add(0.5, k, "b"), Error);
  CHECK_THROWS_AS(s.add(2.0, Matrix::Zero(2, 2), "c", true), Error);
  CHECK_NOTHROW(s.add(2.0, Matrix::Zero(2, 2), "c"));
}

TEST_CASE("switch instants are sampled exactly") {
  oracle::Rng rng(3);
  const auto model = random_model(rng, 3);
  SwitchSchedule sched;
  sched.add(0.123456, ground_node(model.k(), 1), "fault");
  sched.add(0.3141, model.k(), "clear");
  IntegratorConfig cfg;
  cfg.horizon = 0.5;
  cfg.step = 1e-2;
  const auto traj = integrate(model, {Vector::Zero(3), Vector::Zero(3), 0.0}, sched, cfg, Mode::Full);
  REQUIRE(traj.events().size() == 2);
  CHECK(traj.events()[0].time == 0.123456);
  const auto& ts = traj.times();
  CHECK(std::find(ts.begin(), ts.end(), 0.123456) != ts.end());
  CHECK(std::find(ts.begin(), ts.end(), 0.3141) != ts.end());
  CHECK(ts.back() == 0.5);
  CHECK(std::is_sorted(ts.begin(), ts.end()));
  CHECK(traj.horizon() == 0.5);
}

TEST_CASE("reduced mode reports the algebraic frequency") {
  oracle::Rng rng(5);
  const auto model = random_model(rng, 4);
  IntegratorConfig cfg;
  cfg.horizon = 0.2;
  const auto traj = integrate(model, {Vector::Zero(4), Vector::Zero(4), 0.0}, {}, cfg, Mode::Reduced);
  for (std::size_t i = 0; i < traj.size(); i += 37) {
    const Vector rhs = reduced_rhs(traj.theta(i), model, model.k());
    CHECK((traj.omega(i) - rhs).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("RK4 self-convergence order") {
  oracle::Rng rng(9);
  const auto model = random_model(rng, 4, 0.2);
  SystemState init{(Vector(4) << 0.0, 0.4, -0.3, 0.8).finished(), Vector::Zero(4), 0.0};
  auto end_state = [&](double h) {
    IntegratorConfig cfg;
    cfg.horizon = 2.0;
    cfg.step = h;
    const auto traj = integrate(model, init, {}, cfg, Mode::Full);
    const auto s = traj.back();
    Vector y(8);
    y << s.theta, s.omega;
    return y;
  };
  const Vector a = end_state(0.02);
  const Vector b = end_state(0.01);
  const Vector c = end_state(0.005);
  const double order = std::log2((a - b).norm() / (b - c).norm());
  INFO("order " << order);
  CHECK(order >= 3.8);
}

TEST_CASE("undamped full dynamics conserve energy") {
  oracle::Rng rng(13);
  Matrix k = oracle::random_connected_k(rng, 4);
  Vector p(4);
  p << 0.3, -0.1, -0.4, 0.2;
  const auto model = make_model(k, p, Vector::Zero(4), (Vector(4) << 1.0, 0.8, 1.2, 0.6).finished());
  SystemState init{(Vector(4) << 0.0, 0.5, -0.5, 0.2).finished(), (Vector(4) << 0.1, -0.2, 0.0, 0.1).finished(), 0.0};
  IntegratorConfig cfg;
  cfg.horizon = 10.0;
  const auto traj = integrate(model, init, {}, cfg, Mode::Full);
  const double e0 = swing_energy(model, init.theta, init.omega);
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.size(); i += 100) {
    worst = std::max(worst, std::abs(swing_energy(model, traj.theta(i), traj.omega(i)) - e0));
  }
  CHECK(worst / std::abs(e0) < 1e-6);
  CHECK_THROWS_AS(integrate(model, init, {}, cfg, Mode::Reduced), Error);
}

TEST_CASE("adaptive and fixed steps agree") {
  oracle::Rng rng(17);
  const auto model = random_model(rng, 3, 0.05);
  SystemState init{(Vector(3) << 0.0, 0.6, -0.4).finished(), Vector::Zero(3), 0.0};
  SwitchSchedule sched;
  sched.add(0.2, ground_node(model.k(), 2), "fault");
  sched.add(0.35, model.k(), "clear");
  IntegratorConfig fixed;
  fixed.horizon = 2.0;
  IntegratorConfig adaptive = fixed;
  adaptive.adaptive = true;
  adaptive.step = 1e-3;
  const auto a = integrate(model, init, sched, fixed, Mode::Full).back();
  const auto b = integrate(model, init, sched, adaptive, Mode::Full).back();
  CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(b.time == 2.0);
}

TEST_CASE("blow-up marks the record diverged") {
  Matrix k(2, 2);
  k << 0, 1, 1, 0;
  const auto model = make_model(k, Vector::Zero(2), Vector::Ones(2), Vector::Constant(2, 1e-6));
  IntegratorConfig cfg;
  cfg.horizon = 5.0;
  cfg.step = 0.01;
  const auto traj = integrate(model, {Vector::Zero(2), (Vector(2) << 1.0, 0.0).finished(), 0.0}, {}, cfg, Mode::Full);
  CHECK(traj.diverged());
  CHECK(traj.back().theta.allFinite());
}

TEST_CASE("stop condition ends the run") {
  Matrix k(2, 2);
  k << 0, 1, 1, 0;
  const auto model = make_model(k, (Vector(2) << 2.0, -2.0).finished(), Vector::Ones(2), Vector::Constant(2, 0.1));
  IntegratorConfig cfg;
  cfg.horizon = 50.0;
  const auto traj = integrate(model, {Vector::Zero(2), Vector::Zero(2), 0.0}, {}, cfg, Mode::Full,
                              [](double, const Vector& th, const Vector&) { return th(0) - th(1) > 10.0; });
  CHECK(traj.stopped_early());
  CHECK(traj.times().back() < 50.0);
  CHECK(traj.back().theta(0) - traj.back().theta(1) > 10.0);
}

TEST_CASE("integration is deterministic") {
  oracle::Rng rng(21);
  const auto model = random_model(rng, 5);
  Vector th(5);
  th << 0, 0.3, -0.2, 0.1, 0.4;
  IntegratorConfig cfg;
  cfg.horizon = 1.0;
  const auto a = integrate(model, {th, Vector::Zero(5), 0.0}, {}, cfg, Mode::Full);
  const auto b = integrate(model, {th, Vector::Zero(5), 0.0}, {}, cfg, Mode::Full);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.theta(i) == b.theta(i));
}
