#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "swingcert/dynamics.hpp"
#include "swingcert/eac.hpp"
#include "swingcert/error.hpp"
#include "swingcert/lyapunov.hpp"

using namespace swingcert;
using Catch::Approx;

namespace {

struct Planted {
  NetworkModel model;
  EquilibriumPoint sep;
};

Planted planted_model(oracle::Rng& rng, std::size_t n, double spread = 1.0) {
  const Matrix k = oracle::random_connected_k(rng, n);
  const Vector theta = oracle::small_angles(rng, k, spread);
  const Vector p = oracle::injections_for(k, theta);
  std::vector<Machine> ms(n);
  for (std::size_t i = 0; i < n; ++i) {
    ms[i].id = "m" + std::to_string(i);
    ms[i].p_ref = p(static_cast<Eigen::Index>(i));
    ms[i].droop = rng.uniform(0.5, 2.0);
    ms[i].inertia = 0.05;
  }
  NetworkModel model(ms, k);
  auto sep = solve_equilibrium(model, k, theta);
  return {std::move(model), std::move(sep)};
}

// A state whose coupled differences all stay inside the UEP box.
Vector in_box_state(oracle::Rng& rng, const EquilibriumPoint& eq) {
  for (;;) {
    Vector t = eq.theta_star;
    for (Eigen::Index i = 1; i < t.size(); ++i) t(i) += rng.uniform(-2.0, 2.0);
    t(0) = 0.0;
    if (in_uep_box(t, eq).inside) return t;
  }
}

}  // namespace

TEST_CASE("H is the droop-weighted squared distance") {
  const auto model = eac::smib_model(0.5, 1.0, 1.0, 2.0);
  const auto sep = solve_equilibrium(model, model.k(), Vector::Zero(2));
  const Vector t = (Vector(2) << 1.0, 0.0).finished();
  const double dev = sep.theta_star(0) - 1.0;
  CHECK(lyapunov_value(t, sep, model) == Approx(0.5 * 2.0 * dev * dev));
  CHECK(certificate_energy(t, sep, model) == Approx(lyapunov_value(t, sep, model)));
  CHECK_THROWS_AS(lyapunov_value((Vector(2) << 1.0, 0.2).finished(), sep, model), Error);
}

TEST_CASE("rate is negative on the box and zero on shifts") {
  oracle::Rng rng(42);
  int checked = 0;
  for (int m = 0; m < 10; ++m) {
    const auto [model, sep] = planted_model(rng, 2 + rng.index(5));
    for (int s = 0; s < 50; ++s) {
      const Vector t = in_box_state(rng, sep);
      if ((t - sep.theta_star).cwiseAbs().maxCoeff() < 1e-6) continue;
      const auto forms = lyapunov_rate_forms(t, sep, model, sep.k);
      CHECK(forms.pairwise < 0.0);
      CHECK(std::abs(forms.pairwise - forms.direct) <= 1e-9 * std::max(1.0, std::abs(forms.pairwise)));
      ++checked;
    }
    const Vector shifted = (sep.theta_star.array() + rng.uniform(-3.0, 3.0)).matrix();
    CHECK(std::abs(lyapunov_rate(shifted, sep, model, sep.k)) < 1e-12);
  }
  CHECK(checked > 400);
}

TEST_CASE("rate flags a non-symmetric coupling") {
  oracle::Rng rng(43);
  const auto [model, sep] = planted_model(rng, 3);
  Matrix k = sep.k;
  const Vector t = in_box_state(rng, sep);
  k(0, 1) *= 1.5;
  CHECK_THROWS_AS(lyapunov_rate(t, sep, model, k), Error);
}

TEST_CASE("H descends along the inertia-free flow") {
  oracle::Rng rng(44);
  for (int trial = 0; trial < 8; ++trial) {
    const auto [model, sep] = planted_model(rng, 3 + rng.index(3));
    const Vector start = in_box_state(rng, sep);
    IntegratorConfig cfg;
    cfg.horizon = 3.0;
    const auto traj = integrate(model, {start, Vector::Zero(start.size()), 0.0}, {}, cfg, Mode::Reduced);
    const auto trace = certificate_trace(traj, sep, model, sep.k);
    REQUIRE(trace.size() == traj.size());
    for (std::size_t i = 1; i < trace.size(); ++i) {
      REQUIRE(trace[i].h_value <= trace[i - 1].h_value + 1e-9);
    }
    // Pinned-frame H agrees once the state is re-pinned.
    const Vector pin = pinned(traj.theta(0), 0);
    CHECK(lyapunov_value(pin, sep, model) >= 0.0);
  }
}

TEST_CASE("finite-difference rate along a trajectory") {
  oracle::Rng rng(45);
  const auto [model, sep] = planted_model(rng, 4);
  const Vector start = in_box_state(rng, sep);
  IntegratorConfig cfg;
  cfg.horizon = 0.5;
  cfg.step = 1e-5;
  const auto traj = integrate(model, {start, Vector::Zero(4), 0.0}, {}, cfg, Mode::Reduced);
  for (std::size_t i = 100; i + 1 < traj.size(); i += 9973) {
    const double h = traj.time(i + 1) - traj.time(i);
    const double fd = (certificate_energy(traj.theta(i + 1), sep, model) -
                       certificate_energy(traj.theta(i), sep, model)) / h;
    const double rate = lyapunov_rate(traj.theta(i), sep, model, sep.k);
    CHECK(fd == Approx(rate).margin(1e-4 * std::max(1.0, std::abs(rate))));
  }
}

TEST_CASE("box check") {
  const auto model = eac::smib_model(0.5, 1.0, 1.0, 1.0);
  const auto sep = solve_equilibrium(model, model.k(), Vector::Zero(2));
  const double uep = oracle::pi - sep.theta_star(0);
  auto box = in_uep_box((Vector(2) << uep - 0.01, 0.0).finished(), sep);
  CHECK(box.inside);
  CHECK(box.min_margin == Approx(0.01).margin(1e-12));
  CHECK(box.binding_pair == MachinePair{0, 1});
  box = in_uep_box((Vector(2) << uep + 0.01, 0.0).finished(), sep);
  CHECK_FALSE(box.inside);
  CHECK(box.min_margin < 0.0);
}

TEST_CASE("timescale ratio") {
  const auto model = eac::smib_model(0.5, 1.0, 0.02, 2.0);
  const auto sep = solve_equilibrium(model, model.k(), Vector::Zero(2));
  TrajectoryRecord traj(2, Mode::Full);
  traj.append(0.0, sep.theta_star, Vector::Zero(2));
  const auto r = timescale_ratio(model, traj, model.k());
  CHECK(r.tau_max == Approx(0.01));
  // Local exponent of the reduced system at the SEP: K cos(delta*) / D.
  CHECK(r.lambda == Approx(std::cos(sep.theta_star(0)) / 2.0));
  CHECK(r.ratio == Approx(r.tau_max * r.lambda));
  CHECK(r.separated);
  CHECK_FALSE(timescale_ratio(model, traj, model.k(), 1e-4).separated);
}
