#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "swingcert/eac.hpp"
#include "swingcert/error.hpp"

using namespace swingcert;
using Catch::Approx;

TEST_CASE("SMIB equilibria") {
  auto e = eac::smib_equilibria(0.5, 1.0);
  CHECK(e.sep == Approx(oracle::pi / 6.0));
  CHECK(e.uep == Approx(5.0 * oracle::pi / 6.0));
  CHECK(eac::extended_boundary(0.0, 1.0) == Approx(oracle::pi));
  const double b = eac::extended_boundary(0.99, 1.0);
  CHECK(b == Approx(oracle::pi - std::asin(0.99)));
  CHECK(b > oracle::pi / 2.0);
  e = eac::smib_equilibria(1.0, 1.0);
  CHECK(e.sep == Approx(oracle::pi / 2.0));
  CHECK(e.uep == Approx(oracle::pi / 2.0));
  try {
    eac::smib_equilibria(1.2, 1.0);
    FAIL("expected no equilibrium");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::NoEquilibrium);
  }
}

TEST_CASE("default critical clearing angle") {
  const auto c = eac::critical_clearing_angle({});
  CHECK(c.status == eac::ClearingStatus::Bounded);
  CHECK(c.angle == Approx(1.3887).margin(1e-4));
  CHECK(c.angle == Approx(oracle::area_balance_angle(0.5, 1.0, 0.0, 1.0)).margin(1e-8));
  CHECK(c.delta_0 == Approx(oracle::pi / 6.0));
  CHECK(c.delta_max == Approx(5.0 * oracle::pi / 6.0));
}

TEST_CASE("closed form agrees with area balance on random cases") {
  oracle::Rng rng(77);
  int bounded = 0;
  for (int trial = 0; trial < 200; ++trial) {
    eac::SmibCase c;
    c.k_post = rng.uniform(0.5, 2.0);
    c.k_pre = c.k_post * rng.uniform(1.0, 1.5);
    c.k_fault = c.k_post * rng.uniform(0.0, 0.6);
    c.p_ref = std::min(c.k_pre, c.k_post) * rng.uniform(0.05, 0.9);
    const auto r = eac::critical_clearing_angle(c);
    INFO("trial " << trial);
    CHECK(r.delta_0 <= r.angle);
    CHECK(r.angle <= r.delta_max);
    CHECK(r.angle <= eac::extended_boundary(c.p_ref, c.k_post));
    if (r.status != eac::ClearingStatus::Bounded) continue;
    ++bounded;
    CHECK(r.angle == Approx(oracle::area_balance_angle(c.p_ref, c.k_pre, c.k_fault, c.k_post)).margin(1e-4));
  }
  CHECK(bounded > 100);
}

TEST_CASE("fault-on time") {
  eac::SmibCase c;
  const double d0 = std::asin(0.5);
  CHECK(eac::fault_on_time_to_angle(c, 1.3887) == Approx(oracle::parabola_time(0.5, 1.0, d0, 1.3887)));
  CHECK(eac::fault_on_time_to_angle(c, d0) == 0.0);
  // The numerical path converges to the parabola as k_fault vanishes.
  c.k_fault = 1e-12;
  CHECK(eac::fault_on_time_to_angle(c, 2.0) == Approx(oracle::parabola_time(0.5, 1.0, d0, 2.0)).epsilon(1e-6));
  // A strong fault-on coupling holds the machine below the target.
  c.k_fault = 0.9;
  CHECK(std::isinf(eac::fault_on_time_to_angle(c, 2.5)));
}

TEST_CASE("validation") {
  eac::SmibCase c;
  c.k_fault = 2.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.p_ref = -0.1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.k_post = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("plot dataset") {
  const std::string csv = eac::dataset_csv({}, 5);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "series,delta,power");
  int curves = 0;
  bool has_cr = false;
  while (std::getline(in, line)) {
    if (line.rfind("post_fault_curve,", 0) == 0) ++curves;
    if (line.rfind("delta_cr,", 0) == 0) {
      has_cr = true;
      CHECK(std::stod(line.substr(9)) == Approx(1.3887).margin(1e-4));
    }
  }
  CHECK(curves == 5);
  CHECK(has_cr);
  CHECK(csv.find("extended_boundary,2.61799388,") != std::string::npos);
}
