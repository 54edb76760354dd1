#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "oracles.hpp"
#include "swingcert/error.hpp"
#include "swingcert/netmodel.hpp"

using namespace swingcert;
using Catch::Approx;

namespace {

Bus machine(const std::string& id, double v = 1.0, double p = 0.0) {
  Bus b;
  b.id = id;
  b.kind = BusKind::Machine;
  b.voltage_mag = v;
  b.p_ref = p;
  b.inertia = 0.1;
  b.droop = 1.0;
  return b;
}

Bus passive(const std::string& id) {
  Bus b;
  b.id = id;
  b.kind = BusKind::Passive;
  return b;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Usage;
}

}  // namespace

TEST_CASE("two machines on one line give unit coupling") {
  std::vector<Bus> buses{machine("a"), machine("b")};
  std::vector<Branch> lines{{"l", "a", "b", 1.0}};
  const auto model = build_network(buses, lines);
  REQUIRE(model.size() == 2);
  CHECK(model.k()(0, 1) == 1.0);
  CHECK(model.k()(1, 0) == 1.0);
  CHECK(model.k()(0, 0) == 0.0);
}

TEST_CASE("a lone machine is accepted with an empty coupling") {
  std::vector<Bus> buses{machine("a")};
  const auto model = build_network(buses, {});
  REQUIRE(model.size() == 1);
  CHECK(model.k()(0, 0) == 0.0);
}

TEST_CASE("chain through a passive bus reduces to the series susceptance") {
  std::vector<Bus> buses{machine("a"), passive("h"), machine("b")};
  std::vector<Branch> lines{{"l1", "a", "h", 2.0}, {"l2", "h", "b", 2.0}};
  const auto model = build_network(buses, lines);
  CHECK(model.k()(0, 1) == Approx(1.0).epsilon(1e-14));

  const Topology t{buses, lines};
  const Matrix b = susceptance_matrix(t);
  const std::vector<std::size_t> keep{0, 2};
  const Matrix ref = oracle::sequential_kron(b, keep);
  const Matrix got = kron_reduce(b, keep);
  CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("star through a hub couples every pair equally") {
  std::vector<Bus> buses{machine("a"), machine("b"), machine("c"), passive("h")};
  std::vector<Branch> lines{{"1", "a", "h", 3.0}, {"2", "b", "h", 3.0}, {"3", "c", "h", 3.0}};
  const auto k = build_network(buses, lines).k();
  CHECK(k(0, 1) == Approx(1.0));
  CHECK(k(0, 2) == Approx(k(0, 1)).epsilon(1e-14));
  CHECK(k(1, 2) == Approx(k(0, 1)).epsilon(1e-14));
  CHECK(k == k.transpose());
}

TEST_CASE("kron_reduce with everything retained is the identity") {
  oracle::Rng rng(11);
  const Matrix k = oracle::random_connected_k(rng, 5);
  Matrix b = k;
  b.diagonal() = -k.rowwise().sum();
  const std::vector<std::size_t> all{0, 1, 2, 3, 4};
  CHECK(kron_reduce(b, all) == b);
}

TEST_CASE("kron_reduce matches node-by-node elimination on random networks") {
  oracle::Rng rng(20240601);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 3 + rng.index(6);  // 3..8
    const Matrix k = oracle::random_connected_k(rng, n);
    Matrix b = k;
    b.diagonal() = -k.rowwise().sum();
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
      if (i == 0 || rng.coin(0.5)) keep.push_back(i);
    const Matrix ref = oracle::sequential_kron(b, keep);
    const Matrix got = kron_reduce(b, keep);
    const double scale = ref.cwiseAbs().maxCoeff();
    INFO("trial " << trial << " n " << n);
    CHECK((got - ref).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, scale));
    CHECK(got == got.transpose());
    // Reducing a connected network never disconnects the retained nodes.
    Matrix kr = got;
    kr.diagonal().setZero();
    CHECK(coupling_components(kr).size() == 1);
  }
}

TEST_CASE("isolated passive island is reported") {
  Matrix b = Matrix::Zero(4, 4);
  b(0, 1) = b(1, 0) = 1.0;
  b(2, 3) = b(3, 2) = 1.0;
  b.diagonal() = -b.rowwise().sum();
  const std::vector<std::size_t> keep{0, 1};
  try {
    kron_reduce(b, keep);
    FAIL("expected a singular block");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Singular);
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
}

TEST_CASE("sync coefficients are voltage products") {
  Matrix b(2, 2);
  b << -2, 2, 2, -2;
  Vector v(2);
  v << 1.05, 0.95;
  const Matrix k = sync_coefficients(v, b);
  CHECK(k(0, 1) == Approx(1.995).epsilon(1e-14));
  CHECK(k(0, 0) == 0.0);
  b << 0, 0, 0, 0;
  CHECK(sync_coefficients(v, b)(0, 1) == 0.0);
  b << -1, -1, -1, -1;
  CHECK(kind_of([&] { sync_coefficients(v, b); }) == ErrorKind::Validation);
}

TEST_CASE("build_network validation") {
  SECTION("disconnected machines name the stray component") {
    std::vector<Bus> buses{machine("a"), machine("b"), machine("c")};
    std::vector<Branch> lines{{"l", "a", "b", 1.0}};
    try {
      build_network(buses, lines);
      FAIL("expected disconnection");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Disconnected);
      CHECK(std::string(e.what()).find("c") != std::string::npos);
    }
  }
  SECTION("bad droop") {
    std::vector<Bus> buses{machine("a"), machine("b")};
    buses[1].droop = -1.0;
    std::vector<Branch> lines{{"l", "a", "b", 1.0}};
    CHECK(kind_of([&] { build_network(buses, lines); }) == ErrorKind::Validation);
  }
  SECTION("undamped machine needs inertia") {
    std::vector<Bus> buses{machine("a"), machine("b")};
    buses[1].droop = 0.0;
    std::vector<Branch> lines{{"l", "a", "b", 1.0}};
    CHECK_NOTHROW(build_network(buses, lines));
    buses[1].inertia = 0.0;
    CHECK(kind_of([&] { build_network(buses, lines); }) == ErrorKind::Validation);
  }
  SECTION("bad susceptance") {
    std::vector<Bus> buses{machine("a"), machine("b")};
    std::vector<Branch> lines{{"l", "a", "b", -1.0}};
    CHECK(kind_of([&] { build_network(buses, lines); }) == ErrorKind::Validation);
  }
  SECTION("self loop") {
    std::vector<Bus> buses{machine("a"), machine("b")};
    std::vector<Branch> lines{{"l", "a", "a", 1.0}, {"m", "a", "b", 1.0}};
    CHECK(kind_of([&] { build_network(buses, lines); }) == ErrorKind::Validation);
  }
  SECTION("unknown endpoint") {
    std::vector<Bus> buses{machine("a"), machine("b")};
    std::vector<Branch> lines{{"l", "a", "z", 1.0}};
    CHECK(kind_of([&] { build_network(buses, lines); }) == ErrorKind::Validation);
  }
}

TEST_CASE("model invariants on direct K") {
  std::vector<Machine> ms(2);
  ms[0].id = "a";
  ms[1].id = "b";
  Matrix k(2, 2);
  k << 0, 1, 1, 0;
  CHECK_NOTHROW(NetworkModel(ms, k));
  Matrix asym = k;
  asym(0, 1) = 1.0 + 1e-15;
  CHECK(kind_of([&] { NetworkModel(ms, asym); }) == ErrorKind::Validation);
  Matrix diag = k;
  diag(0, 0) = 0.1;
  CHECK(kind_of([&] { NetworkModel(ms, diag); }) == ErrorKind::Validation);
  CHECK(kind_of([&] { NetworkModel(ms, Matrix::Zero(2, 2)); }) == ErrorKind::Disconnected);
  CHECK(kind_of([&] { NetworkModel(ms, Matrix::Zero(3, 3)); }) == ErrorKind::Dimension);
  ms[1].id = "a";
  CHECK(kind_of([&] { NetworkModel(ms, k); }) == ErrorKind::Validation);
}

TEST_CASE("faults by grounding and line removal") {
  std::vector<Bus> buses{machine("a"), machine("b"), machine("c"), passive("h")};
  std::vector<Branch> lines{{"1", "a", "h", 3.0}, {"2", "b", "h", 3.0}, {"3", "c", "h", 3.0},
                            {"ab", "a", "b", 1.0}};
  const Topology t{buses, lines};

  const std::string hub[] = {"h"};
  const Matrix grounded = derive_k(t, hub);
  CHECK(grounded(0, 2) == 0.0);
  CHECK(grounded(0, 1) == Approx(1.0));

  const std::string mach[] = {"b"};
  const Matrix gm = derive_k(t, mach);
  CHECK(gm.row(1).cwiseAbs().sum() == 0.0);
  CHECK(gm(0, 2) > 0.0);

  const std::string ab[] = {"ab"};
  const Matrix removed = derive_k(t, {}, ab);
  CHECK(removed(0, 1) == Approx(1.0));
  CHECK(removed(0, 1) == Approx(removed(0, 2)));
}

TEST_CASE("ground_node and scale_coupling") {
  Matrix k(3, 3);
  k << 0, 1, 2, 1, 0, 3, 2, 3, 0;
  const Matrix g = ground_node(k, 1);
  CHECK(g.row(1).sum() == 0.0);
  CHECK(g.col(1).sum() == 0.0);
  CHECK(g(0, 2) == 2.0);
  const Matrix s = scale_coupling(k, 0, 2, 0.25);
  CHECK(s(0, 2) == 0.5);
  CHECK(s(2, 0) == 0.5);
  CHECK(s(0, 1) == 1.0);
}

TEST_CASE("uniform time constant") {
  std::vector<Machine> ms(2);
  ms[0] = {"a", 0.3, 2.0, 0.1, 1.0, false};
  ms[1] = {"b", 0.5, 4.0, -0.1, 1.0, false};
  Matrix k(2, 2);
  k << 0, 1, 1, 0;
  const NetworkModel model(ms, k);
  const auto keep = with_uniform_tau(model, 0.25, true);
  CHECK(keep.machine(0).inertia == 0.5);
  CHECK(keep.machine(1).inertia == 1.0);
  CHECK(keep.machine(1).droop == 4.0);
  const auto scaled = with_uniform_tau(model, 10.0, true, 0.5);
  CHECK(scaled.machine(0).droop == 1.0);
  CHECK(scaled.machine(0).inertia == 10.0);
  const auto keep_j = with_uniform_tau(model, 0.1, false);
  CHECK(keep_j.machine(0).droop == Approx(3.0));
  CHECK(keep_j.machine(1).inertia == 0.5);
  CHECK(kind_of([&] { with_uniform_tau(model, 0.0); }) == ErrorKind::Validation);
}
