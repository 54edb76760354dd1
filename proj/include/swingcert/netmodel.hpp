#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace swingcert {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class BusKind {
  Machine,   // grid-forming inverter with droop D, inertia J, reference P*
  Passive,   // load/junction bus, eliminated by Kron reduction
  Infinite,  // stiff grid: fixed angle, zero frequency deviation
};

struct Bus {
  std::string id;
  BusKind kind = BusKind::Machine;
  double voltage_mag = 1.0;  // p.u.
  double p_ref = 0.0;        // p.u.
  double inertia = 0.0;      // p.u. power per rad/s^2
  double droop = 0.0;        // p.u. power per rad/s
};

/// Lossless inductive line.
struct Branch {
  std::string id;
  std::string from;
  std::string to;
  double susceptance = 0.0;  // p.u., > 0
};

/// A dynamic node of the swing model. The infinite bus is carried as a node
/// with a fixed angle; its inertia and droop are unused.
struct Machine {
  std::string id;
  double inertia = 0.0;
  double droop = 1.0;
  double p_ref = 0.0;
  double voltage = 1.0;
  bool infinite = false;
};

/// Machine parameters plus the synchronisation-coefficient matrix K.
///
/// K is square, symmetric (exactly), nonnegative with zero diagonal, and its
/// coupling graph is connected. The model is immutable once constructed.
class NetworkModel {
 public:
  NetworkModel(std::vector<Machine> machines, Matrix k);

  std::size_t size() const noexcept { return machines_.size(); }
  const std::vector<Machine>& machines() const noexcept { return machines_; }
  const Machine& machine(std::size_t i) const { return machines_.at(i); }
  const Matrix& k() const noexcept { return k_; }

  std::optional<std::size_t> infinite_bus() const noexcept { return infinite_; }
  std::optional<std::size_t> index_of(const std::string& id) const;
  std::size_t require_index(const std::string& id) const;

  Vector inertia() const;
  Vector droop() const;
  Vector p_ref() const;

  /// Same machines, different parameters. Validation is re-run.
  NetworkModel with_machines(std::vector<Machine> machines) const;
  NetworkModel with_k(Matrix k) const;

 private:
  std::vector<Machine> machines_;
  Matrix k_;
  std::optional<std::size_t> infinite_;
};

/// Bus/branch description kept alongside a model so faults can be expressed
/// as grounded buses or removed lines and re-reduced.
struct Topology {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
};

/// Nodal susceptance matrix Im(Y) of a lossless network: off-diagonal
/// entries +b, diagonal -sum(b). Grounded buses are dropped, which turns
/// their incident lines into shunts on the neighbouring buses.
Matrix susceptance_matrix(const Topology& topology,
                          std::span<const std::string> grounded = {},
                          std::span<const std::string> removed_branches = {});

/// Schur complement of the eliminated block onto the retained indices, in
/// the order given by `retained`.
Matrix kron_reduce(const Matrix& susceptance, std::span<const std::size_t> retained);

/// K_mn = V_m V_n B_mn off the diagonal; zero diagonal.
Matrix sync_coefficients(const Vector& voltage_mags, const Matrix& reduced_susceptance);

NetworkModel build_network(std::span<const Bus> buses, std::span<const Branch> branches);
inline NetworkModel build_network(const Topology& t) { return build_network(t.buses, t.branches); }

/// K among the machines of `topology` with the given buses grounded (bolted
/// three-phase fault) and branches removed. A grounded machine keeps its row
/// in K with all couplings zero. The result may be disconnected.
Matrix derive_k(const Topology& topology,
                std::span<const std::string> grounded = {},
                std::span<const std::string> removed_branches = {});

/// Checks the K invariants. Connectivity is only enforced when asked; fault
/// segments are allowed to split the graph.
void validate_k(const Matrix& k, bool require_connected);

/// Connected components of the coupling graph (nonzero off-diagonal entries).
std::vector<std::vector<std::size_t>> coupling_components(const Matrix& k);

/// Zeroes every coupling of one node (bolted fault at its terminal).
Matrix ground_node(const Matrix& k, std::size_t node);

/// Scales the coupling between two nodes; factor 0 removes it.
Matrix scale_coupling(const Matrix& k, std::size_t m, std::size_t n, double factor);

/// Uniform time constant: J_m = tau * D_m, after scaling every droop by
/// droop_scale. With keep_droop false the inertia is kept and D_m = J_m / tau.
NetworkModel with_uniform_tau(const NetworkModel& model, double tau,
                              bool keep_droop = true, double droop_scale = 1.0);

}  // namespace swingcert
