#include "swingcert/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "swingcert/error.hpp"

namespace swingcert {

namespace {

bool finite(double x) { return std::isfinite(x); }

std::vector<std::vector<std::size_t>> components_of(
    std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (auto [a, b] : edges) {
    const auto ra = find(a);
    const auto rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(groups.size());
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

struct ReducedSusceptance {
  Matrix b;                          // over the kept (non-grounded) buses
  std::vector<std::size_t> bus_of;   // row -> topology bus index
};

void validate_topology(const Topology& t) {
  if (t.buses.empty()) throw Error(ErrorKind::Validation, "network has no buses");
  std::set<std::string> ids;
  std::size_t machines = 0;
  std::size_t infinite = 0;
  for (const auto& bus : t.buses) {
    if (bus.id.empty()) throw Error(ErrorKind::Validation, "bus with empty id");
    if (!ids.insert(bus.id).second) {
      throw Error(ErrorKind::Validation, fmt::format("duplicate bus id '{}'", bus.id));
    }
    if (!(bus.voltage_mag > 0.0) || !finite(bus.voltage_mag)) {
      throw Error(ErrorKind::Validation,
                  fmt::format("bus '{}': voltage_mag must be > 0", bus.id));
    }
    if (bus.kind == BusKind::Machine) {
      ++machines;
      if (!(bus.droop >= 0.0) || !finite(bus.droop) || (bus.droop == 0.0 && !(bus.inertia > 0.0))) {
        throw Error(ErrorKind::Validation,
                    fmt::format("machine '{}': droop must be > 0 (0 only with inertia > 0)", bus.id));
      }
      if (!(bus.inertia >= 0.0) || !finite(bus.inertia)) {
        throw Error(ErrorKind::Validation,
                    fmt::format("machine '{}': inertia must be >= 0", bus.id));
      }
      if (!finite(bus.p_ref)) {
        throw Error(ErrorKind::Validation,
                    fmt::format("machine '{}': p_ref must be finite", bus.id));
      }
    } else if (bus.kind == BusKind::Infinite) {
      ++infinite;
    }
  }
  if (machines == 0) throw Error(ErrorKind::Validation, "network has no machine bus");
  if (infinite > 1) throw Error(ErrorKind::Validation, "at most one infinite bus is supported");

  for (const auto& br : t.branches) {
    const auto name = br.id.empty() ? fmt::format("{}-{}", br.from, br.to) : br.id;
    if (!ids.contains(br.from) || !ids.contains(br.to)) {
      throw Error(ErrorKind::Validation,
                  fmt::format("branch '{}' references an unknown bus", name));
    }
    if (br.from == br.to) {
      throw Error(ErrorKind::Validation, fmt::format("branch '{}' is a self-loop", name));
    }
    if (!(br.susceptance > 0.0) || !finite(br.susceptance)) {
      throw Error(ErrorKind::Validation,
                  fmt::format("branch '{}': susceptance must be > 0", name));
    }
  }
}

ReducedSusceptance nodal_susceptance(const Topology& t,
                                     std::span<const std::string> grounded,
                                     std::span<const std::string> removed) {
  std::map<std::string, std::size_t> bus_index;
  for (std::size_t i = 0; i < t.buses.size(); ++i) bus_index[t.buses[i].id] = i;

  for (const auto& g : grounded) {
    if (!bus_index.contains(g)) {
      throw Error(ErrorKind::Validation, fmt::format("fault references unknown bus '{}'", g));
    }
  }
  std::set<std::string> removed_set(removed.begin(), removed.end());
  for (const auto& r : removed_set) {
    const bool known = std::any_of(t.branches.begin(), t.branches.end(),
                                   [&](const Branch& b) { return b.id == r; });
    if (!known) {
      throw Error(ErrorKind::Validation, fmt::format("unknown branch id '{}'", r));
    }
  }
  std::set<std::string> grounded_set(grounded.begin(), grounded.end());

  ReducedSusceptance out;
  std::vector<long> row_of(t.buses.size(), -1);
  for (std::size_t i = 0; i < t.buses.size(); ++i) {
    if (grounded_set.contains(t.buses[i].id)) continue;
    row_of[i] = static_cast<long>(out.bus_of.size());
    out.bus_of.push_back(i);
  }
  const auto n = out.bus_of.size();
  out.b = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& br : t.branches) {
    if (!br.id.empty() && removed_set.contains(br.id)) continue;
    const long a = row_of[bus_index.at(br.from)];
    const long b = row_of[bus_index.at(br.to)];
    if (a >= 0) out.b(a, a) -= br.susceptance;
    if (b >= 0) out.b(b, b) -= br.susceptance;
    if (a >= 0 && b >= 0) {
      out.b(a, b) += br.susceptance;
      out.b(b, a) += br.susceptance;
    }
  }
  return out;
}

bool is_dynamic(const Bus& b) { return b.kind != BusKind::Passive; }

}  // namespace

NetworkModel::NetworkModel(std::vector<Machine> machines, Matrix k)
    : machines_(std::move(machines)), k_(std::move(k)) {
  if (machines_.empty()) throw Error(ErrorKind::Validation, "model has no machines");
  if (static_cast<std::size_t>(k_.rows()) != machines_.size() ||
      static_cast<std::size_t>(k_.cols()) != machines_.size()) {
    throw Error(ErrorKind::Dimension,
                fmt::format("K is {}x{} but the model has {} machines", k_.rows(), k_.cols(),
                            machines_.size()));
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < machines_.size(); ++i) {
    const auto& m = machines_[i];
    if (m.id.empty()) throw Error(ErrorKind::Validation, fmt::format("machine {} has no id", i));
    if (!ids.insert(m.id).second) {
      throw Error(ErrorKind::Validation, fmt::format("duplicate machine id '{}'", m.id));
    }
    if (!(m.voltage > 0.0) || !finite(m.voltage)) {
      throw Error(ErrorKind::Validation, fmt::format("machine '{}': voltage must be > 0", m.id));
    }
    if (m.infinite) {
      if (infinite_) throw Error(ErrorKind::Validation, "at most one infinite bus is supported");
      infinite_ = i;
      continue;
    }
    if (!(m.droop >= 0.0) || !finite(m.droop) || (m.droop == 0.0 && !(m.inertia > 0.0))) {
      throw Error(ErrorKind::Validation,
                  fmt::format("machine '{}': droop must be > 0 (0 only with inertia > 0)", m.id));
    }
    if (!(m.inertia >= 0.0) || !finite(m.inertia)) {
      throw Error(ErrorKind::Validation,
                  fmt::format("machine '{}': inertia must be >= 0", m.id));
    }
    if (!finite(m.p_ref)) {
      throw Error(ErrorKind::Validation, fmt::format("machine '{}': p_ref must be finite", m.id));
    }
  }
  if (infinite_ && machines_.size() == 1) {
    throw Error(ErrorKind::Validation, "model consists of an infinite bus only");
  }
  validate_k(k_, true);
}

std::optional<std::size_t> NetworkModel::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < machines_.size(); ++i) {
    if (machines_[i].id == id) return i;
  }
  return std::nullopt;
}

std::size_t NetworkModel::require_index(const std::string& id) const {
  if (auto i = index_of(id)) return *i;
  throw Error(ErrorKind::Validation, fmt::format("unknown machine id '{}'", id));
}

Vector NetworkModel::inertia() const {
  Vector v(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) v(static_cast<Eigen::Index>(i)) = machines_[i].inertia;
  return v;
}

Vector NetworkModel::droop() const {
  Vector v(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) v(static_cast<Eigen::Index>(i)) = machines_[i].droop;
  return v;
}

Vector NetworkModel::p_ref() const {
  Vector v(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) v(static_cast<Eigen::Index>(i)) = machines_[i].p_ref;
  return v;
}

NetworkModel NetworkModel::with_machines(std::vector<Machine> machines) const {
  return NetworkModel(std::move(machines), k_);
}

NetworkModel NetworkModel::with_k(Matrix k) const { return NetworkModel(machines_, std::move(k)); }

Matrix susceptance_matrix(const Topology& topology, std::span<const std::string> grounded,
                          std::span<const std::string> removed_branches) {
  validate_topology(topology);
  return nodal_susceptance(topology, grounded, removed_branches).b;
}

Matrix kron_reduce(const Matrix& susceptance, std::span<const std::size_t> retained) {
  const auto n = static_cast<std::size_t>(susceptance.rows());
  if (susceptance.cols() != susceptance.rows()) {
    throw Error(ErrorKind::Dimension, "susceptance matrix is not square");
  }
  std::vector<bool> keep(n, false);
  for (auto r : retained) {
    if (r >= n) throw Error(ErrorKind::Dimension, fmt::format("retained index {} out of range", r));
    if (keep[r]) throw Error(ErrorKind::Validation, fmt::format("retained index {} repeated", r));
    keep[r] = true;
  }
  std::vector<std::size_t> elim;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) elim.push_back(i);
  }
  const auto nr = static_cast<Eigen::Index>(retained.size());
  const auto ne = static_cast<Eigen::Index>(elim.size());

  Matrix brr(nr, nr);
  for (Eigen::Index i = 0; i < nr; ++i) {
    for (Eigen::Index j = 0; j < nr; ++j) {
      brr(i, j) = susceptance(static_cast<Eigen::Index>(retained[static_cast<std::size_t>(i)]),
                              static_cast<Eigen::Index>(retained[static_cast<std::size_t>(j)]));
    }
  }
  if (ne == 0) return brr;

  // An eliminated island with neither a path to a retained node nor a shunt
  // makes the eliminated block singular.
  const double scale = std::max(1.0, susceptance.cwiseAbs().maxCoeff());
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t a = 0; a < elim.size(); ++a) {
    for (std::size_t b = a + 1; b < elim.size(); ++b) {
      if (susceptance(static_cast<Eigen::Index>(elim[a]), static_cast<Eigen::Index>(elim[b])) != 0.0) {
        edges.emplace_back(a, b);
      }
    }
  }
  for (const auto& comp : components_of(elim.size(), edges)) {
    bool anchored = false;
    for (auto local : comp) {
      const auto row = static_cast<Eigen::Index>(elim[local]);
      if (std::abs(susceptance.row(row).sum()) > 1e-12 * scale) anchored = true;
      for (auto r : retained) {
        if (susceptance(row, static_cast<Eigen::Index>(r)) != 0.0) anchored = true;
      }
    }
    if (!anchored) {
      std::vector<std::size_t> nodes;
      for (auto local : comp) nodes.push_back(elim[local]);
      throw Error(ErrorKind::Singular,
                  fmt::format("isolated passive nodes {} make the eliminated block singular",
                              nodes));
    }
  }

  Matrix bre(nr, ne);
  Matrix bee(ne, ne);
  for (Eigen::Index i = 0; i < ne; ++i) {
    const auto ei = static_cast<Eigen::Index>(elim[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < ne; ++j) {
      bee(i, j) = susceptance(ei, static_cast<Eigen::Index>(elim[static_cast<std::size_t>(j)]));
    }
    for (Eigen::Index r = 0; r < nr; ++r) {
      bre(r, i) = susceptance(static_cast<Eigen::Index>(retained[static_cast<std::size_t>(r)]), ei);
    }
  }
  Eigen::FullPivLU<Matrix> lu(bee);
  if (!lu.isInvertible()) {
    throw Error(ErrorKind::Singular, fmt::format("eliminated block over nodes {} is singular", elim));
  }
  Matrix reduced = brr - bre * lu.solve(bre.transpose());
  return (0.5 * (reduced + reduced.transpose())).eval();
}

Matrix sync_coefficients(const Vector& voltage_mags, const Matrix& reduced_susceptance) {
  const auto n = voltage_mags.size();
  if (reduced_susceptance.rows() != n || reduced_susceptance.cols() != n) {
    throw Error(ErrorKind::Dimension, "voltage vector and susceptance matrix sizes differ");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(voltage_mags(i) > 0.0) || !finite(voltage_mags(i))) {
      throw Error(ErrorKind::Validation, fmt::format("voltage magnitude {} must be > 0", i));
    }
  }
  const double scale = n > 0 ? std::max(1.0, reduced_susceptance.cwiseAbs().maxCoeff()) : 1.0;
  Matrix k = Matrix::Zero(n, n);
  for (Eigen::Index m = 0; m < n; ++m) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (m == j) continue;
      double b = reduced_susceptance(m, j);
      if (b < 0.0) {
        if (b < -1e-12 * scale) {
          throw Error(ErrorKind::Validation,
                      fmt::format("negative coupling susceptance {} between nodes {} and {}; "
                                  "the network is not lossless-inductive",
                                  b, m, j));
        }
        b = 0.0;
      }
      k(m, j) = voltage_mags(m) * voltage_mags(j) * b;
    }
  }
  Matrix sym = 0.5 * (k + k.transpose());
  sym.diagonal().setZero();
  return sym;
}

Matrix derive_k(const Topology& topology, std::span<const std::string> grounded,
                std::span<const std::string> removed_branches) {
  validate_topology(topology);
  const auto nodal = nodal_susceptance(topology, grounded, removed_branches);

  // Machine order follows bus order.
  std::vector<std::size_t> machine_bus;
  for (std::size_t i = 0; i < topology.buses.size(); ++i) {
    if (is_dynamic(topology.buses[i])) machine_bus.push_back(i);
  }
  std::vector<std::size_t> retained;
  std::vector<std::size_t> retained_machine;
  for (std::size_t row = 0; row < nodal.bus_of.size(); ++row) {
    const auto bus = nodal.bus_of[row];
    if (!is_dynamic(topology.buses[bus])) continue;
    retained.push_back(row);
    const auto pos = std::find(machine_bus.begin(), machine_bus.end(), bus) - machine_bus.begin();
    retained_machine.push_back(static_cast<std::size_t>(pos));
  }
  const Matrix reduced = kron_reduce(nodal.b, retained);
  Vector v(static_cast<Eigen::Index>(retained.size()));
  for (std::size_t i = 0; i < retained.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = topology.buses[nodal.bus_of[retained[i]]].voltage_mag;
  }
  const Matrix k_kept = sync_coefficients(v, reduced);

  const auto n = static_cast<Eigen::Index>(machine_bus.size());
  Matrix k = Matrix::Zero(n, n);
  for (std::size_t a = 0; a < retained_machine.size(); ++a) {
    for (std::size_t b = 0; b < retained_machine.size(); ++b) {
      k(static_cast<Eigen::Index>(retained_machine[a]), static_cast<Eigen::Index>(retained_machine[b])) =
          k_kept(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  return k;
}

NetworkModel build_network(std::span<const Bus> buses, std::span<const Branch> branches) {
  Topology t{{buses.begin(), buses.end()}, {branches.begin(), branches.end()}};
  validate_topology(t);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < t.buses.size(); ++i) index[t.buses[i].id] = i;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& br : t.branches) edges.emplace_back(index.at(br.from), index.at(br.to));
  const auto comps = components_of(t.buses.size(), edges);
  if (comps.size() > 1) {
    // Name the first component that does not hold bus 0.
    std::vector<std::string> names;
    for (auto i : comps[1]) names.push_back(t.buses[i].id);
    throw Error(ErrorKind::Disconnected,
                fmt::format("network is disconnected; component {{{}}} is not connected to bus '{}'",
                            fmt::join(names, ", "), t.buses[0].id));
  }

  std::vector<Machine> machines;
  for (const auto& bus : t.buses) {
    if (!is_dynamic(bus)) continue;
    Machine m;
    m.id = bus.id;
    m.voltage = bus.voltage_mag;
    if (bus.kind == BusKind::Infinite) {
      m.infinite = true;
      m.droop = 0.0;
    } else {
      m.inertia = bus.inertia;
      m.droop = bus.droop;
      m.p_ref = bus.p_ref;
    }
    machines.push_back(std::move(m));
  }
  return NetworkModel(std::move(machines), derive_k(t));
}

void validate_k(const Matrix& k, bool require_connected) {
  if (k.rows() != k.cols()) throw Error(ErrorKind::Dimension, "K is not square");
  const auto n = k.rows();
  for (Eigen::Index m = 0; m < n; ++m) {
    if (k(m, m) != 0.0) {
      throw Error(ErrorKind::Validation, fmt::format("K diagonal entry {} is not zero", m));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!finite(k(m, j))) {
        throw Error(ErrorKind::Validation, fmt::format("K({},{}) is not finite", m, j));
      }
      if (k(m, j) < 0.0) {
        throw Error(ErrorKind::Validation, fmt::format("K({},{}) is negative", m, j));
      }
      if (k(m, j) != k(j, m)) {
        throw Error(ErrorKind::Validation, fmt::format("K is not symmetric at ({},{})", m, j));
      }
    }
  }
  if (require_connected && n > 1) {
    const auto comps = coupling_components(k);
    if (comps.size() > 1) {
      throw Error(ErrorKind::Disconnected,
                  fmt::format("coupling graph is disconnected; component {} is isolated from node 0",
                              comps[1]));
    }
  }
}

std::vector<std::vector<std::size_t>> coupling_components(const Matrix& k) {
  const auto n = static_cast<std::size_t>(k.rows());
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t j = m + 1; j < n; ++j) {
      if (k(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) > 0.0) edges.emplace_back(m, j);
    }
  }
  return components_of(n, edges);
}

Matrix ground_node(const Matrix& k, std::size_t node) {
  if (node >= static_cast<std::size_t>(k.rows())) {
    throw Error(ErrorKind::Dimension, fmt::format("node {} out of range", node));
  }
  Matrix out = k;
  out.row(static_cast<Eigen::Index>(node)).setZero();
  out.col(static_cast<Eigen::Index>(node)).setZero();
  return out;
}

Matrix scale_coupling(const Matrix& k, std::size_t m, std::size_t n, double factor) {
  const auto size = static_cast<std::size_t>(k.rows());
  if (m >= size || n >= size) throw Error(ErrorKind::Dimension, "coupling index out of range");
  if (m == n) throw Error(ErrorKind::Validation, "cannot scale a self-coupling");
  if (!(factor >= 0.0) || !finite(factor)) {
    throw Error(ErrorKind::Validation, "coupling scale factor must be >= 0");
  }
  Matrix out = k;
  const double v = k(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) * factor;
  out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) = v;
  out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = v;
  return out;
}

NetworkModel with_uniform_tau(const NetworkModel& model, double tau, bool keep_droop,
                              double droop_scale) {
  if (!(tau > 0.0) || !finite(tau)) throw Error(ErrorKind::Validation, "tau must be > 0");
  if (!(droop_scale > 0.0) || !finite(droop_scale)) {
    throw Error(ErrorKind::Validation, "droop scale must be > 0");
  }
  auto machines = model.machines();
  for (auto& m : machines) {
    if (m.infinite) continue;
    if (keep_droop) {
      m.droop *= droop_scale;
      m.inertia = tau * m.droop;
    } else {
      if (!(m.inertia > 0.0)) {
        throw Error(ErrorKind::Validation,
                    fmt::format("machine '{}': keeping inertia requires J > 0", m.id));
      }
      m.droop = m.inertia / tau;
    }
  }
  return model.with_machines(std::move(machines));
}

}  // namespace swingcert
