#include "swingcert/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <unistd.h>

#include "swingcert/error.hpp"

namespace swingcert {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";  // folds -0
  return fmt::format("{:.9g}", x);
}

}  // namespace swingcert

namespace swingcert::io {

namespace {

using json = nlohmann::ordered_json;
using Index = Eigen::Index;

[[noreturn]] void schema_error(const std::string& source, const std::string& where,
                               const std::string& what) {
  throw Error(ErrorKind::Schema, fmt::format("{}: {}: {}", source, where, what));
}

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::Schema,
                fmt::format("{}: line {}, column {}: malformed JSON", source, line, col));
  }
}

// Field access with the document path carried along for messages.
class Node {
 public:
  Node(const json& j, std::string path, const std::string& source)
      : j_(j), path_(std::move(path)), source_(source) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return j_; }

  void expect_object() const {
    if (!j_.is_object()) schema_error(source_, path_, "expected an object");
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    expect_object();
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) schema_error(source_, path_, fmt::format("unknown field '{}'", it.key()));
    }
  }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  Node at(const char* key) const {
    if (!has(key)) schema_error(source_, path_, fmt::format("missing required field '{}'", key));
    return child(key);
  }

  Node child(const char* key) const {
    return Node(j_.at(key), path_.empty() ? key : path_ + "." + key, source_);
  }

  std::vector<Node> items() const {
    if (!j_.is_array()) schema_error(source_, path_, "expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_.size(); ++i) {
      out.emplace_back(j_[i], fmt::format("{}[{}]", path_, i), source_);
    }
    return out;
  }

  double number() const {
    if (!j_.is_number()) schema_error(source_, path_, "expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) schema_error(source_, path_, "expected a finite number");
    return v;
  }

  std::string string() const {
    if (!j_.is_string()) schema_error(source_, path_, "expected a string");
    return j_.get<std::string>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) schema_error(source_, path_, "expected true or false");
    return j_.get<bool>();
  }

  double number_or(const char* key, double fallback) const {
    return has(key) ? child(key).number() : fallback;
  }

  Matrix matrix() const {
    const auto rows = items();
    const auto n = static_cast<Index>(rows.size());
    Matrix m(n, n);
    for (Index r = 0; r < n; ++r) {
      const auto cols = rows[static_cast<std::size_t>(r)].items();
      if (static_cast<Index>(cols.size()) != n) {
        schema_error(source_, rows[static_cast<std::size_t>(r)].path(),
                     fmt::format("expected {} entries", n));
      }
      for (Index c = 0; c < n; ++c) m(r, c) = cols[static_cast<std::size_t>(c)].number();
    }
    return m;
  }

  [[noreturn]] void fail(const std::string& what) const { schema_error(source_, path_, what); }

 private:
  const json& j_;
  std::string path_;
  const std::string& source_;
};

std::string label_of(const Node& item) {
  return item.has("id") && item.raw().at("id").is_string() ? item.raw().at("id").get<std::string>()
                                                           : item.path();
}

// Machine fields shared by both document forms.
void read_machine_fields(const Node& item, bool infinite, double& p_ref, double& inertia,
                         double& droop) {
  if (infinite) {
    for (const char* k : {"p_ref", "inertia", "droop"}) {
      if (item.has(k)) item.fail(fmt::format("infinite bus '{}' takes no '{}'", label_of(item), k));
    }
    return;
  }
  if (!item.has("droop")) {
    item.fail(fmt::format("machine '{}' is missing required field 'droop'", label_of(item)));
  }
  if (!item.has("p_ref")) {
    item.fail(fmt::format("machine '{}' is missing required field 'p_ref'", label_of(item)));
  }
  droop = item.child("droop").number();
  p_ref = item.child("p_ref").number();
  inertia = item.number_or("inertia", 0.0);
}

BusKind bus_kind(const Node& n) {
  const auto s = n.string();
  if (s == "machine") return BusKind::Machine;
  if (s == "passive") return BusKind::Passive;
  if (s == "infinite") return BusKind::Infinite;
  n.fail(fmt::format("unknown bus kind '{}' (machine, passive, infinite)", s));
}

NetworkDocument parse_bus_form(const Node& root) {
  Topology topo;
  for (const auto& item : root.at("buses").items()) {
    item.allow_only({"id", "kind", "voltage_mag", "p_ref", "inertia", "droop"});
    Bus b;
    b.id = item.at("id").string();
    b.kind = item.has("kind") ? bus_kind(item.child("kind")) : BusKind::Machine;
    b.voltage_mag = item.number_or("voltage_mag", 1.0);
    if (b.kind == BusKind::Passive) {
      for (const char* k : {"p_ref", "inertia", "droop"}) {
        if (item.has(k)) item.fail(fmt::format("passive bus '{}' takes no '{}'", b.id, k));
      }
    } else {
      read_machine_fields(item, b.kind == BusKind::Infinite, b.p_ref, b.inertia, b.droop);
    }
    topo.buses.push_back(std::move(b));
  }
  for (const auto& item : root.at("branches").items()) {
    item.allow_only({"id", "from", "to", "susceptance"});
    Branch br;
    br.id = item.at("id").string();
    br.from = item.at("from").string();
    br.to = item.at("to").string();
    br.susceptance = item.at("susceptance").number();
    topo.branches.push_back(std::move(br));
  }
  NetworkModel model = build_network(topo);
  return {std::move(model), std::move(topo)};
}

NetworkDocument parse_k_form(const Node& root) {
  std::vector<Machine> machines;
  for (const auto& item : root.at("machines").items()) {
    item.allow_only({"id", "kind", "voltage_mag", "p_ref", "inertia", "droop"});
    Machine m;
    m.id = item.at("id").string();
    if (item.has("kind")) {
      const auto kind = bus_kind(item.child("kind"));
      if (kind == BusKind::Passive) item.fail("passive buses need the buses/branches form");
      m.infinite = kind == BusKind::Infinite;
    }
    m.voltage = item.number_or("voltage_mag", 1.0);
    read_machine_fields(item, m.infinite, m.p_ref, m.inertia, m.droop);
    machines.push_back(std::move(m));
  }
  Matrix k = root.at("k_matrix").matrix();
  return {NetworkModel(std::move(machines), std::move(k)), std::nullopt};
}

json machine_json(const std::string& id, bool infinite, double voltage, double p_ref,
                  double inertia, double droop) {
  json j;
  j["id"] = id;
  j["kind"] = infinite ? "infinite" : "machine";
  j["voltage_mag"] = voltage;
  if (!infinite) {
    j["p_ref"] = p_ref;
    j["inertia"] = inertia;
    j["droop"] = droop;
  }
  return j;
}

// Rounds to the 9 significant digits used everywhere else; non-finite -> null.
json num(double x) {
  if (!std::isfinite(x)) return nullptr;
  return std::stod(format_number(x));
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

json spectrum_json(const Spectrum& s) {
  json a = json::array();
  for (const auto& z : s) a.push_back(json::array({num(z.real()), num(z.imag())}));
  return a;
}

json point_json(const NetworkModel& model, const EquilibriumPoint& p) {
  json j;
  j["classification"] = to_string(p.classification);
  j["reference"] = model.machine(p.reference).id;
  j["theta_star"] = vector_json(p.theta_star);
  j["max_coupled_angle"] = num(max_coupled_angle(p.theta_star, p.k));
  j["residual_norm"] = num(p.residual_norm);
  j["iterations"] = p.iterations;
  j["spectrum"] = spectrum_json(p.spectrum);
  return j;
}

FaultEdit parse_fault(const Node& n, const NetworkDocument& net) {
  n.expect_object();
  FaultEdit edit;
  const auto type = n.at("type").string();
  if (type == "none") {
    n.allow_only({"type"});
    edit.kind = FaultKind::None;
  } else if (type == "bus") {
    n.allow_only({"type", "bus"});
    edit.kind = FaultKind::Bus;
    edit.bus = n.at("bus").string();
  } else if (type == "line") {
    n.allow_only({"type", "branch", "between", "factor"});
    edit.kind = FaultKind::Line;
    edit.factor = n.number_or("factor", 0.0);
    if (edit.factor < 0.0) n.child("factor").fail("factor must be >= 0");
    if (n.has("branch") == n.has("between")) n.fail("give exactly one of 'branch' or 'between'");
    if (n.has("branch")) {
      edit.branch = n.child("branch").string();
    } else {
      const auto ids = n.child("between").items();
      if (ids.size() != 2) n.child("between").fail("expected two machine ids");
      edit.between = std::make_pair(ids[0].string(), ids[1].string());
    }
  } else if (type == "k_matrix") {
    n.allow_only({"type", "k_matrix"});
    edit.kind = FaultKind::Matrix;
    edit.k = n.at("k_matrix").matrix();
  } else {
    n.child("type").fail(fmt::format("unknown fault type '{}' (none, bus, line, k_matrix)", type));
  }
  // Resolve now so bad ids surface as schema errors with a path.
  try {
    (void)apply_fault(net, edit);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Validation || e.kind() == ErrorKind::Dimension) n.fail(e.what());
    throw;
  }
  return edit;
}

std::string pair_label(const MachinePair& p) { return fmt::format("{}-{}", p.first, p.second); }

}  // namespace

NetworkDocument parse_network(std::string_view text, const std::string& source) {
  const json j = parse_json(text, source);
  const Node root(j, "", source);
  root.expect_object();
  const bool bus_form = root.has("buses") || root.has("branches");
  const bool k_form = root.has("machines") || root.has("k_matrix");
  if (bus_form == k_form) {
    schema_error(source, "document",
                 "expected either 'buses' and 'branches' or 'machines' and 'k_matrix'");
  }
  if (bus_form) {
    root.allow_only({"buses", "branches"});
    return parse_bus_form(root);
  }
  root.allow_only({"machines", "k_matrix"});
  return parse_k_form(root);
}

NetworkDocument read_network(const std::filesystem::path& path) {
  return parse_network(read_text(path), path.filename().string());
}

std::string serialize_network(const NetworkDocument& doc) {
  json j;
  if (doc.topology) {
    json buses = json::array();
    for (const auto& b : doc.topology->buses) {
      if (b.kind == BusKind::Passive) {
        json p;
        p["id"] = b.id;
        p["kind"] = "passive";
        p["voltage_mag"] = b.voltage_mag;
        buses.push_back(std::move(p));
      } else {
        buses.push_back(machine_json(b.id, b.kind == BusKind::Infinite, b.voltage_mag, b.p_ref,
                                     b.inertia, b.droop));
      }
    }
    json branches = json::array();
    for (const auto& br : doc.topology->branches) {
      branches.push_back({{"id", br.id}, {"from", br.from}, {"to", br.to},
                          {"susceptance", br.susceptance}});
    }
    j["buses"] = std::move(buses);
    j["branches"] = std::move(branches);
  } else {
    json machines = json::array();
    for (const auto& m : doc.model.machines()) {
      machines.push_back(machine_json(m.id, m.infinite, m.voltage, m.p_ref, m.inertia, m.droop));
    }
    json k = json::array();
    const Matrix& km = doc.model.k();
    for (Index r = 0; r < km.rows(); ++r) {
      json row = json::array();
      for (Index c = 0; c < km.cols(); ++c) row.push_back(km(r, c));
      k.push_back(std::move(row));
    }
    j["machines"] = std::move(machines);
    j["k_matrix"] = std::move(k);
  }
  return j.dump(2) + "\n";
}

Matrix apply_fault(const NetworkDocument& network, const FaultEdit& edit) {
  const NetworkModel& model = network.model;
  const Matrix& pre = model.k();
  switch (edit.kind) {
    case FaultKind::None:
      return pre;
    case FaultKind::Bus: {
      if (network.topology) {
        const bool known = std::any_of(network.topology->buses.begin(), network.topology->buses.end(),
                                       [&](const Bus& b) { return b.id == edit.bus; });
        if (!known) throw Error(ErrorKind::Validation, fmt::format("unknown bus '{}'", edit.bus));
        const std::string grounded[] = {edit.bus};
        return derive_k(*network.topology, grounded);
      }
      const auto idx = model.index_of(edit.bus);
      if (!idx) throw Error(ErrorKind::Validation, fmt::format("unknown machine '{}'", edit.bus));
      return ground_node(pre, *idx);
    }
    case FaultKind::Line: {
      if (edit.between) {
        const auto a = model.index_of(edit.between->first);
        const auto b = model.index_of(edit.between->second);
        if (!a || !b) {
          throw Error(ErrorKind::Validation, fmt::format("unknown machine pair ('{}', '{}')",
                                                         edit.between->first, edit.between->second));
        }
        return scale_coupling(pre, *a, *b, edit.factor);
      }
      if (!network.topology) {
        throw Error(ErrorKind::Validation, "branch faults need a buses/branches network");
      }
      Topology topo = *network.topology;
      auto it = std::find_if(topo.branches.begin(), topo.branches.end(),
                             [&](const Branch& br) { return br.id == edit.branch; });
      if (it == topo.branches.end()) {
        throw Error(ErrorKind::Validation, fmt::format("unknown branch '{}'", edit.branch));
      }
      if (edit.factor == 0.0) {
        const std::string removed[] = {edit.branch};
        return derive_k(topo, {}, removed);
      }
      it->susceptance *= edit.factor;
      return derive_k(topo);
    }
    case FaultKind::Matrix: {
      const auto n = static_cast<Index>(model.size());
      if (edit.k.rows() != n || edit.k.cols() != n) {
        throw Error(ErrorKind::Dimension, fmt::format("fault K must be {}x{}", n, n));
      }
      validate_k(edit.k, false);
      return edit.k;
    }
  }
  return pre;
}

ScenarioDocument parse_scenario(std::string_view text, const std::filesystem::path& base_dir,
                                const std::string& source) {
  const json j = parse_json(text, source);
  const Node root(j, "", source);
  root.allow_only({"network", "fault", "post_fault", "t_fault", "t_clear", "clearing_cycles",
                   "frequency_hz", "horizon", "mode", "step", "tau", "droop_scale", "keep_droop",
                   "sweep", "cct"});
  std::filesystem::path network_path = root.at("network").string();
  if (network_path.is_relative()) network_path = base_dir / network_path;
  NetworkDocument network = read_network(network_path);
  ScenarioDocument doc(std::move(network_path), std::move(network));

  doc.fault = parse_fault(root.at("fault"), doc.network);
  if (root.has("post_fault")) doc.post_fault = parse_fault(root.child("post_fault"), doc.network);

  auto& s = doc.scenario;
  s.pre_k = doc.network.model.k();
  s.fault_k = apply_fault(doc.network, doc.fault);
  s.post_k = doc.post_fault ? apply_fault(doc.network, *doc.post_fault) : s.pre_k;
  s.t_fault = root.number_or("t_fault", 0.0);
  if (root.has("t_clear") == root.has("clearing_cycles")) {
    root.fail("give exactly one of 't_clear' or 'clearing_cycles'");
  }
  if (root.has("t_clear")) {
    if (root.has("frequency_hz")) root.fail("'frequency_hz' only applies to 'clearing_cycles'");
    s.t_clear = root.child("t_clear").number();
  } else {
    const double f = root.number_or("frequency_hz", 60.0);
    if (!(f > 0.0)) root.child("frequency_hz").fail("must be > 0");
    s.t_clear = s.t_fault + root.child("clearing_cycles").number() / f;
  }
  s.horizon = root.number_or("horizon", 10.0);

  if (root.has("mode")) {
    const auto m = root.child("mode").string();
    if (m == "full") {
      doc.mode = Mode::Full;
    } else if (m == "reduced") {
      doc.mode = Mode::Reduced;
    } else {
      root.child("mode").fail(fmt::format("unknown mode '{}' (full, reduced)", m));
    }
  }
  if (root.has("step")) {
    doc.step = root.child("step").number();
    if (!(*doc.step > 0.0)) root.child("step").fail("must be > 0");
  }
  if (root.has("tau")) {
    doc.tau = root.child("tau").number();
    if (!(*doc.tau > 0.0)) root.child("tau").fail("must be > 0");
  }
  doc.droop_scale = root.number_or("droop_scale", 1.0);
  if (!(doc.droop_scale > 0.0)) root.child("droop_scale").fail("must be > 0");
  if (root.has("keep_droop")) doc.keep_droop = root.child("keep_droop").boolean();

  if (root.has("sweep")) {
    for (const auto& item : root.child("sweep").items()) {
      SweepCase c;
      if (item.raw().is_number()) {
        c.tau = item.number();
      } else {
        item.allow_only({"tau", "droop_scale"});
        c.tau = item.at("tau").number();
        c.droop_scale = item.number_or("droop_scale", 1.0);
      }
      if (!(c.tau > 0.0)) item.fail("tau must be > 0");
      if (!(c.droop_scale > 0.0)) item.fail("droop_scale must be > 0");
      doc.sweep.push_back(c);
    }
  }
  if (root.has("cct")) {
    const Node c = root.child("cct");
    c.allow_only({"t_lo", "t_hi", "tol"});
    doc.cct_lo = c.at("t_lo").number();
    doc.cct_hi = c.at("t_hi").number();
    doc.cct_tol = c.number_or("tol", 1e-3);
  }
  try {
    s.validate(doc.network.model.size());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Validation) schema_error(source, "scenario", e.what());
    throw;
  }
  return doc;
}

ScenarioDocument read_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_text(path), path.parent_path(), path.filename().string());
}

NetworkModel scenario_model(const ScenarioDocument& doc) {
  if (!doc.tau) {
    if (doc.droop_scale != 1.0) {
      throw Error(ErrorKind::Validation, "droop_scale needs a tau override");
    }
    return doc.network.model;
  }
  return with_uniform_tau(doc.network.model, *doc.tau, doc.keep_droop, doc.droop_scale);
}

std::string trajectory_csv(const TrajectoryRecord& trajectory) {
  const std::size_t n = trajectory.machines();
  std::string out = "time";
  for (std::size_t m = 0; m < n; ++m) out += fmt::format(",theta_{}", m);
  for (std::size_t m = 0; m < n; ++m) out += fmt::format(",omega_{}", m);
  out += '\n';
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    out += format_number(trajectory.time(i));
    const auto theta = trajectory.theta(i);
    const auto omega = trajectory.omega(i);
    for (Index m = 0; m < theta.size(); ++m) (out += ',') += format_number(theta(m));
    for (Index m = 0; m < omega.size(); ++m) (out += ',') += format_number(omega(m));
    out += '\n';
  }
  return out;
}

std::string events_csv(const TrajectoryRecord& trajectory) {
  std::string out = "time,label\n";
  for (const auto& e : trajectory.events()) {
    out += fmt::format("{},{}\n", format_number(e.time), e.label);
  }
  return out;
}

std::string certificate_csv(std::span<const CertificateSample> samples) {
  std::string out = "time,H,Hdot,in_box,min_margin,binding_pair\n";
  for (const auto& s : samples) {
    out += fmt::format("{},{},{},{},{},{}\n", format_number(s.time), format_number(s.h_value),
                       format_number(s.h_rate), s.in_box ? 1 : 0, format_number(s.min_margin),
                       pair_label(s.binding_pair));
  }
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "tau,status,reason,max_excursion,ratio,separated\n";
  for (const auto& r : rows) {
    if (!r.verdict) {
      out += fmt::format("{},error,error,,,\n", format_number(r.params.tau));
      continue;
    }
    out += fmt::format("{},{},{},{},", format_number(r.params.tau), to_string(r.verdict->status),
                       to_string(r.verdict->reason),
                       format_number(r.verdict->max_pairwise_excursion));
    if (r.timescale) {
      out += fmt::format("{},{}\n", format_number(r.timescale->ratio), r.timescale->separated ? 1 : 0);
    } else {
      out += ",\n";
    }
  }
  return out;
}

std::string equilibria_report(const NetworkModel& model, const EquilibriumPoint& sep,
                              std::span<const EquilibriumPoint> ueps) {
  json j;
  json ids = json::array();
  for (const auto& m : model.machines()) ids.push_back(m.id);
  j["machines"] = std::move(ids);
  j["omega_offset"] = num(sep.omega_offset);
  j["sep"] = point_json(model, sep);
  json u = json::array();
  for (const auto& p : ueps) u.push_back(point_json(model, p));
  j["boundary_ueps"] = std::move(u);
  return j.dump(2) + "\n";
}

std::string verdict_report(const StabilityVerdict& verdict, std::optional<TimescaleReport> timescale) {
  json j;
  j["status"] = to_string(verdict.status);
  j["reason"] = to_string(verdict.reason);
  j["slip_pair"] = verdict.slip_pair ? json(pair_label(*verdict.slip_pair)) : json(nullptr);
  j["max_pairwise_excursion"] = num(verdict.max_pairwise_excursion);
  j["settling_time"] = verdict.settling_time ? num(*verdict.settling_time) : json(nullptr);
  j["diagnostic"] = verdict.diagnostic;
  if (timescale) {
    j["timescale"] = {{"tau_max", num(timescale->tau_max)},
                      {"lambda", num(timescale->lambda)},
                      {"ratio", num(timescale->ratio)},
                      {"separated", timescale->separated}};
  }
  return j.dump(2) + "\n";
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::Io, fmt::format("error reading '{}'", path.string()));
  return ss.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + fmt::format(".tmp{}", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorKind::Io, fmt::format("error writing '{}'", tmp.string()));
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignore;
    fs::remove(tmp, ignore);
    throw Error(ErrorKind::Io, fmt::format("cannot rename onto '{}': {}", path.string(), ec.message()));
  }
}

}  // namespace swingcert::io
