#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swingcert/dynamics.hpp"
#include "swingcert/equilibria.hpp"
#include "swingcert/format.hpp"
#include "swingcert/lyapunov.hpp"
#include "swingcert/netmodel.hpp"
#include "swingcert/scenarios.hpp"

namespace swingcert::io {

/// A parsed network file. The topology is kept for bus/branch documents so
/// faults can be re-reduced; direct-K documents have none.
struct NetworkDocument {
  NetworkModel model;
  std::optional<Topology> topology;
};

/// JSON network: either `buses` + `branches`, or `machines` + `k_matrix`.
/// `source` prefixes schema messages.
NetworkDocument parse_network(std::string_view text, const std::string& source = "network");
NetworkDocument read_network(const std::filesystem::path& path);

/// Canonical JSON with every field spelled out (defaults filled in).
std::string serialize_network(const NetworkDocument& doc);

enum class FaultKind { None, Bus, Line, Matrix };

/// One K edit relative to the pre-fault network.
struct FaultEdit {
  FaultKind kind = FaultKind::None;
  std::string bus;                       // Bus: grounded bus (or machine) id
  std::string branch;                    // Line: branch id (bus/branch networks)
  std::optional<std::pair<std::string, std::string>> between;  // Line: machine ids
  double factor = 0.0;                   // Line: susceptance multiplier
  Matrix k;                              // Matrix: replacement K
};

Matrix apply_fault(const NetworkDocument& network, const FaultEdit& edit);

struct ScenarioDocument {
  ScenarioDocument(std::filesystem::path path, NetworkDocument net)
      : network_path(std::move(path)), network(std::move(net)) {}

  std::filesystem::path network_path;
  NetworkDocument network;
  FaultEdit fault;
  std::optional<FaultEdit> post_fault;  // none restores the pre-fault K
  FaultScenario scenario;
  Mode mode = Mode::Full;
  std::optional<double> step;
  std::optional<double> tau;  // uniform J/D override
  double droop_scale = 1.0;
  bool keep_droop = true;
  std::vector<SweepCase> sweep;
  std::optional<double> cct_lo;
  std::optional<double> cct_hi;
  double cct_tol = 1e-3;
};

/// Scenario JSON. A relative `network` path is resolved against base_dir.
/// Clearing is given by `t_clear` or by `clearing_cycles` at `frequency_hz`
/// (default 60 Hz) after `t_fault`.
ScenarioDocument parse_scenario(std::string_view text, const std::filesystem::path& base_dir,
                                const std::string& source = "scenario");
ScenarioDocument read_scenario(const std::filesystem::path& path);

/// Network after the scenario's tau override, if any.
NetworkModel scenario_model(const ScenarioDocument& doc);

std::string trajectory_csv(const TrajectoryRecord& trajectory);
std::string events_csv(const TrajectoryRecord& trajectory);
std::string certificate_csv(std::span<const CertificateSample> samples);
std::string sweep_csv(std::span<const SweepRow> rows);

std::string equilibria_report(const NetworkModel& model, const EquilibriumPoint& sep,
                              std::span<const EquilibriumPoint> ueps);
std::string verdict_report(const StabilityVerdict& verdict,
                           std::optional<TimescaleReport> timescale = std::nullopt);

std::string read_text(const std::filesystem::path& path);

/// Writes to a temporary sibling, then renames over the target.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace swingcert::io
