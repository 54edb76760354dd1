#pragma once

#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swingcert/dynamics.hpp"
#include "swingcert/equilibria.hpp"
#include "swingcert/lyapunov.hpp"

namespace swingcert {

/// Pre-fault K until t_fault, fault K until t_clear, post-fault K after.
struct FaultScenario {
  Matrix pre_k;
  Matrix fault_k;
  Matrix post_k;
  double t_fault = 0.0;
  double t_clear = 0.0;
  double horizon = 10.0;

  /// t_fault < t_clear < horizon; pre_k and post_k connected.
  void validate(std::size_t machines) const;
};

/// Null fault on the model's own K.
FaultScenario steady_scenario(const NetworkModel& model, double horizon);

enum class VerdictStatus { Stable, Unstable, Inconclusive };
enum class VerdictReason { Resynchronised, PoleSlip, Diverged, HorizonExhausted, NoEquilibrium };

const char* to_string(VerdictStatus s);
const char* to_string(VerdictReason r);

struct StabilityVerdict {
  VerdictStatus status = VerdictStatus::Inconclusive;
  VerdictReason reason = VerdictReason::HorizonExhausted;
  std::optional<MachinePair> slip_pair;  // first pair past the unwind threshold
  double max_pairwise_excursion = 0.0;   // max |delta_mn| over coupled pairs, rad
  std::optional<double> settling_time;   // s
  std::string diagnostic;
};

struct StabilityThresholds {
  double settle_angle = 0.05;   // rad, |delta - delta*|
  double settle_omega = 0.05;   // rad/s
  double unwind = 2.0 * std::numbers::pi;
  double final_fraction = 0.1;  // tail of the horizon checked for settling
};

StabilityVerdict classify_stability(const TrajectoryRecord& trajectory,
                                    const EquilibriumPoint& post_eq,
                                    const StabilityThresholds& thresholds = {});

struct ScenarioConfig {
  IntegratorConfig integrator;  // horizon is taken from the scenario
  StabilityThresholds thresholds;
  bool stop_on_slip = true;     // end the run once a pole slip is certain
  bool certificate = true;
};

struct ScenarioResult {
  TrajectoryRecord trajectory;
  StabilityVerdict verdict;
  std::vector<CertificateSample> certificate;  // from t_clear onward
  std::optional<EquilibriumPoint> pre_eq;
  std::optional<EquilibriumPoint> post_eq;
};

/// Starts at the pre-fault SEP (omega = 0) in the co-rotating frame and runs
/// through the switch schedule. An unsolvable post-fault equilibrium yields
/// an inconclusive verdict instead of an error.
ScenarioResult run_scenario(const NetworkModel& model, const FaultScenario& scenario, Mode mode,
                            const ScenarioConfig& config = {});

/// Fault-on time after which the pair (m, n) first reaches `angle`.
double clearing_time_for_angle(const NetworkModel& model, const FaultScenario& scenario, Mode mode,
                               MachinePair pair, double angle, const ScenarioConfig& config = {});

struct CctResult {
  double cct = 0.0;  // last clearing time without loss of synchronism
  int iterations = 0;
  StabilityVerdict at_lo;
  StabilityVerdict at_hi;
};

/// Bisection on t_clear until the bracket is no wider than tol. A clearing
/// time counts as secure unless its verdict is unstable.
CctResult cct_search(const NetworkModel& model, const FaultScenario& scenario_template, Mode mode,
                     double t_lo, double t_hi, double tol = 1e-3, const ScenarioConfig& config = {});

struct SweepCase {
  double tau = 0.0;
  double droop_scale = 1.0;  // applied to every droop before J = tau * D
};

struct SweepRow {
  SweepCase params;
  std::optional<StabilityVerdict> verdict;
  std::optional<TimescaleReport> timescale;
  std::string error;
};

/// One full-mode run per time constant. With keep_droop, J_m = tau * D_m;
/// otherwise D_m = J_m / tau. Row failures are recorded, not thrown. Rows
/// run concurrently when `parallel` is set; output order follows input.
std::vector<SweepRow> tau_sweep(const NetworkModel& model, const FaultScenario& scenario,
                                std::span<const SweepCase> cases, bool keep_droop = true,
                                const ScenarioConfig& config = {}, bool parallel = false);

std::vector<SweepRow> tau_sweep(const NetworkModel& model, const FaultScenario& scenario,
                                std::span<const double> taus, bool keep_droop = true,
                                const ScenarioConfig& config = {}, bool parallel = false);

}  // namespace swingcert
