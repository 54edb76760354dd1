#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "swingcert/netmodel.hpp"

namespace swingcert {

struct SystemState {
  Vector theta;  // rad, unwrapped
  Vector omega;  // rad/s, deviation from nominal
  double time = 0.0;
};

struct StateDerivative {
  Vector dtheta;
  Vector domega;
};

enum class Mode { Full, Reduced };

/// P*_m - sum_n K_mn sin(theta_m - theta_n); zero at an infinite bus.
Vector power_mismatch(const Vector& theta, const NetworkModel& model, const Matrix& k);

/// Swing dynamics with droop: J w' = -D w + P* - sum K sin(.), theta' = w.
/// Requires J_m > 0 for every non-infinite machine.
StateDerivative full_rhs(const SystemState& state, const NetworkModel& model, const Matrix& k);

/// Inertia-free limit: theta' = (P* - sum K sin(.)) / D.
Vector reduced_rhs(const Vector& theta, const NetworkModel& model, const Matrix& k);

/// Jacobian of reduced_rhs. Rows sum to zero; infinite-bus rows are zero.
Matrix reduced_jacobian(const Vector& theta, const NetworkModel& model, const Matrix& k);

struct Switch {
  double time = 0.0;
  Matrix k;
  std::string label;
};

/// Timed K replacements. Before the first switch the model's own K applies.
class SwitchSchedule {
 public:
  SwitchSchedule() = default;

  /// Times must be strictly increasing. Connectivity is checked only when
  /// require_connected is set; fault segments may split the graph.
  void add(double time, Matrix k, std::string label, bool require_connected = false);

  const std::vector<Switch>& switches() const noexcept { return switches_; }
  bool empty() const noexcept { return switches_.empty(); }

 private:
  std::vector<Switch> switches_;
};

struct IntegratorConfig {
  /// Fixed step. Defaults to 1e-4 s (full) or 1e-3 s (reduced); also the
  /// initial step in adaptive mode.
  std::optional<double> step;
  double horizon = 10.0;  // end time, s
  bool adaptive = false;  // Dormand-Prince 5(4)
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double min_step = 1e-12;
  std::size_t record_every = 1;

  double step_for(Mode mode) const;
};

struct SwitchEvent {
  double time = 0.0;
  std::string label;
};

/// Time-stamped states stored row-major. In reduced mode the frequency
/// columns hold the algebraic value D w = P* - sum K sin(.).
class TrajectoryRecord {
 public:
  explicit TrajectoryRecord(std::size_t machines = 0, Mode mode = Mode::Full)
      : n_(machines), mode_(mode) {}

  std::size_t machines() const noexcept { return n_; }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }
  Mode mode() const noexcept { return mode_; }

  const std::vector<double>& times() const noexcept { return times_; }
  double time(std::size_t i) const { return times_.at(i); }
  Eigen::Map<const Vector> theta(std::size_t i) const;
  Eigen::Map<const Vector> omega(std::size_t i) const;
  SystemState state(std::size_t i) const;
  SystemState back() const { return state(size() - 1); }

  const std::vector<SwitchEvent>& events() const noexcept { return events_; }

  /// Set when a non-finite state was produced; the record stops before it.
  bool diverged() const noexcept { return diverged_; }
  /// Set when a stop condition ended the run before the horizon.
  bool stopped_early() const noexcept { return stopped_; }
  double horizon() const noexcept { return horizon_; }
  double start_time() const noexcept { return times_.empty() ? 0.0 : times_.front(); }

  void append(double t, const Vector& theta, const Vector& omega);
  void add_event(double t, std::string label) { events_.push_back({t, std::move(label)}); }
  void mark_diverged() { diverged_ = true; }
  void mark_stopped() { stopped_ = true; }
  void set_horizon(double h) { horizon_ = h; }

 private:
  std::size_t n_;
  Mode mode_;
  std::vector<double> times_;
  std::vector<double> theta_;
  std::vector<double> omega_;
  std::vector<SwitchEvent> events_;
  bool diverged_ = false;
  bool stopped_ = false;
  double horizon_ = 0.0;
};

/// Checked after every accepted step; returning true ends the run.
using StopCondition = std::function<bool(double time, const Vector& theta, const Vector& omega)>;

/// Integrates from `initial` to config.horizon through the switch schedule.
/// Steps are split so every switch instant is hit exactly; the state is
/// continuous across switches.
TrajectoryRecord integrate(const NetworkModel& model, const SystemState& initial,
                           const SwitchSchedule& schedule, const IntegratorConfig& config,
                           Mode mode, const StopCondition& stop = {});

}  // namespace swingcert
