#include "swingcert/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "swingcert/error.hpp"

namespace swingcert {

namespace {

using Index = Eigen::Index;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_matrix(const Matrix& k, std::size_t n, const char* name, bool connected) {
  if (static_cast<std::size_t>(k.rows()) != n || static_cast<std::size_t>(k.cols()) != n) {
    throw Error(ErrorKind::Dimension, fmt::format("{} has the wrong size", name));
  }
  try {
    validate_k(k, connected);
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", name, e.what()));
  }
}

SwitchSchedule schedule_of(const FaultScenario& s) {
  SwitchSchedule schedule;
  schedule.add(s.t_fault, s.fault_k, "fault");
  schedule.add(s.t_clear, s.post_k, "clear");
  return schedule;
}

StabilityVerdict no_equilibrium_verdict(const std::string& why) {
  StabilityVerdict v;
  v.status = VerdictStatus::Inconclusive;
  v.reason = VerdictReason::NoEquilibrium;
  v.diagnostic = why;
  return v;
}

}  // namespace

void FaultScenario::validate(std::size_t machines) const {
  if (!(std::isfinite(t_fault) && std::isfinite(t_clear) && std::isfinite(horizon))) {
    throw Error(ErrorKind::Validation, "scenario times must be finite");
  }
  if (!(t_fault >= 0.0)) throw Error(ErrorKind::Validation, "t_fault must be >= 0");
  if (!(t_fault < t_clear && t_clear < horizon)) {
    throw Error(ErrorKind::Validation,
                fmt::format("scenario needs t_fault < t_clear < horizon (got {}, {}, {})", t_fault,
                            t_clear, horizon));
  }
  check_matrix(pre_k, machines, "pre-fault K", true);
  check_matrix(fault_k, machines, "fault K", false);
  check_matrix(post_k, machines, "post-fault K", true);
}

FaultScenario steady_scenario(const NetworkModel& model, double horizon) {
  FaultScenario s;
  s.pre_k = model.k();
  s.fault_k = model.k();
  s.post_k = model.k();
  s.t_fault = 0.0;
  s.t_clear = std::min(1.0, 0.5 * horizon);
  s.horizon = horizon;
  return s;
}

const char* to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Stable: return "stable";
    case VerdictStatus::Unstable: return "unstable";
    case VerdictStatus::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

const char* to_string(VerdictReason r) {
  switch (r) {
    case VerdictReason::Resynchronised: return "resynchronised";
    case VerdictReason::PoleSlip: return "pole_slip";
    case VerdictReason::Diverged: return "diverged";
    case VerdictReason::HorizonExhausted: return "horizon_exhausted";
    case VerdictReason::NoEquilibrium: return "no_equilibrium";
  }
  return "unknown";
}

StabilityVerdict classify_stability(const TrajectoryRecord& trajectory,
                                    const EquilibriumPoint& post_eq,
                                    const StabilityThresholds& thresholds) {
  StabilityVerdict v;
  const auto pairs = coupled_pairs(post_eq.k);
  const auto n = static_cast<Index>(trajectory.machines());
  if (post_eq.theta_star.size() != n) {
    throw Error(ErrorKind::Dimension, "equilibrium and trajectory sizes differ");
  }

  std::vector<double> star(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    star[p] = post_eq.theta_star(static_cast<Index>(pairs[p].first)) -
              post_eq.theta_star(static_cast<Index>(pairs[p].second));
  }

  // Per-sample worst deviation from the post-fault SEP, and frequency.
  // `rewound` also accepts a copy of the SEP shifted by whole turns.
  std::vector<bool> settled(trajectory.size(), false);
  std::vector<bool> rewound(trajectory.size(), false);
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto theta = trajectory.theta(i);
    const auto omega = trajectory.omega(i);
    bool ok = true;
    bool ok_mod = true;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const double d = theta(static_cast<Index>(pairs[p].first)) - theta(static_cast<Index>(pairs[p].second));
      v.max_pairwise_excursion = std::max(v.max_pairwise_excursion, std::abs(d));
      const double dev = std::abs(d - star[p]);
      if (!v.slip_pair && dev > thresholds.unwind) v.slip_pair = pairs[p];
      if (!(dev < thresholds.settle_angle)) ok = false;
      const double wrapped = std::abs(std::remainder(d - star[p], kTwoPi));
      if (!(wrapped < thresholds.settle_angle)) ok_mod = false;
    }
    if (omega.size() > 0 && !(omega.cwiseAbs().maxCoeff() < thresholds.settle_omega)) {
      ok = false;
      ok_mod = false;
    }
    settled[i] = ok;
    rewound[i] = ok_mod;
  }

  if (v.slip_pair) {
    v.status = VerdictStatus::Unstable;
    v.reason = VerdictReason::PoleSlip;
    v.diagnostic = fmt::format("machines {} and {} slipped past the unwind threshold",
                               v.slip_pair->first, v.slip_pair->second);
    return v;
  }
  if (trajectory.diverged()) {
    v.status = VerdictStatus::Unstable;
    v.reason = VerdictReason::Diverged;
    v.diagnostic = "integration produced a non-finite state";
    return v;
  }
  if (trajectory.empty()) {
    v.diagnostic = "empty trajectory";
    return v;
  }

  const double t_start = trajectory.start_time();
  const double t_end = trajectory.horizon() > t_start ? trajectory.horizon() : trajectory.times().back();
  const double window = t_end - thresholds.final_fraction * (t_end - t_start);
  if (trajectory.times().back() < t_end - 1e-9 * std::max(1.0, std::abs(t_end))) {
    v.diagnostic = "trajectory ends before the horizon";
    return v;
  }
  bool tail_settled = true;
  bool tail_rewound = true;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    if (trajectory.time(i) < window) continue;
    tail_settled = tail_settled && settled[i];
    tail_rewound = tail_rewound && rewound[i];
  }
  if (!tail_settled && tail_rewound) {
    // Re-locked onto the SEP after losing whole turns: a slip that never
    // crossed the unwind threshold.
    const auto last = trajectory.theta(trajectory.size() - 1);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const double d = last(static_cast<Index>(pairs[p].first)) - last(static_cast<Index>(pairs[p].second));
      if (std::abs(d - star[p]) > std::numbers::pi) {
        v.slip_pair = pairs[p];
        break;
      }
    }
    v.status = VerdictStatus::Unstable;
    v.reason = VerdictReason::PoleSlip;
    if (v.slip_pair) {
      v.diagnostic = fmt::format("machines {} and {} re-locked whole turns away from the SEP",
                                 v.slip_pair->first, v.slip_pair->second);
    }
    return v;
  }
  if (!tail_settled) {
    v.status = VerdictStatus::Inconclusive;
    v.reason = VerdictReason::HorizonExhausted;
    v.diagnostic = "not settled within the final window of the horizon";
    return v;
  }
  std::size_t first = trajectory.size();
  while (first > 0 && settled[first - 1]) --first;
  v.status = VerdictStatus::Stable;
  v.reason = VerdictReason::Resynchronised;
  v.settling_time = trajectory.time(first);
  return v;
}

ScenarioResult run_scenario(const NetworkModel& model, const FaultScenario& scenario, Mode mode,
                            const ScenarioConfig& config) {
  scenario.validate(model.size());
  const NetworkModel balanced = co_rotating(model).with_k(scenario.pre_k);
  const auto n = static_cast<Index>(model.size());

  ScenarioResult result;
  result.pre_eq = solve_equilibrium(model, scenario.pre_k, Vector::Zero(n));
  if (result.pre_eq->classification != EquilibriumClass::Stable) {
    throw Error(ErrorKind::NoEquilibrium, "pre-fault operating point is not a stable equilibrium");
  }
  std::string post_problem;
  try {
    result.post_eq = solve_equilibrium(model, scenario.post_k, result.pre_eq->theta_star);
    if (result.post_eq->classification != EquilibriumClass::Stable) {
      post_problem = fmt::format("post-fault equilibrium found from the pre-fault SEP is {}",
                                 to_string(result.post_eq->classification));
    }
  } catch (const Error& e) {
    post_problem = fmt::format("post-fault equilibrium unsolvable: {}", e.what());
  }

  SystemState initial{result.pre_eq->theta_star, Vector::Zero(n), 0.0};
  IntegratorConfig ic = config.integrator;
  ic.horizon = scenario.horizon;

  StopCondition stop;
  if (config.stop_on_slip && post_problem.empty()) {
    const auto pairs = coupled_pairs(scenario.post_k);
    std::vector<double> star;
    for (auto [a, b] : pairs) {
      star.push_back(result.post_eq->theta_star(static_cast<Index>(a)) -
                     result.post_eq->theta_star(static_cast<Index>(b)));
    }
    const double unwind = config.thresholds.unwind;
    stop = [pairs, star, unwind](double, const Vector& theta, const Vector&) {
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double d = theta(static_cast<Index>(pairs[p].first)) - theta(static_cast<Index>(pairs[p].second));
        if (std::abs(d - star[p]) > unwind) return true;
      }
      return false;
    };
  }

  result.trajectory = integrate(balanced, initial, schedule_of(scenario), ic, mode, stop);
  if (!post_problem.empty()) {
    result.verdict = no_equilibrium_verdict(post_problem);
    return result;
  }
  result.verdict = classify_stability(result.trajectory, *result.post_eq, config.thresholds);
  if (config.certificate) {
    result.certificate = certificate_trace(result.trajectory, *result.post_eq, model,
                                           scenario.post_k, scenario.t_clear);
  }
  return result;
}

double clearing_time_for_angle(const NetworkModel& model, const FaultScenario& scenario, Mode mode,
                               MachinePair pair, double angle, const ScenarioConfig& config) {
  const auto n = static_cast<Index>(model.size());
  if (pair.first >= model.size() || pair.second >= model.size() || pair.first == pair.second) {
    throw Error(ErrorKind::Validation, "invalid machine pair");
  }
  check_matrix(scenario.pre_k, model.size(), "pre-fault K", true);
  check_matrix(scenario.fault_k, model.size(), "fault K", false);
  const NetworkModel balanced = co_rotating(model).with_k(scenario.pre_k);
  const auto pre = solve_equilibrium(model, scenario.pre_k, Vector::Zero(n));
  const auto a = static_cast<Index>(pair.first);
  const auto b = static_cast<Index>(pair.second);
  const double start = pre.theta_star(a) - pre.theta_star(b);
  if (angle == start) return scenario.t_fault;
  const double sign = angle > start ? 1.0 : -1.0;

  SwitchSchedule schedule;
  schedule.add(scenario.t_fault, scenario.fault_k, "fault");
  IntegratorConfig ic = config.integrator;
  ic.horizon = scenario.horizon;

  double prev_t = 0.0;
  double prev_d = start;
  std::optional<double> hit;
  StopCondition stop = [&](double t, const Vector& theta, const Vector&) {
    const double d = theta(a) - theta(b);
    if (sign * (d - angle) >= 0.0) {
      hit = d == prev_d ? t : prev_t + (angle - prev_d) * (t - prev_t) / (d - prev_d);
      return true;
    }
    prev_t = t;
    prev_d = d;
    return false;
  };
  SystemState initial{pre.theta_star, Vector::Zero(n), 0.0};
  integrate(balanced, initial, schedule, ic, mode, stop);
  if (!hit) {
    throw Error(ErrorKind::Validation,
                fmt::format("pair ({}, {}) does not reach {} rad before the horizon", pair.first,
                            pair.second, angle));
  }
  return std::max(*hit, scenario.t_fault);
}

CctResult cct_search(const NetworkModel& model, const FaultScenario& scenario_template, Mode mode,
                     double t_lo, double t_hi, double tol, const ScenarioConfig& config) {
  if (!(tol > 0.0)) throw Error(ErrorKind::Validation, "tolerance must be > 0");
  if (!(t_lo < t_hi)) throw Error(ErrorKind::InvalidBracket, "t_lo must be below t_hi");
  ScenarioConfig cfg = config;
  cfg.certificate = false;
  auto verdict_at = [&](double t) {
    FaultScenario s = scenario_template;
    s.t_clear = t;
    return run_scenario(model, s, mode, cfg).verdict;
  };

  CctResult out;
  out.at_lo = verdict_at(t_lo);
  out.at_hi = verdict_at(t_hi);
  if (out.at_lo.status == VerdictStatus::Unstable || out.at_hi.status != VerdictStatus::Unstable) {
    throw Error(ErrorKind::InvalidBracket,
                fmt::format("invalid bracket: clearing at {} s is {} ({}), at {} s is {} ({})", t_lo,
                            to_string(out.at_lo.status), to_string(out.at_lo.reason), t_hi,
                            to_string(out.at_hi.status), to_string(out.at_hi.reason)));
  }
  double lo = t_lo;
  double hi = t_hi;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const auto v = verdict_at(mid);
    if (v.status == VerdictStatus::Unstable) {
      hi = mid;
      out.at_hi = v;
    } else {
      lo = mid;
      out.at_lo = v;
    }
    ++out.iterations;
  }
  out.cct = lo;
  return out;
}

std::vector<SweepRow> tau_sweep(const NetworkModel& model, const FaultScenario& scenario,
                                std::span<const SweepCase> cases, bool keep_droop,
                                const ScenarioConfig& config, bool parallel) {
  auto run_row = [&](const SweepCase& c) {
    SweepRow row;
    row.params = c;
    try {
      const NetworkModel tuned = with_uniform_tau(model, c.tau, keep_droop, c.droop_scale);
      auto res = run_scenario(tuned, scenario, Mode::Full, config);
      row.timescale = timescale_ratio(tuned, res.trajectory, scenario.post_k);
      row.verdict = std::move(res.verdict);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  std::vector<SweepRow> rows;
  rows.reserve(cases.size());
  if (parallel) {
    std::vector<std::future<SweepRow>> pending;
    for (const auto& c : cases) pending.push_back(std::async(std::launch::async, run_row, c));
    for (auto& f : pending) rows.push_back(f.get());
  } else {
    for (const auto& c : cases) rows.push_back(run_row(c));
  }
  return rows;
}

std::vector<SweepRow> tau_sweep(const NetworkModel& model, const FaultScenario& scenario,
                                std::span<const double> taus, bool keep_droop,
                                const ScenarioConfig& config, bool parallel) {
  std::vector<SweepCase> cases;
  for (double t : taus) cases.push_back({t, 1.0});
  return tau_sweep(model, scenario, std::span<const SweepCase>(cases), keep_droop, config, parallel);
}

}  // namespace swingcert
