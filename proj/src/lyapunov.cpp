#include "swingcert/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "swingcert/error.hpp"

namespace swingcert {

namespace {

using Index = Eigen::Index;

void check_frame(const Vector& theta, const EquilibriumPoint& eq, const NetworkModel& model) {
  if (theta.size() != eq.theta_star.size() ||
      static_cast<std::size_t>(theta.size()) != model.size()) {
    throw Error(ErrorKind::Dimension, "state, equilibrium and model sizes differ");
  }
}

}  // namespace

double lyapunov_value(const Vector& theta, const EquilibriumPoint& eq, const NetworkModel& model) {
  check_frame(theta, eq, model);
  const auto ref = static_cast<Index>(eq.reference);
  if (theta(ref) != 0.0 || eq.theta_star(ref) != 0.0) {
    throw Error(ErrorKind::FrameMismatch,
                fmt::format("angle of reference machine {} is {} (expected 0); pin the state first",
                            eq.reference, theta(ref)));
  }
  double h = 0.0;
  for (std::size_t m = 0; m < model.size(); ++m) {
    const auto& mach = model.machine(m);
    if (mach.infinite) continue;
    const double dev = eq.theta_star(static_cast<Index>(m)) - theta(static_cast<Index>(m));
    h += 0.5 * mach.droop * dev * dev;
  }
  return h;
}

double certificate_energy(const Vector& theta, const EquilibriumPoint& eq, const NetworkModel& model) {
  check_frame(theta, eq, model);
  const Vector dev = theta - eq.theta_star;
  double centre = 0.0;
  if (auto inf = model.infinite_bus()) {
    centre = dev(static_cast<Index>(*inf));
  } else {
    double wsum = 0.0;
    for (std::size_t m = 0; m < model.size(); ++m) {
      centre += model.machine(m).droop * dev(static_cast<Index>(m));
      wsum += model.machine(m).droop;
    }
    if (wsum > 0.0) centre /= wsum;
  }
  double h = 0.0;
  for (std::size_t m = 0; m < model.size(); ++m) {
    const auto& mach = model.machine(m);
    if (mach.infinite) continue;
    const double e = dev(static_cast<Index>(m)) - centre;
    h += 0.5 * mach.droop * e * e;
  }
  return h;
}

RateForms lyapunov_rate_forms(const Vector& theta, const EquilibriumPoint& eq,
                              const NetworkModel& model, const Matrix& k) {
  check_frame(theta, eq, model);
  const auto n = theta.size();
  if (k.rows() != n || k.cols() != n) throw Error(ErrorKind::Dimension, "K has the wrong size");

  RateForms out;
  for (Index m = 0; m < n; ++m) {
    for (Index j = m + 1; j < n; ++j) {
      const double kmj = k(m, j);
      if (kmj == 0.0) continue;
      const double d = theta(m) - theta(j);
      const double ds = eq.theta_star(m) - eq.theta_star(j);
      out.pairwise += kmj * (d - ds) * (std::sin(ds) - std::sin(d));
    }
  }
  for (Index m = 0; m < n; ++m) {
    const auto& mach = model.machine(static_cast<std::size_t>(m));
    if (mach.infinite) continue;
    double flow = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (k(m, j) != 0.0) flow += k(m, j) * std::sin(theta(m) - theta(j));
    }
    const double p = mach.p_ref - mach.droop * eq.omega_offset;
    out.direct += (theta(m) - eq.theta_star(m)) * (p - flow);
  }
  return out;
}

double lyapunov_rate(const Vector& theta, const EquilibriumPoint& eq, const NetworkModel& model,
                     const Matrix& k) {
  const auto forms = lyapunov_rate_forms(theta, eq, model, k);
  const double scale = std::max({1.0, std::abs(forms.pairwise), std::abs(forms.direct)});
  if (std::abs(forms.pairwise - forms.direct) > 1e-9 * scale) {
    throw Error(ErrorKind::Consistency,
                fmt::format("pairwise ({:.12g}) and direct ({:.12g}) certificate rates disagree; "
                            "K is not symmetric or the equilibrium is stale",
                            forms.pairwise, forms.direct));
  }
  return forms.pairwise;
}

BoxCheck in_uep_box(const Vector& theta, const EquilibriumPoint& eq) {
  if (theta.size() != eq.theta_star.size()) throw Error(ErrorKind::Dimension, "size mismatch");
  BoxCheck box;
  box.min_margin = std::numeric_limits<double>::infinity();
  for (auto [m, n] : coupled_pairs(eq.k)) {
    const auto im = static_cast<Index>(m);
    const auto in = static_cast<Index>(n);
    const double d = theta(im) - theta(in);
    const double ds = eq.theta_star(im) - eq.theta_star(in);
    const double lo = -std::numbers::pi - ds;
    const double hi = std::numbers::pi - ds;
    const double margin = std::min(d - lo, hi - d);
    if (margin < box.min_margin) {
      box.min_margin = margin;
      box.binding_pair = {m, n};
    }
    if (!(margin > 0.0)) box.inside = false;
  }
  return box;
}

std::vector<CertificateSample> certificate_trace(const TrajectoryRecord& trajectory,
                                                 const EquilibriumPoint& eq,
                                                 const NetworkModel& model, const Matrix& k,
                                                 double from_time) {
  std::vector<CertificateSample> out;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const double t = trajectory.time(i);
    if (t < from_time) continue;
    const Vector theta = trajectory.theta(i);
    CertificateSample s;
    s.time = t;
    s.h_value = certificate_energy(theta, eq, model);
    s.h_rate = lyapunov_rate(theta, eq, model, k);
    const auto box = in_uep_box(theta, eq);
    s.in_box = box.inside;
    s.min_margin = box.min_margin;
    s.binding_pair = box.binding_pair;
    out.push_back(s);
  }
  return out;
}

TimescaleReport timescale_ratio(const NetworkModel& model, const TrajectoryRecord& trajectory,
                                const Matrix& k, double threshold) {
  if (trajectory.empty()) throw Error(ErrorKind::Validation, "trajectory is empty");
  TimescaleReport report;
  for (const auto& m : model.machines()) {
    if (!m.infinite) report.tau_max = std::max(report.tau_max, m.inertia / m.droop);
  }
  const auto ref = model.infinite_bus().value_or(0);
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto spectrum = deflated_spectrum(reduced_jacobian(trajectory.theta(i), model, k), ref);
    if (spectrum.empty()) continue;
    report.lambda = std::max(report.lambda, std::abs(spectral_abscissa(spectrum)));
  }
  report.ratio = report.tau_max * report.lambda;
  report.separated = report.ratio < threshold;
  return report;
}

}  // namespace swingcert
