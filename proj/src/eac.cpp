#include "swingcert/eac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "swingcert/error.hpp"
#include "swingcert/format.hpp"

namespace swingcert::eac {

namespace {

constexpr double kPi = std::numbers::pi;

double checked_asin(double ratio) {
  // Marginal loading rounds onto the static limit.
  return std::asin(std::clamp(ratio, -1.0, 1.0));
}

}  // namespace

void SmibCase::validate() const {
  const bool finite = std::isfinite(p_ref) && std::isfinite(k_pre) && std::isfinite(k_fault) &&
                      std::isfinite(k_post) && std::isfinite(inertia) && std::isfinite(droop);
  if (!finite) throw Error(ErrorKind::Validation, "SMIB case has non-finite parameters");
  if (!(k_fault >= 0.0)) throw Error(ErrorKind::Validation, "k_fault must be >= 0");
  if (!(k_pre >= k_fault)) throw Error(ErrorKind::Validation, "k_pre must be >= k_fault");
  if (!(k_post > 0.0)) throw Error(ErrorKind::Validation, "k_post must be > 0");
  if (!(p_ref >= 0.0)) throw Error(ErrorKind::Validation, "p_ref must be >= 0");
  if (p_ref > k_post || p_ref > k_pre) {
    throw Error(ErrorKind::NoEquilibrium, "p_ref exceeds the transfer limit; no equilibrium exists");
  }
  if (!(inertia >= 0.0) || !(droop >= 0.0)) {
    throw Error(ErrorKind::Validation, "inertia and droop must be >= 0");
  }
}

SmibEquilibria smib_equilibria(double p_ref, double k) {
  if (!(k > 0.0) || !std::isfinite(k) || !std::isfinite(p_ref)) {
    throw Error(ErrorKind::Validation, "coupling must be > 0 and values finite");
  }
  if (std::abs(p_ref) > k) {
    throw Error(ErrorKind::NoEquilibrium,
                fmt::format("|p_ref| = {} exceeds the coupling {}; no equilibrium exists",
                            std::abs(p_ref), k));
  }
  const double sep = checked_asin(p_ref / k);
  return {sep, kPi - sep};
}

const char* to_string(ClearingStatus s) {
  switch (s) {
    case ClearingStatus::Bounded: return "bounded";
    case ClearingStatus::NeverUnstable: return "never_unstable";
    case ClearingStatus::AlwaysUnstable: return "always_unstable";
  }
  return "unknown";
}

ClearingAngle critical_clearing_angle(const SmibCase& c) {
  c.validate();
  if (!(c.k_post > c.k_fault)) {
    throw Error(ErrorKind::Validation, "equal-area balance needs k_post > k_fault");
  }
  ClearingAngle out;
  out.delta_0 = checked_asin(c.p_ref / c.k_pre);
  out.delta_max = kPi - checked_asin(c.p_ref / c.k_post);
  const double rhs = (c.p_ref * (out.delta_max - out.delta_0) + c.k_post * std::cos(out.delta_max) -
                      c.k_fault * std::cos(out.delta_0)) /
                     (c.k_post - c.k_fault);
  if (rhs > 1.0) {
    out.status = ClearingStatus::AlwaysUnstable;
    out.angle = out.delta_0;
    return out;
  }
  if (rhs < -1.0) {
    out.status = ClearingStatus::NeverUnstable;
    out.angle = out.delta_max;
    return out;
  }
  out.angle = std::clamp(std::acos(rhs), out.delta_0, out.delta_max);
  return out;
}

double extended_boundary(double p_ref, double k_post) { return smib_equilibria(p_ref, k_post).uep; }

double fault_on_time_to_angle(const SmibCase& c, double angle) {
  c.validate();
  const double delta_0 = checked_asin(c.p_ref / c.k_pre);
  if (angle <= delta_0) return 0.0;
  if (!(c.inertia > 0.0)) throw Error(ErrorKind::Validation, "fault-on swing needs inertia > 0");
  if (c.k_fault == 0.0 && c.droop == 0.0) {
    if (c.p_ref == 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(2.0 * c.inertia * (angle - delta_0) / c.p_ref);
  }
  auto accel = [&](double d, double w) {
    return (c.p_ref - c.k_fault * std::sin(d) - c.droop * w) / c.inertia;
  };
  const double h = 1e-4;
  double d = delta_0;
  double w = 0.0;
  double t = 0.0;
  constexpr double kGiveUp = 1000.0;
  while (t < kGiveUp) {
    const double k1d = w, k1w = accel(d, w);
    const double k2d = w + 0.5 * h * k1w, k2w = accel(d + 0.5 * h * k1d, w + 0.5 * h * k1w);
    const double k3d = w + 0.5 * h * k2w, k3w = accel(d + 0.5 * h * k2d, w + 0.5 * h * k2w);
    const double k4d = w + h * k3w, k4w = accel(d + h * k3d, w + h * k3w);
    const double d_next = d + h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
    const double w_next = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    if (d_next >= angle) return t + h * (angle - d) / (d_next - d);
    if (w_next < 0.0 && d_next < angle) {
      // Swung back before reaching the angle: the fault-on SEP holds it.
      return std::numeric_limits<double>::infinity();
    }
    d = d_next;
    w = w_next;
    t += h;
  }
  return std::numeric_limits<double>::infinity();
}

NetworkModel smib_model(double p_ref, double k, double inertia, double droop) {
  std::vector<Machine> machines(2);
  machines[0].id = "G";
  machines[0].p_ref = p_ref;
  machines[0].inertia = inertia;
  machines[0].droop = droop;
  machines[1].id = "INF";
  machines[1].infinite = true;
  machines[1].droop = 0.0;
  Matrix kk(2, 2);
  kk << 0.0, k, k, 0.0;
  return NetworkModel(std::move(machines), std::move(kk));
}

std::string dataset_csv(const SmibCase& c, int curve_points) {
  c.validate();
  if (curve_points < 2) throw Error(ErrorKind::Validation, "need at least two curve points");
  const auto post = smib_equilibria(c.p_ref, c.k_post);
  const auto cca = critical_clearing_angle(c);
  std::string out = "series,delta,power\n";
  auto row = [&](const char* series, double delta, double power) {
    out += fmt::format("{},{},{}\n", series, format_number(delta), format_number(power));
  };
  for (int i = 0; i < curve_points; ++i) {
    const double d = kPi * i / (curve_points - 1);
    row("pre_fault_curve", d, c.k_pre * std::sin(d));
  }
  for (int i = 0; i < curve_points; ++i) {
    const double d = kPi * i / (curve_points - 1);
    row("fault_curve", d, c.k_fault * std::sin(d));
  }
  for (int i = 0; i < curve_points; ++i) {
    const double d = kPi * i / (curve_points - 1);
    row("post_fault_curve", d, c.k_post * std::sin(d));
  }
  row("p_ref", 0.0, c.p_ref);
  row("p_ref", kPi, c.p_ref);
  row("initial", cca.delta_0, c.p_ref);
  row("sep", post.sep, c.p_ref);
  row("uep", post.uep, c.p_ref);
  row("delta_cr", cca.angle, c.k_post * std::sin(cca.angle));
  row("extended_boundary", post.uep, c.p_ref);
  return out;
}

}  // namespace swingcert::eac
