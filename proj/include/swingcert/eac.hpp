#pragma once

#include <string>

#include "swingcert/netmodel.hpp"

namespace swingcert::eac {

/// Single machine against an infinite bus with a three-stage fault.
struct SmibCase {
  double p_ref = 0.5;
  double k_pre = 1.0;
  double k_fault = 0.0;
  double k_post = 1.0;
  double inertia = 1.0;
  double droop = 0.0;

  /// k_pre >= k_fault >= 0, k_post > 0, 0 <= p_ref <= k_post.
  void validate() const;
};

struct SmibEquilibria {
  double sep = 0.0;
  double uep = 0.0;
};

/// sep = asin(p/k), uep = pi - sep. p == k gives the marginal pair (pi/2, pi/2).
SmibEquilibria smib_equilibria(double p_ref, double k);

enum class ClearingStatus {
  Bounded,         // equal-area balance has a solution in [delta_0, delta_max]
  NeverUnstable,   // accelerating area never exceeds the decelerating area
  AlwaysUnstable,  // no clearing angle balances the areas
};

const char* to_string(ClearingStatus s);

struct ClearingAngle {
  double angle = 0.0;      // rad, clamped to [delta_0, delta_max]
  double delta_0 = 0.0;    // pre-fault SEP
  double delta_max = 0.0;  // post-fault UEP
  ClearingStatus status = ClearingStatus::Bounded;
};

/// Classic equal-area critical clearing angle (undamped).
ClearingAngle critical_clearing_angle(const SmibCase& c);

/// UEP of the post-fault system: the first-swing clearing limit of the
/// inertia-free dynamics.
double extended_boundary(double p_ref, double k_post);

/// Fault-on time for the undamped machine to swing from delta_0 to `angle`.
/// Exact parabola when k_fault == 0, RK4 otherwise.
double fault_on_time_to_angle(const SmibCase& c, double angle);

/// Machine "G" plus infinite bus "INF" coupled by k.
NetworkModel smib_model(double p_ref, double k, double inertia, double droop);

/// Plot-ready CSV: `series,delta,power` rows for the post- and during-fault
/// power curves, the P* line, SEP/UEP markers, the critical clearing angle and
/// the extended boundary.
std::string dataset_csv(const SmibCase& c, int curve_points = 361);

}  // namespace swingcert::eac
