#pragma once

#include <cstddef>
#include <vector>

#include "swingcert/dynamics.hpp"
#include "swingcert/equilibria.hpp"

namespace swingcert {

/// H = sum_m 1/2 D_m (theta*_m - theta_m)^2, for theta in the pinned frame
/// of `eq` (theta(reference) == 0). Infinite buses contribute nothing.
double lyapunov_value(const Vector& theta, const EquilibriumPoint& eq, const NetworkModel& model);

/// H with the uniform-shift component of theta - theta* removed: the
/// deviation is centred on its droop-weighted mean (on the infinite bus when
/// there is one). Along the inertia-free flow sum(D theta) is conserved, so
/// this is the certificate in the frame that keeps dH/dt equal to
/// lyapunov_rate. It coincides with lyapunov_value when the frame is already
/// aligned, in particular for every infinite-bus model.
double certificate_energy(const Vector& theta, const EquilibriumPoint& eq, const NetworkModel& model);

struct RateForms {
  double pairwise = 0.0;  // sum_{m<n} K (d - d*)(sin d* - sin d)
  double direct = 0.0;    // sum_m (theta - theta*)(P* - sum K sin d)
};

RateForms lyapunov_rate_forms(const Vector& theta, const EquilibriumPoint& eq,
                              const NetworkModel& model, const Matrix& k);

/// dH/dt along the inertia-free flow. Throws a Consistency error when the
/// pairwise and direct forms disagree by more than 1e-9 (relative to
/// max(1, |value|)), which flags a non-symmetric K or a stale equilibrium.
double lyapunov_rate(const Vector& theta, const EquilibriumPoint& eq, const NetworkModel& model,
                     const Matrix& k);

struct BoxCheck {
  bool inside = true;
  double min_margin = 0.0;     // rad; negative when outside
  MachinePair binding_pair{};  // pair attaining min_margin
};

/// delta_mn in (-pi - delta*_mn, pi - delta*_mn) for every pair coupled in eq.k.
BoxCheck in_uep_box(const Vector& theta, const EquilibriumPoint& eq);

struct CertificateSample {
  double time = 0.0;
  double h_value = 0.0;
  double h_rate = 0.0;
  bool in_box = false;
  double min_margin = 0.0;
  MachinePair binding_pair{};
};

/// Certificate along a trajectory from `from_time` onward.
std::vector<CertificateSample> certificate_trace(const TrajectoryRecord& trajectory,
                                                 const EquilibriumPoint& eq,
                                                 const NetworkModel& model, const Matrix& k,
                                                 double from_time = 0.0);

struct TimescaleReport {
  double tau_max = 0.0;  // s, max J/D
  double lambda = 0.0;   // 1/s
  double ratio = 0.0;    // tau_max * lambda
  bool separated = false;
};

/// Frequency time constant against the local exponent of the inertia-free
/// flow. lambda is the largest magnitude of the spectral abscissa of the
/// deflated reduced Jacobian over the sampled states.
TimescaleReport timescale_ratio(const NetworkModel& model, const TrajectoryRecord& trajectory,
                                const Matrix& k, double threshold = 0.1);

}  // namespace swingcert
