#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "swingcert/netmodel.hpp"

namespace swingcert {

enum class EquilibriumClass { Stable, Unstable, Degenerate };

const char* to_string(EquilibriumClass c);

using Spectrum = std::vector<std::complex<double>>;
using MachinePair = std::pair<std::size_t, std::size_t>;

struct EquilibriumPoint {
  Vector theta_star;            // rad, theta_star(reference) == 0
  std::size_t reference = 0;
  EquilibriumClass classification = EquilibriumClass::Degenerate;
  Spectrum spectrum;            // deflated reduced-Jacobian eigenvalues
  double residual_norm = 0.0;   // p.u., inf-norm of the power mismatch
  double omega_offset = 0.0;    // co-rotating frame shift applied, rad/s
  Matrix k;                     // coupling the point was solved against
  int iterations = 0;
};

/// sum(P*) / sum(D); zero when an infinite bus absorbs the imbalance.
double synchronous_offset(const NetworkModel& model);

/// P*_m <- P*_m - D_m * synchronous_offset(model).
NetworkModel co_rotating(const NetworkModel& model);

/// Infinite bus if present, otherwise machine 0.
std::size_t default_reference(const NetworkModel& model);

/// Subtracts theta(reference) from every entry.
Vector pinned(const Vector& theta, std::size_t reference);

/// Pairs (m < n) with K_mn > 0.
std::vector<MachinePair> coupled_pairs(const Matrix& k);

struct NewtonOptions {
  double tolerance = 1e-11;  // inf-norm of the power mismatch, p.u.
  int max_iterations = 50;
  int max_halvings = 8;
};

/// Newton iteration on the static balance with one angle pinned to zero.
/// Unbalanced models are shifted to the co-rotating frame first.
EquilibriumPoint solve_equilibrium(const NetworkModel& model, const Matrix& k, const Vector& guess,
                                   std::optional<std::size_t> reference = std::nullopt,
                                   const NewtonOptions& options = {});

/// Spectrum of the Jacobian on the quotient by the uniform-shift mode.
Spectrum deflated_spectrum(const Matrix& jacobian, std::size_t reference);

/// Largest real part of a spectrum (-inf for an empty one).
double spectral_abscissa(const Spectrum& spectrum);

EquilibriumClass classify_spectrum(const Spectrum& spectrum, double eps = 1e-8);

struct ClassifiedPoint {
  EquilibriumClass classification;
  Spectrum spectrum;
  double residual_norm;
};

/// Refuses points whose power mismatch exceeds residual_tolerance.
ClassifiedPoint classify_point(const NetworkModel& model, const Matrix& k, const Vector& point,
                               double eps = 1e-8, double residual_tolerance = 1e-8);

inline EquilibriumClass classify_equilibrium(const NetworkModel& model, const Matrix& k,
                                             const Vector& point) {
  return classify_point(model, k, point).classification;
}

/// Seeds Newton at pi - delta* along each coupled pair and keeps the distinct
/// points classified unstable.
std::vector<EquilibriumPoint> boundary_ueps(const NetworkModel& model, const EquilibriumPoint& sep);

/// Largest |theta_m - theta_n| over coupled pairs of k.
double max_coupled_angle(const Vector& theta, const Matrix& k);

}  // namespace swingcert
