#include "swingcert/equilibria.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "swingcert/dynamics.hpp"
#include "swingcert/error.hpp"
#include "swingcert/log.hpp"

namespace swingcert {

namespace {

using Index = Eigen::Index;

// Reduced Jacobian used for classification. D^-1 L is congruent to L, so
// unit droop gives the same eigenvalue signs when some machine is undamped.
Matrix signature_jacobian(const Vector& theta, const NetworkModel& model, const Matrix& k) {
  bool damped = true;
  for (const auto& m : model.machines()) damped = damped && (m.infinite || m.droop > 0.0);
  if (damped) return reduced_jacobian(theta, model, k);
  auto machines = model.machines();
  for (auto& m : machines) m.droop = 1.0;
  return reduced_jacobian(theta, model.with_machines(std::move(machines)), k);
}

// Power-mismatch Jacobian restricted to the unpinned coordinates.
Matrix mismatch_jacobian(const Vector& theta, const NetworkModel& model, const Matrix& k,
                         const std::vector<Index>& free) {
  const auto nf = static_cast<Index>(free.size());
  Matrix jac = Matrix::Zero(nf, nf);
  std::vector<Index> slot(static_cast<std::size_t>(theta.size()), -1);
  for (Index a = 0; a < nf; ++a) slot[static_cast<std::size_t>(free[static_cast<std::size_t>(a)])] = a;
  for (Index a = 0; a < nf; ++a) {
    const Index m = free[static_cast<std::size_t>(a)];
    if (model.machine(static_cast<std::size_t>(m)).infinite) continue;
    double diag = 0.0;
    for (Index j = 0; j < theta.size(); ++j) {
      if (j == m || k(m, j) == 0.0) continue;
      const double c = k(m, j) * std::cos(theta(m) - theta(j));
      diag -= c;
      const Index b = slot[static_cast<std::size_t>(j)];
      if (b >= 0) jac(a, b) += c;
    }
    jac(a, a) += diag;
  }
  return jac;
}

double residual_of(const Vector& mismatch) {
  return mismatch.size() == 0 ? 0.0 : mismatch.cwiseAbs().maxCoeff();
}

}  // namespace

const char* to_string(EquilibriumClass c) {
  switch (c) {
    case EquilibriumClass::Stable: return "SEP";
    case EquilibriumClass::Unstable: return "UEP";
    case EquilibriumClass::Degenerate: return "degenerate";
  }
  return "unknown";
}

double synchronous_offset(const NetworkModel& model) {
  if (model.infinite_bus()) return 0.0;
  double p = 0.0;
  double d = 0.0;
  for (const auto& m : model.machines()) {
    p += m.p_ref;
    d += m.droop;
  }
  if (d == 0.0) {
    if (p == 0.0) return 0.0;
    throw Error(ErrorKind::NoEquilibrium, "undamped model with net injection has no synchronous frame");
  }
  return p / d;
}

NetworkModel co_rotating(const NetworkModel& model) {
  const double offset = synchronous_offset(model);
  if (offset == 0.0) return model;
  auto machines = model.machines();
  for (auto& m : machines) {
    if (!m.infinite) m.p_ref -= m.droop * offset;
  }
  return model.with_machines(std::move(machines));
}

std::size_t default_reference(const NetworkModel& model) {
  return model.infinite_bus().value_or(0);
}

Vector pinned(const Vector& theta, std::size_t reference) {
  if (reference >= static_cast<std::size_t>(theta.size())) {
    throw Error(ErrorKind::Dimension, "reference index out of range");
  }
  return (theta.array() - theta(static_cast<Index>(reference))).matrix();
}

std::vector<MachinePair> coupled_pairs(const Matrix& k) {
  std::vector<MachinePair> out;
  for (Index m = 0; m < k.rows(); ++m) {
    for (Index n = m + 1; n < k.cols(); ++n) {
      if (k(m, n) > 0.0) out.emplace_back(static_cast<std::size_t>(m), static_cast<std::size_t>(n));
    }
  }
  return out;
}

EquilibriumPoint solve_equilibrium(const NetworkModel& input, const Matrix& k, const Vector& guess,
                                   std::optional<std::size_t> reference,
                                   const NewtonOptions& options) {
  const auto n = static_cast<Index>(input.size());
  if (guess.size() != n) {
    throw Error(ErrorKind::Dimension,
                fmt::format("guess has {} angles but the model has {} machines", guess.size(), n));
  }
  if (!guess.allFinite()) throw Error(ErrorKind::Validation, "equilibrium guess is not finite");
  validate_k(k, false);

  const double offset = synchronous_offset(input);
  if (std::abs(offset) > 1e-12) {
    logger()->warn("unbalanced injections; solving in the co-rotating frame ({:.6g} rad/s)", offset);
  }
  const NetworkModel model = co_rotating(input);

  std::size_t ref = reference.value_or(default_reference(model));
  if (ref >= model.size()) throw Error(ErrorKind::Dimension, "reference index out of range");
  if (auto inf = model.infinite_bus(); inf && *inf != ref) {
    throw Error(ErrorKind::Validation,
                fmt::format("reference must be the infinite bus '{}'", model.machine(*inf).id));
  }

  std::vector<Index> free;
  for (Index i = 0; i < n; ++i) {
    if (static_cast<std::size_t>(i) != ref) free.push_back(i);
  }
  Vector theta = pinned(guess, ref);
  Vector mismatch = power_mismatch(theta, model, k);
  double residual = residual_of(mismatch);

  int iter = 0;
  while (residual >= options.tolerance) {
    if (iter >= options.max_iterations) {
      throw NonConvergenceError(
          fmt::format("Newton did not converge in {} iterations (residual {:.3e})",
                      options.max_iterations, residual),
          theta);
    }
    ++iter;
    const Matrix jac = mismatch_jacobian(theta, model, k, free);
    Vector rhs(static_cast<Index>(free.size()));
    for (std::size_t a = 0; a < free.size(); ++a) rhs(static_cast<Index>(a)) = mismatch(free[a]);
    Eigen::FullPivLU<Matrix> lu(jac);
    lu.setThreshold(1e-12);
    if (static_cast<std::size_t>(lu.rank()) < free.size()) {
      throw Error(ErrorKind::StaticLimit,
                  fmt::format("singular deflated Jacobian at Newton iterate {}; the model is at or "
                              "beyond its static limit",
                              iter));
    }
    // mismatch' = jac * dtheta, solve mismatch + jac * step = 0.
    const Vector step = lu.solve(-rhs);

    double scale = 1.0;
    Vector trial = theta;
    Vector trial_mismatch;
    double trial_residual = 0.0;
    for (int halving = 0;; ++halving) {
      trial = theta;
      for (std::size_t a = 0; a < free.size(); ++a) trial(free[a]) += scale * step(static_cast<Index>(a));
      trial_mismatch = power_mismatch(trial, model, k);
      trial_residual = residual_of(trial_mismatch);
      if (trial_residual < residual || halving >= options.max_halvings) break;
      scale *= 0.5;
    }
    theta = std::move(trial);
    mismatch = std::move(trial_mismatch);
    residual = trial_residual;
    if (!theta.allFinite()) {
      throw NonConvergenceError("Newton iterate became non-finite", theta);
    }
  }

  EquilibriumPoint eq;
  eq.theta_star = theta;
  eq.reference = ref;
  eq.residual_norm = residual;
  eq.omega_offset = offset;
  eq.k = k;
  eq.iterations = iter;
  eq.spectrum = deflated_spectrum(signature_jacobian(theta, model, k), ref);
  eq.classification = classify_spectrum(eq.spectrum);
  return eq;
}

Spectrum deflated_spectrum(const Matrix& jacobian, std::size_t reference) {
  const auto n = jacobian.rows();
  if (jacobian.cols() != n) throw Error(ErrorKind::Dimension, "Jacobian is not square");
  if (reference >= static_cast<std::size_t>(n)) throw Error(ErrorKind::Dimension, "reference out of range");
  if (n <= 1) return {};
  // Induced map on R^n / span(1) in pinned coordinates:
  // A_ab = J_ab - J_ref,b over the non-reference indices.
  const auto r = static_cast<Index>(reference);
  Matrix reduced(n - 1, n - 1);
  Index a = 0;
  for (Index i = 0; i < n; ++i) {
    if (i == r) continue;
    Index b = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == r) continue;
      reduced(a, b) = jacobian(i, j) - jacobian(r, j);
      ++b;
    }
    ++a;
  }
  Eigen::EigenSolver<Matrix> solver(reduced, false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::NonConvergence, "eigenvalue computation failed");
  }
  Spectrum out(solver.eigenvalues().begin(), solver.eigenvalues().end());
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
  });
  return out;
}

double spectral_abscissa(const Spectrum& spectrum) {
  double a = -std::numeric_limits<double>::infinity();
  for (const auto& z : spectrum) a = std::max(a, z.real());
  return a;
}

EquilibriumClass classify_spectrum(const Spectrum& spectrum, double eps) {
  if (spectrum.empty()) return EquilibriumClass::Stable;  // lone machine: nothing can drift
  bool all_negative = true;
  for (const auto& z : spectrum) {
    if (z.real() > eps) return EquilibriumClass::Unstable;
    if (!(z.real() < -eps)) all_negative = false;
  }
  return all_negative ? EquilibriumClass::Stable : EquilibriumClass::Degenerate;
}

ClassifiedPoint classify_point(const NetworkModel& model, const Matrix& k, const Vector& point,
                               double eps, double residual_tolerance) {
  const NetworkModel balanced = co_rotating(model);
  const double residual = residual_of(power_mismatch(point, balanced, k));
  if (!(residual <= residual_tolerance)) {
    throw Error(ErrorKind::Validation,
                fmt::format("point is not an equilibrium (mismatch {:.3e} p.u.); refusing to "
                            "classify",
                            residual));
  }
  auto spectrum = deflated_spectrum(signature_jacobian(point, balanced, k), default_reference(balanced));
  return {classify_spectrum(spectrum, eps), std::move(spectrum), residual};
}

std::vector<EquilibriumPoint> boundary_ueps(const NetworkModel& model, const EquilibriumPoint& sep) {
  std::vector<EquilibriumPoint> found;
  const auto ref = sep.reference;
  for (auto [m, n] : coupled_pairs(sep.k)) {
    const auto im = static_cast<Index>(m);
    const auto in = static_cast<Index>(n);
    const double delta_star = sep.theta_star(im) - sep.theta_star(in);
    Vector seed = sep.theta_star;
    // Move the non-reference end so that delta_mn = pi - delta*_mn.
    if (n != ref) {
      seed(in) = seed(im) - (std::numbers::pi - delta_star);
    } else {
      seed(im) = seed(in) + (std::numbers::pi - delta_star);
    }
    try {
      auto eq = solve_equilibrium(model, sep.k, seed, ref);
      if (eq.classification != EquilibriumClass::Unstable) continue;
      const bool duplicate = std::any_of(found.begin(), found.end(), [&](const EquilibriumPoint& p) {
        const Vector diff = p.theta_star - eq.theta_star;
        for (Index i = 0; i < diff.size(); ++i) {
          const double wrapped = std::remainder(diff(i), 2.0 * std::numbers::pi);
          if (std::abs(wrapped) > 1e-6) return false;
        }
        return true;
      });
      if (!duplicate) found.push_back(std::move(eq));
    } catch (const Error&) {
      // Seed did not lead to an equilibrium; try the next pair.
    }
  }
  return found;
}

double max_coupled_angle(const Vector& theta, const Matrix& k) {
  double worst = 0.0;
  for (auto [m, n] : coupled_pairs(k)) {
    worst = std::max(worst, std::abs(theta(static_cast<Index>(m)) - theta(static_cast<Index>(n))));
  }
  return worst;
}

}  // namespace swingcert
