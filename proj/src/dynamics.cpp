#include "swingcert/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "swingcert/error.hpp"

namespace swingcert {

namespace {

void check_dims(const Vector& theta, const NetworkModel& model, const Matrix& k) {
  const auto n = static_cast<Eigen::Index>(model.size());
  if (theta.size() != n) {
    throw Error(ErrorKind::Dimension,
                fmt::format("state has {} angles but the model has {} machines", theta.size(), n));
  }
  if (k.rows() != n || k.cols() != n) {
    throw Error(ErrorKind::Dimension,
                fmt::format("K is {}x{} but the model has {} machines", k.rows(), k.cols(), n));
  }
}

void require_damped(const NetworkModel& model) {
  for (const auto& m : model.machines()) {
    if (!m.infinite && !(m.droop > 0.0)) {
      throw Error(ErrorKind::Validation,
                  fmt::format("machine '{}' is undamped; the reduced dynamics need droop > 0", m.id));
    }
  }
}

// Allocation-free right-hand side over the stacked state y = [theta; omega]
// (full) or y = theta (reduced).
class Kernel {
 public:
  Kernel(const NetworkModel& model, Mode mode)
      : n_(static_cast<Eigen::Index>(model.size())),
        mode_(mode),
        p_(model.p_ref()),
        d_(model.droop()),
        j_(model.inertia()),
        fixed_(model.size(), false),
        mismatch_(n_) {
    for (std::size_t i = 0; i < model.size(); ++i) fixed_[i] = model.machine(i).infinite;
    if (mode == Mode::Reduced) require_damped(model);
  }

  Eigen::Index dimension() const { return mode_ == Mode::Full ? 2 * n_ : n_; }

  void set_k(const Matrix* k) { k_ = k; }

  void mismatch(const double* theta, double* out) const {
    const Matrix& k = *k_;
    for (Eigen::Index m = 0; m < n_; ++m) {
      if (fixed_[static_cast<std::size_t>(m)]) {
        out[m] = 0.0;
        continue;
      }
      double flow = 0.0;
      for (Eigen::Index j = 0; j < n_; ++j) {
        const double kmj = k(m, j);
        if (kmj != 0.0) flow += kmj * std::sin(theta[m] - theta[j]);
      }
      out[m] = p_(m) - flow;
    }
  }

  void operator()(const Vector& y, Vector& dy) {
    mismatch(y.data(), mismatch_.data());
    if (mode_ == Mode::Reduced) {
      for (Eigen::Index m = 0; m < n_; ++m) {
        dy(m) = fixed_[static_cast<std::size_t>(m)] ? 0.0 : mismatch_(m) / d_(m);
      }
      return;
    }
    for (Eigen::Index m = 0; m < n_; ++m) {
      if (fixed_[static_cast<std::size_t>(m)]) {
        dy(m) = 0.0;
        dy(n_ + m) = 0.0;
        continue;
      }
      const double w = y(n_ + m);
      dy(m) = w;
      dy(n_ + m) = (-d_(m) * w + mismatch_(m)) / j_(m);
    }
  }

  // Frequency reported for a stacked state.
  void omega_of(const Vector& y, Vector& omega) {
    if (mode_ == Mode::Full) {
      omega = y.tail(n_);
      return;
    }
    mismatch(y.data(), mismatch_.data());
    for (Eigen::Index m = 0; m < n_; ++m) {
      omega(m) = fixed_[static_cast<std::size_t>(m)] ? 0.0 : mismatch_(m) / d_(m);
    }
  }

 private:
  Eigen::Index n_;
  Mode mode_;
  Vector p_, d_, j_;
  std::vector<bool> fixed_;
  const Matrix* k_ = nullptr;
  Vector mismatch_;
};

class Rk4 {
 public:
  explicit Rk4(Eigen::Index dim) : k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  void step(Kernel& f, Vector& y, double h) {
    f(y, k1_);
    tmp_ = y + 0.5 * h * k1_;
    f(tmp_, k2_);
    tmp_ = y + 0.5 * h * k2_;
    f(tmp_, k3_);
    tmp_ = y + h * k3_;
    f(tmp_, k4_);
    y += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  Vector k1_, k2_, k3_, k4_, tmp_;
};

// Dormand-Prince 5(4) with FSAL reuse disabled for simplicity at switches.
class DormandPrince {
 public:
  explicit DormandPrince(Eigen::Index dim) : k_(7, Vector(dim)), tmp_(dim), y5_(dim), err_(dim) {}

  // Returns the scaled error norm; y5 holds the 5th-order solution.
  double attempt(Kernel& f, const Vector& y, double h, double rtol, double atol) {
    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                            a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                            a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                            b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
    static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                            e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

    f(y, k_[0]);
    tmp_ = y + h * a21 * k_[0];
    f(tmp_, k_[1]);
    tmp_ = y + h * (a31 * k_[0] + a32 * k_[1]);
    f(tmp_, k_[2]);
    tmp_ = y + h * (a41 * k_[0] + a42 * k_[1] + a43 * k_[2]);
    f(tmp_, k_[3]);
    tmp_ = y + h * (a51 * k_[0] + a52 * k_[1] + a53 * k_[2] + a54 * k_[3]);
    f(tmp_, k_[4]);
    tmp_ = y + h * (a61 * k_[0] + a62 * k_[1] + a63 * k_[2] + a64 * k_[3] + a65 * k_[4]);
    f(tmp_, k_[5]);
    y5_ = y + h * (b1 * k_[0] + b3 * k_[2] + b4 * k_[3] + b5 * k_[4] + b6 * k_[5]);
    f(y5_, k_[6]);
    err_ = h * (e1 * k_[0] + e3 * k_[2] + e4 * k_[3] + e5 * k_[4] + e6 * k_[5] + e7 * k_[6]);

    double norm = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double scale = atol + rtol * std::max(std::abs(y(i)), std::abs(y5_(i)));
      norm = std::max(norm, std::abs(err_(i)) / scale);
    }
    return std::isfinite(norm) ? norm : std::numeric_limits<double>::infinity();
  }

  const Vector& solution() const { return y5_; }

 private:
  std::vector<Vector> k_;
  Vector tmp_, y5_, err_;
};

}  // namespace

Vector power_mismatch(const Vector& theta, const NetworkModel& model, const Matrix& k) {
  check_dims(theta, model, k);
  Kernel kernel(model, Mode::Reduced);
  kernel.set_k(&k);
  Vector out(theta.size());
  kernel.mismatch(theta.data(), out.data());
  return out;
}

StateDerivative full_rhs(const SystemState& state, const NetworkModel& model, const Matrix& k) {
  check_dims(state.theta, model, k);
  if (state.omega.size() != state.theta.size()) {
    throw Error(ErrorKind::Dimension, "omega and theta lengths differ");
  }
  for (const auto& m : model.machines()) {
    if (!m.infinite && !(m.inertia > 0.0)) {
      throw Error(ErrorKind::Validation,
                  fmt::format("machine '{}' has zero inertia; use the reduced (inertia-free) "
                              "dynamics for J = 0",
                              m.id));
    }
  }
  const auto n = state.theta.size();
  Vector y(2 * n);
  y << state.theta, state.omega;
  Vector dy(2 * n);
  Kernel kernel(model, Mode::Full);
  kernel.set_k(&k);
  kernel(y, dy);
  return {dy.head(n), dy.tail(n)};
}

Vector reduced_rhs(const Vector& theta, const NetworkModel& model, const Matrix& k) {
  check_dims(theta, model, k);
  Kernel kernel(model, Mode::Reduced);
  kernel.set_k(&k);
  Vector dy(theta.size());
  kernel(theta, dy);
  return dy;
}

Matrix reduced_jacobian(const Vector& theta, const NetworkModel& model, const Matrix& k) {
  check_dims(theta, model, k);
  require_damped(model);
  const auto n = theta.size();
  Matrix jac = Matrix::Zero(n, n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const auto& mach = model.machine(static_cast<std::size_t>(m));
    if (mach.infinite) continue;
    double diag = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == m || k(m, j) == 0.0) continue;
      const double c = k(m, j) * std::cos(theta(m) - theta(j)) / mach.droop;
      jac(m, j) = c;
      diag -= c;
    }
    jac(m, m) = diag;
  }
  return jac;
}

void SwitchSchedule::add(double time, Matrix k, std::string label, bool require_connected) {
  if (!std::isfinite(time)) throw Error(ErrorKind::Validation, "switch time must be finite");
  if (!switches_.empty() && !(time > switches_.back().time)) {
    throw Error(ErrorKind::Validation,
                fmt::format("switch times must be strictly increasing ({} after {})", time,
                            switches_.back().time));
  }
  validate_k(k, require_connected);
  switches_.push_back({time, std::move(k), std::move(label)});
}

double IntegratorConfig::step_for(Mode mode) const {
  const double h = step.value_or(mode == Mode::Full ? 1e-4 : 1e-3);
  if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorKind::Validation, "step must be > 0");
  return h;
}

Eigen::Map<const Vector> TrajectoryRecord::theta(std::size_t i) const {
  if (i >= size()) throw Error(ErrorKind::Dimension, "trajectory index out of range");
  return Eigen::Map<const Vector>(theta_.data() + i * n_, static_cast<Eigen::Index>(n_));
}

Eigen::Map<const Vector> TrajectoryRecord::omega(std::size_t i) const {
  if (i >= size()) throw Error(ErrorKind::Dimension, "trajectory index out of range");
  return Eigen::Map<const Vector>(omega_.data() + i * n_, static_cast<Eigen::Index>(n_));
}

SystemState TrajectoryRecord::state(std::size_t i) const {
  return {theta(i), omega(i), time(i)};
}

void TrajectoryRecord::append(double t, const Vector& theta, const Vector& omega) {
  if (static_cast<std::size_t>(theta.size()) != n_ || static_cast<std::size_t>(omega.size()) != n_) {
    throw Error(ErrorKind::Dimension, "appended state has the wrong length");
  }
  if (!times_.empty() && !(t > times_.back())) {
    throw Error(ErrorKind::Validation, "trajectory times must be increasing");
  }
  times_.push_back(t);
  theta_.insert(theta_.end(), theta.data(), theta.data() + n_);
  omega_.insert(omega_.end(), omega.data(), omega.data() + n_);
}

TrajectoryRecord integrate(const NetworkModel& model, const SystemState& initial,
                           const SwitchSchedule& schedule, const IntegratorConfig& config,
                           Mode mode, const StopCondition& stop) {
  const auto n = static_cast<Eigen::Index>(model.size());
  check_dims(initial.theta, model, model.k());
  if (!initial.theta.allFinite()) throw Error(ErrorKind::Validation, "initial angles not finite");
  if (mode == Mode::Full) {
    if (initial.omega.size() != n) {
      throw Error(ErrorKind::Dimension, "initial omega has the wrong length");
    }
    if (!initial.omega.allFinite()) throw Error(ErrorKind::Validation, "initial omega not finite");
    for (std::size_t i = 0; i < model.size(); ++i) {
      const auto& m = model.machine(i);
      if (m.infinite && initial.omega(static_cast<Eigen::Index>(i)) != 0.0) {
        throw Error(ErrorKind::Validation, "infinite bus must start with zero frequency deviation");
      }
      if (!m.infinite && !(m.inertia > 0.0)) {
        throw Error(ErrorKind::Validation,
                    fmt::format("machine '{}' has zero inertia; use the reduced (inertia-free) "
                                "dynamics for J = 0",
                                m.id));
      }
    }
  }
  for (const auto& sw : schedule.switches()) {
    if (sw.k.rows() != n) throw Error(ErrorKind::Dimension, "switch K has the wrong size");
  }
  const double t0 = initial.time;
  const double t_end = config.horizon;
  if (!(t_end > t0)) throw Error(ErrorKind::Validation, "horizon must exceed the initial time");
  if (!schedule.empty() && schedule.switches().front().time < t0) {
    throw Error(ErrorKind::Validation, "first switch precedes the initial time");
  }
  const double h_nominal = config.step_for(mode);
  const std::size_t record_every = std::max<std::size_t>(1, config.record_every);

  Kernel f(model, mode);
  TrajectoryRecord record(model.size(), mode);
  record.set_horizon(t_end);

  Vector y(f.dimension());
  if (mode == Mode::Full) {
    y << initial.theta, initial.omega;
  } else {
    y = initial.theta;
  }
  Vector omega(n);

  const auto& switches = schedule.switches();
  std::size_t next = 0;
  const Matrix* active = &model.k();
  while (next < switches.size() && switches[next].time <= t0) {
    record.add_event(switches[next].time, switches[next].label);
    active = &switches[next].k;
    ++next;
  }
  f.set_k(active);

  auto emit = [&](double t) {
    f.omega_of(y, omega);
    record.append(t, y.head(n), omega);
  };
  auto finished = [&](double t) {
    if (!y.allFinite()) {
      record.mark_diverged();
      return true;
    }
    if (stop) {
      f.omega_of(y, omega);
      if (stop(t, y.head(n), omega)) {
        record.append(t, y.head(n), omega);
        record.mark_stopped();
        return true;
      }
    }
    return false;
  };

  emit(t0);
  if (stop && finished(t0)) return record;

  Rk4 rk4(f.dimension());
  DormandPrince dp(f.dimension());
  double h_adapt = h_nominal;
  double t_a = t0;
  while (t_a < t_end) {
    const double t_b = next < switches.size() ? std::min(switches[next].time, t_end) : t_end;
    if (!config.adaptive) {
      const double len = t_b - t_a;
      const auto steps = std::max<long>(1, static_cast<long>(std::ceil(len / h_nominal - 1e-9)));
      const double hs = len / static_cast<double>(steps);
      for (long i = 1; i <= steps; ++i) {
        rk4.step(f, y, hs);
        const double t = i == steps ? t_b : t_a + static_cast<double>(i) * hs;
        if (!y.allFinite()) {
          record.mark_diverged();
          return record;
        }
        if (stop) {
          f.omega_of(y, omega);
          if (stop(t, y.head(n), omega)) {
            record.append(t, y.head(n), omega);
            record.mark_stopped();
            return record;
          }
        }
        if (i == steps || static_cast<std::size_t>(i) % record_every == 0) emit(t);
      }
    } else {
      double t = t_a;
      std::size_t accepted = 0;
      while (t < t_b) {
        double h = std::min(h_adapt, t_b - t);
        const bool lands = h >= t_b - t;
        const double err = dp.attempt(f, y, h, config.rel_tol, config.abs_tol);
        if (err <= 1.0) {
          y = dp.solution();
          t = lands ? t_b : t + h;
          ++accepted;
          if (finished(t)) return record;
          if (t == t_b || accepted % record_every == 0) emit(t);
          const double grow = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
          if (!lands) h_adapt = h * grow;
        } else {
          h_adapt = h * std::max(0.2, 0.9 * std::pow(err, -0.2));
          if (!(h_adapt >= config.min_step)) {
            record.mark_diverged();
            return record;
          }
        }
      }
    }
    t_a = t_b;
    while (next < switches.size() && switches[next].time <= t_a) {
      if (switches[next].time <= t_end) {
        record.add_event(switches[next].time, switches[next].label);
        active = &switches[next].k;
      }
      ++next;
    }
    f.set_k(active);
  }
  return record;
}

}  // namespace swingcert
