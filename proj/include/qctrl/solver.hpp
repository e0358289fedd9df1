// solver.hpp: RK4 integration of the finite-temperature non-Markovian master
// equation for a driven qubit with auxiliary operators O_z, O_w.
//
//   drho/dt = -i[H, rho] + ([L, rho Oz^+] - [L^+, Oz rho]) + ([L^+, rho Ow^+] - [L, Ow rho])
//   dOz/dt  = (Gamma T gamma / 2 - i Gamma gamma^2 / 2) L - gamma Oz - i[H + L^+ Oz + L Ow, Oz]
//   dOw/dt  = (Gamma T gamma / 2) L^+ - gamma Ow - i[H + L^+ Oz + L Ow, Ow]
//
// with H = build_hamiltonian(s, c) and L = sigma_minus. Ordering::as_printed
// switches the dissipator to ([L, rho Oz^+] - [L^+, rho Oz]) + ([L, rho Ow^+] - [L^+, rho Ow]),
// which is trace preserving but neither Hermiticity nor positivity preserving.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "qctrl/dynamics.hpp"
#include "qctrl/error.hpp"

namespace qctrl {

struct SolverState {
  ComplexMatrix2 rho = ComplexMatrix2::Zero();
  ComplexMatrix2 obar_z = ComplexMatrix2::Zero();
  ComplexMatrix2 obar_w = ComplexMatrix2::Zero();

  SolverState& operator+=(const SolverState& o) {
    rho += o.rho;
    obar_z += o.obar_z;
    obar_w += o.obar_w;
    return *this;
  }
  friend SolverState operator+(SolverState a, const SolverState& b) { return a += b; }
  friend SolverState operator*(double k, const SolverState& a) {
    return {k * a.rho, k * a.obar_z, k * a.obar_w};
  }
};

/// s(t) and c(t) sampled on a uniform grid t_i = i * dt, i = 0..n_steps.
struct ControlGrid {
  double t_total = 0.0;
  double dt = 0.0;
  std::vector<double> s_values;
  std::vector<double> c_values;

  std::size_t n_steps() const { return s_values.empty() ? 0 : s_values.size() - 1; }
  double time(std::size_t i) const { return static_cast<double>(i) * dt; }

  void validate() const {
    if (s_values.size() != c_values.size()) throw ConfigError("control grid: s and c lengths differ");
    if (s_values.size() < 2) throw ConfigError("control grid: needs at least two samples");
    if (!(dt > 0.0)) throw ConfigError("control grid: dt must be > 0");
    if (std::abs(dt * static_cast<double>(n_steps()) - t_total) > 1e-12 * std::max(1.0, t_total))
      throw ConfigError("control grid: dt * n_steps != t_total");
  }

  /// Keeps every `stride`-th sample.
  ControlGrid subsample(std::size_t stride) const {
    if (stride == 0 || n_steps() % stride != 0)
      throw ConfigError("control grid: stride must divide the step count");
    ControlGrid out{t_total, dt * static_cast<double>(stride), {}, {}};
    for (std::size_t i = 0; i < s_values.size(); i += stride) {
      out.s_values.push_back(s_values[i]);
      out.c_values.push_back(c_values[i]);
    }
    return out;
  }
};

/// Number of steps for a window, rejecting windows that are not a multiple of dt.
inline std::size_t steps_for(double t_total, double dt) {
  const double n = t_total / dt;
  const double rounded = std::round(n);
  if (!(rounded >= 1.0) || std::abs(n - rounded) > 1e-9)
    throw ConfigError("t_total must be a positive integer multiple of dt");
  return static_cast<std::size_t>(rounded);
}

struct Trajectory {
  std::vector<double> times;
  std::vector<BlochVector> bloch;
  std::vector<double> fidelity;
  std::vector<double> trace_error;
  std::vector<double> hermiticity_error;
  SolverState final_state;

  double final_fidelity() const { return fidelity.back(); }
  double max_trace_error() const;
  double max_hermiticity_error() const;
};

inline double Trajectory::max_trace_error() const {
  double m = 0.0;
  for (double e : trace_error) m = std::max(m, e);
  return m;
}

inline double Trajectory::max_hermiticity_error() const {
  double m = 0.0;
  for (double e : hermiticity_error) m = std::max(m, e);
  return m;
}

enum class Ordering { standard, as_printed };

inline Ordering parse_ordering(std::string_view name) {
  if (name == "standard") return Ordering::standard;
  if (name == "as-printed" || name == "as_printed") return Ordering::as_printed;
  throw ConfigError("unknown ordering '" + std::string(name) + "'");
}

struct SolverOptions {
  Ordering ordering = Ordering::standard;
  bool symmetrize = false;            ///< rho <- (rho + rho^+)/2 after every step
  std::size_t record_stride = 1;      ///< record every n-th grid point (the last one always)
  double trace_divergence_tol = 1e-4;
};

// --------------------------- Right-hand side --------------------------------

inline SolverState master_rhs(const SolverState& x, double s, double c, const BathParams& bath,
                              Ordering ordering = Ordering::standard) {
  const ComplexMatrix2 h = build_hamiltonian(s, c);
  const ComplexMatrix2 l = sigma_minus();
  const ComplexMatrix2 ld = sigma_plus();
  const ComplexMatrix2& rho = x.rho;
  const ComplexMatrix2 oz_dag = x.obar_z.adjoint();
  const ComplexMatrix2 ow_dag = x.obar_w.adjoint();

  SolverState d;
  d.rho = -kI * commutator(h, rho);
  if (ordering == Ordering::standard) {
    d.rho += commutator(l, rho * oz_dag) - commutator(ld, x.obar_z * rho);
    d.rho += commutator(ld, rho * ow_dag) - commutator(l, x.obar_w * rho);
  } else {
    d.rho += commutator(l, rho * oz_dag) - commutator(ld, rho * x.obar_z);
    d.rho += commutator(l, rho * ow_dag) - commutator(ld, rho * x.obar_w);
  }

  const double g = bath.coupling;
  const double w = bath.cutoff;
  const double temp = bath.temperature;
  const Complex source_z(0.5 * g * temp * w, -0.5 * g * w * w);
  const double source_w = 0.5 * g * temp * w;
  const ComplexMatrix2 h_eff = h + ld * x.obar_z + l * x.obar_w;

  d.obar_z = source_z * l - w * x.obar_z - kI * commutator(h_eff, x.obar_z);
  d.obar_w = source_w * ld - w * x.obar_w - kI * commutator(h_eff, x.obar_w);
  return d;
}

/// One classical RK4 step from grid point i to i + 1. Controls at the half step
/// are the average of the two adjacent samples.
inline SolverState rk4_step(const SolverState& x, std::size_t i, const ControlGrid& controls,
                            const BathParams& bath, double dt, Ordering ordering = Ordering::standard) {
  if (i + 1 >= controls.s_values.size()) throw ConfigError("rk4_step: index beyond control grid");
  if (dt == 0.0) return x;
  const double s0 = controls.s_values[i], s1 = controls.s_values[i + 1];
  const double c0 = controls.c_values[i], c1 = controls.c_values[i + 1];
  const double sm = 0.5 * (s0 + s1), cm = 0.5 * (c0 + c1);
  const SolverState k1 = master_rhs(x, s0, c0, bath, ordering);
  const SolverState k2 = master_rhs(x + (0.5 * dt) * k1, sm, cm, bath, ordering);
  const SolverState k3 = master_rhs(x + (0.5 * dt) * k2, sm, cm, bath, ordering);
  const SolverState k4 = master_rhs(x + dt * k3, s1, c1, bath, ordering);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates from initial_rho with O_z(0) = O_w(0) = 0 over the whole grid.
inline Trajectory evolve(const ComplexMatrix2& initial_rho, const ControlGrid& controls,
                         const BathParams& bath, const SolverOptions& opts = {}) {
  controls.validate();
  bath.validate();
  if (!is_hermitian(initial_rho, 1e-10) || std::abs(initial_rho.trace() - 1.0) > 1e-10)
    throw ConfigError("evolve: initial rho must be Hermitian with unit trace");
  if (opts.record_stride == 0) throw ConfigError("evolve: record_stride must be >= 1");

  const std::size_t n = controls.n_steps();
  Trajectory traj;
  const std::size_t n_rec = n / opts.record_stride + 2;
  traj.times.reserve(n_rec);
  traj.bloch.reserve(n_rec);
  traj.fidelity.reserve(n_rec);
  traj.trace_error.reserve(n_rec);
  traj.hermiticity_error.reserve(n_rec);

  SolverState x;
  x.rho = initial_rho;

  auto record = [&](std::size_t i) {
    const double tr_err = std::abs(x.rho.trace() - 1.0);
    if (!(tr_err <= opts.trace_divergence_tol))
      throw NumericalError("trace divergence at step " + std::to_string(i) + ": |Tr rho - 1| = " +
                           std::to_string(tr_err));
    const double s = std::clamp(controls.s_values[i], 0.0, 1.0);
    traj.times.push_back(controls.time(i));
    traj.bloch.push_back(bloch_from_rho(x.rho));
    traj.fidelity.push_back(fidelity(x.rho, instantaneous_ground_state(s), opts.trace_divergence_tol));
    traj.trace_error.push_back(tr_err);
    traj.hermiticity_error.push_back(hermiticity_error(x.rho));
  };

  record(0);
  for (std::size_t i = 0; i < n; ++i) {
    x = rk4_step(x, i, controls, bath, controls.dt, opts.ordering);
    if (opts.symmetrize) x.rho = 0.5 * (x.rho + x.rho.adjoint()).eval();
    if ((i + 1) % opts.record_stride == 0 || i + 1 == n) record(i + 1);
  }
  traj.final_state = x;
  return traj;
}

/// Lorentz-Drude spectral density J(w) = (Gamma / pi) w / (1 + (w / gamma)^2).
inline double spectral_density(double omega, const BathParams& bath) {
  const double r = omega / bath.cutoff;
  return bath.coupling / std::numbers::pi * omega / (1.0 + r * r);
}

}  // namespace qctrl
