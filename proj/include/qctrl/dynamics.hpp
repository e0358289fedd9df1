// dynamics.hpp: two-level operators, the interpolating Hamiltonian, ground
// states, Bloch/density-matrix conversion and adiabatic fidelity.
//
// Conventions: hbar = 1, everything dimensionless. Basis order (|0>, |1>) with
// sigma_z = diag(-1, +1), so |0> is the sigma_z ground state and
// L = sigma_minus = |0><1| lowers |1> -> |0>.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>

#include "qctrl/error.hpp"

namespace qctrl {

using Complex = std::complex<double>;
using ComplexMatrix2 = Eigen::Matrix2cd;
using StateVector2 = Eigen::Vector2cd;

inline constexpr Complex kI{0.0, 1.0};

// --------------------------- Pauli operators --------------------------------

inline ComplexMatrix2 identity2() { return ComplexMatrix2::Identity(); }

inline ComplexMatrix2 sigma_x() {
  ComplexMatrix2 m;
  m << 0.0, 1.0,
       1.0, 0.0;
  return m;
}

inline ComplexMatrix2 sigma_y() {
  ComplexMatrix2 m;
  m << 0.0, -kI,
       kI, 0.0;
  return m;
}

inline ComplexMatrix2 sigma_z() {
  ComplexMatrix2 m;
  m << -1.0, 0.0,
        0.0, 1.0;
  return m;
}

inline ComplexMatrix2 sigma_minus() {  // |0><1|
  ComplexMatrix2 m;
  m << 0.0, 1.0,
       0.0, 0.0;
  return m;
}

inline ComplexMatrix2 sigma_plus() { return sigma_minus().adjoint(); }

inline ComplexMatrix2 commutator(const ComplexMatrix2& a, const ComplexMatrix2& b) {
  return a * b - b * a;
}

inline double hermiticity_error(const ComplexMatrix2& m) { return (m - m.adjoint()).norm(); }

inline bool is_hermitian(const ComplexMatrix2& m, double tol = 1e-12) {
  return hermiticity_error(m) <= tol;
}

// --------------------------- Domain values ----------------------------------

/// Pauli expectation values (<sigma_x>, <sigma_y>, <sigma_z>).
struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double dot(const BlochVector& o) const { return x * o.x + y * o.y + z * o.z; }
  bool operator==(const BlochVector&) const = default;
};

/// Lorentz-Drude bath: coupling Gamma, cutoff gamma (inverse memory time), temperature T.
struct BathParams {
  double coupling = 0.0;
  double cutoff = 1.0;
  double temperature = 0.0;

  void validate() const {
    if (!(coupling >= 0.0) || !std::isfinite(coupling))
      throw ConfigError("bath coupling must be finite and >= 0");
    if (!(cutoff > 0.0) || !std::isfinite(cutoff))
      throw ConfigError("bath cutoff must be finite and > 0");
    if (!(temperature >= 0.0) || !std::isfinite(temperature))
      throw ConfigError("bath temperature must be finite and >= 0");
  }
  bool operator==(const BathParams&) const = default;
};

// --------------------------- Hamiltonian ------------------------------------

/// H = (1 + c) [(1 - s) sigma_z + s sigma_x]. With c = 0 this is the bare
/// interpolation between H_i = sigma_z and H_f = sigma_x.
inline ComplexMatrix2 build_hamiltonian(double s, double c) {
  const double scale = 1.0 + c;
  ComplexMatrix2 h;
  h << -scale * (1.0 - s), scale * s,
        scale * s, scale * (1.0 - s);
  return h;
}

/// Spectral gap sqrt((1-s)^2 + s^2) of the bare interpolation (half the level splitting).
inline double interpolation_energy(double s) { return std::hypot(1.0 - s, s); }

/// Lowest eigenvector of (1 - s) sigma_z + s sigma_x, first amplitude real and >= 0.
inline StateVector2 instantaneous_ground_state(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("instantaneous_ground_state: s must lie in [0, 1]");
  // Unnormalized (E + 1 - s, -s) solves the eigenproblem at eigenvalue -E.
  const double e = interpolation_energy(s);
  const double a = e + 1.0 - s;
  const double b = -s;
  const double n = std::hypot(a, b);
  StateVector2 v;
  v << Complex(a / n, 0.0), Complex(b / n, 0.0);
  return v;
}

/// Bloch direction of the instantaneous ground state, -(s, 0, 1 - s) / E.
inline BlochVector ground_state_bloch(double s) {
  const double e = interpolation_energy(s);
  return {-s / e, 0.0, -(1.0 - s) / e};
}

// --------------------------- Bloch <-> rho ----------------------------------

inline BlochVector bloch_from_rho(const ComplexMatrix2& rho) {
  // Re Tr(rho sigma) written out for the diag(-1, 1) sigma_z convention.
  return {(rho(0, 1) + rho(1, 0)).real(),
          rho(1, 0).imag() - rho(0, 1).imag(),
          (rho(1, 1) - rho(0, 0)).real()};
}

inline ComplexMatrix2 rho_from_bloch(const BlochVector& b) {
  ComplexMatrix2 rho;
  rho << 0.5 * (1.0 - b.z), 0.5 * Complex(b.x, -b.y),
         0.5 * Complex(b.x, b.y), 0.5 * (1.0 + b.z);
  return rho;
}

inline ComplexMatrix2 projector(const StateVector2& v) { return v * v.adjoint(); }

// --------------------------- Fidelity ---------------------------------------

/// F = sqrt(<E0| rho |E0>), clamped at 0 from below.
inline double fidelity(const ComplexMatrix2& rho, const StateVector2& ground, double trace_tol = 1e-6) {
  const Complex tr = rho.trace();
  if (!std::isfinite(tr.real()) || std::abs(tr - 1.0) > trace_tol)
    throw NumericalError("invalid density matrix: trace " + std::to_string(tr.real()) + " deviates from 1");
  const Complex overlap = ground.adjoint() * rho * ground;
  return std::sqrt(std::max(0.0, overlap.real()));
}

/// Fidelity computed directly from a Bloch vector against the ground state at s.
/// Equivalent to fidelity(rho_from_bloch(b), instantaneous_ground_state(s)).
inline double fidelity_from_bloch(const BlochVector& b, double s) {
  return std::sqrt(std::max(0.0, 0.5 * (1.0 + b.dot(ground_state_bloch(s)))));
}

}  // namespace qctrl
