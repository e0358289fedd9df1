#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>

#include "qctrl/pulse.hpp"
#include "qctrl/solver.hpp"

namespace {

using namespace qctrl;

ComplexMatrix2 random_complex(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexMatrix2 a;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) a(i, j) = Complex(n(rng), n(rng));
  return a;
}

ComplexMatrix2 random_density(std::mt19937_64& rng) {
  const ComplexMatrix2 a = random_complex(rng);
  ComplexMatrix2 rho = a * a.adjoint();
  return rho / rho.trace();
}

ControlGrid linear_grid(double t_total, double dt, double c = 0.0) {
  return make_grid([=](double t) { return t / t_total; }, [=](double) { return c; }, t_total, dt);
}

ComplexMatrix2 ket0_projector() { return projector(instantaneous_ground_state(0.0)); }

TEST(MasterRhs, ClosedSystemReducesToVonNeumann) {
  std::mt19937_64 rng(1);
  SolverState x;
  x.rho = random_density(rng);
  const BathParams bath{0.0, 3.0, 10.0};
  const SolverState d = master_rhs(x, 0.3, 1.7, bath);
  const ComplexMatrix2 h = build_hamiltonian(0.3, 1.7);
  EXPECT_LT((d.rho - (-kI * commutator(h, x.rho))).norm(), 1e-14);
  EXPECT_EQ(d.obar_z.norm(), 0.0);
  EXPECT_EQ(d.obar_w.norm(), 0.0);
}

TEST(MasterRhs, TracelessForArbitraryInputs) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto ordering : {Ordering::standard, Ordering::as_printed}) {
    for (int i = 0; i < 50; ++i) {
      const SolverState x{random_complex(rng), random_complex(rng), random_complex(rng)};
      const BathParams bath{0.05 * u(rng), 1.0 + 29.0 * u(rng), 5.0 + 10.0 * u(rng)};
      const SolverState d = master_rhs(x, u(rng), 60.0 * (u(rng) - 0.5), bath, ordering);
      EXPECT_LT(std::abs(d.rho.trace()), 1e-12);
    }
  }
}

TEST(MasterRhs, HandExpandedExample) {
  // rho = |0><0|, O_z = L, O_w = 0, H = sigma_z, Gamma = 0, gamma = 2.
  // Standard ordering: rho Oz^+ = 0 and Oz rho = 0, so drho = 0.
  // H_eff = sigma_z + L^+ L = diag(-1, 2), [H_eff, L] = -3 L, so dOz = (-gamma + 3i) L.
  SolverState x;
  x.rho = ket0_projector();
  x.obar_z = sigma_minus();
  const BathParams bath{0.0, 2.0, 10.0};
  const SolverState d = master_rhs(x, 0.0, 0.0, bath);
  EXPECT_LT(d.rho.norm(), 1e-15);
  EXPECT_LT((d.obar_z - Complex(-2.0, 3.0) * sigma_minus()).norm(), 1e-15);
  EXPECT_LT(d.obar_w.norm(), 1e-15);

  // As printed: -[L^+, rho Oz] = -[|1><0|, |0><1|] = |0><0| - |1><1|; pushes population past 1.
  const SolverState p = master_rhs(x, 0.0, 0.0, bath, Ordering::as_printed);
  ComplexMatrix2 expected;
  expected << 1.0, 0.0, 0.0, -1.0;
  EXPECT_LT((p.rho - expected).norm(), 1e-15);
}

TEST(MasterRhs, StandardOrderingDecaysExcitedState) {
  // rho = |1><1|, O_z = L: drho = 2 (|0><0| - |1><1|), emission at rate 2 Re(1).
  SolverState x;
  x.rho = sigma_plus() * sigma_minus();
  x.obar_z = sigma_minus();
  const SolverState d = master_rhs(x, 0.0, 0.0, BathParams{0.0, 2.0, 0.0});
  ComplexMatrix2 expected;
  expected << 2.0, 0.0, 0.0, -2.0;
  EXPECT_LT((d.rho - expected).norm(), 1e-15);
}

TEST(MasterRhs, StandardOrderingPreservesHermiticity) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    SolverState x{random_density(rng), random_complex(rng), random_complex(rng)};
    const SolverState d = master_rhs(x, 0.4, 3.0, BathParams{0.03, 4.0, 10.0});
    EXPECT_LT(hermiticity_error(d.rho), 1e-13);
  }
}

TEST(Rk4, ZeroDurationIsIdentity) {
  std::mt19937_64 rng(5);
  const SolverState x{random_density(rng), random_complex(rng), random_complex(rng)};
  const SolverState y = rk4_step(x, 0, linear_grid(1.0, 0.1), BathParams{0.03, 2.0, 10.0}, 0.0);
  EXPECT_EQ(y.rho, x.rho);
  EXPECT_EQ(y.obar_z, x.obar_z);
}

TEST(Rk4, MatchesExactPropagatorForFrozenHamiltonian) {
  // Oracle: exp(-i H dt) from the eigendecomposition of H.
  const double s = 0.3, c = 2.0;
  const ComplexMatrix2 h = build_hamiltonian(s, c);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix2> es(h);
  std::mt19937_64 rng(6);
  const ComplexMatrix2 rho = random_density(rng);
  double prev_err = 0.0;
  for (double dt : {0.04, 0.02, 0.01}) {
    ControlGrid g{dt, dt, {s, s}, {c, c}};
    const Eigen::Vector2cd phases = (-kI * dt * es.eigenvalues().cast<Complex>()).array().exp();
    const ComplexMatrix2 u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    const ComplexMatrix2 exact = u * rho * u.adjoint();
    const SolverState y = rk4_step(SolverState{rho, {}, {}}, 0, g, BathParams{}, dt);
    const double err = (y.rho - exact).norm();
    const double scale = std::pow(2.0 * h.norm() * dt, 5);
    EXPECT_LT(err, scale);
    if (prev_err > 0.0) EXPECT_NEAR(prev_err / err, 32.0, 3.0);  // local error O(dt^5)
    prev_err = err;
  }
}

// Smooth benchmark: linear s, constant c, open bath. Controls are exactly linear on
// every grid, so the only discretization error is the integrator's.
SolverState benchmark_endpoint(double dt) {
  const ControlGrid g = linear_grid(2.0, dt, 0.5);
  return evolve(ket0_projector(), g, BathParams{0.03, 4.0, 10.0}).final_state;
}

TEST(Rk4, SelfConvergenceIsFourthOrder) {
  const SolverState ref = benchmark_endpoint(0.000625);
  std::vector<double> dts{0.04, 0.02, 0.01, 0.005};
  std::vector<double> errs;
  for (double dt : dts) errs.push_back((benchmark_endpoint(dt).rho - ref.rho).norm());
  for (std::size_t i = 1; i < errs.size(); ++i) {
    const double slope = std::log(errs[i - 1] / errs[i]) / std::log(dts[i - 1] / dts[i]);
    EXPECT_GE(slope, 3.7) << "dt=" << dts[i];
    EXPECT_LE(slope, 4.3) << "dt=" << dts[i];
  }
}

TEST(Evolve, AdiabaticRegimeAtLongTime) {
  const Trajectory tr = evolve(ket0_projector(), linear_grid(10.0, 0.005), BathParams{});
  EXPECT_GE(tr.final_fidelity(), 0.99);
  EXPECT_NEAR(tr.fidelity.front(), 1.0, 1e-15);
}

TEST(Evolve, ClosedSystemIsPure) {
  const ControlGrid g = make_grid([](double t) { return named_trajectory(TrajectoryShape::sine, t, 3.0); },
                                  [](double t) { return 5.0 * std::sin(2.0 * std::numbers::pi * t); }, 3.0, 0.005);
  const Trajectory tr = evolve(ket0_projector(), g, BathParams{0.0, 2.0, 10.0});
  for (const auto& b : tr.bloch) EXPECT_NEAR(b.norm(), 1.0, 1e-6);
  EXPECT_EQ(tr.final_state.obar_z.norm(), 0.0);
  EXPECT_EQ(tr.final_state.obar_w.norm(), 0.0);
}

TEST(Evolve, EnvironmentLowersFidelity) {
  const double closed = evolve(ket0_projector(), linear_grid(10.0, 0.005), BathParams{}).final_fidelity();
  const Trajectory open = evolve(ket0_projector(), linear_grid(10.0, 0.005), BathParams{0.03, 2.0, 10.0});
  EXPECT_LT(open.final_fidelity(), closed);
  for (double f : open.fidelity) {
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0 + 1e-8);
  }
  EXPECT_LE(open.max_trace_error(), 1e-8);
  EXPECT_LE(open.max_hermiticity_error(), 1e-6 * 10.0);
}

TEST(Evolve, RecordStrideSubsamples) {
  SolverOptions opts;
  opts.record_stride = 10;
  const Trajectory full = evolve(ket0_projector(), linear_grid(1.0, 0.005), BathParams{0.02, 3.0, 7.0});
  const Trajectory sub = evolve(ket0_projector(), linear_grid(1.0, 0.005), BathParams{0.02, 3.0, 7.0}, opts);
  ASSERT_EQ(sub.bloch.size(), 21u);
  for (std::size_t i = 0; i < sub.bloch.size(); ++i) EXPECT_EQ(sub.bloch[i], full.bloch[10 * i]);
}

TEST(Evolve, ReportsTraceDivergence) {
  // Step far outside RK4 stability for this drive.
  const ControlGrid g = linear_grid(5.0, 0.5, 200.0);
  EXPECT_THROW(evolve(ket0_projector(), g, BathParams{0.05, 30.0, 15.0}), NumericalError);
}

TEST(Evolve, RejectsInvalidInputs) {
  EXPECT_THROW(evolve(identity2(), linear_grid(1.0, 0.1), BathParams{}), ConfigError);
  EXPECT_THROW(evolve(ket0_projector(), linear_grid(1.0, 0.1), BathParams{-1.0, 1.0, 1.0}), ConfigError);
  ControlGrid bad = linear_grid(1.0, 0.1);
  bad.c_values.pop_back();
  EXPECT_THROW(evolve(ket0_projector(), bad, BathParams{}), ConfigError);
}

TEST(Evolve, AsPrintedOrderingLeavesTheBlochBall) {
  SolverOptions opts;
  opts.ordering = Ordering::as_printed;
  const Trajectory tr = evolve(ket0_projector(), linear_grid(10.0, 0.005), BathParams{0.03, 2.0, 10.0}, opts);
  EXPECT_GT(tr.bloch.back().norm(), 1.1);
  EXPECT_GT(tr.max_hermiticity_error(), 0.1);
}

TEST(SpectralDensity, ClosedFormValues) {
  const BathParams bath{0.03, 4.0, 10.0};
  EXPECT_EQ(spectral_density(0.0, bath), 0.0);
  EXPECT_NEAR(spectral_density(4.0, bath), 0.03 * 4.0 / (2.0 * std::numbers::pi), 1e-15);
  EXPECT_LT(spectral_density(1e6, bath), 1e-6);
  for (double w : {0.5, 2.0, 3.9, 4.1, 8.0, 40.0}) EXPECT_LT(spectral_density(w, bath), spectral_density(4.0, bath));
}

}  // namespace
