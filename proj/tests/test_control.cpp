#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qctrl/control.hpp"

namespace {

using namespace qctrl;

TEST(Adam, FirstStepIsSignedLearningRate) {
  Eigen::VectorXd x(3), g(3);
  x << 1.0, -2.0, 0.5;
  g << 0.3, -4.0, 1e-3;
  const Eigen::VectorXd x0 = x;
  AdamState<double> st(3);
  AdamConfig cfg;
  adam_step(x, g, st, cfg);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(x(i) - x0(i), -cfg.alpha * g(i) / (std::abs(g(i)) + cfg.epsilon), 1e-15);
  EXPECT_EQ(st.k, 1);
}

TEST(Adam, ZeroGradientNeverMoves) {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.7);
  AdamState<double> st(4);
  for (int k = 0; k < 50; ++k) adam_step(x, Eigen::VectorXd::Zero(4), st, AdamConfig{});
  EXPECT_EQ(x, Eigen::VectorXd::Constant(4, 0.7));
}

TEST(Adam, MatchesScalarReferenceOnQuadratic) {
  AdamConfig cfg;
  cfg.alpha = 0.1;
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  AdamState<double> st(2);
  // Independent scalar transcription of the update rule.
  double r = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    adam_step(x, (2.0 * x).eval(), st, cfg);
    const double g = 2.0 * r;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    r -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(x(0), r, 1e-12);
  EXPECT_LT(x.norm(), 0.05);
}

TEST(Adam, OddSymmetry) {
  Eigen::VectorXd a(2), b(2), g(2);
  a << 0.2, 0.3;
  b = a;
  g << 0.5, -1.5;
  AdamState<double> sa(2), sb(2);
  adam_step(a, g, sa, AdamConfig{});
  adam_step(b, (-g).eval(), sb, AdamConfig{});
  EXPECT_NEAR(a(0) - 0.2, -(b(0) - 0.2), 1e-15);
  EXPECT_NEAR(a(1) - 0.3, -(b(1) - 0.3), 1e-15);
}

TEST(Adam, RejectsBadInput) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  AdamState<double> st(2);
  EXPECT_THROW(adam_step(x, Eigen::VectorXd::Constant(2, NAN), st, AdamConfig{}), NumericalError);
  EXPECT_THROW(adam_step(x, Eigen::VectorXd::Zero(3), st, AdamConfig{}), ConfigError);
  AdamConfig bad;
  bad.beta1 = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

ControlContext pulse_context() {
  ControlContext ctx;
  ctx.which = ControlKind::pulse;
  ctx.fixed = SignalSpec::linear();
  ctx.bath = {0.04, 4.0, 10.0};
  return ctx;
}

TEST(ControlLoss, ZeroPulseIsFreeEvolution) {
  ControlContext ctx = pulse_context();
  ctx.lambda = 0.0;
  const ControlLossReport r = control_loss(ctx.blank(), ctx);
  EXPECT_NEAR(r.loss, 1.0 - signal_fidelity(SignalSpec::linear(), SignalSpec::zero(), ctx), 1e-12);
  EXPECT_EQ(r.dr_max, 0.0);
}

TEST(ControlLoss, IdealPulseArithmetic) {
  const ControlContext ctx = pulse_context();
  const double intensity = ideal_sine_intensity(3, 0.5);
  const FourierControl fc = ideal_pulse_start(ctx, intensity);
  const ControlLossReport r = control_loss(fc, ctx);
  EXPECT_NEAR(r.dr_max, intensity, 1e-8);
  EXPECT_NEAR(r.loss - (1.0 - r.fidelity), 0.0544, 5e-5);
  EXPECT_NEAR(r.loss - (1.0 - r.fidelity + r.lambda * r.dr_max), 0.0, 1e-12);
  EXPECT_NEAR(r.fidelity, signal_fidelity(SignalSpec::linear(), SignalSpec::sine_pulse(intensity, 0.5), ctx), 1e-8);
}

TEST(ControlLoss, ProjectionOfIdealPulseIsExactAtFiveTimeUnits) {
  const FourierControl fc = ideal_pulse_start(pulse_context(), 54.0);
  for (std::size_t j = 0; j < fc.coefficients.size(); ++j)
    EXPECT_NEAR(fc.coefficients[j], fc.first_index + static_cast<int>(j) == 4 ? 54.0 : 0.0, 1e-9);
}

TEST(ControlLoss, UnknownShapesAreConfigErrors) {
  EXPECT_THROW(eval_signal(SignalSpec{"cubic"}, ControlKind::trajectory, 0.1, 1.0), ConfigError);
  EXPECT_THROW(eval_signal(SignalSpec{"linear"}, ControlKind::pulse, 0.1, 1.0), ConfigError);
}

TEST(FiniteDifference, OneSidedDifferencesBracketCentral) {
  ControlContext ctx;
  ctx.bath = {0.03, 2.0, 10.0};
  ctx.t_total = 2.0;
  FourierControl fc = ctx.blank();
  fc.coefficients = {0.05, -0.02, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0};
  const Eigen::VectorXd central = loss_gradient_fd(fc, ctx);
  const double base = control_loss(fc, ctx).loss;
  for (std::size_t j = 0; j < 3; ++j) {
    FourierControl p = fc, m = fc;
    p.coefficients[j] += 1e-4;
    m.coefficients[j] -= 1e-4;
    const double fwd = (control_loss(p, ctx).loss - base) / 1e-4;
    const double bwd = (base - control_loss(m, ctx).loss) / 1e-4;
    EXPECT_LE(std::min(fwd, bwd), central(static_cast<Eigen::Index>(j)) + 1e-12);
    EXPECT_GE(std::max(fwd, bwd), central(static_cast<Eigen::Index>(j)) - 1e-12);
  }
}

SurrogateModel small_model(std::uint64_t seed) {
  SurrogateArch a;
  a.n_layers = 2;
  a.hidden = 8;
  a.encoder_hidden = 6;
  SurrogateModel m = init_model(a, FeatureScaler::for_window(1.0), seed);
  m.params *= 2.0;  // livelier response than the default init
  return m;
}

ControlContext surrogate_context(ControlKind which, const SurrogateModel& m) {
  ControlContext ctx;
  ctx.which = which;
  ctx.t_total = 1.0;
  ctx.bath = {0.02, 5.0, 8.0};
  ctx.fixed = which == ControlKind::trajectory ? SignalSpec::sine_pulse(3.0, 0.5) : SignalSpec::linear();
  ctx.backend = Backend::surrogate;
  ctx.surrogate = std::make_shared<SurrogateEvaluator>(m);
  ctx.surrogate_double = true;
  return ctx;
}

double rel_norm(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / std::max(a.norm(), b.norm()); }

TEST(SurrogateGradient, ReverseModeMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const SurrogateModel m = small_model(5);
  for (ControlKind kind : {ControlKind::pulse, ControlKind::trajectory}) {
    const ControlContext ctx = surrogate_context(kind, m);
    for (int trial = 0; trial < 5; ++trial) {
      FourierControl fc = ctx.blank();
      for (double& c : fc.coefficients) c = kind == ControlKind::pulse ? 10.0 * u(rng) : 0.03 * u(rng);
      ControlLossReport rep;
      const Eigen::VectorXd a = loss_gradient_surrogate(fc, ctx, &rep);
      const Eigen::VectorXd b = loss_gradient_fd(fc, ctx);
      EXPECT_LT(rel_norm(a, b), 1e-3) << to_string(kind) << " trial " << trial;
      EXPECT_NEAR(rep.loss, control_loss(fc, ctx).loss, 1e-14);
    }
  }
}

TEST(SurrogateGradient, DeadInputGivesZeroGradient) {
  SurrogateModel m = small_model(6);
  const ParamLayout lay(m.arch);
  // Zero the layer-0 weights reading c_t and c_{t+1}: the model no longer sees the pulse.
  for (Eigen::Index col : {5, 6})
    for (Eigen::Index row = 0; row < lay.w[0].rows; ++row) m.params(lay.w[0].offset + col * lay.w[0].rows + row) = 0.0;
  ControlContext ctx = surrogate_context(ControlKind::pulse, m);
  ctx.lambda = 0.0;
  FourierControl fc = ctx.blank();
  fc.coefficients[2] = 5.0;
  EXPECT_EQ(loss_gradient_surrogate(fc, ctx).norm(), 0.0);
}

TEST(SurrogateGradient, SinglePrecisionTracksDouble) {
  const SurrogateModel m = small_model(7);
  ControlContext ctx = surrogate_context(ControlKind::pulse, m);
  FourierControl fc = ctx.blank();
  fc.coefficients[0] = 4.0;
  const Eigen::VectorXd d = loss_gradient_surrogate(fc, ctx);
  ctx.surrogate_double = false;
  EXPECT_LT(rel_norm(loss_gradient_surrogate(fc, ctx), d), 1e-4);
}

TEST(FidelityFromPrediction, ProjectsOutsideBall) {
  EXPECT_NEAR(fidelity_from_prediction({0, 0, -1.3}, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(fidelity_from_prediction({0, 0, 0}, 0.0), std::sqrt(0.5), 1e-15);
  EXPECT_EQ(fidelity_from_prediction({0, 0, 1.0}, 0.0), 0.0);
  for (const BlochVector b : {BlochVector{0.3, 0.1, -0.5}, BlochVector{0.9, -0.4, -0.6}}) {
    Eigen::Vector3d g;
    const double f = fidelity_from_prediction(b, 0.7, &g);
    for (int k = 0; k < 3; ++k) {
      BlochVector p = b, q = b;
      (k == 0 ? p.x : k == 1 ? p.y : p.z) += 1e-6;
      (k == 0 ? q.x : k == 1 ? q.y : q.z) -= 1e-6;
      EXPECT_NEAR(g(k), (fidelity_from_prediction(p, 0.7) - fidelity_from_prediction(q, 0.7)) / 2e-6, 1e-7);
    }
    EXPECT_GT(f, 0.0);
  }
}

TEST(Optimize, ZeroIterationsReturnsStart) {
  ControlContext ctx;
  ctx.bath = {0.03, 2.0, 10.0};
  AdamConfig cfg;
  cfg.k_max = 0;
  const OptimizeResult r = optimize_trajectory(ctx, cfg);
  EXPECT_EQ(r.best.coefficients, std::vector<double>(8, 0.0));
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.best_report.loss, r.initial_report.loss);
}

TEST(Optimize, TrajectoryImprovesAndKeepsEndpoints) {
  ControlContext ctx;
  ctx.bath = {0.03, 2.0, 10.0};
  ctx.t_total = 2.0;
  AdamConfig cfg;
  cfg.k_max = 15;
  const OptimizeResult r = optimize_trajectory(ctx, cfg);
  EXPECT_LT(r.best_report.loss, r.initial_report.loss);
  EXPECT_EQ(r.history.size(), 16u);
  EXPECT_NEAR(eval_trajectory(r.best, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(eval_trajectory_raw(r.best, 2.0), 1.0, 1e-12);
}

TEST(Optimize, ClosedSystemIdealPulseIsNotDegraded) {
  ControlContext ctx = pulse_context();
  ctx.bath = {0.0, 4.0, 10.0};
  AdamConfig cfg;
  cfg.k_max = 5;
  const double intensity = ideal_sine_intensity(3, 0.5);
  const OptimizeResult r = optimize_pulse(ctx, cfg, intensity);
  EXPECT_LE(r.best_report.loss, r.initial_report.loss);
  EXPECT_GE(r.best_report.fidelity, r.initial_report.fidelity - 1e-3);
  const auto c = sample(r.best, 0.001);
  double area = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) area += 0.5 * (c[i] + c[i - 1]) * 0.001;
  EXPECT_LT(std::abs(area), 1e-9);
}

TEST(Optimize, SurrogateBackendRuns) {
  const SurrogateModel m = small_model(8);
  const ControlContext ctx = surrogate_context(ControlKind::pulse, m);
  AdamConfig cfg;
  cfg.k_max = 20;
  cfg.alpha = 0.5;
  const OptimizeResult r = optimize(ctx, ctx.blank(), cfg);
  EXPECT_LE(r.best_report.loss, r.initial_report.loss);
  const OptimizeResult rev = optimize(ctx, ctx.blank(), cfg, GradientMode::reverse);
  EXPECT_NEAR(rev.best_report.loss, r.best_report.loss, 1e-12);
}

TEST(Optimize, ReverseModeNeedsSurrogate) {
  ControlContext ctx = pulse_context();
  AdamConfig cfg;
  cfg.k_max = 1;
  EXPECT_THROW(optimize(ctx, ctx.blank(), cfg, GradientMode::reverse), ConfigError);
}

}  // namespace
