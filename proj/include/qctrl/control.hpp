// control.hpp: control loss, gradient providers and the two-step optimization
// workflow (trajectory s(t) first, zero-area pulse c(t) second).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qctrl/adam.hpp"
#include "qctrl/dynamics.hpp"
#include "qctrl/error.hpp"
#include "qctrl/lstm.hpp"
#include "qctrl/pulse.hpp"
#include "qctrl/solver.hpp"

namespace qctrl {

enum class Backend { rk4, surrogate };

inline std::string to_string(Backend b) { return b == Backend::rk4 ? "rk4" : "surrogate"; }

inline Backend parse_backend(std::string_view s) {
  if (s == "rk4") return Backend::rk4;
  if (s == "surrogate") return Backend::surrogate;
  throw ConfigError("unknown backend '" + std::string(s) + "'");
}

/// A non-optimized control signal: a named shape or a fixed Fourier control.
///   s roles: linear | sine | fourier
///   c roles: zero | sine (I sin(pi t / tau)) | rect (square wave, half period tau) | fourier
struct SignalSpec {
  std::string shape = "linear";
  double intensity = 0.0;
  double tau = 0.5;
  std::vector<double> coefficients;
  int first_index = 1;

  static SignalSpec linear() { return {}; }
  static SignalSpec zero() { return {"zero", 0.0, 0.5, {}, 1}; }
  static SignalSpec sine_pulse(double intensity, double tau) { return {"sine", intensity, tau, {}, 1}; }
  static SignalSpec rect_pulse(double intensity, double tau) { return {"rect", intensity, tau, {}, 1}; }
};

inline double eval_signal(const SignalSpec& sig, ControlKind role, double t, double t_total) {
  if (sig.shape == "fourier") {
    FourierControl fc = role == ControlKind::trajectory ? make_trajectory_control(t_total) : make_pulse_control(t_total);
    fc.first_index = sig.first_index;
    fc.coefficients = sig.coefficients;
    return eval_control(fc, t);
  }
  if (role == ControlKind::trajectory) {
    if (sig.shape == "linear" || sig.shape == "sine") return named_trajectory(sig.shape, t, t_total);
  } else {
    if (sig.shape == "zero") return 0.0;
    if (sig.shape == "sine") return sine_pulse(sig.intensity, sig.tau, t);
    if (sig.shape == "rect") return rect_pulse(sig.intensity, sig.tau, t);
  }
  throw ConfigError("unknown " + to_string(role) + " shape '" + sig.shape + "'");
}

/// Fast surrogate evaluation with reusable workspaces.
class SurrogateEvaluator {
 public:
  explicit SurrogateEvaluator(SurrogateModel model) : model_(std::move(model)), f32_(model_), f64_(model_) {}

  const SurrogateModel& model() const { return model_; }

  /// dL/d(final Bloch vector) as a function of the prediction.
  using FinalGrad = std::function<Eigen::Vector3d(const BlochVector&)>;

  /// Final predicted Bloch vector; with dloss, also fills dL/ds and dL/dc on the grid
  /// from a single forward pass.
  BlochVector final_bloch(const ControlGrid& g, const BlochVector& b0, const BathParams& bath, bool use_double,
                          const FinalGrad& dloss = {}, Eigen::VectorXd* ds = nullptr, Eigen::VectorXd* dc = nullptr) {
    return use_double ? run(f64_, g, b0, bath, dloss, ds, dc) : run(f32_, g, b0, bath, dloss, ds, dc);
  }

 private:
  template <typename Scalar>
  BlochVector run(LstmNetwork<Scalar>& net, const ControlGrid& g, const BlochVector& b0, const BathParams& bath,
                  const FinalGrad& dloss, Eigen::VectorXd* ds, Eigen::VectorXd* dc) {
    if (std::abs(g.dt - model_.arch.dt) > 1e-12) throw ConfigError("surrogate: grid step differs from the model step");
    const std::size_t n = g.n_steps();
    net.forward({SequenceInput{b0, &g.s_values, &g.c_values, bath}}, n);
    const auto& p = net.prediction(n - 1);
    const BlochVector out{static_cast<double>(p(0, 0)), static_cast<double>(p(1, 0)), static_cast<double>(p(2, 0))};
    if (dloss) {
      using Mat = typename LstmNetwork<Scalar>::Mat;
      std::vector<Mat> dpred(n, Mat::Zero(3, 1));
      dpred.back() = dloss(out).template cast<Scalar>();
      typename LstmNetwork<Scalar>::InputGrads in;
      net.backward(dpred, false, &in);
      if (ds) *ds = in.s.col(0).template cast<double>();
      if (dc) *dc = in.c.col(0).template cast<double>();
    }
    return out;
  }

  SurrogateModel model_;
  LstmNetwork<float> f32_;
  LstmNetwork<double> f64_;
};

struct ControlContext {
  ControlKind which = ControlKind::trajectory;  ///< the control being optimized
  double t_total = 5.0;
  BathParams bath;
  SignalSpec fixed = SignalSpec::zero();  ///< the other control
  double lambda = 1e-3;
  double truth_dt = 0.005;  ///< RK4 step and dr_max evaluation grid
  SolverOptions solver;
  Backend backend = Backend::rk4;
  std::shared_ptr<SurrogateEvaluator> surrogate;
  bool surrogate_double = false;
  int first_index = 1;
  int last_index = 8;

  void validate() const {
    bath.validate();
    if (!(t_total > 0.0) || !(truth_dt > 0.0)) throw ConfigError("control: t_total and dt must be > 0");
    if (lambda < 0.0) throw ConfigError("control: lambda must be >= 0");
    if (backend == Backend::surrogate && !surrogate) throw ConfigError("control: surrogate backend needs a model");
    if (last_index < first_index || first_index < 1) throw ConfigError("control: bad Fourier index range");
  }

  FourierControl blank() const {
    return which == ControlKind::trajectory ? make_trajectory_control(t_total, first_index, last_index)
                                            : make_pulse_control(t_total, first_index, last_index);
  }
};

struct ControlLossReport {
  double loss = 0.0;
  double fidelity = 0.0;
  double dr_max = 0.0;
  double lambda = 0.0;
  Backend backend = Backend::rk4;
};

/// (s, c) on a grid of step dt with the optimized control in its slot.
inline ControlGrid control_grid(const FourierControl& fc, const ControlContext& ctx, double dt) {
  const ControlKind other = ctx.which == ControlKind::trajectory ? ControlKind::pulse : ControlKind::trajectory;
  auto var = [&](double t) { return eval_control(fc, t); };
  auto fix = [&](double t) { return eval_signal(ctx.fixed, other, t, ctx.t_total); };
  return ctx.which == ControlKind::trajectory ? make_grid(var, fix, ctx.t_total, dt) : make_grid(fix, var, ctx.t_total, dt);
}

/// Grid for arbitrary (s, c) signals.
inline ControlGrid signal_grid(const SignalSpec& s, const SignalSpec& c, double t_total, double dt) {
  return make_grid([&](double t) { return eval_signal(s, ControlKind::trajectory, t, t_total); },
                   [&](double t) { return eval_signal(c, ControlKind::pulse, t, t_total); }, t_total, dt);
}

struct AmplitudeMax {
  double value = 0.0;
  double time = 0.0;
  double sign = 1.0;
};

/// max |signal| on the dt grid. Trajectories use the unclamped Fourier formula.
inline AmplitudeMax dr_max(const FourierControl& fc, double dt) {
  AmplitudeMax best;
  const std::size_t n = steps_for(fc.t_total, dt);
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double v = fc.kind == ControlKind::trajectory ? eval_trajectory_raw(fc, t) : eval_pulse(fc, t);
    if (std::abs(v) > best.value) best = {std::abs(v), t, v >= 0.0 ? 1.0 : -1.0};
  }
  return best;
}

inline BlochVector initial_bloch(const ControlGrid& g) { return ground_state_bloch(std::clamp(g.s_values.front(), 0.0, 1.0)); }

/// F from a predicted Bloch vector; vectors outside the ball are projected onto the sphere.
inline double fidelity_from_prediction(const BlochVector& b, double s, Eigen::Vector3d* grad = nullptr) {
  const BlochVector gnd = ground_state_bloch(std::clamp(s, 0.0, 1.0));
  const Eigen::Vector3d g(gnd.x, gnd.y, gnd.z);
  const Eigen::Vector3d v(b.x, b.y, b.z);
  const double nrm = v.norm();
  const Eigen::Vector3d u = nrm > 1.0 ? Eigen::Vector3d(v / nrm) : v;
  const double arg = 0.5 * (1.0 + u.dot(g));
  if (arg <= 0.0) {
    if (grad) grad->setZero();
    return 0.0;
  }
  const double f = std::sqrt(arg);
  if (grad) {
    const Eigen::Vector3d du = g / (4.0 * f);
    *grad = nrm > 1.0 ? Eigen::Vector3d((du - u * u.dot(du)) / nrm) : du;
  }
  return f;
}

/// Final fidelity of arbitrary controls under the chosen backend.
inline double backend_fidelity(const ControlGrid& dense, const ControlContext& ctx, const ControlGrid* coarse = nullptr) {
  if (ctx.backend == Backend::rk4) {
    const ComplexMatrix2 rho0 = projector(instantaneous_ground_state(std::clamp(dense.s_values.front(), 0.0, 1.0)));
    SolverOptions opts = ctx.solver;
    opts.record_stride = dense.n_steps();
    return evolve(rho0, dense, ctx.bath, opts).final_fidelity();
  }
  const ControlGrid& g = *coarse;
  const BlochVector b = ctx.surrogate->final_bloch(g, initial_bloch(g), ctx.bath, ctx.surrogate_double);
  return fidelity_from_prediction(b, g.s_values.back());
}

/// Final fidelity of named (s, c) signals, e.g. the linear and ideal-pulse baselines.
inline double signal_fidelity(const SignalSpec& s, const SignalSpec& c, const ControlContext& ctx) {
  const ControlGrid dense = signal_grid(s, c, ctx.t_total, ctx.truth_dt);
  if (ctx.backend == Backend::rk4) return backend_fidelity(dense, ctx);
  const ControlGrid coarse = signal_grid(s, c, ctx.t_total, ctx.surrogate->model().arch.dt);
  return backend_fidelity(dense, ctx, &coarse);
}

/// Loss = 1 - F + lambda dr_max.
inline ControlLossReport control_loss(const FourierControl& fc, const ControlContext& ctx) {
  fc.validate();
  ControlLossReport r;
  r.backend = ctx.backend;
  r.lambda = ctx.lambda;
  r.dr_max = dr_max(fc, ctx.truth_dt).value;
  if (ctx.backend == Backend::rk4) {
    r.fidelity = backend_fidelity(control_grid(fc, ctx, ctx.truth_dt), ctx);
  } else {
    const ControlGrid coarse = control_grid(fc, ctx, ctx.surrogate->model().arch.dt);
    r.fidelity = backend_fidelity(coarse, ctx, &coarse);
  }
  r.loss = 1.0 - r.fidelity + r.lambda * r.dr_max;
  if (!std::isfinite(r.loss)) throw NumericalError("control loss is not finite");
  return r;
}

/// Provider (b): central differences with step h per coefficient.
inline Eigen::VectorXd loss_gradient_fd(const FourierControl& fc, const ControlContext& ctx, double h = 1e-4) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(fc.coefficients.size()));
  for (std::size_t j = 0; j < fc.coefficients.size(); ++j) {
    FourierControl p = fc, m = fc;
    p.coefficients[j] += h;
    m.coefficients[j] -= h;
    g(static_cast<Eigen::Index>(j)) = (control_loss(p, ctx).loss - control_loss(m, ctx).loss) / (2.0 * h);
  }
  if (!g.allFinite()) throw NumericalError("finite-difference gradient is not finite");
  return g;
}

/// Provider (a): reverse mode through the surrogate rollout. Returns the loss report as well.
inline Eigen::VectorXd loss_gradient_surrogate(const FourierControl& fc, const ControlContext& ctx,
                                               ControlLossReport* report = nullptr) {
  if (ctx.backend != Backend::surrogate || !ctx.surrogate) throw ConfigError("reverse-mode gradient needs the surrogate backend");
  fc.validate();
  const double dt = ctx.surrogate->model().arch.dt;
  const ControlGrid g = control_grid(fc, ctx, dt);
  const BlochVector b0 = initial_bloch(g);
  double f = 0.0;
  const auto dloss = [&](const BlochVector& bf) {
    Eigen::Vector3d dfdb;
    f = fidelity_from_prediction(bf, g.s_values.back(), &dfdb);
    return Eigen::Vector3d(-dfdb);
  };
  Eigen::VectorXd ds, dc;
  ctx.surrogate->final_bloch(g, b0, ctx.bath, ctx.surrogate_double, dloss, &ds, &dc);

  const auto amax = dr_max(fc, ctx.truth_dt);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fc.coefficients.size()));
  const std::size_t n = g.n_steps();
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) * dt;
    double d;
    if (fc.kind == ControlKind::trajectory) {
      const double raw = eval_trajectory_raw(fc, t);
      if (raw < 0.0 || raw > 1.0) continue;
      d = ds(static_cast<Eigen::Index>(i));
    } else {
      d = dc(static_cast<Eigen::Index>(i));
    }
    for (std::size_t j = 0; j < fc.coefficients.size(); ++j) grad(static_cast<Eigen::Index>(j)) += d * fc.basis(j, t);
  }
  if (amax.value > 0.0)
    for (std::size_t j = 0; j < fc.coefficients.size(); ++j)
      grad(static_cast<Eigen::Index>(j)) += ctx.lambda * amax.sign * fc.basis(j, amax.time);
  if (!grad.allFinite()) throw NumericalError("surrogate gradient is not finite");
  if (report) {
    report->backend = Backend::surrogate;
    report->lambda = ctx.lambda;
    report->fidelity = f;
    report->dr_max = amax.value;
    report->loss = 1.0 - f + ctx.lambda * amax.value;
  }
  return grad;
}

enum class GradientMode { automatic, finite_difference, reverse };

struct IterationRecord {
  int iteration = 0;
  double loss = 0.0;
  double fidelity = 0.0;
  double dr_max = 0.0;
  double grad_norm = 0.0;
};

struct OptimizeResult {
  FourierControl best;
  ControlLossReport best_report;
  int best_iteration = 0;
  ControlLossReport initial_report;
  std::vector<IterationRecord> history;
};

/// Algorithm 1 from `start`, keeping the best iterate (the start included).
inline OptimizeResult optimize(const ControlContext& ctx, const FourierControl& start, const AdamConfig& acfg,
                               GradientMode mode = GradientMode::automatic) {
  ctx.validate();
  acfg.validate();
  if (start.kind != ctx.which) throw ConfigError("optimize: start control kind differs from the context");
  const bool reverse = mode == GradientMode::reverse || (mode == GradientMode::automatic && ctx.backend == Backend::surrogate);
  if (reverse && ctx.backend != Backend::surrogate) throw ConfigError("optimize: reverse-mode gradients need the surrogate backend");

  FourierControl cur = start;
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(start.coefficients.data(), static_cast<Eigen::Index>(start.coefficients.size()));
  AdamState<double> st(x.size());
  OptimizeResult res;
  res.best = start;

  auto eval = [&](ControlLossReport& rep) {
    if (reverse) return loss_gradient_surrogate(cur, ctx, &rep);
    rep = control_loss(cur, ctx);
    return loss_gradient_fd(cur, ctx);
  };

  for (int k = 0; k <= acfg.k_max; ++k) {
    std::copy(x.data(), x.data() + x.size(), cur.coefficients.begin());
    ControlLossReport rep;
    Eigen::VectorXd g;
    if (k < acfg.k_max) {
      g = eval(rep);
    } else {
      rep = control_loss(cur, ctx);
    }
    if (!std::isfinite(rep.loss)) throw NumericalError("optimization diverged at iteration " + std::to_string(k));
    if (k == 0) {
      res.initial_report = rep;
      res.best_report = rep;
    }
    res.history.push_back({k, rep.loss, rep.fidelity, rep.dr_max, g.size() ? g.norm() : 0.0});
    if (rep.loss < res.best_report.loss) {
      res.best_report = rep;
      res.best = cur;
      res.best_iteration = k;
    }
    if (k < acfg.k_max) adam_step(x, g, st, acfg);
  }
  return res;
}

/// Step one: s(t) from the linear schedule, c fixed.
inline OptimizeResult optimize_trajectory(ControlContext ctx, const AdamConfig& acfg, GradientMode mode = GradientMode::automatic) {
  ctx.which = ControlKind::trajectory;
  return optimize(ctx, ctx.blank(), acfg, mode);
}

/// Fourier fit of I sin(pi t / tau) in the pulse basis, the pulse optimizer's start.
inline FourierControl ideal_pulse_start(ControlContext ctx, double intensity, double tau = 0.5) {
  ctx.which = ControlKind::pulse;
  return project_pulse([&](double t) { return sine_pulse(intensity, tau, t); }, ctx.blank(), ctx.truth_dt);
}

/// Step two: c(t) from the projected ideal pulse, s fixed.
inline OptimizeResult optimize_pulse(ControlContext ctx, const AdamConfig& acfg, double intensity, double tau = 0.5,
                                     GradientMode mode = GradientMode::automatic) {
  ctx.which = ControlKind::pulse;
  return optimize(ctx, ideal_pulse_start(ctx, intensity, tau), acfg, mode);
}

/// Exact re-simulation of a control in the given context.
inline double rk4_fidelity(const FourierControl& fc, ControlContext ctx) {
  ctx.backend = Backend::rk4;
  return control_loss(fc, ctx).fidelity;
}

}  // namespace qctrl
