// pulse.hpp: control signals: named trajectories, ideal zero-area pulses,
// Fourier parameterizations used by the optimizer, and Random Fourier Synthesis
// for training data.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qctrl/bessel.hpp"
#include "qctrl/error.hpp"
#include "qctrl/random.hpp"
#include "qctrl/solver.hpp"

namespace qctrl {

using std::numbers::pi;

// --------------------------- Fourier controls -------------------------------

enum class ControlKind { trajectory, pulse };

inline std::string to_string(ControlKind k) { return k == ControlKind::trajectory ? "trajectory" : "pulse"; }

/// s(t) = t/T + sum_k I_k sin((k+1) w t / T)   (trajectory, clamped to [0, 1])
/// c(t) =       sum_k I_k sin((k+1) w t / T)   (pulse)
/// with k = first_index .. first_index + coefficients.size() - 1.
struct FourierControl {
  ControlKind kind = ControlKind::trajectory;
  std::vector<double> coefficients;
  int first_index = 1;
  double omega = pi;
  double t_total = 1.0;

  int last_index() const { return first_index + static_cast<int>(coefficients.size()) - 1; }

  /// sin((k+1) w t / T) for the j-th coefficient.
  double basis(std::size_t j, double t) const {
    const double k = static_cast<double>(first_index) + static_cast<double>(j);
    return std::sin((k + 1.0) * omega * t / t_total);
  }

  double fourier_sum(double t) const {
    double v = 0.0;
    for (std::size_t j = 0; j < coefficients.size(); ++j) v += coefficients[j] * basis(j, t);
    return v;
  }

  void validate() const {
    if (first_index < 1) throw ConfigError("fourier control: first index must be >= 1");
    if (coefficients.empty()) throw ConfigError("fourier control: needs at least one coefficient");
    if (!(t_total > 0.0)) throw ConfigError("fourier control: t_total must be > 0");
    for (double c : coefficients)
      if (!std::isfinite(c)) throw NumericalError("fourier control: non-finite coefficient");
  }
};

/// Fundamental pi keeps s(0) = 0 and s(T) = 1 exact; 2 pi makes every pulse term zero-area.
inline FourierControl make_trajectory_control(double t_total, int first = 1, int last = 8) {
  if (last < first) throw ConfigError("fourier control: last index must be >= first index");
  return {ControlKind::trajectory, std::vector<double>(static_cast<std::size_t>(last - first + 1), 0.0),
          first, pi, t_total};
}

inline FourierControl make_pulse_control(double t_total, int first = 1, int last = 8) {
  if (last < first) throw ConfigError("fourier control: last index must be >= first index");
  return {ControlKind::pulse, std::vector<double>(static_cast<std::size_t>(last - first + 1), 0.0),
          first, 2.0 * pi, t_total};
}

/// Trajectory formula before clamping.
inline double eval_trajectory_raw(const FourierControl& fc, double t) {
  if (fc.kind != ControlKind::trajectory) throw ConfigError("eval_trajectory: control is not a trajectory");
  return t / fc.t_total + fc.fourier_sum(t);
}

inline double eval_trajectory(const FourierControl& fc, double t) {
  return std::clamp(eval_trajectory_raw(fc, t), 0.0, 1.0);
}

inline double eval_pulse(const FourierControl& fc, double t) {
  if (fc.kind != ControlKind::pulse) throw ConfigError("eval_pulse: control is not a pulse");
  return fc.fourier_sum(t);
}

inline double eval_control(const FourierControl& fc, double t) {
  return fc.kind == ControlKind::trajectory ? eval_trajectory(fc, t) : eval_pulse(fc, t);
}

/// Values on t_i = i * dt, i = 0..n.
inline std::vector<double> sample(const std::function<double(double)>& f, double t_total, double dt) {
  const std::size_t n = steps_for(t_total, dt);
  std::vector<double> v(n + 1);
  for (std::size_t i = 0; i <= n; ++i) v[i] = f(static_cast<double>(i) * dt);
  return v;
}

inline std::vector<double> sample(const FourierControl& fc, double dt) {
  return sample([&](double t) { return eval_control(fc, t); }, fc.t_total, dt);
}

inline ControlGrid make_grid(const std::function<double(double)>& s, const std::function<double(double)>& c,
                             double t_total, double dt) {
  ControlGrid g{t_total, dt, sample(s, t_total, dt), sample(c, t_total, dt)};
  g.t_total = dt * static_cast<double>(g.n_steps());
  return g;
}

// --------------------------- Named shapes -----------------------------------

enum class TrajectoryShape { linear, sine };

inline TrajectoryShape parse_trajectory_shape(std::string_view name) {
  if (name == "linear") return TrajectoryShape::linear;
  if (name == "sine") return TrajectoryShape::sine;
  throw ConfigError("unknown trajectory name '" + std::string(name) + "'");
}

/// linear: t/T;  sine: sin(pi t / T - pi/2) / 2 + 1/2.
inline double named_trajectory(TrajectoryShape shape, double t, double t_total) {
  switch (shape) {
    case TrajectoryShape::linear: return t / t_total;
    case TrajectoryShape::sine: return 0.5 * std::sin(pi * t / t_total - 0.5 * pi) + 0.5;
  }
  return 0.0;
}

inline double named_trajectory(std::string_view name, double t, double t_total) {
  return named_trajectory(parse_trajectory_shape(name), t, t_total);
}

/// c(t) = I sin(pi t / tau), tau the half period.
inline double sine_pulse(double intensity, double tau, double t) { return intensity * std::sin(pi * t / tau); }

/// Square wave of half period tau: +I on [0, tau), -I on [tau, 2 tau), ...
inline double rect_pulse(double intensity, double tau, double t) {
  const double phase = std::fmod(t, 2.0 * tau);
  return phase < tau ? intensity : -intensity;
}

/// I with J0(I tau / pi) = 0 at the given root of J0.
inline double ideal_sine_intensity(int zero_index, double tau) {
  if (zero_index < 1) throw ConfigError("ideal_sine_intensity: zero index must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("ideal_sine_intensity: tau must be > 0");
  return pi * bessel_j0_zero(zero_index) / tau;
}

/// I with I tau = 2 k pi.
inline double ideal_rect_intensity(int k, double tau) {
  if (k < 1) throw ConfigError("ideal_rect_intensity: k must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("ideal_rect_intensity: tau must be > 0");
  return 2.0 * pi * static_cast<double>(k) / tau;
}

/// Least-squares coefficients of `target` in the pulse basis of `shape`, on a grid of step dt.
inline FourierControl project_pulse(const std::function<double(double)>& target, FourierControl shape, double dt) {
  const std::size_t n = steps_for(shape.t_total, dt);
  const auto m = static_cast<Eigen::Index>(shape.coefficients.size());
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n + 1), m);
  Eigen::VectorXd b(static_cast<Eigen::Index>(n + 1));
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) * dt;
    for (Eigen::Index j = 0; j < m; ++j) a(static_cast<Eigen::Index>(i), j) = shape.basis(static_cast<std::size_t>(j), t);
    b(static_cast<Eigen::Index>(i)) = target(t);
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  for (Eigen::Index j = 0; j < m; ++j) shape.coefficients[static_cast<std::size_t>(j)] = x(j);
  return shape;
}

// --------------------------- Random Fourier Synthesis -----------------------

struct Window {
  double lo = 0.0;
  double hi = 1.0;
};

/// Ranges for s(t), c(t) = sum_{k=1}^{K} A_k sin(2 pi f_k t + phi_k).
struct RFSConfig {
  int k_min = 3;
  int k_max = 8;
  double amp_min = 0.1;
  double amp_max = 1.0;
  double freq_min = 0.1;
  double freq_max = 2.0;
  double phase_min = 0.0;
  double phase_max = 2.0 * pi;
  /// Affine post-scaling target; nullopt leaves the raw sum untouched.
  std::optional<Window> s_window = Window{0.0, 1.0};
  std::optional<Window> c_window = Window{-60.0, 60.0};
  /// The signal is mapped onto a random sub-window of width u * (hi - lo),
  /// u ~ U[min_span_fraction, 1]. 1 maps min/max exactly onto the window.
  double s_min_span_fraction = 1.0;
  double c_min_span_fraction = 1.0;

  void validate() const {
    if (k_min < 1 || k_max < k_min) throw ConfigError("rfs: need 1 <= k_min <= k_max");
    if (!(amp_max > amp_min) || !(freq_max > freq_min) || !(phase_max > phase_min))
      throw ConfigError("rfs: degenerate amplitude, frequency or phase range");
    for (const auto& w : {s_window, c_window})
      if (w && !(w->hi > w->lo)) throw ConfigError("rfs: degenerate output window");
    for (double f : {s_min_span_fraction, c_min_span_fraction})
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("rfs: span fraction must lie in (0, 1]");
  }
};

struct RFSComponent {
  double amplitude;
  double frequency;
  double phase;
};

/// Draws K and the component parameters of one signal.
inline std::vector<RFSComponent> rfs_components(const RFSConfig& cfg, Rng& rng) {
  const auto k = rng.uniform_int(cfg.k_min, cfg.k_max);
  std::vector<RFSComponent> comps;
  comps.reserve(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) {
    const double a = rng.uniform(cfg.amp_min, cfg.amp_max);
    const double f = rng.uniform(cfg.freq_min, cfg.freq_max);
    const double p = rng.uniform(cfg.phase_min, cfg.phase_max);
    comps.push_back({a, f, p});
  }
  return comps;
}

inline std::vector<double> rfs_signal(const std::vector<RFSComponent>& comps, double t_total, double dt) {
  return sample(
      [&](double t) {
        double v = 0.0;
        for (const auto& c : comps) v += c.amplitude * std::sin(2.0 * pi * c.frequency * t + c.phase);
        return v;
      },
      t_total, dt);
}

inline void rescale_into(std::vector<double>& v, const Window& w, double min_span_fraction, Rng& rng) {
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double lo = *mn, hi = *mx;
  const double u = min_span_fraction < 1.0 ? rng.uniform(min_span_fraction, 1.0) : 1.0;
  const double width = u * (w.hi - w.lo);
  const double offset = w.lo + (min_span_fraction < 1.0 ? rng.uniform() : 0.0) * (w.hi - w.lo - width);
  if (hi - lo <= 0.0) {
    std::fill(v.begin(), v.end(), offset + 0.5 * width);
    return;
  }
  for (double& x : v) x = offset + (x - lo) / (hi - lo) * width;
}

/// One random (s, c) pair on the grid; a pure function of (cfg, seed).
inline ControlGrid rfs_sample(const RFSConfig& cfg, std::uint64_t seed, double t_total, double dt) {
  cfg.validate();
  Rng rng(seed);
  const auto s_comps = rfs_components(cfg, rng);
  const auto c_comps = rfs_components(cfg, rng);
  ControlGrid g{t_total, dt, rfs_signal(s_comps, t_total, dt), rfs_signal(c_comps, t_total, dt)};
  if (cfg.s_window) rescale_into(g.s_values, *cfg.s_window, cfg.s_min_span_fraction, rng);
  if (cfg.c_window) rescale_into(g.c_values, *cfg.c_window, cfg.c_min_span_fraction, rng);
  g.t_total = dt * static_cast<double>(g.n_steps());
  return g;
}

}  // namespace qctrl
