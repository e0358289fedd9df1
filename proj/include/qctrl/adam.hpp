// adam.hpp: Adam with bias correction, shared by the surrogate trainer and the control optimizer.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>

#include "qctrl/error.hpp"

namespace qctrl {

struct AdamConfig {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int k_max = 200;

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("adam: learning rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam: betas must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
    if (k_max < 0) throw ConfigError("adam: k_max must be >= 0");
  }
};

template <typename Scalar>
struct AdamState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector m;
  Vector v;
  std::int64_t k = 0;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

/// One update in place. t = k + 1 is the step used for bias correction.
template <typename Scalar, typename Params, typename Grad>
void adam_step(Eigen::MatrixBase<Params>& params, const Eigen::MatrixBase<Grad>& grad, AdamState<Scalar>& st,
               const AdamConfig& cfg) {
  if (params.size() != grad.size() || st.m.size() != params.size())
    throw ConfigError("adam: parameter, gradient and state lengths differ");
  if (!grad.allFinite()) throw NumericalError("adam: non-finite gradient");
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const double t = static_cast<double>(st.k + 1);
  const auto c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const auto c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const auto lr = static_cast<Scalar>(cfg.alpha);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  st.m = b1 * st.m + (Scalar(1) - b1) * grad;
  st.v = b2 * st.v + (Scalar(1) - b2) * grad.cwiseAbs2();
  params -= (lr * (st.m * c1).array() / ((st.v * c2).array().sqrt() + eps)).matrix();
  ++st.k;
}

}  // namespace qctrl
