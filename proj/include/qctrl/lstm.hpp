// lstm.hpp: stacked LSTM surrogate of the open-system dynamics.
//
// Step t consumes the feature vector
//   x_t = (<sx>, <sy>, <sz>, s_t, s_{t+1}, c_t, c_{t+1}, Gamma, gamma, T, t)
// with the Bloch entries taken from the model's own previous prediction, and
// emits <sigma>_{t+1} through a linear head on the top layer. An MLP maps the
// initial Bloch vector to every layer's (h0, c0).
//
// All weights live in one flat vector, in this order:
//   for each layer l:  W_l (4H x (in_l + H)), b_l (4H)      gate rows: forget, input, output, candidate
//   head:              W_out (3 x H), b_out (3)
//   encoder:           E1 (E x 3), e1 (E), E2 (2 L H x E), e2 (2 L H)
// Matrices are column-major. Encoder output rows hold h0 of layers 0..L-1 then c0 of layers 0..L-1.

#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "qctrl/adam.hpp"
#include "qctrl/dataset.hpp"
#include "qctrl/dynamics.hpp"
#include "qctrl/error.hpp"
#include "qctrl/random.hpp"
#include "qctrl/solver.hpp"

namespace qctrl {

inline constexpr int kFeatureDim = 11;
inline constexpr int kStaticFeatures = kFeatureDim - 3;

/// Per-feature affine normalization: scaled = (x - offset) / scale.
struct FeatureScaler {
  std::array<double, kFeatureDim> offset{0, 0, 0, 0, 0, 0, 0, 0, 1, 5, 0};
  std::array<double, kFeatureDim> scale{1, 1, 1, 1, 1, 60, 60, 0.05, 29, 10, 2.5};

  static FeatureScaler for_window(double trained_t_total) {
    FeatureScaler f;
    f.scale[10] = trained_t_total;
    return f;
  }

  double apply(int i, double x) const { return (x - offset[static_cast<std::size_t>(i)]) / scale[static_cast<std::size_t>(i)]; }
  double invert(int i, double y) const { return y * scale[static_cast<std::size_t>(i)] + offset[static_cast<std::size_t>(i)]; }

  void validate() const {
    for (int i = 0; i < kFeatureDim; ++i)
      if (!std::isfinite(offset[static_cast<std::size_t>(i)]) || !std::isfinite(scale[static_cast<std::size_t>(i)]) ||
          scale[static_cast<std::size_t>(i)] == 0.0)
        throw ConfigError("feature scaler: scale must be finite and nonzero");
  }
};

struct SurrogateArch {
  int n_layers = 4;
  int hidden = 128;
  int encoder_hidden = 256;
  double dt = 0.05;

  void validate() const {
    if (n_layers < 1 || hidden < 1 || encoder_hidden < 1) throw ConfigError("surrogate: layer sizes must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("surrogate: dt must be > 0");
  }
};

/// Offsets of every weight block inside the flat parameter vector.
struct ParamLayout {
  struct Block {
    Eigen::Index offset, rows, cols;
  };
  std::vector<Block> w, b;
  Block w_out{}, b_out{}, e1_w{}, e1_b{}, e2_w{}, e2_b{};
  Eigen::Index total = 0;

  explicit ParamLayout(const SurrogateArch& a) {
    const Eigen::Index h = a.hidden;
    auto take = [&](Eigen::Index rows, Eigen::Index cols) {
      Block blk{total, rows, cols};
      total += rows * cols;
      return blk;
    };
    for (int l = 0; l < a.n_layers; ++l) {
      const Eigen::Index in = l == 0 ? kFeatureDim : h;
      w.push_back(take(4 * h, in + h));
      b.push_back(take(4 * h, 1));
    }
    w_out = take(3, h);
    b_out = take(3, 1);
    e1_w = take(a.encoder_hidden, 3);
    e1_b = take(a.encoder_hidden, 1);
    e2_w = take(2 * a.n_layers * h, a.encoder_hidden);
    e2_b = take(2 * a.n_layers * h, 1);
  }
};

struct SurrogateModel {
  SurrogateArch arch;
  FeatureScaler scaler;
  Eigen::VectorXd params;
  nlohmann::json metadata = nlohmann::json::object();

  Eigen::Index param_count() const { return ParamLayout(arch).total; }
};

/// Uniform(+-1/sqrt(fan_in)) weights, forget-gate bias +1.
inline SurrogateModel init_model(const SurrogateArch& arch, const FeatureScaler& scaler, std::uint64_t seed) {
  arch.validate();
  scaler.validate();
  SurrogateModel m{arch, scaler, {}, nlohmann::json::object()};
  const ParamLayout lay(arch);
  m.params.resize(lay.total);
  Rng rng(seed);
  auto fill = [&](const ParamLayout::Block& blk, double fan_in) {
    const double r = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < blk.rows * blk.cols; ++i) m.params(blk.offset + i) = rng.uniform(-r, r);
  };
  for (int l = 0; l < arch.n_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    fill(lay.w[li], static_cast<double>(lay.w[li].cols));
    fill(lay.b[li], static_cast<double>(lay.w[li].cols));
    m.params.segment(lay.b[li].offset, arch.hidden).array() += 1.0;
  }
  fill(lay.w_out, arch.hidden);
  fill(lay.b_out, arch.hidden);
  fill(lay.e1_w, 3.0);
  fill(lay.e1_b, 3.0);
  fill(lay.e2_w, arch.encoder_hidden);
  fill(lay.e2_b, arch.encoder_hidden);
  return m;
}

// --------------------------- Single cell ------------------------------------

template <typename Scalar>
struct CellOutput {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h, c;
};

/// One LSTM cell: z = W [x; h] + b, gates in forget/input/output/candidate order.
template <typename Scalar>
CellOutput<Scalar> lstm_cell(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
                             const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& h,
                             const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& c,
                             const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& w,
                             const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b) {
  const Eigen::Index hs = h.size();
  if (c.size() != hs || w.rows() != 4 * hs || w.cols() != x.size() + hs || b.size() != 4 * hs)
    throw ConfigError("lstm_cell: dimension mismatch");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> xh(x.size() + hs);
  xh << x, h;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z = w * xh + b;
  const auto f = z.segment(0, hs).array().logistic();
  const auto i = z.segment(hs, hs).array().logistic();
  const auto o = z.segment(2 * hs, hs).array().logistic();
  const auto g = z.segment(3 * hs, hs).array().tanh();
  CellOutput<Scalar> out;
  out.c = (f * c.array() + i * g).matrix();
  out.h = (o * out.c.array().tanh()).matrix();
  return out;
}

// --------------------------- Batched network --------------------------------

/// One sequence of the batch. s and c carry n_steps + 1 samples.
struct SequenceInput {
  BlochVector b0;
  const std::vector<double>* s = nullptr;
  const std::vector<double>* c = nullptr;
  BathParams bath;
};

/// Stacked LSTM over a batch of equal-length sequences, with cached forward
/// state for backpropagation through time.
template <typename Scalar>
class LstmNetwork {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MapM = Eigen::Map<Mat>;
  using CMapM = Eigen::Map<const Mat>;

  /// Gradients of the loss with respect to the control samples, (n_steps + 1) x batch.
  struct InputGrads {
    Mat s, c;
  };

  LstmNetwork(const SurrogateArch& arch, const FeatureScaler& scaler)
      : arch_(arch), scaler_(scaler), layout_(arch) {
    arch.validate();
    scaler.validate();
    params = Vec::Zero(layout_.total);
    grads = Vec::Zero(layout_.total);
  }

  explicit LstmNetwork(const SurrogateModel& m) : LstmNetwork(m.arch, m.scaler) { set_params(m.params); }

  void set_params(const Eigen::VectorXd& p) {
    if (p.size() != layout_.total) throw ConfigError("surrogate: parameter count does not match architecture");
    params = p.cast<Scalar>();
  }

  const SurrogateArch& arch() const { return arch_; }
  const FeatureScaler& scaler() const { return scaler_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t n_steps() const { return n_steps_; }
  Eigen::Index batch() const { return batch_; }

  /// Runs the autoregressive rollout. prediction(t) is the 3 x B block for <sigma>_{t+1}.
  void forward(const std::vector<SequenceInput>& seqs, std::size_t n_steps) {
    if (seqs.empty()) throw ConfigError("surrogate: empty batch");
    if (n_steps < 1) throw ConfigError("surrogate: need at least one step");
    for (const auto& q : seqs)
      if (!q.s || !q.c || q.s->size() != n_steps + 1 || q.c->size() != n_steps + 1)
        throw ConfigError("surrogate: control length does not match the step count");
    const auto bsz = static_cast<Eigen::Index>(seqs.size());
    resize(n_steps, bsz);
    const int nl = arch_.n_layers;
    const Eigen::Index hs = arch_.hidden;

    b0_.resize(3, bsz);
    for (Eigen::Index j = 0; j < bsz; ++j) {
      const auto& q = seqs[static_cast<std::size_t>(j)];
      b0_.col(j) << Scalar(q.b0.x), Scalar(q.b0.y), Scalar(q.b0.z);
      for (std::size_t t = 0; t < n_steps; ++t) {
        auto col = statics_[t].col(j);
        col(0) = feature(3, (*q.s)[t]);
        col(1) = feature(4, (*q.s)[t + 1]);
        col(2) = feature(5, (*q.c)[t]);
        col(3) = feature(6, (*q.c)[t + 1]);
        col(4) = feature(7, q.bath.coupling);
        col(5) = feature(8, q.bath.cutoff);
        col(6) = feature(9, q.bath.temperature);
        col(7) = feature(10, static_cast<double>(t) * arch_.dt);
      }
    }

    enc_hidden_.noalias() = W(layout_.e1_w) * b0_;
    enc_hidden_.colwise() += V(layout_.e1_b);
    enc_hidden_ = enc_hidden_.array().tanh().matrix();
    enc_out_.noalias() = W(layout_.e2_w) * enc_hidden_;
    enc_out_.colwise() += V(layout_.e2_b);

    for (int l = 0; l < nl; ++l) {
      h_[l] = enc_out_.middleRows(l * hs, hs);
      c_[l] = enc_out_.middleRows((nl + l) * hs, hs);
    }

    const Eigen::Index x_rows = kFeatureDim;
    for (std::size_t t = 0; t < n_steps; ++t) {
      for (int l = 0; l < nl; ++l) {
        Mat& cat = concat_[idx(l, t)];
        const Eigen::Index in = l == 0 ? x_rows : hs;
        if (l == 0) {
          const Mat& b = t == 0 ? b0_ : pred_[t - 1];
          for (int k = 0; k < 3; ++k)
            cat.row(k) = (b.row(k).array() - Scalar(scaler_.offset[static_cast<std::size_t>(k)])) /
                         Scalar(scaler_.scale[static_cast<std::size_t>(k)]);
          cat.middleRows(3, kStaticFeatures) = statics_[t];
        } else {
          cat.topRows(in) = h_[l - 1];
        }
        cat.bottomRows(hs) = h_[l];
        Mat& gate = gates_[idx(l, t)];
        gate.noalias() = W(layout_.w[static_cast<std::size_t>(l)]) * cat;
        gate.colwise() += V(layout_.b[static_cast<std::size_t>(l)]);
        gate.topRows(3 * hs) = gate.topRows(3 * hs).array().logistic().matrix();
        gate.bottomRows(hs) = gate.bottomRows(hs).array().tanh().matrix();
        c_prev_[idx(l, t)] = c_[l];
        c_[l] = (gate.topRows(hs).array() * c_[l].array() +
                 gate.middleRows(hs, hs).array() * gate.bottomRows(hs).array())
                    .matrix();
        Mat& tc = tanh_c_[idx(l, t)];
        tc = c_[l].array().tanh().matrix();
        h_[l] = (gate.middleRows(2 * hs, hs).array() * tc.array()).matrix();
      }
      h_top_[t] = h_[nl - 1];
      pred_[t].noalias() = W(layout_.w_out) * h_[nl - 1];
      pred_[t].colwise() += V(layout_.b_out);
    }
  }

  const Mat& prediction(std::size_t t) const { return pred_[t]; }

  /// Backpropagates dL/dprediction(t) for every t. Parameter gradients are
  /// accumulated into `grads` when requested; control gradients go to `in`.
  void backward(const std::vector<Mat>& dpred, bool want_params, InputGrads* in = nullptr) {
    if (dpred.size() != n_steps_) throw ConfigError("surrogate: gradient length does not match the rollout");
    const int nl = arch_.n_layers;
    const Eigen::Index hs = arch_.hidden;
    const Eigen::Index bsz = batch_;
    for (int l = 0; l < nl; ++l) {
      dh_[l].setZero(hs, bsz);
      dc_[l].setZero(hs, bsz);
    }
    if (in) {
      in->s.setZero(static_cast<Eigen::Index>(n_steps_ + 1), bsz);
      in->c.setZero(static_cast<Eigen::Index>(n_steps_ + 1), bsz);
    }
    Mat db_next = Mat::Zero(3, bsz);
    Mat dy(3, bsz), dz(4 * hs, bsz), dcat, dcn(hs, bsz);

    for (std::size_t t = n_steps_; t-- > 0;) {
      dy = dpred[t] + db_next;
      if (want_params) {
        G(layout_.w_out).noalias() += dy * h_top_[t].transpose();
        GV(layout_.b_out) += dy.rowwise().sum();
      }
      dh_[nl - 1].noalias() += W(layout_.w_out).transpose() * dy;

      for (int l = nl - 1; l >= 0; --l) {
        const Mat& gate = gates_[idx(l, t)];
        const Mat& tc = tanh_c_[idx(l, t)];
        const auto f = gate.topRows(hs).array();
        const auto i = gate.middleRows(hs, hs).array();
        const auto o = gate.middleRows(2 * hs, hs).array();
        const auto g = gate.bottomRows(hs).array();
        dcn = (dc_[l].array() + dh_[l].array() * o * (Scalar(1) - tc.array().square())).matrix();
        dz.topRows(hs) = (dcn.array() * c_prev_[idx(l, t)].array() * f * (Scalar(1) - f)).matrix();
        dz.middleRows(hs, hs) = (dcn.array() * g * i * (Scalar(1) - i)).matrix();
        dz.middleRows(2 * hs, hs) = (dh_[l].array() * tc.array() * o * (Scalar(1) - o)).matrix();
        dz.bottomRows(hs) = (dcn.array() * i * (Scalar(1) - g.square())).matrix();
        dc_[l] = (dcn.array() * f).matrix();

        const auto li = static_cast<std::size_t>(l);
        if (want_params) {
          G(layout_.w[li]).noalias() += dz * concat_[idx(l, t)].transpose();
          GV(layout_.b[li]) += dz.rowwise().sum();
        }
        dcat.noalias() = W(layout_.w[li]).transpose() * dz;
        const Eigen::Index in_rows = dcat.rows() - hs;
        dh_[l] = dcat.bottomRows(hs);
        if (l > 0) {
          dh_[l - 1] += dcat.topRows(in_rows);
        } else {
          for (int k = 0; k < 3; ++k)
            db_next.row(k) = dcat.row(k) / Scalar(scaler_.scale[static_cast<std::size_t>(k)]);
          if (in) {
            const auto ti = static_cast<Eigen::Index>(t);
            in->s.row(ti) += dcat.row(3) / Scalar(scaler_.scale[3]);
            in->s.row(ti + 1) += dcat.row(4) / Scalar(scaler_.scale[4]);
            in->c.row(ti) += dcat.row(5) / Scalar(scaler_.scale[5]);
            in->c.row(ti + 1) += dcat.row(6) / Scalar(scaler_.scale[6]);
          }
        }
      }
    }

    if (!want_params) return;
    Mat d_enc(2 * nl * hs, bsz);
    for (int l = 0; l < nl; ++l) {
      d_enc.middleRows(l * hs, hs) = dh_[l];
      d_enc.middleRows((nl + l) * hs, hs) = dc_[l];
    }
    G(layout_.e2_w).noalias() += d_enc * enc_hidden_.transpose();
    GV(layout_.e2_b) += d_enc.rowwise().sum();
    const Mat d_hid = ((W(layout_.e2_w).transpose() * d_enc).array() * (Scalar(1) - enc_hidden_.array().square())).matrix();
    G(layout_.e1_w).noalias() += d_hid * b0_.transpose();
    GV(layout_.e1_b) += d_hid.rowwise().sum();
  }

  /// Encoder output for one initial state: rows h0 of each layer, then c0 of each layer.
  Vec encode(const BlochVector& b) const {
    Vec in(3);
    in << Scalar(b.x), Scalar(b.y), Scalar(b.z);
    const Vec hid = ((W(layout_.e1_w) * in + V(layout_.e1_b)).array().tanh()).matrix();
    return W(layout_.e2_w) * hid + V(layout_.e2_b);
  }

  Vec params;
  Vec grads;

 private:
  Scalar feature(int i, double x) const { return static_cast<Scalar>(scaler_.apply(i, x)); }

  CMapM W(const ParamLayout::Block& b) const { return CMapM(params.data() + b.offset, b.rows, b.cols); }
  Eigen::Map<const Vec> V(const ParamLayout::Block& b) const { return Eigen::Map<const Vec>(params.data() + b.offset, b.rows); }
  MapM G(const ParamLayout::Block& b) { return MapM(grads.data() + b.offset, b.rows, b.cols); }
  Eigen::Map<Vec> GV(const ParamLayout::Block& b) { return Eigen::Map<Vec>(grads.data() + b.offset, b.rows); }

  std::size_t idx(int l, std::size_t t) const { return t * static_cast<std::size_t>(arch_.n_layers) + static_cast<std::size_t>(l); }

  void resize(std::size_t n_steps, Eigen::Index bsz) {
    const int nl = arch_.n_layers;
    const Eigen::Index hs = arch_.hidden;
    if (n_steps == n_steps_ && bsz == batch_) return;
    n_steps_ = n_steps;
    batch_ = bsz;
    const std::size_t cells = n_steps * static_cast<std::size_t>(nl);
    concat_.assign(cells, Mat());
    gates_.assign(cells, Mat());
    c_prev_.assign(cells, Mat());
    tanh_c_.assign(cells, Mat());
    for (std::size_t t = 0; t < n_steps; ++t)
      for (int l = 0; l < nl; ++l) {
        concat_[idx(l, t)].resize((l == 0 ? kFeatureDim : hs) + hs, bsz);
        gates_[idx(l, t)].resize(4 * hs, bsz);
      }
    statics_.assign(n_steps, Mat(kStaticFeatures, bsz));
    pred_.assign(n_steps, Mat(3, bsz));
    h_top_.assign(n_steps, Mat(hs, bsz));
    h_.assign(static_cast<std::size_t>(nl), Mat());
    c_.assign(static_cast<std::size_t>(nl), Mat());
    dh_.assign(static_cast<std::size_t>(nl), Mat());
    dc_.assign(static_cast<std::size_t>(nl), Mat());
  }

  SurrogateArch arch_;
  FeatureScaler scaler_;
  ParamLayout layout_;
  std::size_t n_steps_ = 0;
  Eigen::Index batch_ = 0;
  Mat b0_, enc_hidden_, enc_out_;
  std::vector<Mat> statics_, concat_, gates_, c_prev_, tanh_c_, pred_, h_top_;
  std::vector<Mat> h_, c_, dh_, dc_;
};

// --------------------------- Inference helpers ------------------------------

/// Autoregressive prediction of <sigma>_1 .. <sigma>_N from the controls on the surrogate grid.
inline std::vector<BlochVector> rollout(const SurrogateModel& model, const BlochVector& b0, const ControlGrid& controls,
                                        const BathParams& bath) {
  controls.validate();
  if (std::abs(controls.dt - model.arch.dt) > 1e-12) throw ConfigError("rollout: control step differs from the model step");
  LstmNetwork<double> net(model);
  const std::size_t n = controls.n_steps();
  net.forward({SequenceInput{b0, &controls.s_values, &controls.c_values, bath}}, n);
  std::vector<BlochVector> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& p = net.prediction(t);
    out[t] = {p(0, 0), p(1, 0), p(2, 0)};
  }
  return out;
}

/// (1/N) sum_t w . (pred_t - truth_t)^2 with per-component weights w (uniform by default).
inline double mse(const std::vector<BlochVector>& pred, const std::vector<BlochVector>& truth,
                  const std::array<double, 3>& weights = {1.0, 1.0, 1.0}) {
  if (pred.size() != truth.size()) throw ConfigError("mse: length mismatch");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i].x - truth[i].x, dy = pred[i].y - truth[i].y, dz = pred[i].z - truth[i].z;
    sum += weights[0] * dx * dx + weights[1] * dy * dy + weights[2] * dz * dz;
  }
  return sum / static_cast<double>(pred.size());
}

/// Per-step squared error.
inline std::vector<double> step_errors(const std::vector<BlochVector>& pred, const std::vector<BlochVector>& truth,
                                       const std::array<double, 3>& weights = {1.0, 1.0, 1.0}) {
  if (pred.size() != truth.size()) throw ConfigError("step_errors: length mismatch");
  std::vector<double> e(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) e[i] = mse({pred[i]}, {truth[i]}, weights);
  return e;
}

// --------------------------- Training ---------------------------------------

struct TrainingConfig {
  double learning_rate = 1e-3;
  /// Cosine decay from learning_rate down to this value across the epochs; 0 keeps the rate constant.
  double final_learning_rate = 0.0;
  int epochs = 50;
  int batch_size = 128;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip per batch; 0 disables.
  double grad_clip = 0.0;
  SurrogateArch arch;
  double trained_t_total = 2.5;

  void validate() const {
    if (!(learning_rate > 0.0) || epochs < 0 || batch_size < 1) throw ConfigError("training: lr, epochs and batch size must be positive");
    if (train_fraction <= 0.0 || val_fraction < 0.0 || test_fraction < 0.0 ||
        std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
      throw ConfigError("training: split fractions must be non-negative and sum to 1");
    if (grad_clip < 0.0) throw ConfigError("training: grad_clip must be >= 0");
    if (final_learning_rate < 0.0 || final_learning_rate > learning_rate)
      throw ConfigError("training: final_learning_rate must lie in [0, learning_rate]");
    arch.validate();
  }

  double rate_at(int epoch) const {
    if (final_learning_rate <= 0.0 || epochs <= 1) return learning_rate;
    const double x = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return final_learning_rate + 0.5 * (learning_rate - final_learning_rate) * (1.0 + std::cos(std::numbers::pi * x));
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  SurrogateModel model;
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double test_loss = 0.0;
  std::vector<std::uint64_t> test_ids;
};

struct DatasetSplit {
  std::vector<const DatasetRecord*> train, val, test;
};

/// Deterministic split by ascending sample id.
inline DatasetSplit split_dataset(const std::vector<DatasetRecord>& records, const TrainingConfig& cfg) {
  std::vector<const DatasetRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  const auto n = sorted.size();
  auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  n_train = std::min(std::max<std::size_t>(n_train, 1), n);
  n_val = std::min(n_val, n - n_train);
  DatasetSplit s;
  s.train.assign(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(sorted.begin() + static_cast<std::ptrdiff_t>(n_train),
               sorted.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(sorted.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), sorted.end());
  return s;
}

inline SequenceInput as_sequence(const DatasetRecord& r) { return {r.bloch.front(), &r.s, &r.c, r.bath}; }

/// Mean-squared rollout error of one batch; fills dpred with dL/dprediction when non-null.
template <typename Scalar>
double batch_loss(LstmNetwork<Scalar>& net, const std::vector<const DatasetRecord*>& batch,
                  std::vector<typename LstmNetwork<Scalar>::Mat>* dpred, double weight_total) {
  std::vector<SequenceInput> seqs;
  seqs.reserve(batch.size());
  for (auto* r : batch) seqs.push_back(as_sequence(*r));
  const std::size_t n = batch.front()->n_steps;
  net.forward(seqs, n);
  const double norm = static_cast<double>(n) * weight_total;
  double loss = 0.0;
  if (dpred) dpred->assign(n, typename LstmNetwork<Scalar>::Mat(3, static_cast<Eigen::Index>(batch.size())));
  for (std::size_t t = 0; t < n; ++t) {
    const auto& p = net.prediction(t);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto& b = batch[j]->bloch[t + 1];
      const double e[3] = {static_cast<double>(p(0, static_cast<Eigen::Index>(j))) - b.x,
                           static_cast<double>(p(1, static_cast<Eigen::Index>(j))) - b.y,
                           static_cast<double>(p(2, static_cast<Eigen::Index>(j))) - b.z};
      for (int k = 0; k < 3; ++k) {
        loss += e[k] * e[k];
        if (dpred) (*dpred)[t](k, static_cast<Eigen::Index>(j)) = static_cast<Scalar>(2.0 * e[k] / norm);
      }
    }
  }
  return loss / norm;
}

/// Mean per-sample rollout MSE over a record set, evaluated in batches.
template <typename Scalar>
double evaluate_loss(LstmNetwork<Scalar>& net, const std::vector<const DatasetRecord*>& recs, int batch_size) {
  if (recs.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < recs.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::vector<const DatasetRecord*> b(recs.begin() + static_cast<std::ptrdiff_t>(i),
                                              recs.begin() + static_cast<std::ptrdiff_t>(std::min(recs.size(), i + static_cast<std::size_t>(batch_size))));
    sum += batch_loss(net, b, nullptr, static_cast<double>(b.size())) * static_cast<double>(b.size());
  }
  return sum / static_cast<double>(recs.size());
}

/// Free-running BPTT training with Adam. Returns the best-validation weights.
inline TrainResult train(const std::vector<DatasetRecord>& records, const TrainingConfig& cfg,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (records.empty()) throw ConfigError("train: empty dataset");
  for (const auto& r : records) {
    if (r.n_steps != records.front().n_steps) throw ConfigError("train: records differ in step count");
    if (std::abs(r.dt - cfg.arch.dt) > 1e-12) throw ConfigError("train: record dt differs from the model dt");
  }
  const DatasetSplit split = split_dataset(records, cfg);
  const FeatureScaler scaler = FeatureScaler::for_window(cfg.trained_t_total);
  SurrogateModel model = init_model(cfg.arch, scaler, derive_seed(cfg.seed, 0, 0));

  LstmNetwork<float> net(model);
  AdamState<float> adam(net.params.size());
  AdamConfig acfg;
  acfg.alpha = cfg.learning_rate;

  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<const DatasetRecord*> order = split.train;
  std::vector<LstmNetwork<float>::Mat> dpred;
  Eigen::VectorXf best = net.params;
  const auto& val_set = split.val.empty() ? split.train : split.val;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(epoch)));
    acfg.alpha = cfg.rate_at(epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    double train_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size), ++n_batches) {
      const std::vector<const DatasetRecord*> b(order.begin() + static_cast<std::ptrdiff_t>(i),
                                                order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size))));
      const double loss = batch_loss(net, b, &dpred, static_cast<double>(b.size()));
      if (!std::isfinite(loss))
        throw NumericalError("diverged training at epoch " + std::to_string(epoch) + ", batch " + std::to_string(n_batches));
      net.grads.setZero();
      net.backward(dpred, true);
      if (cfg.grad_clip > 0.0) {
        const double gn = static_cast<double>(net.grads.norm());
        if (gn > cfg.grad_clip) net.grads *= static_cast<float>(cfg.grad_clip / gn);
      }
      adam_step(net.params, net.grads, adam, acfg);
      train_sum += loss;
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = train_sum / static_cast<double>(std::max<std::size_t>(n_batches, 1));
    st.val_loss = evaluate_loss(net, val_set, cfg.batch_size);
    if (!std::isfinite(st.val_loss)) throw NumericalError("diverged training: non-finite validation loss at epoch " + std::to_string(epoch));
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (st.val_loss < res.best_val_loss) {
      res.best_val_loss = st.val_loss;
      res.best_epoch = epoch;
      best = net.params;
    }
    res.history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  net.params = best;
  res.test_loss = split.test.empty() ? 0.0 : evaluate_loss(net, split.test, cfg.batch_size);
  for (auto* r : split.test) res.test_ids.push_back(r->id);
  model.params = best.cast<double>();
  model.metadata = {{"epochs", cfg.epochs},
                    {"best_epoch", res.best_epoch},
                    {"best_val_loss", res.best_val_loss},
                    {"test_loss", res.test_loss},
                    {"learning_rate", cfg.learning_rate},
                    {"batch_size", cfg.batch_size},
                    {"seed", cfg.seed},
                    {"n_train", split.train.size()},
                    {"n_val", split.val.size()},
                    {"n_test", split.test.size()},
                    {"trained_t_total", cfg.trained_t_total}};
  res.model = std::move(model);
  return res;
}

// --------------------------- Model file -------------------------------------
//
// Little-endian layout:
//   char[8]  "QCLSTM\0\0"
//   u32      format version
//   u32      n_layers, hidden, feature_dim, encoder_hidden
//   f64      dt
//   f64[11]  scaler offsets, f64[11] scaler scales
//   u64      metadata length, then that many bytes of JSON
//   u64      parameter count, then f64 parameters in the flat order above

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[8] = {'Q', 'C', 'L', 'S', 'T', 'M', '\0', '\0'};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("model file is truncated or corrupt");
  char buf[sizeof(T)];
  std::memcpy(buf, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline std::string serialize_model(const SurrogateModel& m) {
  std::string out(kModelMagic, sizeof(kModelMagic));
  detail::put_le<std::uint32_t>(out, kModelFormatVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.arch.n_layers));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.arch.hidden));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kFeatureDim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.arch.encoder_hidden));
  detail::put_le<double>(out, m.arch.dt);
  for (double v : m.scaler.offset) detail::put_le<double>(out, v);
  for (double v : m.scaler.scale) detail::put_le<double>(out, v);
  const std::string meta = m.metadata.dump();
  detail::put_le<std::uint64_t>(out, meta.size());
  out += meta;
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.params.size()));
  for (Eigen::Index i = 0; i < m.params.size(); ++i) detail::put_le<double>(out, m.params(i));
  return out;
}

inline SurrogateModel deserialize_model(const std::string& bytes) {
  if (bytes.size() < sizeof(kModelMagic) || std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0)
    throw IoError("not a QCLSTM model file");
  std::size_t pos = sizeof(kModelMagic);
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kModelFormatVersion)
    throw IoError("model format version mismatch: file has " + std::to_string(version) + ", expected " +
                  std::to_string(kModelFormatVersion));
  SurrogateModel m;
  m.arch.n_layers = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  m.arch.hidden = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  const auto fdim = detail::get_le<std::uint32_t>(bytes, pos);
  if (fdim != kFeatureDim) throw IoError("model feature dimension " + std::to_string(fdim) + " is not supported");
  m.arch.encoder_hidden = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  m.arch.dt = detail::get_le<double>(bytes, pos);
  for (double& v : m.scaler.offset) v = detail::get_le<double>(bytes, pos);
  for (double& v : m.scaler.scale) v = detail::get_le<double>(bytes, pos);
  const auto meta_len = detail::get_le<std::uint64_t>(bytes, pos);
  if (meta_len > bytes.size() - pos) throw IoError("model file is truncated or corrupt");
  try {
    m.metadata = nlohmann::json::parse(bytes.substr(pos, meta_len));
  } catch (const nlohmann::json::exception&) {
    throw IoError("model file metadata is corrupt");
  }
  pos += meta_len;
  const auto n = detail::get_le<std::uint64_t>(bytes, pos);
  try {
    m.arch.validate();
    m.scaler.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("model file header is corrupt: ") + e.what());
  }
  if (static_cast<Eigen::Index>(n) != m.param_count()) throw IoError("model parameter count does not match its architecture");
  if (bytes.size() - pos != n * sizeof(double)) throw IoError("model file is truncated or corrupt");
  m.params.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < m.params.size(); ++i) m.params(i) = detail::get_le<double>(bytes, pos);
  return m;
}

inline void save_model(const SurrogateModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path);
  const std::string bytes = serialize_model(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing model file " + path);
}

inline SurrogateModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace qctrl
