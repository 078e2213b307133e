#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "specmon/lstm.hpp"
#include "specmon/pass.hpp"
#include "specmon/rng.hpp"
#include "specmon/spectrum.hpp"

namespace specmon {

enum class LossKind { Abs, Mse };

inline const char* to_string(LossKind k) {
  return k == LossKind::Abs ? "abs" : "mse";
}

struct TrainConfig {
  double learning_rate = 0.02;
  int predictor_epochs = 6000;
  int classifier_epochs = 3000;
  LossKind loss = LossKind::Abs;
  int truncation_span = 1;  // steps the gradient flows back through
  std::uint64_t seed = 1;
  double init_scale = 0.1;
  Squash squash = Squash::Sigmoid;
  // Samples per update during the sequential scan of each pass. 0 selects
  // plain full-batch descent (one update per epoch); the default mini-batch
  // size is what actually reaches the jitter floor within the epoch budgets
  // this project runs at.
  int batch_size = 64;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (predictor_epochs < 1 || classifier_epochs < 1)
      throw ConfigError("epochs must be >= 1");
    if (truncation_span < 1) throw ConfigError("truncation_span must be >= 1");
    if (batch_size < 0) throw ConfigError("batch_size must be >= 0");
    if (!(init_scale >= 0)) throw ConfigError("init_scale must be >= 0");
  }
};

/// Per-epoch loss values (for mini-batch runs: the running mean over the
/// epoch's batches), the loss of the final parameters over the whole
/// training set, and the wall-clock cost.
struct LossReport {
  std::vector<double> per_epoch;
  double final_loss = 0.0;
  double seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Losses. |.| and (.)^2 are element-wise; the scalar is averaged over both
// the sample count I and the d bins, so ABS and MSE live on comparable
// per-bin scales.
// ---------------------------------------------------------------------------

inline double loss_abs(const Eigen::MatrixXd& predictions,
                       const Eigen::MatrixXd& targets) {
  if (predictions.rows() != targets.rows() ||
      predictions.cols() != targets.cols())
    throw DimensionMismatchError("loss_abs shapes");
  if (predictions.rows() == 0) throw EmptySetError("loss_abs");
  return (predictions - targets).array().abs().sum() /
         double(predictions.size());
}

inline double loss_mse(const Eigen::MatrixXd& predictions,
                       const Eigen::MatrixXd& targets) {
  if (predictions.rows() != targets.rows() ||
      predictions.cols() != targets.cols())
    throw DimensionMismatchError("loss_mse shapes");
  if (predictions.rows() == 0) throw EmptySetError("loss_mse");
  return (predictions - targets).squaredNorm() / double(predictions.size());
}

namespace detail {
inline Eigen::MatrixXd spectra_matrix(const std::vector<Spectrum>& v,
                                      bool want_normalized) {
  if (v.empty()) throw EmptySetError("no spectra");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), v[0].bins.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].normalized != want_normalized) {
      if (want_normalized) throw NotNormalizedError();
      throw AlreadyNormalizedError();
    }
    m.row(static_cast<Eigen::Index>(i)) = v[i].bins.transpose();
  }
  return m;
}
}  // namespace detail

inline double loss_abs(const std::vector<Spectrum>& predictions,
                       const std::vector<Spectrum>& targets) {
  return loss_abs(detail::spectra_matrix(predictions, true),
                  detail::spectra_matrix(targets, true));
}

inline double loss_mse(const std::vector<Spectrum>& predictions,
                       const std::vector<Spectrum>& targets) {
  return loss_mse(detail::spectra_matrix(predictions, true),
                  detail::spectra_matrix(targets, true));
}

/// Multiclass cross-entropy, summed (not averaged) over samples:
///   l = -sum_i ln p_{true_i}(y_i).
/// Probabilities at or below zero for the true class are invalid input;
/// subnormal underflow is clamped at 1e-300 so the result stays finite.
inline double loss_class(const Eigen::MatrixXd& probabilities,
                         const std::vector<ModClass>& labels) {
  if (probabilities.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DimensionMismatchError("loss_class rows != labels");
  if (labels.empty()) throw EmptySetError("loss_class");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    const double row_sum = probabilities.row(i).sum();
    if (std::abs(row_sum - 1.0) > 1e-9)
      throw InvalidProbabilityError("row " + std::to_string(i) + " sums to " +
                                    std::to_string(row_sum));
    const double p = probabilities(i, static_cast<int>(labels[static_cast<std::size_t>(i)]));
    if (p <= 0.0)
      throw InvalidProbabilityError("true-class probability <= 0 at row " +
                                    std::to_string(i));
    loss -= std::log(std::max(p, 1e-300));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Internal packed representation used by the training loops: the four gate
// families stacked row-wise in the fixed block order [candidate; forget;
// input; output], so batched steps are two GEMMs instead of eight matvecs.
// ---------------------------------------------------------------------------

namespace detail {

struct PackedParams {
  int h = 0, d = 0;
  Squash squash = Squash::Sigmoid;
  Eigen::MatrixXd W;   // 4h x d
  Eigen::MatrixXd U;   // 4h x h
  Eigen::VectorXd b;   // 4h
  Eigen::MatrixXd P;   // d x h (primary head)
  Eigen::VectorXd pb;  // d

  static PackedParams from(const LstmParams& p) {
    PackedParams pk;
    pk.h = p.h; pk.d = p.d; pk.squash = p.squash;
    pk.W.resize(4 * p.h, p.d);
    pk.W << p.W_c, p.W_f, p.W_i, p.W_o;
    pk.U.resize(4 * p.h, p.h);
    pk.U << p.U_c, p.U_f, p.U_i, p.U_o;
    pk.b.resize(4 * p.h);
    pk.b << p.b_c, p.b_f, p.b_i, p.b_o;
    pk.P = p.primary_W;
    pk.pb = p.primary_b;
    return pk;
  }

  void store_into(LstmParams& p) const {
    p.W_c = W.topRows(h); p.W_f = W.middleRows(h, h);
    p.W_i = W.middleRows(2 * h, h); p.W_o = W.bottomRows(h);
    p.U_c = U.topRows(h); p.U_f = U.middleRows(h, h);
    p.U_i = U.middleRows(2 * h, h); p.U_o = U.bottomRows(h);
    p.b_c = b.segment(0, h); p.b_f = b.segment(h, h);
    p.b_i = b.segment(2 * h, h); p.b_o = b.segment(3 * h, h);
    p.primary_W = P;
    p.primary_b = pb;
  }
};

struct PackedGrads {
  Eigen::MatrixXd W, U;
  Eigen::VectorXd b;
  Eigen::MatrixXd P;
  Eigen::VectorXd pb;

  static PackedGrads zeros(int h, int d) {
    return {Eigen::MatrixXd::Zero(4 * h, d), Eigen::MatrixXd::Zero(4 * h, h),
            Eigen::VectorXd::Zero(4 * h), Eigen::MatrixXd::Zero(d, h),
            Eigen::VectorXd::Zero(d)};
  }
  void add(const PackedGrads& o) {
    W += o.W; U += o.U; b += o.b; P += o.P; pb += o.pb;
  }
  void apply(PackedParams& p, double step) const {
    p.W -= step * W; p.U -= step * U; p.b -= step * b;
    p.P -= step * P; p.pb -= step * pb;
  }
};

inline Eigen::ArrayXd squash_deriv_from_value(Squash s, const Eigen::ArrayXd& v) {
  if (s == Squash::Sigmoid) return v * (1.0 - v);
  return 1.0 - v * v;  // tanh'(a) = 1 - tanh(a)^2
}

/// Per-step forward quantities of one pass (rows = sample steps 0..T-2).
struct ForwardCache {
  Eigen::MatrixXd z_prev, c_prev;      // incoming state per step
  Eigen::MatrixXd cand, f, i, o;       // gate activations
  Eigen::MatrixXd c, z;                // outgoing state per step
  void resize(int n, int h) {
    z_prev.resize(n, h); c_prev.resize(n, h);
    cand.resize(n, h); f.resize(n, h); i.resize(n, h); o.resize(n, h);
    c.resize(n, h); z.resize(n, h);
  }
};

/// Runs steps [row0, row0+n) of the input block X through the recurrence,
/// starting from (c_in, z_in), filling cache rows and returning the state
/// after the last step. `wx` must hold X.middleRows(row0, n) * W^T.
inline LstmState forward_rows(const PackedParams& p, const Eigen::MatrixXd& wx,
                              int row0, int n, LstmState state,
                              ForwardCache& cache) {
  const int h = p.h;
  Eigen::ArrayXd pre(4 * h);
  for (int k = 0; k < n; ++k) {
    const int r = row0 + k;
    cache.z_prev.row(r) = state.z.transpose();
    cache.c_prev.row(r) = state.c.transpose();
    pre = (wx.row(k).transpose() + p.U * state.z + p.b).array();
    const Eigen::ArrayXd cd = squash_array(p.squash, pre.segment(0, h));
    const Eigen::ArrayXd f = sigmoid_array(pre.segment(h, h));
    const Eigen::ArrayXd i = sigmoid_array(pre.segment(2 * h, h));
    const Eigen::ArrayXd o = sigmoid_array(pre.segment(3 * h, h));
    const Eigen::ArrayXd c_new = f * state.c.array() + i * cd;
    const Eigen::ArrayXd z_new = o * squash_array(p.squash, c_new);
    cache.cand.row(r) = cd.transpose();
    cache.f.row(r) = f.transpose();
    cache.i.row(r) = i.transpose();
    cache.o.row(r) = o.transpose();
    cache.c.row(r) = c_new.transpose();
    cache.z.row(r) = z_new.transpose();
    state.c = c_new.matrix();
    state.z = z_new.matrix();
  }
  return state;
}

/// dL/dyhat for the block of residuals, including the 1/(count*d) averaging.
/// For the ABS loss the subgradient at an exact zero residual is 0.
inline Eigen::MatrixXd loss_grad(LossKind kind, const Eigen::MatrixXd& residual,
                                 double inv_elements) {
  if (kind == LossKind::Abs)
    return residual.array().sign().matrix() * inv_elements;
  return residual * (2.0 * inv_elements);
}

/// Span-1 backward over cache rows [row0, row0+n): gradients do not flow
/// into the incoming state. dY holds dL/dyhat for those rows.
inline void backward_rows_span1(const PackedParams& p, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& dY, int row0, int n,
                                const ForwardCache& cc, PackedGrads& g) {
  const int h = p.h;
  auto rows = [&](const Eigen::MatrixXd& m) { return m.middleRows(row0, n); };
  g.P.noalias() += dY.transpose() * rows(cc.z);
  g.pb += dY.colwise().sum().transpose();
  const Eigen::MatrixXd dZ = dY * p.P;  // n x h
  Eigen::ArrayXXd sq_c(n, h);
  if (p.squash == Squash::Sigmoid)
    sq_c = rows(cc.c).array().unaryExpr([](double v) { return sigmoid(v); });
  else
    sq_c = rows(cc.c).array().unaryExpr([](double v) { return std::tanh(v); });
  const Eigen::ArrayXXd o = rows(cc.o).array();
  Eigen::ArrayXXd dsq;
  if (p.squash == Squash::Sigmoid) dsq = sq_c * (1.0 - sq_c);
  else dsq = 1.0 - sq_c * sq_c;
  const Eigen::ArrayXXd dO = dZ.array() * sq_c;
  const Eigen::ArrayXXd dC = dZ.array() * o * dsq;
  const Eigen::ArrayXXd f = rows(cc.f).array();
  const Eigen::ArrayXXd iv = rows(cc.i).array();
  const Eigen::ArrayXXd cd = rows(cc.cand).array();
  const Eigen::ArrayXXd dF = dC * rows(cc.c_prev).array();
  const Eigen::ArrayXXd dI = dC * cd;
  const Eigen::ArrayXXd dCd = dC * iv;
  Eigen::MatrixXd delta(n, 4 * h);
  if (p.squash == Squash::Sigmoid)
    delta.leftCols(h) = (dCd * cd * (1.0 - cd)).matrix();
  else
    delta.leftCols(h) = (dCd * (1.0 - cd * cd)).matrix();
  delta.middleCols(h, h) = (dF * f * (1.0 - f)).matrix();
  delta.middleCols(2 * h, h) = (dI * iv * (1.0 - iv)).matrix();
  delta.rightCols(h) = (dO * o * (1.0 - o)).matrix();
  g.W.noalias() += delta.transpose() * x.middleRows(row0, n);
  g.U.noalias() += delta.transpose() * rows(cc.z_prev);
  g.b += delta.colwise().sum().transpose();
}

/// General truncated backpropagation for one sample: the chain runs from
/// step `idx` back through `span` steps (or to the pass start), treating the
/// state before the window as constant.
inline void backward_sample_chain(const PackedParams& p, const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& dyhat, int idx, int span,
                                  const ForwardCache& cc, PackedGrads& g) {
  const int h = p.h;
  g.P.noalias() += dyhat * cc.z.row(idx);
  g.pb += dyhat;
  Eigen::ArrayXd dz = (p.P.transpose() * dyhat).array();
  Eigen::ArrayXd dc = Eigen::ArrayXd::Zero(h);
  const int last = std::max(idx - span + 1, 0);
  for (int k = idx; k >= last; --k) {
    const Eigen::ArrayXd c_k = cc.c.row(k).transpose().array();
    const Eigen::ArrayXd o_k = cc.o.row(k).transpose().array();
    const Eigen::ArrayXd f_k = cc.f.row(k).transpose().array();
    const Eigen::ArrayXd i_k = cc.i.row(k).transpose().array();
    const Eigen::ArrayXd cd_k = cc.cand.row(k).transpose().array();
    const Eigen::ArrayXd sq_c = squash_array(p.squash, c_k);
    Eigen::ArrayXd dsq;
    if (p.squash == Squash::Sigmoid) dsq = sq_c * (1.0 - sq_c);
    else dsq = 1.0 - sq_c * sq_c;
    dc += dz * o_k * dsq;
    const Eigen::ArrayXd dO = dz * sq_c;
    const Eigen::ArrayXd dF = dc * cc.c_prev.row(k).transpose().array();
    const Eigen::ArrayXd dI = dc * cd_k;
    const Eigen::ArrayXd dCd = dc * i_k;
    Eigen::VectorXd delta(4 * h);
    if (p.squash == Squash::Sigmoid)
      delta.segment(0, h) = (dCd * cd_k * (1.0 - cd_k)).matrix();
    else
      delta.segment(0, h) = (dCd * (1.0 - cd_k * cd_k)).matrix();
    delta.segment(h, h) = (dF * f_k * (1.0 - f_k)).matrix();
    delta.segment(2 * h, h) = (dI * i_k * (1.0 - i_k)).matrix();
    delta.segment(3 * h, h) = (dO * o_k * (1.0 - o_k)).matrix();
    g.W.noalias() += delta * x.row(k);
    g.U.noalias() += delta * cc.z_prev.row(k);
    g.b += delta;
    if (k > last) {
      dz = (p.U.transpose() * delta).array();
      dc *= f_k;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public gradient surface.
// ---------------------------------------------------------------------------

/// A batch of independent one-step samples: input x, target for the next
/// step, and the forward-pass state preceding each sample.
struct PredictorBatch {
  Eigen::MatrixXd x;     // N x d
  Eigen::MatrixXd y;     // N x d
  Eigen::MatrixXd c_in;  // N x h
  Eigen::MatrixXd z_in;  // N x h

  int size() const { return static_cast<int>(x.rows()); }
};

/// Gradient of the per-bin-averaged loss over the batch with respect to the
/// LSTM and primary-head parameters (truncation span 1: the incoming states
/// are constants).
struct PredictorGradients {
  Eigen::MatrixXd W_c, W_f, W_i, W_o;
  Eigen::MatrixXd U_c, U_f, U_i, U_o;
  Eigen::VectorXd b_c, b_f, b_i, b_o;
  Eigen::MatrixXd primary_W;
  Eigen::VectorXd primary_b;
};

inline PredictorGradients grad_predictor(const LstmParams& params,
                                         const PredictorBatch& batch,
                                         LossKind loss) {
  if (batch.x.cols() != params.d || batch.y.cols() != params.d ||
      batch.c_in.cols() != params.h || batch.z_in.cols() != params.h ||
      batch.x.rows() != batch.y.rows() || batch.x.rows() != batch.c_in.rows() ||
      batch.x.rows() != batch.z_in.rows())
    throw DimensionMismatchError("grad_predictor batch shapes");
  if (batch.size() == 0) throw EmptySetError("grad_predictor");

  const auto packed = detail::PackedParams::from(params);
  const int n = batch.size();
  detail::ForwardCache cache;
  cache.resize(n, params.h);
  const Eigen::MatrixXd wx = batch.x * packed.W.transpose();
  for (int k = 0; k < n; ++k) {
    LstmState st{batch.c_in.row(k).transpose(), batch.z_in.row(k).transpose()};
    detail::forward_rows(packed, wx.middleRows(k, 1), k, 1, std::move(st), cache);
  }
  Eigen::MatrixXd yhat = cache.z * packed.P.transpose();
  yhat.rowwise() += packed.pb.transpose();
  const Eigen::MatrixXd dY =
      detail::loss_grad(loss, yhat - batch.y, 1.0 / double(yhat.size()));
  auto grads = detail::PackedGrads::zeros(params.h, params.d);
  detail::backward_rows_span1(packed, batch.x, dY, 0, n, cache, grads);

  PredictorGradients out;
  const int h = params.h;
  out.W_c = grads.W.topRows(h); out.W_f = grads.W.middleRows(h, h);
  out.W_i = grads.W.middleRows(2 * h, h); out.W_o = grads.W.bottomRows(h);
  out.U_c = grads.U.topRows(h); out.U_f = grads.U.middleRows(h, h);
  out.U_i = grads.U.middleRows(2 * h, h); out.U_o = grads.U.bottomRows(h);
  out.b_c = grads.b.segment(0, h); out.b_f = grads.b.segment(h, h);
  out.b_i = grads.b.segment(2 * h, h); out.b_o = grads.b.segment(3 * h, h);
  out.primary_W = grads.P;
  out.primary_b = grads.pb;
  return out;
}

/// Parameter initialization: every W and U entry i.i.d. uniform in
/// [-init_scale, init_scale] from the seeded stream (tensors filled in a
/// fixed order), all biases zero.
inline LstmParams init_params(int h, int d, int R, std::uint64_t seed,
                              double init_scale, Squash squash = Squash::Sigmoid) {
  LstmParams p = LstmParams::zeros(h, d, R);
  p.squash = squash;
  Rng rng(mix64(seed));
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        m(r, c) = rng.uniform(-init_scale, init_scale);
  };
  fill(p.W_c); fill(p.W_f); fill(p.W_i); fill(p.W_o);
  fill(p.U_c); fill(p.U_f); fill(p.U_i); fill(p.U_o);
  fill(p.primary_W);
  fill(p.secondary_W);
  return p;
}

// ---------------------------------------------------------------------------
// Training loops.
// ---------------------------------------------------------------------------

struct PredictorTrainResult {
  LstmParams params;
  LossReport report;
};

/// Hidden-state width of the trained predictor (h).
inline constexpr int kDefaultHiddenUnits = 20;

/// Substream index reserved for the per-epoch pass-order shuffle.
inline constexpr std::uint64_t kPassOrderStream = 0x0edeULL;

namespace detail {

struct PassMatrices {
  Eigen::MatrixXd norm;  // T x d, normalized spectra
  int samples() const { return static_cast<int>(norm.rows()) - 1; }
};

inline std::vector<PassMatrices> normalized_passes(
    const std::vector<Pass>& passes, const NormalizationParams& norm) {
  if (passes.empty()) throw EmptySetError("no training passes");
  std::vector<PassMatrices> out;
  out.reserve(passes.size());
  for (const Pass& p : passes) {
    if (auto v = validate_pass(p); !v.empty())
      throw ConfigError("invalid pass " + p.id + ": " + v.front().detail);
    PassMatrices pm;
    pm.norm.resize(p.length(), kNumBins);
    for (int t = 0; t < p.length(); ++t)
      pm.norm.row(t) = normalize(p.spectra[t], norm).bins.transpose();
    out.push_back(std::move(pm));
  }
  return out;
}

/// Loss of `packed` over all passes, teacher-forced forward only.
inline double evaluate_loss(const PackedParams& packed,
                            const std::vector<PassMatrices>& data,
                            LossKind kind) {
  double acc = 0.0;
  long elements = 0;
  ForwardCache cache;
  for (const PassMatrices& pm : data) {
    const int n = pm.samples();
    const auto x = pm.norm.topRows(n);
    cache.resize(n, packed.h);
    const Eigen::MatrixXd wx = x * packed.W.transpose();
    detail::forward_rows(packed, wx, 0, n, LstmState::zeros(packed.h), cache);
    Eigen::MatrixXd res = cache.z * packed.P.transpose();
    res.rowwise() += packed.pb.transpose();
    res -= pm.norm.bottomRows(n);
    acc += kind == LossKind::Abs ? res.array().abs().sum() : res.squaredNorm();
    elements += res.size();
  }
  return acc / double(elements);
}

}  // namespace detail

/// Called after each epoch with (epoch index, epoch loss); for progress
/// reporting only, must not mutate anything the training reads.
using EpochCallback = std::function<void(int, double)>;

/// Trains the LSTM and the primary head by gradient descent on the
/// configured loss. Each pass is scanned in time order with teacher forcing
/// and state reset at the pass start; parameters are updated every
/// batch_size samples (or once per epoch when batch_size == 0). Pass order
/// is reshuffled every epoch from the seeded stream. Deterministic given
/// (data, cfg).
inline PredictorTrainResult train_predictor(const std::vector<Pass>& train,
                                            const NormalizationParams& norm,
                                            const TrainConfig& cfg,
                                            const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = detail::normalized_passes(train, norm);

  LstmParams params = init_params(kDefaultHiddenUnits, kNumBins, kNumClasses,
                                  cfg.seed, cfg.init_scale, cfg.squash);
  auto packed = detail::PackedParams::from(params);
  const int h = packed.h, d = packed.d;

  long total_samples = 0;
  for (const auto& pm : data) total_samples += pm.samples();

  Rng order_rng(substream(cfg.seed, kPassOrderStream));
  LossReport report;
  report.per_epoch.reserve(static_cast<std::size_t>(cfg.predictor_epochs));

  const bool full_batch = cfg.batch_size == 0;
  detail::ForwardCache cache;
  auto epoch_grads = detail::PackedGrads::zeros(h, d);

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.predictor_epochs; ++epoch) {
    double loss_acc = 0.0;
    long loss_elems = 0;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    if (full_batch) {
      epoch_grads.W.setZero(); epoch_grads.U.setZero(); epoch_grads.b.setZero();
      epoch_grads.P.setZero(); epoch_grads.pb.setZero();
    }

    for (int pi : order) {
      const auto& pm = data[static_cast<std::size_t>(pi)];
      const int n = pm.samples();
      const auto x = pm.norm.topRows(n);
      cache.resize(n, h);
      LstmState state = LstmState::zeros(h);
      const int step = full_batch ? n : cfg.batch_size;
      for (int b0 = 0; b0 < n; b0 += step) {
        const int nb = std::min(step, n - b0);
        const Eigen::MatrixXd wx = x.middleRows(b0, nb) * packed.W.transpose();
        state = detail::forward_rows(packed, wx, b0, nb, std::move(state), cache);
        Eigen::MatrixXd res = cache.z.middleRows(b0, nb) * packed.P.transpose();
        res.rowwise() += packed.pb.transpose();
        res -= pm.norm.middleRows(b0 + 1, nb);
        loss_acc += cfg.loss == LossKind::Abs ? res.array().abs().sum()
                                              : res.squaredNorm();
        loss_elems += res.size();

        const double inv =
            1.0 / (full_batch ? double(total_samples) * d : double(nb) * d);
        const Eigen::MatrixXd dY = detail::loss_grad(cfg.loss, res, inv);
        auto& grads = epoch_grads;
        if (!full_batch) {
          grads.W.setZero(); grads.U.setZero(); grads.b.setZero();
          grads.P.setZero(); grads.pb.setZero();
        }
        if (cfg.truncation_span == 1) {
          detail::backward_rows_span1(packed, pm.norm, dY, b0, nb, cache, grads);
        } else {
          for (int k = 0; k < nb; ++k)
            detail::backward_sample_chain(packed, pm.norm,
                                          dY.row(k).transpose(), b0 + k,
                                          cfg.truncation_span, cache, grads);
        }
        if (!full_batch) grads.apply(packed, cfg.learning_rate);
      }
    }
    if (full_batch) epoch_grads.apply(packed, cfg.learning_rate);

    const double epoch_loss = loss_acc / double(loss_elems);
    if (!std::isfinite(epoch_loss)) throw NonFiniteLossError(epoch);
    report.per_epoch.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  report.final_loss = detail::evaluate_loss(packed, data, cfg.loss);
  packed.store_into(params);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {std::move(params), std::move(report)};
}

struct ClassifierTrainResult {
  LstmParams params;
  LossReport report;
};

/// Collects the (z_t, label_{t+1}) pairs of the frozen recurrent model over
/// the training passes.
inline std::pair<Eigen::MatrixXd, std::vector<ModClass>> collect_z_features(
    const LstmParams& params, const std::vector<Pass>& train,
    const NormalizationParams& norm) {
  const auto data = detail::normalized_passes(train, norm);
  const auto packed = detail::PackedParams::from(params);
  long total = 0;
  for (const auto& pm : data) total += pm.samples();
  Eigen::MatrixXd Z(total, params.h);
  std::vector<ModClass> labels;
  labels.reserve(static_cast<std::size_t>(total));
  detail::ForwardCache cache;
  long row = 0;
  for (std::size_t pi = 0; pi < data.size(); ++pi) {
    const auto& pm = data[pi];
    const int n = pm.samples();
    cache.resize(n, params.h);
    const Eigen::MatrixXd wx = pm.norm.topRows(n) * packed.W.transpose();
    detail::forward_rows(packed, wx, 0, n, LstmState::zeros(params.h), cache);
    Z.middleRows(row, n) = cache.z;
    row += n;
    for (int t = 1; t <= n; ++t) labels.push_back(train[pi].labels[static_cast<std::size_t>(t)]);
  }
  return {std::move(Z), std::move(labels)};
}

/// Trains the secondary head by gradient descent on the summed cross-entropy
/// while every other tensor stays frozen (bitwise untouched).
inline ClassifierTrainResult train_classifier(const std::vector<Pass>& train,
                                              const LstmParams& trained,
                                              const NormalizationParams& norm,
                                              const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto [Z, labels] = collect_z_features(trained, train, norm);
  const long n = Z.rows();
  const int R = trained.R;

  LstmParams params = trained;
  Eigen::MatrixXd S = params.secondary_W;
  Eigen::VectorXd sb = params.secondary_b;

  LossReport report;
  report.per_epoch.reserve(static_cast<std::size_t>(cfg.classifier_epochs));
  Eigen::MatrixXd logits(n, R), probs(n, R);
  auto epoch_pass = [&](bool update) {
    logits.noalias() = Z * S.transpose();
    logits.rowwise() += sb.transpose();
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
      const double mx = logits.row(i).maxCoeff();
      const Eigen::ArrayXd e = (logits.row(i).transpose().array() - mx).exp();
      const double sum = e.sum();
      probs.row(i) = (e / sum).transpose();
      // stable -ln p_true via the log-sum-exp form
      loss -= logits(i, static_cast<int>(labels[static_cast<std::size_t>(i)])) - mx - std::log(sum);
    }
    if (update) {
      for (long i = 0; i < n; ++i)
        probs(i, static_cast<int>(labels[static_cast<std::size_t>(i)])) -= 1.0;
      S.noalias() -= cfg.learning_rate * (probs.transpose() * Z);
      sb -= cfg.learning_rate * probs.colwise().sum().transpose();
    }
    return loss;
  };

  for (int epoch = 0; epoch < cfg.classifier_epochs; ++epoch) {
    const double loss = epoch_pass(true);
    if (!std::isfinite(loss)) throw NonFiniteLossError(epoch);
    report.per_epoch.push_back(loss);
  }
  report.final_loss = epoch_pass(false);

  params.secondary_W = std::move(S);
  params.secondary_b = std::move(sb);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {std::move(params), std::move(report)};
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle.
// ---------------------------------------------------------------------------

struct GradCheckConfig {
  int h = 3;
  int d = 5;
  int sequence_length = 7;  // steps per synthetic pass
  std::uint64_t seed = 3;
  LossKind loss = LossKind::Mse;
  int span = 1;
  double fd_step = 1e-6;
  Squash squash = Squash::Sigmoid;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  int checked_coordinates = 0;
};

/// Central-difference check of the analytic truncated gradient on a random
/// small instance. The finite-difference loss re-runs each sample's
/// truncation window from the recorded (frozen) incoming state, which is
/// exactly the function the truncated gradient differentiates. O(#params)
/// loss evaluations, so dimensions are capped.
inline GradCheckReport check_gradients(const GradCheckConfig& cfg) {
  if (cfg.h > 5 || cfg.d > 8)
    throw ConfigError("check_gradients caps at h <= 5, d <= 8");
  if (cfg.sequence_length < 2 || cfg.span < 1)
    throw ConfigError("bad check_gradients config");

  Rng rng(mix64(cfg.seed));
  LstmParams params = init_params(cfg.h, cfg.d, kNumClasses, cfg.seed, 0.5,
                                  cfg.squash);
  // biases too, so every coordinate family is exercised away from zero
  for (auto* b : {&params.b_c, &params.b_f, &params.b_i, &params.b_o,
                  &params.primary_b})
    for (Eigen::Index k = 0; k < b->size(); ++k)
      (*b)[k] = rng.uniform(-0.5, 0.5);

  const int n = cfg.sequence_length - 1;
  Eigen::MatrixXd seq(cfg.sequence_length, cfg.d);
  for (Eigen::Index r = 0; r < seq.rows(); ++r)
    for (Eigen::Index c = 0; c < seq.cols(); ++c)
      seq(r, c) = rng.uniform(-1.0, 1.0);
  const Eigen::MatrixXd x = seq.topRows(n);
  const Eigen::MatrixXd y = seq.bottomRows(n);

  auto packed = detail::PackedParams::from(params);
  detail::ForwardCache cache;
  cache.resize(n, cfg.h);
  const Eigen::MatrixXd wx = x * packed.W.transpose();
  detail::forward_rows(packed, wx, 0, n, LstmState::zeros(cfg.h), cache);

  // analytic truncated gradient, summed over all samples
  Eigen::MatrixXd yhat = cache.z * packed.P.transpose();
  yhat.rowwise() += packed.pb.transpose();
  const Eigen::MatrixXd dY =
      detail::loss_grad(cfg.loss, yhat - y, 1.0 / double(yhat.size()));
  auto grads = detail::PackedGrads::zeros(cfg.h, cfg.d);
  if (cfg.span == 1) {
    detail::backward_rows_span1(packed, seq, dY, 0, n, cache, grads);
  } else {
    for (int k = 0; k < n; ++k)
      detail::backward_sample_chain(packed, seq, dY.row(k).transpose(), k,
                                    cfg.span, cache, grads);
  }

  // Oracle loss: each sample's truncation window re-run from its frozen
  // incoming state, evaluated with plain scalar loops in long double. The
  // extended precision keeps the central-difference roundoff below the
  // 1e-6 relative tolerance even on near-zero gradient coordinates, and
  // the loop-based recurrence is independent of the Eigen kernels it checks.
  const int h = cfg.h, d = cfg.d;
  auto sig_l = [](long double a) -> long double {
    if (a >= 0) {
      const long double e = std::exp(-a);
      return 1.0L / (1.0L + e);
    }
    const long double e = std::exp(a);
    return e / (1.0L + e);
  };
  auto squash_l = [&](long double a) -> long double {
    return cfg.squash == Squash::Sigmoid ? sig_l(a) : std::tanh(a);
  };
  auto windowed_loss = [&](const detail::PackedParams& pp) -> long double {
    long double acc = 0.0L;
    std::vector<long double> c(static_cast<std::size_t>(h)), z(static_cast<std::size_t>(h));
    std::vector<long double> nc(static_cast<std::size_t>(h)), nz(static_cast<std::size_t>(h));
    for (int i = 0; i < n; ++i) {
      const int first = std::max(i - cfg.span + 1, 0);
      for (int k = 0; k < h; ++k) {
        c[static_cast<std::size_t>(k)] = cache.c_prev(first, k);
        z[static_cast<std::size_t>(k)] = cache.z_prev(first, k);
      }
      for (int t = first; t <= i; ++t) {
        for (int k = 0; k < h; ++k) {
          long double pre_cd = pp.b[k], pre_f = pp.b[h + k];
          long double pre_i = pp.b[2 * h + k], pre_o = pp.b[3 * h + k];
          for (int m = 0; m < d; ++m) {
            const long double xv = x(t, m);
            pre_cd += static_cast<long double>(pp.W(k, m)) * xv;
            pre_f += static_cast<long double>(pp.W(h + k, m)) * xv;
            pre_i += static_cast<long double>(pp.W(2 * h + k, m)) * xv;
            pre_o += static_cast<long double>(pp.W(3 * h + k, m)) * xv;
          }
          for (int m = 0; m < h; ++m) {
            const long double zv = z[static_cast<std::size_t>(m)];
            pre_cd += static_cast<long double>(pp.U(k, m)) * zv;
            pre_f += static_cast<long double>(pp.U(h + k, m)) * zv;
            pre_i += static_cast<long double>(pp.U(2 * h + k, m)) * zv;
            pre_o += static_cast<long double>(pp.U(3 * h + k, m)) * zv;
          }
          const long double cd = squash_l(pre_cd);
          nc[static_cast<std::size_t>(k)] =
              sig_l(pre_f) * c[static_cast<std::size_t>(k)] + sig_l(pre_i) * cd;
          nz[static_cast<std::size_t>(k)] =
              sig_l(pre_o) * squash_l(nc[static_cast<std::size_t>(k)]);
        }
        c = nc;
        z = nz;
      }
      for (int m = 0; m < d; ++m) {
        long double pred = pp.pb[m];
        for (int k = 0; k < h; ++k)
          pred += static_cast<long double>(pp.P(m, k)) * z[static_cast<std::size_t>(k)];
        const long double r = pred - static_cast<long double>(y(i, m));
        acc += cfg.loss == LossKind::Abs ? std::abs(r) : r * r;
      }
    }
    return acc / static_cast<long double>(n * cfg.d);
  };

  GradCheckReport rep;
  auto check_span = [&](double* param, const double* analytic,
                        Eigen::Index count) {
    for (Eigen::Index k = 0; k < count; ++k) {
      const double save = param[k];
      param[k] = save + cfg.fd_step;
      const long double up = windowed_loss(packed);
      param[k] = save - cfg.fd_step;
      const long double dn = windowed_loss(packed);
      param[k] = save;
      const double numeric =
          static_cast<double>((up - dn) / (2.0L * static_cast<long double>(cfg.fd_step)));
      const double a = analytic[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      rep.max_rel_error =
          std::max(rep.max_rel_error, std::abs(a - numeric) / denom);
      ++rep.checked_coordinates;
    }
  };
  check_span(packed.W.data(), grads.W.data(), packed.W.size());
  check_span(packed.U.data(), grads.U.data(), packed.U.size());
  check_span(packed.b.data(), grads.b.data(), packed.b.size());
  check_span(packed.P.data(), grads.P.data(), packed.P.size());
  check_span(packed.pb.data(), grads.pb.data(), packed.pb.size());
  return rep;
}

}  // namespace specmon
