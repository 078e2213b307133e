#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "specmon/pass.hpp"
#include "specmon/spectrum.hpp"

namespace specmon {

/// Numerically stable logistic function (sign-split form, no overflow for
/// any finite argument).
inline double sigmoid(double a) {
  if (a >= 0.0) {
    const double e = std::exp(-a);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(a);
  return e / (1.0 + e);
}

/// Squashing used for the cell candidate and the cell-state output mapping.
/// The recurrence as written in the source system uses the sigmoid in both
/// places (not tanh); Sigmoid is therefore the faithful default and Tanh is
/// available for comparison runs.
enum class Squash { Sigmoid, Tanh };

inline const char* to_string(Squash s) {
  return s == Squash::Sigmoid ? "sigmoid" : "tanh";
}

inline double squash_value(Squash s, double a) {
  return s == Squash::Sigmoid ? sigmoid(a) : std::tanh(a);
}

/// All learnable parameters: the four gate weight families, the "primary"
/// affine decoder head (h -> d) and the "secondary" classifier head (h -> R).
struct LstmParams {
  int h = 20;
  int d = kNumBins;
  int R = kNumClasses;
  Squash squash = Squash::Sigmoid;

  Eigen::MatrixXd W_c, W_f, W_i, W_o;  // h x d
  Eigen::MatrixXd U_c, U_f, U_i, U_o;  // h x h
  Eigen::VectorXd b_c, b_f, b_i, b_o;  // h
  Eigen::MatrixXd primary_W;           // d x h
  Eigen::VectorXd primary_b;           // d
  Eigen::MatrixXd secondary_W;         // R x h
  Eigen::VectorXd secondary_b;         // R

  static LstmParams zeros(int h, int d, int R = kNumClasses) {
    LstmParams p;
    p.h = h; p.d = d; p.R = R;
    p.W_c = p.W_f = p.W_i = p.W_o = Eigen::MatrixXd::Zero(h, d);
    p.U_c = p.U_f = p.U_i = p.U_o = Eigen::MatrixXd::Zero(h, h);
    p.b_c = p.b_f = p.b_i = p.b_o = Eigen::VectorXd::Zero(h);
    p.primary_W = Eigen::MatrixXd::Zero(d, h);
    p.primary_b = Eigen::VectorXd::Zero(d);
    p.secondary_W = Eigen::MatrixXd::Zero(R, h);
    p.secondary_b = Eigen::VectorXd::Zero(R);
    return p;
  }

  void validate() const {
    auto want = [](const Eigen::MatrixXd& m, int r, int c, const char* name) {
      if (m.rows() != r || m.cols() != c)
        throw DimensionMismatchError(std::string(name) + " has shape " +
                                     std::to_string(m.rows()) + "x" +
                                     std::to_string(m.cols()));
      if (!m.allFinite())
        throw ConfigError(std::string(name) + " has non-finite entries");
    };
    want(W_c, h, d, "W_c"); want(W_f, h, d, "W_f");
    want(W_i, h, d, "W_i"); want(W_o, h, d, "W_o");
    want(U_c, h, h, "U_c"); want(U_f, h, h, "U_f");
    want(U_i, h, h, "U_i"); want(U_o, h, h, "U_o");
    want(b_c, h, 1, "b_c"); want(b_f, h, 1, "b_f");
    want(b_i, h, 1, "b_i"); want(b_o, h, 1, "b_o");
    want(primary_W, d, h, "primary_W"); want(primary_b, d, 1, "primary_b");
    want(secondary_W, R, h, "secondary_W"); want(secondary_b, R, 1, "secondary_b");
  }
};

/// Recurrent state: cell state c and output z, both length h.
struct LstmState {
  Eigen::VectorXd c;
  Eigen::VectorXd z;

  static LstmState zeros(int h) {
    return {Eigen::VectorXd::Zero(h), Eigen::VectorXd::Zero(h)};
  }
};

/// Gate values of one step; every entry lies in (0, 1). `candidate` is the
/// squashed cell-update term that the input gate multiplies.
struct GateActivations {
  Eigen::VectorXd f, i, o, candidate;
};

namespace detail {
inline Eigen::ArrayXd sigmoid_array(const Eigen::ArrayXd& a) {
  return a.unaryExpr([](double v) { return sigmoid(v); });
}
inline Eigen::ArrayXd squash_array(Squash s, const Eigen::ArrayXd& a) {
  if (s == Squash::Sigmoid) return sigmoid_array(a);
  return a.unaryExpr([](double v) { return std::tanh(v); });
}
}  // namespace detail

/// One recurrence step on a raw input vector (no Spectrum checks); pure.
inline std::pair<LstmState, GateActivations> lstm_step_raw(
    const LstmParams& p, const Eigen::VectorXd& x, const LstmState& s) {
  if (x.size() != p.d)
    throw DimensionMismatchError("input length " + std::to_string(x.size()) +
                                 ", expected d = " + std::to_string(p.d));
  if (s.c.size() != p.h || s.z.size() != p.h)
    throw DimensionMismatchError("state length != h");
  GateActivations g;
  g.candidate =
      detail::squash_array(p.squash, (p.W_c * x + p.U_c * s.z + p.b_c).array());
  g.f = detail::sigmoid_array((p.W_f * x + p.U_f * s.z + p.b_f).array());
  g.i = detail::sigmoid_array((p.W_i * x + p.U_i * s.z + p.b_i).array());
  g.o = detail::sigmoid_array((p.W_o * x + p.U_o * s.z + p.b_o).array());
  LstmState out;
  out.c = (g.f.array() * s.c.array() + g.i.array() * g.candidate.array()).matrix();
  out.z = (g.o.array() * detail::squash_array(p.squash, out.c.array())).matrix();
  return {std::move(out), std::move(g)};
}

/// One recurrence step on a normalized spectrum.
inline std::pair<LstmState, GateActivations> lstm_step(const LstmParams& p,
                                                       const Spectrum& x,
                                                       const LstmState& s) {
  if (!x.normalized) throw NotNormalizedError();
  return lstm_step_raw(p, x.bins, s);
}

/// Primary head: affine expansion of the LSTM output back to d bins. The
/// result is the normalized-space prediction of the next spectrum.
inline Eigen::VectorXd primary_decode(const LstmParams& p,
                                      const Eigen::VectorXd& z) {
  if (z.size() != p.h) throw DimensionMismatchError("z length != h");
  return p.primary_W * z + p.primary_b;
}

/// Secondary head: softmax class probabilities from the LSTM output.
inline Eigen::VectorXd secondary_classify(const LstmParams& p,
                                          const Eigen::VectorXd& z) {
  if (z.size() != p.h) throw DimensionMismatchError("z length != h");
  Eigen::VectorXd logits = p.secondary_W * z + p.secondary_b;
  const double mx = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - mx).exp();
  return (e / e.sum()).matrix();
}

inline ModClass argmax_class(const Eigen::VectorXd& probs) {
  Eigen::Index best;
  probs.maxCoeff(&best);
  return static_cast<ModClass>(static_cast<int>(best));
}

/// Output of predict_pass: row t holds the normalized prediction of the
/// spectrum at time t + 1 (pass length - 1 rows in total), together with the
/// predicted class and its probability vector.
struct PassPrediction {
  Eigen::MatrixXd yhat_norm;        // (T-1) x d
  Eigen::MatrixXd probs;            // (T-1) x R
  std::vector<ModClass> labels;     // length T-1

  int steps() const { return static_cast<int>(labels.size()); }
};

/// Runs the predictor over a whole pass with teacher forcing: the observed
/// spectrum (normalized, possibly interference-corrupted) is always the next
/// input. State starts at zero; passes are independent recordings.
inline PassPrediction predict_pass(const LstmParams& p, const Pass& pass,
                                   const NormalizationParams& norm) {
  if (pass.length() < 2) throw DimensionMismatchError("pass length < 2");
  if (p.d != kNumBins)
    throw DimensionMismatchError("model d != " + std::to_string(kNumBins));
  const int T = pass.length();
  PassPrediction out;
  out.yhat_norm.resize(T - 1, p.d);
  out.probs.resize(T - 1, p.R);
  out.labels.resize(T - 1);
  LstmState state = LstmState::zeros(p.h);
  for (int t = 0; t < T - 1; ++t) {
    const Spectrum x = normalize(pass.spectra[t], norm);
    auto [next, gates] = lstm_step(p, x, state);
    state = std::move(next);
    out.yhat_norm.row(t) = primary_decode(p, state.z).transpose();
    Eigen::VectorXd probs = secondary_classify(p, state.z);
    out.labels[t] = argmax_class(probs);
    out.probs.row(t) = probs.transpose();
  }
  return out;
}

}  // namespace specmon
