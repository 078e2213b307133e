#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "specmon/pass.hpp"
#include "specmon/spectrum.hpp"

namespace specmon {

/// Design matrix of the model-based baseline. Column r is the mean of all
/// normalized training spectra of class r (column order = ModClass order).
struct BasisMatrix {
  Eigen::MatrixXd A;  // d x 4
  std::array<ModClass, kNumClasses> column_classes{
      ModClass::PSK8_SIGNAL, ModClass::PSK8_NOISE, ModClass::QAM16_SIGNAL,
      ModClass::QAM16_NOISE};
  std::array<long, kNumClasses> counts{};

  Eigen::Matrix4d normal_matrix() const { return A.transpose() * A; }

  /// rank(A) == 4, via the eigenvalue spread of the 4x4 normal matrix.
  void check_rank() const {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(normal_matrix());
    const auto& ev = es.eigenvalues();  // ascending
    if (!(ev[0] > 1e-8 * ev[kNumClasses - 1])) throw RankDeficientError();
  }
};

struct BasisWeights {
  Eigen::Vector4d theta;
};

/// Averages the normalized training spectra per class. The basis lives in
/// normalized space so the baseline consumes exactly the same inputs as the
/// recurrent predictor.
inline BasisMatrix compute_basis(const std::vector<Pass>& train_passes,
                                 const NormalizationParams& norm) {
  BasisMatrix basis;
  basis.A = Eigen::MatrixXd::Zero(kNumBins, kNumClasses);
  for (const Pass& p : train_passes) {
    for (int t = 0; t < p.length(); ++t) {
      const int r = static_cast<int>(p.labels[t]);
      basis.A.col(r) += normalize(p.spectra[t], norm).bins;
      basis.counts[r] += 1;
    }
  }
  for (int r = 0; r < kNumClasses; ++r) {
    if (basis.counts[r] == 0)
      throw MissingClassError(to_string(static_cast<ModClass>(r)));
    basis.A.col(r) /= double(basis.counts[r]);
  }
  basis.check_rank();
  return basis;
}

/// Closed-form least squares: theta = (A^T A)^{-1} A^T y, solved through a
/// Cholesky factorization of the 4x4 normal matrix.
inline BasisWeights ls_fit(const BasisMatrix& basis, const Spectrum& y) {
  if (!y.normalized) throw NotNormalizedError();
  basis.check_rank();
  const Eigen::Matrix4d ata = basis.normal_matrix();
  const Eigen::Vector4d aty = basis.A.transpose() * y.bins;
  Eigen::LLT<Eigen::Matrix4d> llt(ata);
  if (llt.info() != Eigen::Success) throw RankDeficientError();
  return BasisWeights{llt.solve(aty)};
}

/// Prediction of the next spectrum: the weighted basis combination A theta.
inline Spectrum ls_predict(const BasisMatrix& basis, const BasisWeights& w) {
  return Spectrum(basis.A * w.theta, true);
}

/// Assigns the class whose (sum-normalized) weight is largest. For a positive
/// weight sum this is the plain argmax; ties break to the lowest class index.
inline ModClass ls_classify(const BasisWeights& w, const BasisMatrix& basis) {
  const double sum = w.theta.sum();
  if (std::abs(sum) <= 1e-12) throw DegenerateWeightsError(sum);
  int best = 0;
  double best_val = w.theta[0] / sum;
  for (int r = 1; r < kNumClasses; ++r) {
    const double v = w.theta[r] / sum;
    if (v > best_val) {
      best = r;
      best_val = v;
    }
  }
  return basis.column_classes[static_cast<std::size_t>(best)];
}

/// Baseline analogue of predict_pass: one-step prediction and classification
/// for t = 1..T-1, emitted in the same shape the recurrent path uses so the
/// detection and evaluation stages are predictor-agnostic.
struct BaselinePrediction {
  Eigen::MatrixXd yhat_norm;     // (T-1) x d
  Eigen::MatrixXd weights;       // (T-1) x 4, fitted theta per step
  std::vector<ModClass> labels;  // length T-1
};

inline BaselinePrediction baseline_predict_pass(const BasisMatrix& basis,
                                                const Pass& pass,
                                                const NormalizationParams& norm) {
  if (pass.length() < 2) throw DimensionMismatchError("pass length < 2");
  const int T = pass.length();
  BaselinePrediction out;
  out.yhat_norm.resize(T - 1, kNumBins);
  out.weights.resize(T - 1, kNumClasses);
  out.labels.resize(T - 1);
  for (int t = 0; t < T - 1; ++t) {
    const BasisWeights w = ls_fit(basis, normalize(pass.spectra[t], norm));
    out.yhat_norm.row(t) = (basis.A * w.theta).transpose();
    out.weights.row(t) = w.theta.transpose();
    out.labels[t] = ls_classify(w, basis);
  }
  return out;
}

}  // namespace specmon
