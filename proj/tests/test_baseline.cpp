#include <catch2/catch_amalgamated.hpp>
#include <array>
#include <cmath>

#include "specmon/baseline.hpp"
#include "specmon/rng.hpp"
#include "specmon/synthgen.hpp"

using namespace specmon;

namespace {

// Brute-force oracle: forms A^T A and A^T y with plain loops and solves the
// 4x4 normal equations by Gaussian elimination with partial pivoting.
// Independent of the Eigen-backed implementation path.
std::array<double, 4> solve_normal_equations_bruteforce(
    const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  double m[4][5] = {};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      double acc = 0.0;
      for (int n = 0; n < A.rows(); ++n) acc += A(n, r) * A(n, c);
      m[r][c] = acc;
    }
    double acc = 0.0;
    for (int n = 0; n < A.rows(); ++n) acc += A(n, r) * y[n];
    m[r][4] = acc;
  }
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    for (int c = 0; c < 5; ++c) std::swap(m[col][c], m[pivot][c]);
    for (int r = col + 1; r < 4; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 5; ++c) m[r][c] -= f * m[col][c];
    }
  }
  std::array<double, 4> x{};
  for (int r = 3; r >= 0; --r) {
    double acc = m[r][4];
    for (int c = r + 1; c < 4; ++c) acc -= m[r][c] * x[static_cast<std::size_t>(c)];
    x[static_cast<std::size_t>(r)] = acc / m[r][r];
  }
  return x;
}

Pass pass_of_spectra(Modulation mod, const std::vector<int>& fs,
                     const std::vector<Eigen::VectorXd>& raw_bins) {
  Pass p;
  p.id = mod == Modulation::PSK8 ? "A1" : "B1";
  p.modulation = mod;
  for (std::size_t t = 0; t < fs.size(); ++t) {
    p.frame_sync.push_back(fs[t]);
    p.labels.push_back(class_for(mod, fs[t] == 2));
    p.spectra.emplace_back(raw_bins[t], false);
  }
  return p;
}

BasisMatrix synthetic_basis(std::uint64_t seed = 21) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.pass_length_min = 60;
  cfg.pass_length_max = 80;
  cfg.train_passes_per_modulation = 1;
  const Dataset ds = gen_dataset(cfg);
  return compute_basis(ds.train_passes, NormalizationParams{});
}

}  // namespace

TEST_CASE("compute_basis: one spectrum per class gives those exact columns") {
  const NormalizationParams norm;
  Rng rng(31);
  auto random_raw = [&]() {
    Eigen::VectorXd v(kNumBins);
    for (int n = 0; n < kNumBins; ++n) v[n] = rng.uniform(-100.0, -10.0);
    return v;
  };
  const Eigen::VectorXd s0 = random_raw(), s1 = random_raw(), s2 = random_raw(),
                        s3 = random_raw();
  const std::vector<Pass> train = {
      pass_of_spectra(Modulation::PSK8, {2, 0}, {s0, s1}),
      pass_of_spectra(Modulation::QAM16, {2, 0}, {s2, s3}),
  };
  const BasisMatrix basis = compute_basis(train, norm);
  CHECK(basis.A.col(0) == normalize(Spectrum(s0, false), norm).bins);
  CHECK(basis.A.col(1) == normalize(Spectrum(s1, false), norm).bins);
  CHECK(basis.A.col(2) == normalize(Spectrum(s2, false), norm).bins);
  CHECK(basis.A.col(3) == normalize(Spectrum(s3, false), norm).bins);
  CHECK(basis.counts == std::array<long, 4>{1, 1, 1, 1});
}

TEST_CASE("compute_basis: duplicated spectra leave the mean unchanged") {
  const NormalizationParams norm;
  Rng rng(37);
  Eigen::VectorXd sig(kNumBins), noi(kNumBins), qs(kNumBins), qn(kNumBins);
  for (int n = 0; n < kNumBins; ++n) {
    sig[n] = rng.uniform(-40.0, -20.0);
    noi[n] = rng.uniform(-70.0, -50.0);
    qs[n] = rng.uniform(-45.0, -15.0);
    qn[n] = rng.uniform(-75.0, -55.0);
  }
  const std::vector<Pass> train = {
      pass_of_spectra(Modulation::PSK8, {2, 2, 0, 0}, {sig, sig, noi, noi}),
      pass_of_spectra(Modulation::QAM16, {2, 0}, {qs, qn}),
  };
  const BasisMatrix basis = compute_basis(train, norm);
  const Eigen::VectorXd expected = normalize(Spectrum(sig, false), norm).bins;
  for (int n = 0; n < kNumBins; n += 111)
    REQUIRE_THAT(basis.A(n, 0), Catch::Matchers::WithinAbs(expected[n], 1e-15));
  CHECK(basis.counts[0] == 2);
}

TEST_CASE("compute_basis counts add up and missing classes are rejected") {
  SynthConfig cfg;
  cfg.pass_length_min = 40;
  cfg.pass_length_max = 50;
  cfg.train_passes_per_modulation = 2;
  const Dataset ds = gen_dataset(cfg);
  const BasisMatrix basis = compute_basis(ds.train_passes, NormalizationParams{});
  long total = 0;
  for (const Pass& p : ds.train_passes) total += p.length();
  CHECK(basis.counts[0] + basis.counts[1] + basis.counts[2] + basis.counts[3] ==
        total);

  // only PSK8 passes: both QAM classes missing
  std::vector<Pass> psk_only(ds.train_passes.begin(), ds.train_passes.begin() + 2);
  CHECK_THROWS_AS(compute_basis(psk_only, NormalizationParams{}),
                  MissingClassError);
}

TEST_CASE("identical class means are rank deficient") {
  const NormalizationParams norm;
  const Eigen::VectorXd same = Eigen::VectorXd::Constant(kNumBins, -50.0);
  const std::vector<Pass> train = {
      pass_of_spectra(Modulation::PSK8, {2, 0}, {same, same}),
      pass_of_spectra(Modulation::QAM16, {2, 0}, {same, same}),
  };
  CHECK_THROWS_AS(compute_basis(train, norm), RankDeficientError);
}

TEST_CASE("ls_fit recovers exact basis combinations") {
  const BasisMatrix basis = synthetic_basis();
  const Spectrum col0(basis.A.col(0), true);
  const BasisWeights w0 = ls_fit(basis, col0);
  REQUIRE_THAT(w0.theta[0], Catch::Matchers::WithinAbs(1.0, 1e-10));
  for (int r = 1; r < 4; ++r)
    REQUIRE_THAT(w0.theta[r], Catch::Matchers::WithinAbs(0.0, 1e-10));

  const Spectrum mix(0.3 * basis.A.col(0) + 0.7 * basis.A.col(2), true);
  const BasisWeights wm = ls_fit(basis, mix);
  REQUIRE_THAT(wm.theta[0], Catch::Matchers::WithinAbs(0.3, 1e-10));
  REQUIRE_THAT(wm.theta[1], Catch::Matchers::WithinAbs(0.0, 1e-10));
  REQUIRE_THAT(wm.theta[2], Catch::Matchers::WithinAbs(0.7, 1e-10));
  REQUIRE_THAT(wm.theta[3], Catch::Matchers::WithinAbs(0.0, 1e-10));
}

TEST_CASE("ls_fit agrees with the brute-force normal-equations oracle") {
  const BasisMatrix basis = synthetic_basis(77);
  Rng rng(123);
  double max_residual_orthogonality = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd y(kNumBins);
    for (int n = 0; n < kNumBins; ++n) y[n] = rng.uniform(-1.0, 1.0);
    const BasisWeights w = ls_fit(basis, Spectrum(y, true));
    const auto oracle = solve_normal_equations_bruteforce(basis.A, y);
    for (int r = 0; r < 4; ++r)
      REQUIRE_THAT(w.theta[r],
                   Catch::Matchers::WithinAbs(oracle[static_cast<std::size_t>(r)], 1e-10));
    const Eigen::Vector4d orth =
        basis.A.transpose() * (y - basis.A * w.theta);
    max_residual_orthogonality =
        std::max(max_residual_orthogonality, orth.cwiseAbs().maxCoeff());
  }
  CHECK(max_residual_orthogonality <= 1e-8);
}

TEST_CASE("ls_predict is an idempotent, non-expanding projection") {
  const BasisMatrix basis = synthetic_basis(55);
  Rng rng(9);
  const BasisWeights e0{Eigen::Vector4d(1, 0, 0, 0)};
  CHECK(ls_predict(basis, e0).bins == basis.A.col(0));

  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd y(kNumBins);
    for (int n = 0; n < kNumBins; ++n) y[n] = rng.uniform(-1.0, 1.0);
    const Spectrum s(y, true);
    const Spectrum once = ls_predict(basis, ls_fit(basis, s));
    const Spectrum twice = ls_predict(basis, ls_fit(basis, once));
    REQUIRE((once.bins - twice.bins).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(once.bins.norm() <= y.norm() + 1e-9);
  }

  // a vector already in span(A) is reproduced
  const Eigen::VectorXd in_span =
      basis.A * Eigen::Vector4d(0.2, -0.4, 1.1, 0.3);
  const Spectrum recovered = ls_predict(basis, ls_fit(basis, Spectrum(in_span, true)));
  REQUIRE((recovered.bins - in_span).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("ls_classify follows the normalized-argmax rule") {
  const BasisMatrix basis = synthetic_basis(66);
  CHECK(ls_classify(BasisWeights{{0.9, 0.05, 0.03, 0.02}}, basis) ==
        ModClass::PSK8_SIGNAL);
  // lowest-index tie-break
  CHECK(ls_classify(BasisWeights{{0.5, 0.5, 0.0, 0.0}}, basis) ==
        ModClass::PSK8_SIGNAL);
  CHECK(ls_classify(BasisWeights{{0.0, 0.5, 0.5, 0.0}}, basis) ==
        ModClass::PSK8_NOISE);
  // positive scaling never changes the decision
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Vector4d w;
    for (int r = 0; r < 4; ++r) w[r] = rng.uniform(-1.0, 1.0);
    if (std::abs(w.sum()) < 0.1) continue;
    const ModClass base = ls_classify(BasisWeights{w}, basis);
    const double scale = rng.uniform(0.1, 50.0);
    CHECK(ls_classify(BasisWeights{Eigen::Vector4d(scale * w)}, basis) == base);
  }
  CHECK_THROWS_AS(ls_classify(BasisWeights{{1e-13, -1e-13, 0.0, 0.0}}, basis),
                  DegenerateWeightsError);
}

TEST_CASE("baseline_predict_pass matches per-step fit and classify") {
  SynthConfig cfg;
  cfg.seed = 13;
  cfg.pass_length_min = 40;
  cfg.pass_length_max = 40;
  cfg.train_passes_per_modulation = 1;
  cfg.test_passes_per_modulation = 1;
  const Dataset ds = gen_dataset(cfg);
  const NormalizationParams norm;
  const BasisMatrix basis = compute_basis(ds.train_passes, norm);
  const Pass& pass = ds.test_passes.front();
  const BaselinePrediction pred = baseline_predict_pass(basis, pass, norm);
  REQUIRE(pred.yhat_norm.rows() == pass.length() - 1);
  for (int t = 0; t < pass.length() - 1; t += 7) {
    const BasisWeights w =
        ls_fit(basis, normalize(pass.spectra[static_cast<std::size_t>(t)], norm));
    REQUIRE((pred.yhat_norm.row(t).transpose() - basis.A * w.theta)
                .cwiseAbs()
                .maxCoeff() < 1e-14);
    REQUIRE(pred.labels[static_cast<std::size_t>(t)] == ls_classify(w, basis));
  }
}
