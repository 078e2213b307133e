#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "specmon/synthgen.hpp"
#include "specmon/training.hpp"

using namespace specmon;

namespace {

// Small synthetic dataset for training mechanics tests.
Dataset tiny_dataset(std::uint64_t seed = 1, int len = 30) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.pass_length_min = len;
  cfg.pass_length_max = len;
  cfg.train_passes_per_modulation = 1;
  cfg.test_passes_per_modulation = 1;
  return gen_dataset(cfg);
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("loss_abs matches the hand-computed examples") {
  Eigen::MatrixXd t(2, 4);
  t << 0.1, 0.2, 0.3, 0.4, -0.1, -0.2, -0.3, -0.4;
  CHECK(loss_abs(t, t) == 0.0);

  Eigen::MatrixXd shifted = t.array() + 0.1;
  CHECK_THAT(loss_abs(shifted, t), Catch::Matchers::WithinAbs(0.1, 1e-15));

  // per-sample mean abs errors 0.1 and 0.3 average to 0.2
  Eigen::MatrixXd pred(2, 4);
  pred.row(0) = t.row(0).array() + 0.1;
  pred.row(1) = t.row(1).array() - 0.3;
  CHECK_THAT(loss_abs(pred, t), Catch::Matchers::WithinAbs(0.2, 1e-15));

  CHECK_THROWS_AS(loss_abs(Eigen::MatrixXd(0, 4), Eigen::MatrixXd(0, 4)),
                  EmptySetError);
  CHECK_THROWS_AS(loss_abs(Eigen::MatrixXd::Zero(2, 4), Eigen::MatrixXd::Zero(2, 5)),
                  DimensionMismatchError);
}

TEST_CASE("loss_mse matches the hand-computed examples") {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(2, 8);
  CHECK(loss_mse(t, t) == 0.0);
  Eigen::MatrixXd pred = t.array() + 0.1;
  CHECK_THAT(loss_mse(pred, t), Catch::Matchers::WithinAbs(0.01, 1e-15));
  pred.row(1).array() += 0.2;  // offsets 0.1 and 0.3
  CHECK_THAT(loss_mse(pred, t), Catch::Matchers::WithinAbs(0.05, 1e-15));
}

TEST_CASE("spectrum-list losses enforce the normalized flag") {
  std::vector<Spectrum> a, b;
  a.emplace_back(Eigen::VectorXd::Zero(kNumBins), true);
  b.emplace_back(Eigen::VectorXd::Zero(kNumBins), false);
  CHECK_THROWS_AS(loss_abs(a, b), NotNormalizedError);
  b[0].normalized = true;
  CHECK(loss_abs(a, b) == 0.0);
}

TEST_CASE("loss_class matches the hand-computed examples") {
  Eigen::MatrixXd p1(1, 4);
  p1 << 1.0, 0.0, 0.0, 0.0;
  CHECK(loss_class(p1, {ModClass::PSK8_SIGNAL}) == 0.0);

  Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(1, 4, 0.25);
  CHECK_THAT(loss_class(uniform, {ModClass::QAM16_NOISE}),
             Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));

  Eigen::MatrixXd two(2, 4);
  two << 0.5, 0.5, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25;
  const double expected = std::log(2.0) + std::log(4.0);
  CHECK_THAT(loss_class(two, {ModClass::PSK8_SIGNAL, ModClass::PSK8_NOISE}),
             Catch::Matchers::WithinAbs(expected, 1e-12));
}

TEST_CASE("loss_class rejects invalid probabilities") {
  Eigen::MatrixXd bad_sum(1, 4);
  bad_sum << 0.5, 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(loss_class(bad_sum, {ModClass::PSK8_SIGNAL}),
                  InvalidProbabilityError);

  Eigen::MatrixXd zero_true(1, 4);
  zero_true << 0.0, 0.5, 0.25, 0.25;
  CHECK_THROWS_AS(loss_class(zero_true, {ModClass::PSK8_SIGNAL}),
                  InvalidProbabilityError);
  // fine when the zero is not the true class
  CHECK(std::isfinite(loss_class(zero_true, {ModClass::PSK8_NOISE})));
}

TEST_CASE("analytic gradients match central finite differences (MSE)") {
  GradCheckConfig cfg;
  cfg.loss = LossKind::Mse;
  cfg.seed = 3;
  const GradCheckReport rep = check_gradients(cfg);
  INFO("checked " << rep.checked_coordinates << " coordinates");
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("analytic gradients match central finite differences (ABS)") {
  // random continuous data puts every residual away from the |.| kink
  GradCheckConfig cfg;
  cfg.loss = LossKind::Abs;
  cfg.seed = 5;
  const GradCheckReport rep = check_gradients(cfg);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("gradient check holds for spans deeper than one") {
  GradCheckConfig cfg;
  cfg.loss = LossKind::Mse;
  cfg.seed = 7;
  cfg.span = 3;
  const GradCheckReport rep = check_gradients(cfg);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("gradient check holds for the tanh squash variant") {
  GradCheckConfig cfg;
  cfg.loss = LossKind::Mse;
  cfg.seed = 11;
  cfg.squash = Squash::Tanh;
  const GradCheckReport rep = check_gradients(cfg);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("check_gradients caps its dimensions") {
  GradCheckConfig cfg;
  cfg.h = 6;
  CHECK_THROWS_AS(check_gradients(cfg), ConfigError);
}

TEST_CASE("ABS subgradient at zero residual is zero") {
  const int h = 3, d = kNumBins;
  const LstmParams params = LstmParams::zeros(h, d);
  PredictorBatch batch;
  batch.x = Eigen::MatrixXd::Zero(2, d);
  batch.c_in = Eigen::MatrixXd::Zero(2, h);
  batch.z_in = Eigen::MatrixXd::Zero(2, h);
  // with all-zero parameters the prediction is exactly zero
  batch.y = Eigen::MatrixXd::Zero(2, d);
  const PredictorGradients g = grad_predictor(params, batch, LossKind::Abs);
  CHECK(g.W_c.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.U_o.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.primary_W.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.primary_b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.b_f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grad_predictor agrees with finite differences on a small batch") {
  const int h = 3, d = kNumBins;
  LstmParams params = init_params(h, d, kNumClasses, 13, 0.2);
  Rng rng(17);
  PredictorBatch batch;
  batch.x.resize(3, d);
  batch.y.resize(3, d);
  batch.c_in.resize(3, h);
  batch.z_in.resize(3, h);
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (int n = 0; n < d; ++n) {
      batch.x(r, n) = rng.uniform(-1.0, 1.0);
      batch.y(r, n) = rng.uniform(-1.0, 1.0);
    }
    for (int k = 0; k < h; ++k) {
      batch.c_in(r, k) = rng.uniform(-0.5, 0.5);
      batch.z_in(r, k) = rng.uniform(0.0, 0.9);
    }
  }
  const PredictorGradients g = grad_predictor(params, batch, LossKind::Mse);

  auto batch_loss = [&]() {
    Eigen::MatrixXd pred(3, d);
    for (Eigen::Index r = 0; r < 3; ++r) {
      LstmState st{batch.c_in.row(r).transpose(), batch.z_in.row(r).transpose()};
      const auto [next, gates] =
          lstm_step_raw(params, batch.x.row(r).transpose(), st);
      pred.row(r) = primary_decode(params, next.z).transpose();
    }
    return loss_mse(pred, batch.y);
  };

  const double eps = 1e-6;
  auto check_coord = [&](double* coord, double analytic) {
    const double save = *coord;
    *coord = save + eps;
    const double up = batch_loss();
    *coord = save - eps;
    const double dn = batch_loss();
    *coord = save;
    const double numeric = (up - dn) / (2 * eps);
    REQUIRE_THAT(analytic, Catch::Matchers::WithinAbs(numeric, 1e-7));
  };
  check_coord(&params.W_f(1, 100), g.W_f(1, 100));
  check_coord(&params.U_c(2, 1), g.U_c(2, 1));
  check_coord(&params.b_i(0), g.b_i(0));
  check_coord(&params.primary_W(512, 2), g.primary_W(512, 2));
  check_coord(&params.primary_b(7), g.primary_b(7));
}

TEST_CASE("train_predictor config validation") {
  TrainConfig cfg;
  cfg.predictor_epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.truncation_span = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("train_predictor is deterministic and reduces the loss") {
  const Dataset ds = tiny_dataset();
  const NormalizationParams norm;
  TrainConfig cfg;
  cfg.predictor_epochs = 200;
  cfg.classifier_epochs = 1;
  cfg.seed = 9;

  const auto a = train_predictor(ds.train_passes, norm, cfg);
  const auto b = train_predictor(ds.train_passes, norm, cfg);
  CHECK(bitwise_equal(a.params.W_c, b.params.W_c));
  CHECK(bitwise_equal(a.params.U_f, b.params.U_f));
  CHECK(bitwise_equal(a.params.primary_W, b.params.primary_W));
  CHECK(a.report.per_epoch == b.report.per_epoch);

  REQUIRE(a.report.per_epoch.size() == 200);
  CHECK(a.report.final_loss < a.report.per_epoch.front());
  CHECK(std::isfinite(a.report.final_loss));
}

TEST_CASE("full-batch mode trains deterministically too") {
  const Dataset ds = tiny_dataset(3, 20);
  const NormalizationParams norm;
  TrainConfig cfg;
  cfg.predictor_epochs = 10;
  cfg.batch_size = 0;
  const auto a = train_predictor(ds.train_passes, norm, cfg);
  const auto b = train_predictor(ds.train_passes, norm, cfg);
  CHECK(bitwise_equal(a.params.W_o, b.params.W_o));
  REQUIRE(a.report.per_epoch.size() == 10);
}

TEST_CASE("train_predictor rejects invalid passes") {
  Dataset ds = tiny_dataset();
  ds.train_passes[0].frame_sync[3] = 1;
  CHECK_THROWS_AS(
      train_predictor(ds.train_passes, NormalizationParams{}, TrainConfig{}),
      ConfigError);
}

TEST_CASE("training aborts on a non-finite loss") {
  const Dataset ds = tiny_dataset(5, 16);
  TrainConfig cfg;
  cfg.predictor_epochs = 50;
  cfg.loss = LossKind::Mse;
  cfg.learning_rate = 1e30;  // guaranteed blow-up
  CHECK_THROWS_AS(train_predictor(ds.train_passes, NormalizationParams{}, cfg),
                  NonFiniteLossError);
}

TEST_CASE("train_classifier freezes everything but the secondary head") {
  const Dataset ds = tiny_dataset(7, 24);
  const NormalizationParams norm;
  TrainConfig cfg;
  cfg.predictor_epochs = 5;
  cfg.classifier_epochs = 50;
  const auto pre = train_predictor(ds.train_passes, norm, cfg);
  const auto post = train_classifier(ds.train_passes, pre.params, norm, cfg);

  CHECK(bitwise_equal(post.params.W_c, pre.params.W_c));
  CHECK(bitwise_equal(post.params.W_f, pre.params.W_f));
  CHECK(bitwise_equal(post.params.W_i, pre.params.W_i));
  CHECK(bitwise_equal(post.params.W_o, pre.params.W_o));
  CHECK(bitwise_equal(post.params.U_c, pre.params.U_c));
  CHECK(bitwise_equal(post.params.U_f, pre.params.U_f));
  CHECK(bitwise_equal(post.params.U_i, pre.params.U_i));
  CHECK(bitwise_equal(post.params.U_o, pre.params.U_o));
  CHECK(bitwise_equal(post.params.primary_W, pre.params.primary_W));
  CHECK(post.params.b_c == pre.params.b_c);
  CHECK(post.params.b_f == pre.params.b_f);
  CHECK(post.params.b_i == pre.params.b_i);
  CHECK(post.params.b_o == pre.params.b_o);
  CHECK(post.params.primary_b == pre.params.primary_b);
  CHECK_FALSE(bitwise_equal(post.params.secondary_W, pre.params.secondary_W));

  REQUIRE(post.report.per_epoch.size() == 50);
  CHECK(post.report.final_loss < post.report.per_epoch.front());

  const auto again = train_classifier(ds.train_passes, pre.params, norm, cfg);
  CHECK(bitwise_equal(again.params.secondary_W, post.params.secondary_W));
  CHECK(again.params.secondary_b == post.params.secondary_b);
}
