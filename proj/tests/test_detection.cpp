#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "specmon/detection.hpp"
#include "specmon/rng.hpp"
#include "specmon/synthgen.hpp"

using namespace specmon;

namespace {

InterferenceSpec quiet_spec() {
  InterferenceSpec s;
  s.noise_amplitude = 0.0;
  return s;
}

// Pass with one transmission episode and an idealized predictor that always
// emits the template of the class it last saw (teacher-forced, so it is not
// perturbed by injected interference).
struct Scenario {
  Pass pass;
  Eigen::MatrixXd yhat_norm;
  SynthConfig cfg;
};

Scenario make_scenario(int length, int t_on, int t_off, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.pass_length_min = length;
  cfg.pass_length_max = length;
  Scenario sc;
  sc.cfg = cfg;
  Rng rng(substream(seed, 17));
  Pass& p = sc.pass;
  p.id = "S";
  p.modulation = Modulation::QAM16;
  for (int t = 0; t < length; ++t) {
    const bool active = t >= t_on && t < t_off;
    p.frame_sync.push_back(active ? 2 : 0);
    p.labels.push_back(class_for(p.modulation, active));
    p.spectra.push_back(gen_spectrum(p.labels.back(), cfg, rng));
  }
  const NormalizationParams norm;
  sc.yhat_norm.resize(length - 1, kNumBins);
  for (int t = 0; t < length - 1; ++t) {
    const Eigen::VectorXd tmpl = class_template(p.labels[static_cast<std::size_t>(t)], cfg);
    sc.yhat_norm.row(t) = ((tmpl.array() - norm.a) / norm.b).transpose();
  }
  return sc;
}

}  // namespace

TEST_CASE("interference profile: parabola anchors with the noise disabled") {
  InterferenceSpec s = quiet_spec();
  const Eigen::VectorXd prof = interference_profile(s, 0);
  // peak at phi/Phi = beta
  CHECK_THAT(prof[s.start_bin + s.phi_max / 2],
             Catch::Matchers::WithinAbs(s.delta, 1e-12));
  // band start: delta - gamma * beta^2
  CHECK_THAT(prof[s.start_bin], Catch::Matchers::WithinAbs(10.0, 1e-12));
  for (int n = 0; n < s.start_bin; ++n) REQUIRE(prof[n] == 0.0);
  for (int n = s.start_bin + s.phi_max; n < kNumBins; ++n) REQUIRE(prof[n] == 0.0);
}

TEST_CASE("interference profile draws fresh per-step noise, reproducibly") {
  InterferenceSpec s;
  s.noise_seed = 99;
  const Eigen::VectorXd a0 = interference_profile(s, 400);
  const Eigen::VectorXd a1 = interference_profile(s, 401);
  const Eigen::VectorXd b0 = interference_profile(s, 400);
  CHECK(a0 == b0);
  CHECK(a0 != a1);
}

TEST_CASE("interference spec validation") {
  InterferenceSpec s;
  s.beta = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = InterferenceSpec{};
  s.start_bin = 800;  // 800 + 300 > 1024
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = InterferenceSpec{};
  s.duration = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("inject alters exactly the addressed steps") {
  Scenario sc = make_scenario(120, 40, 90, 5);
  InterferenceSpec s;
  s.start_t = 20;
  s.duration = 10;
  s.noise_seed = 7;
  const Pass injected = inject(sc.pass, s);
  for (int t = 0; t < sc.pass.length(); ++t) {
    const bool affected = t >= 20 && t < 30;
    const bool differs =
        injected.spectra[static_cast<std::size_t>(t)].bins !=
        sc.pass.spectra[static_cast<std::size_t>(t)].bins;
    REQUIRE(differs == affected);
  }
  // zero-profile injection is the identity
  InterferenceSpec zero = quiet_spec();
  zero.gamma = 0.0;
  zero.delta = 0.0;
  zero.start_t = 20;
  zero.duration = 10;
  const Pass same = inject(sc.pass, zero);
  for (int t = 0; t < sc.pass.length(); ++t)
    REQUIRE(same.spectra[static_cast<std::size_t>(t)].bins ==
            sc.pass.spectra[static_cast<std::size_t>(t)].bins);

  InterferenceSpec oob;
  oob.start_t = 115;
  oob.duration = 10;
  CHECK_THROWS_AS(inject(sc.pass, oob), OutOfBoundsError);
}

TEST_CASE("mmse_score basics: zero error, whole-window offset, single bin") {
  const NormalizationParams norm;
  const Eigen::VectorXd base = Eigen::VectorXd::Constant(kNumBins, -50.0);
  const Spectrum pred(base, false);
  const auto zero = mmse_score(pred, Spectrum(base, false), norm, 64);
  CHECK(zero.mmse == 0.0);
  CHECK(zero.argmax_window == 0);

  // +e dB over exactly window 3
  Eigen::VectorXd off = base;
  const double e = 2.0;
  for (int n = 3 * 64; n < 4 * 64; ++n) off[n] += e;
  const auto win = mmse_score(pred, Spectrum(off, false), norm, 64);
  CHECK_THAT(win.mmse, Catch::Matchers::WithinAbs(e * e, 1e-12));
  CHECK(win.argmax_window == 3);

  // one bin at +8 dB averages down to e^2 / L
  Eigen::VectorXd one = base;
  one[700] += 8.0;
  const auto single = mmse_score(pred, Spectrum(one, false), norm, 64);
  CHECK_THAT(single.mmse, Catch::Matchers::WithinAbs(64.0 / 64.0, 1e-12));
  CHECK(single.argmax_window == 700 / 64);

  CHECK_THROWS_AS(mmse_score(pred, Spectrum(base, false), norm, 100),
                  BadWindowError);
}

TEST_CASE("mmse_score canonicalizes normalized and raw inputs identically") {
  const NormalizationParams norm;
  Rng rng(3);
  Eigen::VectorXd raw_pred(kNumBins), raw_act(kNumBins);
  for (int n = 0; n < kNumBins; ++n) {
    raw_pred[n] = rng.uniform(-90.0, -20.0);
    raw_act[n] = rng.uniform(-90.0, -20.0);
  }
  const Spectrum p_raw(raw_pred, false), a_raw(raw_act, false);
  const Spectrum p_norm = normalize(p_raw, norm);
  const auto both_raw = mmse_score(p_raw, a_raw, norm, 64);
  const auto mixed = mmse_score(p_norm, a_raw, norm, 64);
  CHECK_THAT(mixed.mmse, Catch::Matchers::WithinAbs(both_raw.mmse, 1e-9));
  CHECK(mixed.argmax_window == both_raw.argmax_window);
}

TEST_CASE("mmse_score equals a naive double loop on random pairs") {
  const NormalizationParams norm;
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd a(kNumBins), b(kNumBins);
    for (int n = 0; n < kNumBins; ++n) {
      a[n] = rng.uniform(-1.0, 1.0);
      b[n] = rng.uniform(-1.0, 1.0);
    }
    const Spectrum pred(a, true), act(b, true);
    const auto fast = mmse_score(pred, act, norm, 64);

    // oracle: naive loops in the denormalized domain
    double best = -1.0;
    int best_window = 0;
    for (int J = 0; J < 16; ++J) {
      double acc = 0.0;
      for (int j = J * 64; j < (J + 1) * 64; ++j) {
        const double pd = a[j] * norm.b + norm.a;
        const double ad = b[j] * norm.b + norm.a;
        acc += (pd - ad) * (pd - ad);
      }
      acc /= 64.0;
      if (acc > best) {
        best = acc;
        best_window = J;
      }
    }
    REQUIRE_THAT(fast.mmse, Catch::Matchers::WithinAbs(best, 1e-12));
    REQUIRE(fast.argmax_window == best_window);
  }
}

TEST_CASE("mmse_trace spans the pass and flags the injected plateau") {
  Scenario sc = make_scenario(260, 80, 180, 23);
  const NormalizationParams norm;
  InterferenceSpec s;
  s.start_t = 210;
  s.duration = 20;
  s.noise_seed = 3;
  const Pass injected = inject(sc.pass, s);
  const MmseTrace trace = mmse_trace(sc.yhat_norm, injected, norm, 64);
  REQUIRE(trace.steps() == injected.length() - 1);
  REQUIRE(trace.num_windows == 16);

  // plateau elevated over [210, 230), background low right outside it
  for (int t = 210; t < 230; ++t)
    REQUIRE(trace.mmse[static_cast<std::size_t>(t - 1)] > 50.0);
  CHECK(trace.mmse[static_cast<std::size_t>(208 - 1)] < 10.0);
  CHECK(trace.mmse[static_cast<std::size_t>(232 - 1)] < 10.0);
}

TEST_CASE("detect_events: clean pass has two spikes and nothing else") {
  Scenario sc = make_scenario(260, 80, 180, 31);
  const NormalizationParams norm;
  const MmseTrace trace = mmse_trace(sc.yhat_norm, sc.pass, norm, 64);
  const auto events = detect_events(trace, sc.pass, DetectorConfig{});
  REQUIRE(events.size() == 2);
  for (const auto& ev : events) CHECK(ev.kind == EventKind::TRANSITION_SPIKE);
  CHECK(events[0].start_t == 80);
  CHECK(events[1].start_t == 180);
}

TEST_CASE("detect_events: injected pass yields the ground-truth event set") {
  Scenario sc = make_scenario(260, 80, 180, 37);
  const NormalizationParams norm;
  InterferenceSpec s1;
  s1.start_t = 30;
  s1.duration = 6;
  s1.noise_seed = 5;
  InterferenceSpec s2;
  s2.start_t = 210;
  s2.duration = 20;
  s2.noise_seed = 6;
  Pass injected = inject(inject(sc.pass, s1), s2);
  const MmseTrace trace = mmse_trace(sc.yhat_norm, injected, norm, 64);
  const auto events = detect_events(trace, injected, DetectorConfig{});

  std::vector<DetectionEvent> interference, spikes;
  for (const auto& ev : events)
    (ev.kind == EventKind::INTERFERENCE ? interference : spikes).push_back(ev);
  REQUIRE(interference.size() == 2);
  REQUIRE(spikes.size() == 2);

  const GroundTruthEvent g1 = ground_truth_event(s1, 64);
  const GroundTruthEvent g2 = ground_truth_event(s2, 64);
  CHECK(std::abs(interference[0].start_t - g1.start_t) <= 2);
  CHECK(std::abs(interference[0].end_t - g1.end_t) <= 2);
  CHECK(std::abs(interference[1].start_t - g2.start_t) <= 2);
  CHECK(std::abs(interference[1].end_t - g2.end_t) <= 2);
  // frequency localization within one window of the injected band
  CHECK(interference[0].window_lo >= g1.window_lo - 1);
  CHECK(interference[0].window_hi <= g1.window_hi + 1);
  CHECK(interference[1].window_lo >= g2.window_lo - 1);
  CHECK(interference[1].window_hi <= g2.window_hi + 1);
  // the spikes sit at the transitions
  CHECK(spikes[0].start_t == 80);
  CHECK(spikes[1].start_t == 180);
}

TEST_CASE("detect_events: a flat zero trace has no events") {
  Scenario sc = make_scenario(64, 20, 40, 41);
  MmseTrace flat;
  flat.mmse.assign(static_cast<std::size_t>(sc.pass.length() - 1), 0.0);
  flat.argmax_window.assign(static_cast<std::size_t>(sc.pass.length() - 1), 0);
  CHECK(detect_events(flat, sc.pass, DetectorConfig{}).empty());
}

TEST_CASE("ground truth windows cover the injected band") {
  InterferenceSpec s;  // bins [362, 662)
  const GroundTruthEvent gt = ground_truth_event(s, 64);
  CHECK(gt.start_t == s.start_t);
  CHECK(gt.end_t == s.start_t + s.duration);
  CHECK(gt.window_lo == 5);
  CHECK(gt.window_hi == 10);
}

TEST_CASE("p_error counts masked-in mistakes") {
  using enum ModClass;
  const std::vector<ModClass> truth = {PSK8_SIGNAL, PSK8_SIGNAL, PSK8_NOISE,
                                       QAM16_NOISE};
  CHECK(p_error(truth, truth, {false, false, false, false}) == 0.0);
  const std::vector<ModClass> half = {PSK8_SIGNAL, PSK8_NOISE, PSK8_SIGNAL,
                                      QAM16_NOISE};
  CHECK(p_error(half, truth, {false, false, false, false}) == 0.5);
  // masking removes the wrong ones
  CHECK(p_error(half, truth, {false, true, true, false}) == 0.0);
  CHECK_THROWS_AS(p_error(half, truth, {true, true, true, true}),
                  EmptyAfterMaskError);
  CHECK_THROWS_AS(p_error(half, truth, {true, true}), DimensionMismatchError);
}
