// specmon: synthetic spectrum generation, predictor training, interference
// injection, MMSE-based detection and evaluation, as one pipeline binary.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "specmon/specmon.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json load_json_file(const std::string& path) {
  try {
    return json::parse(specmon::read_text_file(path));
  } catch (const json::exception& e) {
    throw specmon::IoError("cannot parse " + path + ": " + e.what());
  }
}

// Splits "dir/id" into the pass directory and the pass id.
std::pair<fs::path, std::string> split_pass_ref(const std::string& ref) {
  fs::path p(ref);
  std::string id = p.filename().string();
  if (id.size() > 4 && id.ends_with(".csv")) id = id.substr(0, id.size() - 4);
  if (id.empty()) throw specmon::ConfigError("bad pass reference '" + ref + "'");
  return {p.parent_path(), id};
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenOptions {
  std::string out;
  specmon::SynthConfig synth;
};

json to_json(const GenOptions& o) {
  return {{"out", o.out}, {"synth", specmon::to_json(o.synth)}};
}

GenOptions gen_options_from_json(const json& j) {
  GenOptions o;
  o.out = j.at("out").get<std::string>();
  o.synth = specmon::synth_config_from_json(j.at("synth"));
  return o;
}

void run_gen(const GenOptions& opt) {
  const auto t0 = Clock::now();
  opt.synth.validate();
  const specmon::Dataset ds = specmon::gen_dataset(opt.synth);
  specmon::write_dataset(opt.out, ds, specmon::to_json(opt.synth));

  specmon::RunManifest m;
  m.command = "gen";
  m.config = to_json(opt);
  m.outputs.push_back("dataset.json");
  for (const auto& p : ds.train_passes) {
    m.outputs.push_back(p.id + ".csv");
    m.outputs.push_back(p.id + ".manifest.json");
  }
  for (const auto& p : ds.test_passes) {
    m.outputs.push_back(p.id + ".csv");
    m.outputs.push_back(p.id + ".manifest.json");
  }
  m.seconds = seconds_since(t0);
  specmon::write_manifest(opt.out, m);
  std::cout << "gen: wrote " << ds.train_passes.size() << " train + "
            << ds.test_passes.size() << " test passes to " << opt.out << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string out;
  specmon::TrainConfig train;
  bool quiet = false;
};

json to_json(const TrainOptions& o) {
  return {{"data", o.data},
          {"out", o.out},
          {"train", specmon::to_json(o.train)},
          {"quiet", o.quiet}};
}

TrainOptions train_options_from_json(const json& j) {
  TrainOptions o;
  o.data = j.at("data").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.train = specmon::train_config_from_json(j.at("train"));
  o.quiet = j.value("quiet", false);
  return o;
}

void run_train(const TrainOptions& opt) {
  const auto t0 = Clock::now();
  const specmon::Dataset ds = specmon::read_dataset(opt.data);
  const specmon::NormalizationParams norm;

  const int report_every = std::max(1, opt.train.predictor_epochs / 20);
  specmon::EpochCallback progress;
  if (!opt.quiet)
    progress = [&](int epoch, double loss) {
      if (epoch % report_every == 0 || epoch == opt.train.predictor_epochs - 1)
        std::fprintf(stderr, "epoch %6d  loss %.6f\n", epoch, loss);
    };

  auto predictor =
      specmon::train_predictor(ds.train_passes, norm, opt.train, progress);
  if (!opt.quiet)
    std::fprintf(stderr, "predictor final loss %.6f (%.1f s)\n",
                 predictor.report.final_loss, predictor.report.seconds);
  auto classifier = specmon::train_classifier(ds.train_passes, predictor.params,
                                              norm, opt.train);
  if (!opt.quiet)
    std::fprintf(stderr, "classifier final cross-entropy %.3f (%.1f s)\n",
                 classifier.report.final_loss, classifier.report.seconds);

  fs::create_directories(opt.out);
  specmon::save_model(fs::path(opt.out) / "model.json",
                      {classifier.params, norm});
  specmon::write_loss_report_csv(fs::path(opt.out) / "loss_report.csv",
                                 predictor.report);
  specmon::write_loss_report_csv(fs::path(opt.out) / "classifier_report.csv",
                                 classifier.report);

  specmon::RunManifest m;
  m.command = "train";
  m.config = to_json(opt);
  m.outputs = {"model.json", "loss_report.csv", "classifier_report.csv"};
  m.seconds = seconds_since(t0);
  specmon::write_manifest(opt.out, m);
  std::cout << "train: model.json written to " << opt.out << " (final loss "
            << predictor.report.final_loss << ")\n";
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

struct BaselineOptions {
  std::string data;
  std::string out;
};

json to_json(const BaselineOptions& o) {
  return {{"data", o.data}, {"out", o.out}};
}

BaselineOptions baseline_options_from_json(const json& j) {
  BaselineOptions o;
  o.data = j.at("data").get<std::string>();
  o.out = j.at("out").get<std::string>();
  return o;
}

void run_baseline(const BaselineOptions& opt) {
  const auto t0 = Clock::now();
  const specmon::Dataset ds = specmon::read_dataset(opt.data);
  const specmon::NormalizationParams norm;
  const specmon::BasisMatrix basis = specmon::compute_basis(ds.train_passes, norm);

  fs::create_directories(opt.out);
  specmon::write_basis_json(fs::path(opt.out) / "basis.json", basis, norm);

  specmon::RunManifest m;
  m.command = "baseline";
  m.config = to_json(opt);
  m.outputs = {"basis.json"};

  for (const specmon::Pass& pass : ds.test_passes) {
    const auto pred = specmon::baseline_predict_pass(basis, pass, norm);
    Eigen::MatrixXd scores = pred.weights;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const double sum = scores.row(r).sum();
      if (std::abs(sum) > 1e-12) scores.row(r) /= sum;
    }
    const std::string name = pass.id + ".predictions.csv";
    specmon::write_predictions_csv(fs::path(opt.out) / name, pred.labels, scores);
    m.outputs.push_back(name);
  }
  m.seconds = seconds_since(t0);
  specmon::write_manifest(opt.out, m);
  std::cout << "baseline: basis.json + " << ds.test_passes.size()
            << " prediction files written to " << opt.out << "\n";
}

// ---------------------------------------------------------------------------
// inject
// ---------------------------------------------------------------------------

struct InjectOptions {
  std::string data;
  std::string out;
  std::vector<specmon::InterferenceSpec> specs;
  std::vector<std::string> passes;  // empty = all test passes
  int window = 64;
};

json to_json(const InjectOptions& o) {
  json specs = json::array();
  for (const auto& s : o.specs) specs.push_back(specmon::to_json(s));
  return {{"data", o.data},
          {"out", o.out},
          {"specs", specs},
          {"passes", o.passes},
          {"window", o.window}};
}

InjectOptions inject_options_from_json(const json& j) {
  InjectOptions o;
  o.data = j.at("data").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.specs = specmon::interference_list_from_json(j.at("specs"));
  for (const auto& p : j.value("passes", json::array()))
    o.passes.push_back(p.get<std::string>());
  o.window = j.value("window", 64);
  return o;
}

void run_inject(const InjectOptions& opt) {
  const auto t0 = Clock::now();
  if (opt.specs.empty()) throw specmon::ConfigError("no interference specs");
  const json index = load_json_file((fs::path(opt.data) / "dataset.json").string());

  std::vector<std::string> targets = opt.passes;
  if (targets.empty())
    for (const auto& id : index.at("test")) targets.push_back(id.get<std::string>());

  specmon::RunManifest m;
  m.command = "inject";
  m.config = to_json(opt);

  // Copy the dataset index and all passes; injected passes are replaced.
  specmon::Dataset ds = specmon::read_dataset(opt.data);
  specmon::GroundTruthMap ground_truth;
  auto maybe_inject = [&](specmon::Pass& pass) {
    if (std::find(targets.begin(), targets.end(), pass.id) == targets.end())
      return;
    for (const auto& spec : opt.specs) {
      pass = specmon::inject(pass, spec);
      ground_truth[pass.id].push_back(
          specmon::ground_truth_event(spec, opt.window));
    }
  };
  for (auto& pass : ds.train_passes) maybe_inject(pass);
  for (auto& pass : ds.test_passes) maybe_inject(pass);

  specmon::write_dataset(opt.out, ds, index.value("generator_config", json()));
  specmon::write_ground_truth_json(fs::path(opt.out) / "ground_truth_events.json",
                                   ground_truth);
  m.outputs.push_back("dataset.json");
  m.outputs.push_back("ground_truth_events.json");
  for (const auto& p : ds.train_passes) {
    m.outputs.push_back(p.id + ".csv");
    m.outputs.push_back(p.id + ".manifest.json");
  }
  for (const auto& p : ds.test_passes) {
    m.outputs.push_back(p.id + ".csv");
    m.outputs.push_back(p.id + ".manifest.json");
  }
  m.seconds = seconds_since(t0);
  specmon::write_manifest(opt.out, m);
  std::cout << "inject: " << ground_truth.size() << " passes injected, dataset at "
            << opt.out << "\n";
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectOptions {
  std::string model;
  std::string pass_ref;  // dir/id
  std::string out;
  std::vector<specmon::InterferenceSpec> inject;
  int window = 64;
  specmon::DetectorConfig detector;
  std::string predictor = "lstm";  // lstm | baseline
  std::string basis;               // basis.json path, baseline mode
};

json to_json(const DetectOptions& o) {
  json inj = json::array();
  for (const auto& s : o.inject) inj.push_back(specmon::to_json(s));
  return {{"model", o.model},   {"pass", o.pass_ref},
          {"out", o.out},       {"inject", inj},
          {"window", o.window}, {"detector", specmon::to_json(o.detector)},
          {"predictor", o.predictor}, {"basis", o.basis}};
}

DetectOptions detect_options_from_json(const json& j) {
  DetectOptions o;
  o.model = j.value("model", "");
  o.pass_ref = j.at("pass").get<std::string>();
  o.out = j.at("out").get<std::string>();
  if (j.contains("inject") && !j["inject"].empty())
    o.inject = specmon::interference_list_from_json(j["inject"]);
  o.window = j.value("window", 64);
  if (j.contains("detector"))
    o.detector = specmon::detector_config_from_json(j["detector"]);
  o.predictor = j.value("predictor", "lstm");
  o.basis = j.value("basis", "");
  return o;
}

void run_detect(const DetectOptions& opt) {
  const auto t0 = Clock::now();
  const auto [pass_dir, pass_id] = split_pass_ref(opt.pass_ref);
  specmon::Pass pass = specmon::read_pass(pass_dir, pass_id);

  specmon::GroundTruthMap ground_truth;
  for (const auto& spec : opt.inject) {
    pass = specmon::inject(pass, spec);
    ground_truth[pass.id].push_back(specmon::ground_truth_event(spec, opt.window));
  }

  Eigen::MatrixXd yhat;
  std::vector<specmon::ModClass> labels;
  Eigen::MatrixXd scores;
  specmon::NormalizationParams norm;
  if (opt.predictor == "lstm") {
    if (opt.model.empty()) throw specmon::ConfigError("--model is required");
    const specmon::ModelFile model = specmon::load_model(opt.model);
    norm = model.norm;
    if (model.params.d != specmon::kNumBins)
      throw specmon::DimensionMismatchError("model d does not match pass bins");
    auto pred = specmon::predict_pass(model.params, pass, norm);
    yhat = std::move(pred.yhat_norm);
    labels = std::move(pred.labels);
    scores = std::move(pred.probs);
  } else if (opt.predictor == "baseline") {
    if (opt.basis.empty()) throw specmon::ConfigError("--basis is required");
    const specmon::BasisFile basis = specmon::read_basis_json(opt.basis);
    norm = basis.norm;
    auto pred = specmon::baseline_predict_pass(basis.basis, pass, norm);
    yhat = std::move(pred.yhat_norm);
    labels = std::move(pred.labels);
    scores = std::move(pred.weights);
  } else {
    throw specmon::ConfigError("predictor must be 'lstm' or 'baseline'");
  }

  const specmon::MmseTrace trace = specmon::mmse_trace(yhat, pass, norm, opt.window);
  const auto thresholds = specmon::detector_thresholds(trace, opt.detector);
  const auto events = specmon::detect_events(trace, pass, opt.detector);

  fs::create_directories(opt.out);
  specmon::write_trace_csv(fs::path(opt.out) / "trace.csv", trace);
  specmon::write_events_json(fs::path(opt.out) / "events.json", events, thresholds);
  specmon::write_predictions_csv(fs::path(opt.out) / "predictions.csv", labels,
                                 scores);

  specmon::RunManifest m;
  m.command = "detect";
  m.config = to_json(opt);
  m.outputs = {"trace.csv", "events.json", "predictions.csv"};
  if (!ground_truth.empty()) {
    specmon::write_ground_truth_json(
        fs::path(opt.out) / "ground_truth_events.json", ground_truth);
    m.outputs.push_back("ground_truth_events.json");
  }
  m.seconds = seconds_since(t0);
  specmon::write_manifest(opt.out, m);

  int interference = 0, spikes = 0;
  for (const auto& ev : events)
    (ev.kind == specmon::EventKind::INTERFERENCE ? interference : spikes)++;
  std::cout << "detect: " << interference << " INTERFERENCE + " << spikes
            << " TRANSITION_SPIKE events on " << pass.id << " (theta_int "
            << thresholds.theta_int << ")\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string model;
  std::string data;
  std::string ground_truth;  // optional
  std::string out;
  int window = 64;
  specmon::DetectorConfig detector;
  std::string predictor = "lstm";
  std::string basis;
  int latency_steps = 1000;
};

json to_json(const EvalOptions& o) {
  return {{"model", o.model},
          {"data", o.data},
          {"ground_truth", o.ground_truth},
          {"out", o.out},
          {"window", o.window},
          {"detector", specmon::to_json(o.detector)},
          {"predictor", o.predictor},
          {"basis", o.basis},
          {"latency_steps", o.latency_steps}};
}

EvalOptions eval_options_from_json(const json& j) {
  EvalOptions o;
  o.model = j.value("model", "");
  o.data = j.at("data").get<std::string>();
  o.ground_truth = j.value("ground_truth", "");
  o.out = j.at("out").get<std::string>();
  o.window = j.value("window", 64);
  if (j.contains("detector"))
    o.detector = specmon::detector_config_from_json(j["detector"]);
  o.predictor = j.value("predictor", "lstm");
  o.basis = j.value("basis", "");
  o.latency_steps = j.value("latency_steps", 1000);
  return o;
}

bool event_matches(const specmon::DetectionEvent& ev,
                   const specmon::GroundTruthEvent& gt) {
  return std::abs(ev.start_t - gt.start_t) <= 2 &&
         std::abs(ev.end_t - gt.end_t) <= 2 && ev.window_lo >= gt.window_lo - 1 &&
         ev.window_hi <= gt.window_hi + 1;
}

void run_eval(const EvalOptions& opt) {
  const auto t0 = Clock::now();
  const specmon::Dataset ds = specmon::read_dataset(opt.data);

  std::optional<specmon::ModelFile> model;
  std::optional<specmon::BasisFile> basis;
  specmon::NormalizationParams norm;
  if (opt.predictor == "lstm") {
    if (opt.model.empty()) throw specmon::ConfigError("--model is required");
    model = specmon::load_model(opt.model);
    norm = model->norm;
  } else if (opt.predictor == "baseline") {
    if (opt.basis.empty()) throw specmon::ConfigError("--basis is required");
    basis = specmon::read_basis_json(opt.basis);
    norm = basis->norm;
  } else {
    throw specmon::ConfigError("predictor must be 'lstm' or 'baseline'");
  }

  specmon::GroundTruthMap ground_truth;
  const bool have_gt = !opt.ground_truth.empty();
  if (have_gt) ground_truth = specmon::read_ground_truth_json(opt.ground_truth);

  json per_pass = json::object();
  long total_kept = 0, total_wrong = 0;
  int gt_total = 0, gt_matched = 0, det_total = 0, det_matched = 0;

  for (const specmon::Pass& pass : ds.test_passes) {
    Eigen::MatrixXd yhat;
    std::vector<specmon::ModClass> labels;
    if (model) {
      auto pred = specmon::predict_pass(model->params, pass, norm);
      yhat = std::move(pred.yhat_norm);
      labels = std::move(pred.labels);
    } else {
      auto pred = specmon::baseline_predict_pass(basis->basis, pass, norm);
      yhat = std::move(pred.yhat_norm);
      labels = std::move(pred.labels);
    }

    // classification error, transitions excluded
    const std::vector<bool> mask = specmon::transition_mask(pass);
    std::vector<specmon::ModClass> truth(labels.size());
    std::vector<bool> excluded(labels.size());
    long kept = 0, wrong = 0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      truth[k] = pass.labels[k + 1];
      excluded[k] = mask[k + 1];
      if (!excluded[k]) {
        ++kept;
        if (labels[k] != truth[k]) ++wrong;
      }
    }
    const double pe = specmon::p_error(labels, truth, excluded);
    total_kept += kept;
    total_wrong += wrong;

    const specmon::MmseTrace trace = specmon::mmse_trace(yhat, pass, norm, opt.window);
    const auto events = specmon::detect_events(trace, pass, opt.detector);
    int interference = 0, spikes = 0;
    for (const auto& ev : events)
      (ev.kind == specmon::EventKind::INTERFERENCE ? interference : spikes)++;

    json pj = {{"p_error", pe},
               {"steps", labels.size()},
               {"excluded", labels.size() - static_cast<std::size_t>(kept)},
               {"interference_events", interference},
               {"transition_spikes", spikes}};

    if (have_gt) {
      const auto it = ground_truth.find(pass.id);
      const std::vector<specmon::GroundTruthEvent> gts =
          it == ground_truth.end() ? std::vector<specmon::GroundTruthEvent>{}
                                   : it->second;
      int matched_here = 0;
      std::vector<bool> gt_used(gts.size(), false);
      for (const auto& ev : events) {
        if (ev.kind != specmon::EventKind::INTERFERENCE) continue;
        ++det_total;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (!gt_used[g] && event_matches(ev, gts[g])) {
            gt_used[g] = true;
            ++det_matched;
            ++matched_here;
            break;
          }
        }
      }
      gt_total += static_cast<int>(gts.size());
      gt_matched += matched_here;
      pj["ground_truth_events"] = gts.size();
      pj["matched_events"] = matched_here;
    }
    per_pass[pass.id] = std::move(pj);
  }

  json metrics;
  metrics["format_version"] = 1;
  metrics["predictor"] = opt.predictor;
  metrics["per_pass"] = std::move(per_pass);
  metrics["p_error_overall"] =
      total_kept == 0 ? 0.0 : double(total_wrong) / double(total_kept);
  if (have_gt) {
    metrics["event_recall"] = gt_total == 0 ? 1.0 : double(gt_matched) / gt_total;
    metrics["event_precision"] =
        det_total == 0 ? 1.0 : double(det_matched) / det_total;
  }

  // latency: single-step prediction + classification, median and p99
  json latency;
  if (model && !ds.test_passes.empty()) {
    const specmon::Pass& pass = ds.test_passes.front();
    std::vector<double> us;
    us.reserve(static_cast<std::size_t>(opt.latency_steps));
    specmon::LstmState state = specmon::LstmState::zeros(model->params.h);
    int t = 0;
    while (static_cast<int>(us.size()) < opt.latency_steps) {
      const specmon::Spectrum x = specmon::normalize(pass.spectra[static_cast<std::size_t>(t)], norm);
      const auto s0 = Clock::now();
      auto [next, gates] = specmon::lstm_step(model->params, x, state);
      const Eigen::VectorXd yhat = specmon::primary_decode(model->params, next.z);
      const Eigen::VectorXd probs = specmon::secondary_classify(model->params, next.z);
      const double elapsed = std::chrono::duration<double, std::micro>(
                                 Clock::now() - s0)
                                 .count();
      // keep the chain honest: fold outputs back in so nothing is elided
      state = std::move(next);
      us.push_back(elapsed + (yhat[0] + probs[0]) * 0.0);
      t = (t + 1) % (pass.length() - 1);
      if (t == 0) state = specmon::LstmState::zeros(model->params.h);
    }
    std::sort(us.begin(), us.end());
    latency["steps"] = us.size();
    latency["median_us"] = us[us.size() / 2];
    latency["p99_us"] = us[static_cast<std::size_t>(double(us.size() - 1) * 0.99)];
    latency["max_us"] = us.back();
  }

  fs::create_directories(opt.out);
  specmon::write_text_file(fs::path(opt.out) / "metrics.json",
                           metrics.dump(1) + "\n");
  specmon::RunManifest m;
  m.command = "eval";
  m.config = to_json(opt);
  m.outputs = {"metrics.json"};
  if (!latency.is_null()) {
    specmon::write_text_file(fs::path(opt.out) / "latency.json",
                             latency.dump(1) + "\n");
    m.outputs.push_back("latency.json");
  }
  m.seconds = seconds_since(t0);
  specmon::write_manifest(opt.out, m);

  std::cout << "eval: P_error " << metrics["p_error_overall"];
  if (have_gt)
    std::cout << ", event recall " << metrics["event_recall"] << ", precision "
              << metrics["event_precision"];
  if (!latency.is_null())
    std::cout << ", median latency " << latency["median_us"] << " us";
  std::cout << "\n";
}

// ---------------------------------------------------------------------------
// rerun
// ---------------------------------------------------------------------------

void dispatch(const std::string& command, const json& config);

void run_rerun(const std::string& manifest_path, const std::string& out_override) {
  const specmon::RunManifest m = specmon::read_manifest(manifest_path);
  json config = m.config;
  if (!out_override.empty()) config["out"] = out_override;
  dispatch(m.command, config);
}

void dispatch(const std::string& command, const json& config) {
  if (command == "gen") run_gen(gen_options_from_json(config));
  else if (command == "train") run_train(train_options_from_json(config));
  else if (command == "baseline") run_baseline(baseline_options_from_json(config));
  else if (command == "inject") run_inject(inject_options_from_json(config));
  else if (command == "detect") run_detect(detect_options_from_json(config));
  else if (command == "eval") run_eval(eval_options_from_json(config));
  else throw specmon::ConfigError("unknown command '" + command + "' in manifest");
}

void add_detector_flags(CLI::App* cmd, specmon::DetectorConfig& det) {
  cmd->add_option("--k-int", det.k_int,
                  "interference threshold: median + k_int * scaled MAD");
  cmd->add_option("--spike-factor", det.spike_factor,
                  "spike threshold as a multiple of the interference threshold");
  cmd->add_option("--max-spike-width", det.max_spike_width,
                  "transition guard width before the transition instant");
  cmd->add_option("--transition-recovery", det.transition_recovery,
                  "transition guard width after the transition instant");
  cmd->add_option("--warmup", det.warmup_steps,
                  "trace steps at the pass start excluded from detection");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic satellite-spectrum monitoring: generation, "
               "prediction, interference detection"};
  app.require_subcommand(1);

  // gen
  GenOptions gen;
  std::string gen_config;
  std::uint64_t gen_seed = 1;
  auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic dataset");
  cmd_gen->add_option("--out", gen.out, "output directory")->required();
  cmd_gen->add_option("--seed", gen_seed, "generator seed");
  cmd_gen->add_option("--config", gen_config, "synth config JSON file");

  // train
  TrainOptions train;
  std::string train_config, train_loss;
  auto* cmd_train = app.add_subcommand("train", "train predictor + classifier");
  cmd_train->add_option("--data", train.data, "dataset directory")->required();
  cmd_train->add_option("--out", train.out, "output directory")->required();
  cmd_train->add_option("--epochs", train.train.predictor_epochs,
                        "predictor training epochs");
  cmd_train->add_option("--classifier-epochs", train.train.classifier_epochs,
                        "classifier training epochs");
  cmd_train->add_option("--lr", train.train.learning_rate, "learning rate");
  cmd_train->add_option("--loss", train_loss, "predictor loss: abs|mse");
  cmd_train->add_option("--seed", train.train.seed, "initialization seed");
  cmd_train->add_option("--batch", train.train.batch_size,
                        "samples per update (0 = full batch)");
  cmd_train->add_option("--span", train.train.truncation_span,
                        "backpropagation truncation span");
  cmd_train->add_option("--init-scale", train.train.init_scale,
                        "uniform weight init scale");
  cmd_train->add_option("--config", train_config, "train config JSON file");
  cmd_train->add_flag("--quiet", train.quiet, "suppress progress output");

  // baseline
  BaselineOptions baseline;
  auto* cmd_baseline =
      app.add_subcommand("baseline", "least-squares basis fit baseline");
  cmd_baseline->add_option("--data", baseline.data, "dataset directory")
      ->required();
  cmd_baseline->add_option("--out", baseline.out, "output directory")->required();

  // inject
  InjectOptions inject;
  std::string inject_spec;
  auto* cmd_inject =
      app.add_subcommand("inject", "add crafted interference to passes");
  cmd_inject->add_option("--data", inject.data, "dataset directory")->required();
  cmd_inject->add_option("--out", inject.out, "output directory")->required();
  cmd_inject->add_option("--spec", inject_spec,
                         "interference spec JSON file (object or list)")
      ->required();
  cmd_inject->add_option("--passes", inject.passes,
                         "pass ids to inject (default: all test passes)");
  cmd_inject->add_option("--window", inject.window,
                         "window length used for ground-truth window ranges");

  // detect
  DetectOptions detect;
  std::string detect_inject;
  auto* cmd_detect =
      app.add_subcommand("detect", "predict one pass and detect events");
  cmd_detect->add_option("--model", detect.model, "model.json path");
  cmd_detect->add_option("--pass", detect.pass_ref, "pass as <dir>/<id>")
      ->required();
  cmd_detect->add_option("--out", detect.out, "output directory")->required();
  cmd_detect->add_option("--inject", detect_inject,
                         "interference spec JSON to apply before detection");
  cmd_detect->add_option("--window", detect.window, "MMSE window length");
  cmd_detect->add_option("--predictor", detect.predictor, "lstm|baseline");
  cmd_detect->add_option("--basis", detect.basis,
                         "basis.json (for --predictor baseline)");
  add_detector_flags(cmd_detect, detect.detector);

  // eval
  EvalOptions eval;
  auto* cmd_eval = app.add_subcommand("eval", "metrics over the test split");
  cmd_eval->add_option("--model", eval.model, "model.json path");
  cmd_eval->add_option("--data", eval.data, "dataset directory")->required();
  cmd_eval->add_option("--ground-truth", eval.ground_truth,
                       "ground_truth_events.json path");
  cmd_eval->add_option("--out", eval.out, "output directory")->required();
  cmd_eval->add_option("--window", eval.window, "MMSE window length");
  cmd_eval->add_option("--predictor", eval.predictor, "lstm|baseline");
  cmd_eval->add_option("--basis", eval.basis,
                       "basis.json (for --predictor baseline)");
  cmd_eval->add_option("--latency-steps", eval.latency_steps,
                       "steps for the latency measurement");
  add_detector_flags(cmd_eval, eval.detector);

  // rerun
  std::string rerun_manifest, rerun_out;
  auto* cmd_rerun =
      app.add_subcommand("rerun", "re-execute a command from its manifest");
  cmd_rerun->add_option("--manifest", rerun_manifest, "manifest.json path")
      ->required();
  cmd_rerun->add_option("--out", rerun_out, "override output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_gen->parsed()) {
      if (!gen_config.empty())
        gen.synth = specmon::synth_config_from_json(load_json_file(gen_config));
      if (cmd_gen->count("--seed") > 0) gen.synth.seed = gen_seed;
      run_gen(gen);
    } else if (cmd_train->parsed()) {
      if (!train_config.empty()) {
        // config file provides the base; explicit flags win over it
        const specmon::TrainConfig file =
            specmon::train_config_from_json(load_json_file(train_config));
        auto unset = [&](const char* flag) {
          return cmd_train->count(flag) == 0;
        };
        if (unset("--epochs")) train.train.predictor_epochs = file.predictor_epochs;
        if (unset("--classifier-epochs"))
          train.train.classifier_epochs = file.classifier_epochs;
        if (unset("--lr")) train.train.learning_rate = file.learning_rate;
        if (unset("--seed")) train.train.seed = file.seed;
        if (unset("--batch")) train.train.batch_size = file.batch_size;
        if (unset("--span")) train.train.truncation_span = file.truncation_span;
        if (unset("--init-scale")) train.train.init_scale = file.init_scale;
        if (train_loss.empty()) train.train.loss = file.loss;
        train.train.squash = file.squash;
      }
      if (!train_loss.empty()) {
        if (train_loss == "abs") train.train.loss = specmon::LossKind::Abs;
        else if (train_loss == "mse") train.train.loss = specmon::LossKind::Mse;
        else throw specmon::ConfigError("--loss must be abs or mse");
      }
      run_train(train);
    } else if (cmd_baseline->parsed()) {
      run_baseline(baseline);
    } else if (cmd_inject->parsed()) {
      inject.specs =
          specmon::interference_list_from_json(load_json_file(inject_spec));
      run_inject(inject);
    } else if (cmd_detect->parsed()) {
      if (!detect_inject.empty())
        detect.inject =
            specmon::interference_list_from_json(load_json_file(detect_inject));
      run_detect(detect);
    } else if (cmd_eval->parsed()) {
      run_eval(eval);
    } else if (cmd_rerun->parsed()) {
      run_rerun(rerun_manifest, rerun_out);
    }
  } catch (const specmon::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.category()) {
      case specmon::ErrorCategory::Validation: return 2;
      case specmon::ErrorCategory::Numerical: return 3;
      case specmon::ErrorCategory::Io: return 4;
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
