#include "promptgate/calibration.hpp"

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

// Thresholds are handled in hundredths so grid points are exact decimals.
ThresholdEvaluation evaluate(std::span<const ScoredLabel> scored, int hundredths) {
  const double threshold = hundredths / 100.0;
  return {threshold, metrics(confusion_at(scored, threshold)).f1};
}

}  // namespace

nlohmann::json CalibrationReport::to_json() const {
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& e : evaluations) evals.push_back({{"threshold", e.threshold}, {"f1", e.f1}});
  return {{"best_threshold", best_threshold},
          {"best_f1", best_f1},
          {"coarse_threshold", coarse_threshold},
          {"evaluation_count", evaluation_count()},
          {"evaluations", evals}};
}

ConfusionMatrix confusion_at(std::span<const ScoredLabel> scored, double threshold) {
  ConfusionMatrix cm;
  for (const auto& s : scored) {
    const bool flagged = decide(s.score, threshold) == Label::malicious;
    if (s.label == Label::malicious) {
      ++(flagged ? cm.tp : cm.fn);
    } else {
      ++(flagged ? cm.fp : cm.tn);
    }
  }
  return cm;
}

CalibrationReport calibrate_threshold(std::span<const ScoredLabel> scored) {
  if (scored.empty()) throw InvalidArgument("calibration set is empty");
  bool any_positive = false;
  for (const auto& s : scored) any_positive = any_positive || s.label == Label::malicious;
  if (!any_positive) throw InvalidArgument("calibration set has no malicious prompts; F1 is undefined");

  CalibrationReport report;
  int best = 0;
  double best_f1 = -1.0;
  auto consider = [&](int hundredths) {
    const auto e = evaluate(scored, hundredths);
    report.evaluations.push_back(e);
    if (e.f1 > best_f1 || (e.f1 == best_f1 && hundredths < best)) {
      best_f1 = e.f1;
      best = hundredths;
    }
  };

  for (int t = 10; t <= 90; t += 10) consider(t);
  const int coarse = best;
  for (int t = coarse - 5; t <= coarse + 5; ++t) consider(t);

  report.coarse_threshold = coarse / 100.0;
  report.best_threshold = best / 100.0;
  report.best_f1 = best_f1;
  return report;
}

std::uint64_t request_seed_for(std::uint64_t base_seed, std::string_view prompt_id) {
  return derive_seed(base_seed, stable_hash(prompt_id));
}

RecalibrationResult recalibrate(const EnsembleState& state, std::span<const LabeledPrompt> global_calibration,
                                const ForestConfig& forest_config, const RecalibrationOptions& options) {
  bool malicious = false;
  bool benign = false;
  for (const auto& p : global_calibration) {
    (p.label == Label::malicious ? malicious : benign) = true;
  }
  if (!malicious || !benign) throw InvalidArgument("global calibration set needs both labels");

  std::vector<TrainingSample> samples;
  samples.reserve(global_calibration.size());
  for (const auto& p : global_calibration) {
    samples.push_back({state.feature_set.project(extract_features(p.prompt)), p.dataset_tag});
  }
  auto router = std::make_shared<const Forest>(
      train_forest(samples, forest_config, state.feature_set.names(), options.training_threads));

  RecalibrationResult result{state, {}, router->accuracy(samples)};
  result.state.router = router;
  result.state.validate();

  std::vector<BatchRequest> requests;
  requests.reserve(global_calibration.size());
  for (const auto& p : global_calibration) {
    const Strategy strategy =
        options.strategy.kind == StrategyKind::ideal ? Strategy::ideal(p.dataset_tag) : options.strategy;
    requests.push_back({p.prompt, strategy, request_seed_for(options.base_seed, p.id)});
  }
  const auto verdicts = classify_batch(result.state, requests, options.classify);

  std::vector<ScoredLabel> scored;
  scored.reserve(verdicts.size());
  for (std::size_t i = 0; i < verdicts.size(); ++i) scored.push_back({verdicts[i].score, global_calibration[i].label});
  result.report = calibrate_threshold(scored);
  result.state.threshold = result.report.best_threshold;
  result.state.validate();
  return result;
}

}  // namespace promptgate
