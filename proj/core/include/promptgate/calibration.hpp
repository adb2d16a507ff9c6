#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptgate/corpus.hpp"
#include "promptgate/ensemble.hpp"
#include "promptgate/forest.hpp"
#include "promptgate/metrics.hpp"

namespace promptgate {

struct ScoredLabel {
  double score = 0.0;
  Label label = Label::benign;
};

struct ThresholdEvaluation {
  double threshold = 0.0;
  double f1 = 0.0;
};

struct CalibrationReport {
  double best_threshold = 0.5;
  double best_f1 = 0.0;
  double coarse_threshold = 0.5;
  std::vector<ThresholdEvaluation> evaluations;  // in evaluation order

  std::size_t evaluation_count() const noexcept { return evaluations.size(); }
  nlohmann::json to_json() const;
};

// Confusion matrix of the strict rule score > threshold.
ConfusionMatrix confusion_at(std::span<const ScoredLabel> scored, double threshold);

// Coarse-to-fine F1 search: 0.1..0.9 step 0.1, then the coarse optimum
// +-0.05 step 0.01; 20 evaluations. Ties go to the lowest threshold in both
// stages. Throws InvalidArgument for an empty set or one without malicious
// labels.
CalibrationReport calibrate_threshold(std::span<const ScoredLabel> scored);

struct RecalibrationOptions {
  Strategy strategy = Strategy::router();
  // Request seeds are derived from (base_seed, prompt id).
  std::uint64_t base_seed = 0;
  std::size_t training_threads = 1;
  ClassifyOptions classify;
};

struct RecalibrationResult {
  EnsembleState state;
  CalibrationReport report;
  double router_training_accuracy = 0.0;
};

// Retrains the router on `global_calibration` (class = dataset tag, over the
// state's active feature set), scores every calibration prompt through the
// ensemble with the configured strategy and selection size, and installs the
// calibrated threshold. The input state is not modified.
RecalibrationResult recalibrate(const EnsembleState& state, std::span<const LabeledPrompt> global_calibration,
                                const ForestConfig& forest_config, const RecalibrationOptions& options = {});

// Request seed for one prompt under a base seed.
std::uint64_t request_seed_for(std::uint64_t base_seed, std::string_view prompt_id);

}  // namespace promptgate
