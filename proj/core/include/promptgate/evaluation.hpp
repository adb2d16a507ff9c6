#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptgate/calibration.hpp"
#include "promptgate/corpus.hpp"
#include "promptgate/ensemble.hpp"
#include "promptgate/error.hpp"
#include "promptgate/forest.hpp"
#include "promptgate/metrics.hpp"

namespace promptgate {

inline constexpr std::string_view kReportHeader = "k,n,strategy,asr,fpr,f1,threshold,router_accuracy";

// One point of a performance curve.
struct SweepRecord {
  std::size_t k = 0;
  std::size_t n = 0;
  std::string strategy;
  double asr = 0.0;
  double fpr = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;
  std::optional<double> router_accuracy;
  // Not part of the CSV; kept for the summary document.
  ConfusionMatrix confusion;

  // Compares the CSV columns only.
  bool same_columns(const SweepRecord& other) const;
};

// Evaluation strategies. `ideal` anchors each prompt on its own dataset;
// `baseline` scores with the member tagged "base" alone (n = 1).
enum class SweepStrategy { router, random, ideal, baseline };

std::string_view to_string(SweepStrategy strategy);
SweepStrategy parse_sweep_strategy(std::string_view text);

struct Evaluation {
  ConfusionMatrix confusion;
  SweepRecord record;
};

// A backend failed part-way; `completed` prompts were tallied into `partial`.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::size_t completed, ConfusionMatrix partial)
      : Error(what), completed_(completed), partial_(partial) {}
  std::size_t completed() const noexcept { return completed_; }
  const ConfusionMatrix& partial() const noexcept { return partial_; }

 private:
  std::size_t completed_;
  ConfusionMatrix partial_;
};

// Classifies every prompt with a request seed derived from (base_seed, id)
// and tallies against the labels. Throws InvalidArgument when n > k.
Evaluation evaluate_on(const EnsembleState& state, std::span<const LabeledPrompt> prompts, SweepStrategy strategy,
                       std::size_t n, std::uint64_t base_seed, const ClassifyOptions& options = {});

// Scores `calibration` under (strategy, n) and returns the calibrated
// threshold report; the router is left as is.
CalibrationReport calibrate_for(const EnsembleState& state, std::span<const LabeledPrompt> calibration,
                                SweepStrategy strategy, std::size_t n, std::uint64_t base_seed,
                                const ClassifyOptions& options = {});

struct SelectionSweepOptions {
  // When set, the threshold is recalibrated on this set for every
  // (strategy, n) point; otherwise the state's threshold is used throughout.
  std::span<const LabeledPrompt> calibration;
  ClassifyOptions classify;
};

// One record per (strategy, n); baseline yields a single n = 1 record.
std::vector<SweepRecord> run_selection_sweep(const EnsembleState& state, std::span<const LabeledPrompt> test_set,
                                             std::span<const SweepStrategy> strategies,
                                             std::span<const std::size_t> n_values, std::uint64_t base_seed,
                                             const SelectionSweepOptions& options = {});

// A dataset arriving together with the member specialised on it.
struct DatasetArrival {
  std::string tag;
  std::vector<LabeledPrompt> prompts;
  nlohmann::json backend;
  std::string member_id;  // defaults to "cop-<tag>"
};

struct AdaptabilityConfig {
  std::size_t initial_k = 3;
  // Selection size used while recalibrating at step k is min(this, k).
  std::size_t calibration_n = 5;
  // Selection sizes evaluated at step k; default 1..k.
  std::function<std::vector<std::size_t>(std::size_t)> n_values;
  std::vector<SweepStrategy> strategies = {SweepStrategy::router};
  FeatureSet features;
  ForestConfig forest;
  std::uint64_t partition_seed = 0;
  std::uint64_t ensemble_seed = 0;
  std::uint64_t eval_seed = 0;
  ClassifyOptions classify;
  std::size_t training_threads = 1;
};

struct AdaptabilityStep {
  std::size_t k = 0;
  std::size_t calibration_size = 0;
  std::size_t test_size = 0;
  double router_training_accuracy = 0.0;
  CalibrationReport calibration;
};

struct AdaptabilityResult {
  std::vector<SweepRecord> records;
  std::vector<AdaptabilityStep> steps;
};

// Adds datasets one at a time; from the initial_k-th onward, retrains the
// router, recalibrates the threshold on the cumulative calibration set and
// evaluates on the cumulative test set. Stub backends see every arriving
// prompt through one shared corpus index.
AdaptabilityResult run_adaptability_sweep(std::span<const DatasetArrival> datasets, const AdaptabilityConfig& config,
                                          const BackendContext& context = {});

// Sorted by (k, strategy, n).
std::vector<SweepRecord> sorted_records(std::span<const SweepRecord> records);
std::string format_report_csv(std::span<const SweepRecord> records);
std::vector<SweepRecord> parse_report_csv(std::string_view text);
nlohmann::json report_summary(std::span<const SweepRecord> records);

// Writes the CSV to `path` and the summary document next to it
// (extension replaced by ".summary.json"). Returns the summary path.
std::string emit_report(std::span<const SweepRecord> records, const std::string& path);

}  // namespace promptgate
