#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptgate/corpus.hpp"
#include "promptgate/features.hpp"
#include "promptgate/forest.hpp"
#include "promptgate/scorer.hpp"

namespace promptgate {

// Dataset tag of the untuned baseline member.
inline constexpr std::string_view kBaseTag = "base";

// One ensemble member: a scorer specialised on a single dataset.
struct PromptCop {
  std::string id;
  std::string dataset_tag;
  nlohmann::json backend_descriptor;
  std::shared_ptr<const ScorerBackend> backend;
};

enum class StrategyKind { router, random, ideal };

struct Strategy {
  StrategyKind kind = StrategyKind::router;
  std::string tag;  // anchor dataset for ideal

  static Strategy router() { return {StrategyKind::router, {}}; }
  static Strategy random() { return {StrategyKind::random, {}}; }
  static Strategy ideal(std::string tag) { return {StrategyKind::ideal, std::move(tag)}; }

  // "router", "random" or "ideal".
  std::string_view name() const;
  bool operator==(const Strategy&) const = default;
};

// Parses "router", "random" or "ideal:<tag>".
Strategy parse_strategy(std::string_view text);

// Immutable snapshot of the ensemble; updates build a new value.
struct EnsembleState {
  std::vector<PromptCop> members;
  std::size_t selection_size = 1;
  double threshold = 0.5;
  std::shared_ptr<const Forest> router;
  FeatureSet feature_set;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return members.size(); }
  // Index of the first member serving `tag`.
  std::optional<std::size_t> member_for_tag(std::string_view tag) const;
  // Throws InvalidArgument when an invariant is broken: empty or duplicate
  // ids, n outside [1, k], threshold outside (0, 1), router classes or
  // features not matching the members and feature set.
  void validate() const;
};

struct Selection {
  std::vector<std::size_t> members;        // ensemble indices, ascending
  std::optional<std::string> router_class;  // set whenever a router is installed
};

// Picks the members that score one prompt. The anchor (router prediction or
// the ideal tag) is always included; the rest are drawn uniformly without
// replacement, seeded by (state.seed, request_seed). `n` overrides the
// state's selection size. Throws InvalidArgument when n > k, the ideal tag
// is unknown, or the router strategy is used without a router.
Selection select_subset(const EnsembleState& state, const FeatureVector& features, const Strategy& strategy,
                        std::uint64_t request_seed, std::optional<std::size_t> n = {});

// Arithmetic mean; throws InvalidArgument for an empty list or values
// outside [0, 1].
double aggregate(std::span<const double> scores);

struct Verdict {
  Label label = Label::benign;
  double score = 0.0;
  double threshold = 0.5;
  std::vector<std::string> selected_ids;
  std::optional<std::string> router_class;
  std::vector<std::pair<std::string, double>> member_scores;  // ensemble order

  nlohmann::json to_json() const;
};

// Strict decision rule: malicious iff score > threshold.
inline Label decide(double score, double threshold) { return score > threshold ? Label::malicious : Label::benign; }

struct ClassifyOptions {
  std::optional<std::size_t> n;
  // Upper bound on concurrent remote backend calls for one request.
  std::size_t max_parallel = 8;
};

// Features, selection, scoring, mean aggregation and thresholding for one
// prompt. Any backend failure throws BackendError naming the member.
Verdict classify(const EnsembleState& state, std::string_view prompt, const Strategy& strategy,
                 std::uint64_t request_seed, const ClassifyOptions& options = {});

struct BatchRequest {
  std::string_view prompt;
  Strategy strategy;
  std::uint64_t request_seed = 0;
};

// Same verdicts as calling classify per request, but each backend sees one
// call per chunk of prompts routed to it.
std::vector<Verdict> classify_batch(const EnsembleState& state, std::span<const BatchRequest> requests,
                                    const ClassifyOptions& options = {});

// New state with `cop` appended; router and threshold unchanged. Throws
// DuplicateError if the id is taken.
EnsembleState add_promptcop(const EnsembleState& state, PromptCop cop);

}  // namespace promptgate
