#pragma once

// Scorer backends: the per-member probability source behind each ensemble
// member. Remote backends speak the /score wire contract; stub backends
// replay planted per-dataset score levels for offline experiments.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptgate/corpus.hpp"

namespace promptgate {

class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;

  // Malicious-class probabilities aligned with `prompts`. Throws Error on
  // any failure; callers attach the member identity.
  virtual std::vector<double> score(std::span<const std::string> prompts) const = 0;

  // Remote backends are worth fanning out concurrently.
  virtual bool is_remote() const noexcept { return false; }
};

// --- wire contract -------------------------------------------------------
// POST /score  {"prompts": [string, ...]}  ->  {"probabilities": [real, ...]}

std::string encode_score_request(std::span<const std::string> prompts);
// Throws ParseError on a malformed body.
std::vector<std::string> decode_score_request(std::string_view body);
std::string encode_score_response(std::span<const double> probabilities);
// Throws ParseError unless the body holds exactly `expected` finite values
// in [0, 1].
std::vector<double> decode_score_response(std::string_view body, std::size_t expected);

// --- stub backend ----------------------------------------------------------

struct ClassScores {
  double malicious = 0.5;
  double benign = 0.5;
  bool operator==(const ClassScores&) const = default;
};

struct StubProfile {
  // Keyed by the dataset tag of the prompt being scored; "*" matches any
  // dataset not listed explicitly.
  std::map<std::string, ClassScores> scores;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Returned for prompts not found in the corpus index.
  double default_score = 0.5;

  nlohmann::json to_json() const;
  static StubProfile from_json(const nlohmann::json& doc);
  bool operator==(const StubProfile&) const = default;
};

// A specialist for `own_tag`: `own` levels on its dataset, `cross` levels on
// every other dataset.
StubProfile planted_specialist(const std::string& own_tag, ClassScores own, ClassScores cross,
                               double noise_sigma, std::uint64_t seed);

// clamp(level(dataset, label) + N(0, sigma) seeded by (seed, prompt id), 0, 1)
class StubScorer final : public ScorerBackend {
 public:
  StubScorer(StubProfile profile, std::shared_ptr<const CorpusIndex> corpus);

  std::vector<double> score(std::span<const std::string> prompts) const override;
  double score_record(const LabeledPrompt& prompt) const;
  const StubProfile& profile() const noexcept { return profile_; }

 private:
  StubProfile profile_;
  std::shared_ptr<const CorpusIndex> corpus_;
};

// --- remote backend --------------------------------------------------------

class HttpScorer final : public ScorerBackend {
 public:
  // `base_url` like "http://127.0.0.1:9000"; requests go to base_url + "/score".
  HttpScorer(std::string base_url, std::chrono::milliseconds timeout);

  std::vector<double> score(std::span<const std::string> prompts) const override;
  bool is_remote() const noexcept override { return true; }

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

struct BackendContext {
  std::shared_ptr<const CorpusIndex> corpus = std::make_shared<CorpusIndex>();
  std::chrono::milliseconds timeout{2000};
};

// Builds a backend from its descriptor:
//   {"kind": "stub", "scores": {...}, "noise_sigma": s, "seed": n}
//   {"kind": "http", "url": "http://host:port", "timeout_ms"?: n}
// Throws InvalidArgument for unknown kinds or bad fields.
std::shared_ptr<const ScorerBackend> make_backend(const nlohmann::json& descriptor, const BackendContext& context);

}  // namespace promptgate
