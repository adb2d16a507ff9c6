#include "promptgate/scorer.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

std::string encode_score_request(std::span<const std::string> prompts) {
  nlohmann::json doc = {{"prompts", nlohmann::json::array()}};
  for (const auto& p : prompts) doc["prompts"].push_back(p);
  return doc.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::vector<std::string> decode_score_request(std::string_view body) {
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("prompts") || !doc["prompts"].is_array()) {
    throw ParseError("score request must be an object with a 'prompts' array");
  }
  std::vector<std::string> out;
  for (const auto& p : doc["prompts"]) {
    if (!p.is_string()) throw ParseError("score request prompts must be strings");
    out.push_back(p.get<std::string>());
  }
  return out;
}

std::string encode_score_response(std::span<const double> probabilities) {
  nlohmann::json doc = {{"probabilities", nlohmann::json::array()}};
  for (double p : probabilities) doc["probabilities"].push_back(p);
  return doc.dump();
}

std::vector<double> decode_score_response(std::string_view body, std::size_t expected) {
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("probabilities") ||
      !doc["probabilities"].is_array()) {
    throw ParseError("score response must be an object with a 'probabilities' array");
  }
  const auto& values = doc["probabilities"];
  if (values.size() != expected) {
    throw ParseError("score response has " + std::to_string(values.size()) + " probabilities, expected " +
                     std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : values) {
    if (!v.is_number()) throw ParseError("score response probabilities must be numbers");
    const double p = v.get<double>();
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) throw ParseError("score response probability outside [0, 1]");
    out.push_back(p);
  }
  return out;
}

nlohmann::json StubProfile::to_json() const {
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [tag, s] : scores) levels[tag] = {{"malicious", s.malicious}, {"benign", s.benign}};
  return {{"kind", "stub"},
          {"scores", levels},
          {"noise_sigma", noise_sigma},
          {"seed", seed},
          {"default", default_score}};
}

StubProfile StubProfile::from_json(const nlohmann::json& doc) {
  try {
    StubProfile p;
    for (const auto& [tag, s] : doc.at("scores").items()) {
      p.scores[tag] = {s.at("malicious").get<double>(), s.at("benign").get<double>()};
    }
    p.noise_sigma = doc.value("noise_sigma", 0.0);
    p.seed = doc.value("seed", std::uint64_t{0});
    p.default_score = doc.value("default", 0.5);
    if (p.noise_sigma < 0.0) throw InvalidArgument("stub noise_sigma must be non-negative");
    if (p.default_score < 0.0 || p.default_score > 1.0) throw InvalidArgument("stub default must lie in [0, 1]");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("invalid stub profile: ") + e.what());
  }
}

StubProfile planted_specialist(const std::string& own_tag, ClassScores own, ClassScores cross, double noise_sigma,
                               std::uint64_t seed) {
  StubProfile p;
  p.scores[own_tag] = own;
  p.scores["*"] = cross;
  p.noise_sigma = noise_sigma;
  p.seed = seed;
  return p;
}

StubScorer::StubScorer(StubProfile profile, std::shared_ptr<const CorpusIndex> corpus)
    : profile_(std::move(profile)), corpus_(std::move(corpus)) {
  if (!corpus_) corpus_ = std::make_shared<CorpusIndex>();
}

double StubScorer::score_record(const LabeledPrompt& prompt) const {
  auto it = profile_.scores.find(prompt.dataset_tag);
  if (it == profile_.scores.end()) it = profile_.scores.find("*");
  if (it == profile_.scores.end()) return profile_.default_score;
  const double level = prompt.label == Label::malicious ? it->second.malicious : it->second.benign;
  double noise = 0.0;
  if (profile_.noise_sigma > 0.0) {
    Rng rng(derive_seed(profile_.seed, stable_hash(prompt.id)));
    noise = profile_.noise_sigma * standard_normal(rng);
  }
  return std::clamp(level + noise, 0.0, 1.0);
}

std::vector<double> StubScorer::score(std::span<const std::string> prompts) const {
  std::vector<double> out;
  out.reserve(prompts.size());
  for (const auto& text : prompts) {
    const LabeledPrompt* record = corpus_->find(text);
    out.push_back(record ? score_record(*record) : profile_.default_score);
  }
  return out;
}

HttpScorer::HttpScorer(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (base_url_.empty()) throw InvalidArgument("http backend needs a url");
}

std::vector<double> HttpScorer::score(std::span<const std::string> prompts) const {
  httplib::Client client(base_url_);
  if (!client.is_valid()) throw Error("invalid backend url '" + base_url_ + "'");
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const auto result = client.Post("/score", encode_score_request(prompts), "application/json");
  if (!result) throw Error("request to " + base_url_ + "/score failed: " + httplib::to_string(result.error()));
  if (result->status != 200) throw Error("backend replied HTTP " + std::to_string(result->status));
  try {
    return decode_score_response(result->body, prompts.size());
  } catch (const ParseError& e) {
    throw Error(std::string("malformed backend reply: ") + e.what());
  }
}

std::shared_ptr<const ScorerBackend> make_backend(const nlohmann::json& descriptor, const BackendContext& context) {
  if (!descriptor.is_object() || !descriptor.contains("kind") || !descriptor["kind"].is_string()) {
    throw InvalidArgument("backend descriptor needs a string 'kind'");
  }
  const auto kind = descriptor["kind"].get<std::string>();
  if (kind == "stub") return std::make_shared<StubScorer>(StubProfile::from_json(descriptor), context.corpus);
  if (kind == "http") {
    if (!descriptor.contains("url") || !descriptor["url"].is_string()) {
      throw InvalidArgument("http backend descriptor needs a string 'url'");
    }
    auto timeout = context.timeout;
    if (descriptor.contains("timeout_ms")) timeout = std::chrono::milliseconds(descriptor["timeout_ms"].get<long>());
    if (timeout.count() <= 0) throw InvalidArgument("backend timeout must be positive");
    return std::make_shared<HttpScorer>(descriptor["url"].get<std::string>(), timeout);
  }
  throw InvalidArgument("unknown backend kind '" + kind + "'");
}

}  // namespace promptgate
