#include "promptgate/ensemble.hpp"

#include <algorithm>
#include <functional>
#include <future>
#include <numeric>
#include <unordered_set>

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

constexpr std::size_t kBatchChunk = 256;

// Runs `jobs` with at most `limit` of the remote ones in flight; local jobs
// run inline on the calling thread.
void run_bounded(std::vector<std::pair<bool, std::function<void()>>>& jobs, std::size_t limit) {
  std::vector<std::future<void>> inflight;
  limit = std::max<std::size_t>(limit, 1);
  for (auto& [remote, job] : jobs) {
    if (!remote || limit == 1) {
      job();
      continue;
    }
    if (inflight.size() >= limit) {
      for (auto& f : inflight) f.get();
      inflight.clear();
    }
    inflight.push_back(std::async(std::launch::async, job));
  }
  for (auto& f : inflight) f.get();
}

}  // namespace

std::string_view Strategy::name() const {
  switch (kind) {
    case StrategyKind::router: return "router";
    case StrategyKind::random: return "random";
    case StrategyKind::ideal: return "ideal";
  }
  return "router";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "router") return Strategy::router();
  if (text == "random") return Strategy::random();
  if (text.starts_with("ideal:") && text.size() > 6) return Strategy::ideal(std::string(text.substr(6)));
  throw InvalidArgument("unknown strategy '" + std::string(text) + "' (router, random, ideal:<tag>)");
}

std::optional<std::size_t> EnsembleState::member_for_tag(std::string_view tag) const {
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].dataset_tag == tag) return i;
  }
  return std::nullopt;
}

void EnsembleState::validate() const {
  if (members.empty()) throw InvalidArgument("ensemble has no members");
  std::unordered_set<std::string> ids;
  for (const auto& m : members) {
    if (m.id.empty()) throw InvalidArgument("member id must not be empty");
    if (!ids.insert(m.id).second) throw InvalidArgument("duplicate member id '" + m.id + "'");
    if (!m.backend) throw InvalidArgument("member '" + m.id + "' has no backend");
  }
  if (selection_size < 1 || selection_size > members.size()) {
    throw InvalidArgument("selection size n=" + std::to_string(selection_size) + " outside [1, k=" +
                          std::to_string(members.size()) + "]");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
  if (router) {
    if (router->feature_names() != feature_set.names()) {
      throw InvalidArgument("router features do not match the active feature set");
    }
    for (const auto& cls : router->class_labels()) {
      if (!member_for_tag(cls)) throw InvalidArgument("router class '" + cls + "' has no member");
    }
  }
}

Selection select_subset(const EnsembleState& state, const FeatureVector& features, const Strategy& strategy,
                        std::uint64_t request_seed, std::optional<std::size_t> n) {
  const std::size_t k = state.members.size();
  const std::size_t size = n.value_or(state.selection_size);
  if (k == 0) throw InvalidArgument("ensemble has no members");
  if (size < 1 || size > k) {
    throw InvalidArgument("selection size n=" + std::to_string(size) + " outside [1, k=" + std::to_string(k) + "]");
  }

  Selection out;
  if (state.router) out.router_class = state.router->predict(state.feature_set.project(features)).label;

  std::optional<std::size_t> anchor;
  switch (strategy.kind) {
    case StrategyKind::router:
      if (!out.router_class) throw InvalidArgument("router strategy requires a trained router");
      anchor = state.member_for_tag(*out.router_class);
      if (!anchor) throw InvalidArgument("router class '" + *out.router_class + "' has no member");
      break;
    case StrategyKind::ideal:
      anchor = state.member_for_tag(strategy.tag);
      if (!anchor) throw InvalidArgument("no member serves dataset '" + strategy.tag + "'");
      break;
    case StrategyKind::random:
      break;
  }

  std::vector<std::size_t> pool;
  pool.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!anchor || i != *anchor) pool.push_back(i);
  }
  const std::size_t draws = anchor ? size - 1 : size;
  Rng rng(derive_seed(state.seed, request_seed));
  for (std::size_t i = 0; i < draws; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  }
  out.members.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(draws));
  if (anchor) out.members.push_back(*anchor);
  std::sort(out.members.begin(), out.members.end());
  return out;
}

double aggregate(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("aggregate needs at least one score");
  double sum = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument("scores must lie in [0, 1]");
    sum += s;
  }
  return std::clamp(sum / static_cast<double>(scores.size()), 0.0, 1.0);
}

nlohmann::json Verdict::to_json() const {
  nlohmann::json scores = nlohmann::json::object();
  for (const auto& [id, s] : member_scores) scores[id] = s;
  return {{"verdict", to_string(label)},
          {"score", score},
          {"threshold", threshold},
          {"selected", selected_ids},
          {"router_class", router_class ? nlohmann::json(*router_class) : nlohmann::json(nullptr)},
          {"member_scores", scores}};
}

Verdict classify(const EnsembleState& state, std::string_view prompt, const Strategy& strategy,
                 std::uint64_t request_seed, const ClassifyOptions& options) {
  const BatchRequest request{prompt, strategy, request_seed};
  return std::move(classify_batch(state, std::span(&request, 1), options).front());
}

std::vector<Verdict> classify_batch(const EnsembleState& state, std::span<const BatchRequest> requests,
                                    const ClassifyOptions& options) {
  std::vector<Selection> selections;
  selections.reserve(requests.size());
  for (const auto& r : requests) {
    selections.push_back(select_subset(state, extract_features(r.prompt), r.strategy, r.request_seed, options.n));
  }

  // Requests routed to each member, in request order.
  const std::size_t k = state.members.size();
  std::vector<std::vector<std::size_t>> routed(k);
  for (std::size_t r = 0; r < requests.size(); ++r) {
    for (std::size_t m : selections[r].members) routed[m].push_back(r);
  }

  std::vector<std::vector<double>> member_scores(k);
  std::vector<std::pair<bool, std::function<void()>>> jobs;
  for (std::size_t m = 0; m < k; ++m) {
    if (routed[m].empty()) continue;
    jobs.emplace_back(state.members[m].backend->is_remote(), [&, m] {
      const auto& member = state.members[m];
      auto& out = member_scores[m];
      out.reserve(routed[m].size());
      for (std::size_t begin = 0; begin < routed[m].size(); begin += kBatchChunk) {
        const std::size_t end = std::min(begin + kBatchChunk, routed[m].size());
        std::vector<std::string> prompts;
        for (std::size_t i = begin; i < end; ++i) prompts.emplace_back(requests[routed[m][i]].prompt);
        std::vector<double> scores;
        try {
          scores = member.backend->score(prompts);
        } catch (const BackendError&) {
          throw;
        } catch (const std::exception& e) {
          throw BackendError(member.id, e.what());
        }
        if (scores.size() != prompts.size()) throw BackendError(member.id, "returned a misaligned score list");
        for (double s : scores) {
          if (!(s >= 0.0 && s <= 1.0)) throw BackendError(member.id, "returned a score outside [0, 1]");
        }
        out.insert(out.end(), scores.begin(), scores.end());
      }
    });
  }
  run_bounded(jobs, options.max_parallel);

  std::vector<std::size_t> cursor(k, 0);
  std::vector<Verdict> verdicts(requests.size());
  for (std::size_t r = 0; r < requests.size(); ++r) {
    Verdict& v = verdicts[r];
    std::vector<double> scores;
    for (std::size_t m : selections[r].members) {
      const double s = member_scores[m][cursor[m]++];
      scores.push_back(s);
      v.selected_ids.push_back(state.members[m].id);
      v.member_scores.emplace_back(state.members[m].id, s);
    }
    v.score = aggregate(scores);
    v.threshold = state.threshold;
    v.label = decide(v.score, state.threshold);
    v.router_class = selections[r].router_class;
  }
  return verdicts;
}

EnsembleState add_promptcop(const EnsembleState& state, PromptCop cop) {
  for (const auto& m : state.members) {
    if (m.id == cop.id) throw DuplicateError("member id '" + cop.id + "' already exists");
  }
  if (cop.id.empty()) throw InvalidArgument("member id must not be empty");
  if (!cop.backend) throw InvalidArgument("member '" + cop.id + "' has no backend");
  EnsembleState next = state;
  next.members.push_back(std::move(cop));
  return next;
}

}  // namespace promptgate
