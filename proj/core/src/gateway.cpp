#include "promptgate/gateway.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::string_view to_string(FailurePolicy p) { return p == FailurePolicy::fail_open ? "fail-open" : "fail-closed"; }

std::string strategy_text(const Strategy& s) {
  return s.kind == StrategyKind::ideal ? "ideal:" + s.tag : std::string(s.name());
}

std::uint64_t fresh_seed() {
  thread_local Rng rng{std::random_device{}()};
  return rng();
}

std::vector<LabeledPrompt> load_corpus_keep_tags(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("corpus file '" + path + "' not found");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_corpus(text);
}

}  // namespace

GatewayConfig GatewayConfig::from_json(const nlohmann::json& doc, const std::string& base_dir) {
  GatewayConfig c;
  try {
    c.listen = doc.value("listen", c.listen);
    for (const auto& m : doc.at("members")) {
      c.members.push_back({m.at("id").get<std::string>(), m.at("dataset_tag").get<std::string>(), m.at("backend")});
    }
    c.selection_size = doc.value("selection_size", c.selection_size);
    if (doc.contains("strategy")) c.strategy = parse_strategy(doc["strategy"].get<std::string>());
    c.threshold = doc.value("threshold", c.threshold);
    if (doc.contains("feature_set")) {
      const auto& fs = doc["feature_set"];
      if (fs.is_string()) {
        if (fs.get<std::string>() != "full9") throw InvalidArgument("feature_set must be \"full9\" or a name list");
      } else {
        c.feature_set = FeatureSet(fs.get<std::vector<std::string>>());
      }
    }
    c.forest_path = resolve(base_dir, doc.value("forest_path", std::string()));
    c.seed = doc.value("seed", c.seed);
    c.backend_timeout = std::chrono::milliseconds(doc.value("backend_timeout_ms", 2000L));
    if (doc.contains("failure_policy")) {
      const auto p = doc["failure_policy"].get<std::string>();
      if (p == "fail-open") {
        c.failure_policy = FailurePolicy::fail_open;
      } else if (p == "fail-closed") {
        c.failure_policy = FailurePolicy::fail_closed;
      } else {
        throw InvalidArgument("failure_policy must be fail-open or fail-closed");
      }
    }
    c.max_concurrent_backend_calls = doc.value("max_concurrent_backend_calls", c.max_concurrent_backend_calls);
    if (doc.contains("forest")) {
      const auto& f = doc["forest"];
      c.forest.tree_count = f.value("tree_count", c.forest.tree_count);
      if (f.contains("max_depth")) {
        c.forest.max_depth = f["max_depth"].is_null() ? std::nullopt
                                                      : std::optional<std::size_t>(f["max_depth"].get<std::size_t>());
      }
      c.forest.min_samples_split = f.value("min_samples_split", c.forest.min_samples_split);
      if (f.contains("features_per_split") && !f["features_per_split"].is_null()) {
        c.forest.features_per_split = f["features_per_split"].get<std::size_t>();
      }
      c.forest.bootstrap_fraction = f.value("bootstrap_fraction", c.forest.bootstrap_fraction);
      c.forest.seed = f.value("seed", c.seed);
    } else {
      c.forest.seed = c.seed;
    }
    for (const auto& p : doc.value("corpus_files", std::vector<std::string>{})) c.corpus_files.push_back(resolve(base_dir, p));
    c.calibration_path = resolve(base_dir, doc.value("calibration_path", std::string()));
    c.test_path = resolve(base_dir, doc.value("test_path", std::string()));
    c.partition_seed = doc.value("partition_seed", c.seed);
    c.audit_log = doc.value("audit_log", false);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("gateway config: ") + e.what());
  } catch (const NotFound& e) {
    throw InvalidArgument(std::string("gateway config: ") + e.what());
  }
  c.validate();
  return c;
}

GatewayConfig GatewayConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("config file '" + path + "' not found");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path().string();
  return from_json(doc, dir.empty() ? "." : dir);
}

nlohmann::json GatewayConfig::to_json() const {
  nlohmann::json members_json = nlohmann::json::array();
  for (const auto& m : members) members_json.push_back({{"id", m.id}, {"dataset_tag", m.dataset_tag}, {"backend", m.backend}});
  return {{"listen", listen},
          {"members", members_json},
          {"selection_size", selection_size},
          {"strategy", strategy_text(strategy)},
          {"threshold", threshold},
          {"feature_set", feature_set.is_full() ? nlohmann::json("full9") : nlohmann::json(feature_set.names())},
          {"forest_path", forest_path},
          {"seed", seed},
          {"backend_timeout_ms", backend_timeout.count()},
          {"failure_policy", to_string(failure_policy)},
          {"max_concurrent_backend_calls", max_concurrent_backend_calls},
          {"forest",
           {{"tree_count", forest.tree_count},
            {"max_depth", forest.max_depth ? nlohmann::json(*forest.max_depth) : nlohmann::json()},
            {"min_samples_split", forest.min_samples_split},
            {"features_per_split",
             forest.features_per_split ? nlohmann::json(*forest.features_per_split) : nlohmann::json()},
            {"bootstrap_fraction", forest.bootstrap_fraction},
            {"seed", forest.seed}}},
          {"corpus_files", corpus_files},
          {"calibration_path", calibration_path},
          {"test_path", test_path},
          {"partition_seed", partition_seed},
          {"audit_log", audit_log}};
}

void GatewayConfig::validate() const {
  if (members.empty()) throw InvalidArgument("gateway config has no members");
  if (selection_size < 1) throw InvalidArgument("selection_size must be >= 1");
  if (selection_size > members.size()) throw InvalidArgument("selection_size exceeds the number of members");
  if (backend_timeout.count() <= 0) throw InvalidArgument("backend_timeout_ms must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
  if (max_concurrent_backend_calls < 1) throw InvalidArgument("max_concurrent_backend_calls must be >= 1");
}

nlohmann::json ClassifyResponse::to_json() const {
  nlohmann::json doc = verdict.to_json();
  doc["degraded"] = degraded;
  doc["state_version"] = state_version;
  doc["k"] = k;
  if (!error.empty()) doc["error"] = error;
  return doc;
}

nlohmann::json UpdateResponse::to_json() const {
  return {{"k", k},
          {"threshold", threshold},
          {"router_accuracy", router_accuracy},
          {"evaluations", report.evaluation_count()},
          {"state_version", state_version},
          {"calibration", report.to_json()}};
}

GatewayService::GatewayService(GatewayConfig config) : config_(std::move(config)) {
  config_.validate();
  auto snap = std::make_shared<GatewaySnapshot>();

  auto corpus = std::make_shared<CorpusIndex>();
  for (const auto& path : config_.corpus_files) corpus->add(load_corpus_keep_tags(path));
  if (!config_.calibration_path.empty()) snap->globals.calibration = load_corpus_keep_tags(config_.calibration_path);
  if (!config_.test_path.empty()) snap->globals.test = load_corpus_keep_tags(config_.test_path);
  for (const auto* set : {&snap->globals.calibration, &snap->globals.test}) {
    corpus->add(*set);
    for (const auto& p : *set) {
      auto& tags = snap->globals.dataset_tags;
      if (std::find(tags.begin(), tags.end(), p.dataset_tag) == tags.end()) tags.push_back(p.dataset_tag);
    }
  }
  snap->corpus = corpus;

  const auto ctx = backend_context(corpus);
  auto& state = snap->ensemble;
  for (const auto& m : config_.members) {
    state = add_promptcop(state, {m.id, m.dataset_tag, m.backend, make_backend(m.backend, ctx)});
  }
  state.selection_size = config_.selection_size;
  state.threshold = config_.threshold;
  state.feature_set = config_.feature_set;
  state.seed = config_.seed;

  if (!config_.forest_path.empty()) {
    state.router = std::make_shared<const Forest>(Forest::load(config_.forest_path));
  } else if (!snap->globals.calibration.empty()) {
    state = promptgate::recalibrate(state, snap->globals.calibration, config_.forest, recalibration_options()).state;
  }
  if (config_.strategy.kind == StrategyKind::router && !state.router) {
    throw InvalidArgument("router strategy needs forest_path or calibration_path");
  }
  state.validate();
  snapshot_ = std::move(snap);
}

std::shared_ptr<const GatewaySnapshot> GatewayService::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

void GatewayService::install(std::shared_ptr<const GatewaySnapshot> next) {
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(next);
}

BackendContext GatewayService::backend_context(std::shared_ptr<const CorpusIndex> corpus) const {
  return {std::move(corpus), config_.backend_timeout};
}

RecalibrationOptions GatewayService::recalibration_options() const {
  RecalibrationOptions o;
  o.strategy = config_.strategy;
  o.base_seed = config_.seed;
  o.classify.max_parallel = config_.max_concurrent_backend_calls;
  return o;
}

ClassifyResponse GatewayService::classify(const ClassifyRequest& request) const {
  const auto snap = snapshot();
  const Strategy strategy = request.strategy.value_or(config_.strategy);
  const std::uint64_t seed = request.request_seed.value_or(fresh_seed());
  ClassifyOptions options;
  options.n = request.n;
  options.max_parallel = config_.max_concurrent_backend_calls;

  ClassifyResponse out;
  out.state_version = snap->version;
  out.k = snap->ensemble.size();
  try {
    out.verdict = promptgate::classify(snap->ensemble, request.prompt, strategy, seed, options);
  } catch (const BackendError& e) {
    // Selection is cheap and deterministic, so the degraded reply can still
    // echo which members were asked.
    const auto selection = select_subset(snap->ensemble, extract_features(request.prompt), strategy, seed, request.n);
    out.degraded = true;
    out.error = e.what();
    const bool closed = config_.failure_policy == FailurePolicy::fail_closed;
    out.verdict.label = closed ? Label::malicious : Label::benign;
    out.verdict.score = closed ? 1.0 : 0.0;
    out.verdict.threshold = snap->ensemble.threshold;
    out.verdict.router_class = selection.router_class;
    for (std::size_t m : selection.members) out.verdict.selected_ids.push_back(snap->ensemble.members[m].id);
  }
  if (config_.audit_log) {
    nlohmann::json audit = out.to_json();
    audit["event"] = "classify";
    audit["request_seed"] = seed;
    std::clog << audit.dump() << '\n';
  }
  return out;
}

UpdateResponse GatewayService::handle_update(const UpdateRequest& request) {
  std::lock_guard admin(admin_mutex_);
  const auto current = snapshot();
  if (request.dataset_tag.empty()) throw InvalidArgument("update needs a dataset_tag");
  const auto& tags = current->globals.dataset_tags;
  if (std::find(tags.begin(), tags.end(), request.dataset_tag) != tags.end() ||
      current->ensemble.member_for_tag(request.dataset_tag)) {
    throw DuplicateError("dataset '" + request.dataset_tag + "' is already part of the ensemble");
  }

  const auto records = ingest_dataset(request.dataset_path, request.dataset_tag);
  if (records.empty()) throw InvalidArgument("dataset '" + request.dataset_path + "' is empty");
  const auto split = partition_dataset(records, derive_seed(config_.partition_seed, stable_hash(request.dataset_tag)));

  auto next = std::make_shared<GatewaySnapshot>();
  next->globals = update_global_sets(current->globals, split, request.dataset_tag);
  auto corpus = std::make_shared<CorpusIndex>(*current->corpus);
  corpus->add(records);
  next->corpus = corpus;

  // Rebuild every backend so stubs resolve the new prompts; remote
  // backends are unaffected.
  const auto ctx = backend_context(corpus);
  EnsembleState state = current->ensemble;
  for (auto& m : state.members) m.backend = make_backend(m.backend_descriptor, ctx);
  const std::string id = request.member_id.empty() ? "cop-" + request.dataset_tag : request.member_id;
  state = add_promptcop(state, {id, request.dataset_tag, request.backend, make_backend(request.backend, ctx)});

  auto result = promptgate::recalibrate(state, next->globals.calibration, config_.forest, recalibration_options());
  next->ensemble = std::move(result.state);
  next->version = current->version + 1;

  UpdateResponse out;
  out.k = next->ensemble.size();
  out.threshold = next->ensemble.threshold;
  out.router_accuracy = result.router_training_accuracy;
  out.report = std::move(result.report);
  out.state_version = next->version;
  install(std::move(next));
  return out;
}

UpdateResponse GatewayService::recalibrate() {
  std::lock_guard admin(admin_mutex_);
  const auto current = snapshot();
  if (current->globals.calibration.empty()) throw InvalidArgument("no calibration data to recalibrate on");
  auto result =
      promptgate::recalibrate(current->ensemble, current->globals.calibration, config_.forest, recalibration_options());
  auto next = std::make_shared<GatewaySnapshot>(*current);
  next->ensemble = std::move(result.state);
  next->version = current->version + 1;

  UpdateResponse out;
  out.k = next->ensemble.size();
  out.threshold = next->ensemble.threshold;
  out.router_accuracy = result.router_training_accuracy;
  out.report = std::move(result.report);
  out.state_version = next->version;
  install(std::move(next));
  return out;
}

nlohmann::json GatewayService::health() const {
  const auto snap = snapshot();
  return {{"status", "ok"},
          {"k", snap->ensemble.size()},
          {"n", snap->ensemble.selection_size},
          {"threshold", snap->ensemble.threshold},
          {"feature_set", snap->ensemble.feature_set.label()}};
}

nlohmann::json GatewayService::state() const {
  const auto snap = snapshot();
  const auto& e = snap->ensemble;
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : e.members) {
    members.push_back({{"id", m.id}, {"dataset_tag", m.dataset_tag}, {"backend", m.backend_descriptor.value("kind", "")}});
  }
  return {{"members", members},
          {"k", e.size()},
          {"n", e.selection_size},
          {"threshold", e.threshold},
          {"strategy", strategy_text(config_.strategy)},
          {"feature_set", {{"name", e.feature_set.label()}, {"features", e.feature_set.names()}}},
          {"router_classes", e.router ? nlohmann::json(e.router->class_labels()) : nlohmann::json::array()},
          {"dataset_tags", snap->globals.dataset_tags},
          {"calibration_size", snap->globals.calibration.size()},
          {"test_size", snap->globals.test.size()},
          {"state_version", snap->version},
          {"failure_policy", to_string(config_.failure_policy)}};
}

}  // namespace promptgate
