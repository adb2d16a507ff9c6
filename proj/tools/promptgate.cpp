// promptgate command-line front end.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "promptgate/calibration.hpp"
#include "promptgate/corpus.hpp"
#include "promptgate/error.hpp"
#include "promptgate/evaluation.hpp"
#include "promptgate/feature_analysis.hpp"
#include "promptgate/features.hpp"
#include "promptgate/forest.hpp"
#include "promptgate/gateway.hpp"
#include "promptgate/synthetic.hpp"

namespace pg = promptgate;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pg::NotFound("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw pg::ParseError(path + ": " + e.what());
  }
}

// Writes to --out, or stdout when it is empty.
void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(g.out, std::ios::binary);
  if (!out) throw pg::Error("cannot write '" + g.out + "'");
  out << text;
}

std::vector<pg::LabeledPrompt> load_prompts(const std::string& path, const std::string& tag = {}) {
  return pg::parse_corpus(read_file(path), tag);
}

pg::GatewayConfig load_config(const Globals& g) {
  if (g.config.empty()) throw pg::InvalidArgument("--config is required for this command");
  auto c = pg::GatewayConfig::load(g.config);
  if (g.seed) {
    c.seed = *g.seed;
    c.forest.seed = *g.seed;
  }
  return c;
}

pg::FeatureSet parse_feature_set(const std::string& text) {
  if (text.empty() || text == "full9") return {};
  std::vector<std::string> names;
  std::stringstream ss(text);
  for (std::string name; std::getline(ss, name, ',');) {
    if (!name.empty()) names.push_back(name);
  }
  return pg::FeatureSet(std::move(names));
}

std::vector<pg::SweepStrategy> parse_strategies(const std::string& text) {
  std::vector<pg::SweepStrategy> out;
  std::stringstream ss(text);
  for (std::string s; std::getline(ss, s, ',');) {
    if (!s.empty()) out.push_back(pg::parse_sweep_strategy(s));
  }
  return out;
}

std::vector<std::size_t> range_1_to(std::size_t k) {
  std::vector<std::size_t> v(k);
  for (std::size_t i = 0; i < k; ++i) v[i] = i + 1;
  return v;
}

void add_forest_options(CLI::App* cmd, pg::ForestConfig& forest) {
  cmd->add_option("--trees", forest.tree_count, "Number of trees")->check(CLI::PositiveNumber);
  cmd->add_option("--max-depth", forest.max_depth, "Maximum tree depth");
  cmd->add_option("--min-samples-split", forest.min_samples_split);
  cmd->add_option("--features-per-split", forest.features_per_split);
  cmd->add_option("--bootstrap-fraction", forest.bootstrap_fraction)->check(CLI::Range(0.0, 1.0));
}

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw pg::InvalidArgument("listen address must be host:port");
  return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
}

pg::HttpGateway* g_gateway = nullptr;

void on_signal(int) {
  if (g_gateway) g_gateway->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"promptgate: ensemble prompt-safety gateway"};
  app.require_subcommand(1);
  // Global flags may also follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Gateway config file (JSON)");
  app.add_option("--seed", g.seed, "Seed; overrides the config value");
  app.add_option("--out", g.out, "Output path (stdout when omitted)");

  // ingest
  std::string input, tag;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus file and rewrite it with one dataset tag");
  ingest->add_option("input", input)->required();
  ingest->add_option("--tag", tag, "Dataset tag")->required();
  ingest->callback([&] {
    const auto prompts = pg::ingest_dataset(input, tag);
    std::string text;
    for (const auto& p : prompts) text += pg::serialize_record(p) + "\n";
    emit(g, text);
    std::cerr << "ingested " << prompts.size() << " prompts as '" << tag << "'\n";
  });

  // partition
  auto* partition = app.add_subcommand("partition", "Split a dataset 56/14/10/20 into four corpus files");
  partition->add_option("input", input)->required();
  partition->add_option("--tag", tag, "Override the dataset tag");
  partition->callback([&] {
    if (g.out.empty()) throw pg::InvalidArgument("--out must name a directory");
    const auto prompts = load_prompts(input, tag);
    const auto split = pg::partition_dataset(prompts, g.seed.value_or(0));
    std::filesystem::create_directories(g.out);
    const std::pair<const char*, const std::vector<pg::LabeledPrompt>*> parts[] = {
        {"train_fit", &split.train_fit},
        {"train_val", &split.train_val},
        {"calibration", &split.calibration},
        {"test", &split.test}};
    for (const auto& [name, part] : parts) {
      pg::write_corpus((std::filesystem::path(g.out) / (std::string(name) + ".jsonl")).string(), *part);
      std::cout << name << ' ' << part->size() << '\n';
    }
  });

  // gen-synth
  std::string spec_path;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic labelled corpus");
  gen->add_option("spec", spec_path, "JSON list of {tag, count, label_ratio, profile}")->required();
  gen->callback([&] {
    std::vector<pg::SyntheticDataset> datasets;
    for (const auto& d : read_json(spec_path)) {
      datasets.push_back({d.at("tag").get<std::string>(), d.at("count").get<std::size_t>(), d.value("label_ratio", 0.5),
                          pg::parse_profile(d.value("profile", std::string("natural_prose")))});
    }
    const auto prompts = pg::generate_synthetic_corpus(datasets, g.seed.value_or(0));
    std::string text;
    for (const auto& p : prompts) text += pg::serialize_record(p) + "\n";
    emit(g, text);
  });

  // train-router
  pg::ForestConfig forest_cfg;
  std::string features;
  std::size_t threads = 1;
  auto* train = app.add_subcommand("train-router", "Train the router forest on a corpus (classes = dataset tags)");
  train->add_option("input", input)->required();
  train->add_option("--features", features, "full9 or a comma-separated feature list");
  train->add_option("--threads", threads)->check(CLI::PositiveNumber);
  add_forest_options(train, forest_cfg);
  train->callback([&] {
    forest_cfg.seed = g.seed.value_or(forest_cfg.seed);
    const auto fs = parse_feature_set(features);
    std::vector<pg::TrainingSample> samples;
    for (const auto& p : load_prompts(input)) samples.push_back({fs.project(pg::extract_features(p.prompt)), p.dataset_tag});
    const auto forest = pg::train_forest(samples, forest_cfg, fs.names(), threads);
    emit(g, forest.to_json().dump());
    std::cerr << "training accuracy " << forest.accuracy(samples) << '\n';
    for (const auto& [name, value] : forest.feature_importance()) std::cerr << "  " << name << ' ' << value << '\n';
  });

  // prune-features
  double cut = 0.7;
  auto* prune = app.add_subcommand("prune-features", "Spearman/Ward analysis and representative selection");
  prune->add_option("input", input)->required();
  prune->add_option("--cut", cut, "Dendrogram cut distance")->check(CLI::NonNegativeNumber);
  prune->callback([&] {
    std::vector<std::vector<double>> columns(pg::kFeatureCount);
    for (const auto& p : load_prompts(input)) {
      const auto v = pg::extract_features(p.prompt).values();
      for (std::size_t j = 0; j < pg::kFeatureCount; ++j) columns[j].push_back(v[j]);
    }
    const auto& names = pg::feature_names();
    const auto analysis = pg::analyze_features(columns, {names.begin(), names.end()}, cut);
    emit(g, analysis.to_json().dump(2));
    std::cerr << "retained";
    for (const auto& name : analysis.retained) std::cerr << ' ' << name;
    std::cerr << '\n';
  });

  // calibrate
  std::string scores_path, calibration_path;
  auto* calibrate = app.add_subcommand("calibrate", "Two-stage threshold search");
  calibrate->add_option("--scores", scores_path, "JSON lines of {score, label}; skips the ensemble");
  calibrate->add_option("--calibration", calibration_path, "Calibration corpus; defaults to the config's");
  calibrate->callback([&] {
    if (!scores_path.empty()) {
      std::vector<pg::ScoredLabel> scored;
      std::istringstream lines(read_file(scores_path));
      for (std::string line; std::getline(lines, line);) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto doc = json::parse(line);
        scored.push_back({doc.at("score").get<double>(), pg::parse_label(doc.at("label").get<std::string>())});
      }
      emit(g, pg::calibrate_threshold(scored).to_json().dump(2));
      return;
    }
    auto config = load_config(g);
    if (!calibration_path.empty()) config.calibration_path = calibration_path;
    pg::GatewayService service(config);
    emit(g, service.recalibrate().to_json().dump(2));
  });

  // evaluate
  std::string test_path, strategy = "router";
  std::optional<std::size_t> n;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate the configured ensemble on a test corpus");
  evaluate->add_option("--test", test_path, "Test corpus; defaults to the config's");
  evaluate->add_option("--strategy", strategy, "router, random, ideal or baseline");
  evaluate->add_option("-n", n, "Selection size; defaults to the config's");
  evaluate->callback([&] {
    const auto config = load_config(g);
    pg::GatewayService service(config);
    const auto snap = service.snapshot();
    const auto prompts = test_path.empty() ? snap->globals.test : load_prompts(test_path);
    const auto result = pg::evaluate_on(snap->ensemble, prompts, pg::parse_sweep_strategy(strategy),
                                        n.value_or(snap->ensemble.selection_size), config.seed);
    const pg::SweepRecord records[] = {result.record};
    emit(g, pg::format_report_csv(records));
  });

  // sweep-n
  std::string strategies = "router,random,ideal,baseline";
  bool recalibrate_each = false;
  auto* sweep_n = app.add_subcommand("sweep-n", "Selection-size sweep at fixed k");
  sweep_n->add_option("--test", test_path, "Test corpus; defaults to the config's");
  sweep_n->add_option("--strategies", strategies);
  sweep_n->add_flag("--recalibrate", recalibrate_each, "Recalibrate the threshold per (strategy, n)");
  sweep_n->callback([&] {
    const auto config = load_config(g);
    pg::GatewayService service(config);
    const auto snap = service.snapshot();
    const auto prompts = test_path.empty() ? snap->globals.test : load_prompts(test_path);
    const auto strats = parse_strategies(strategies);
    const auto ns = range_1_to(snap->ensemble.size());
    pg::SelectionSweepOptions options;
    if (recalibrate_each) options.calibration = snap->globals.calibration;
    const auto records = pg::run_selection_sweep(snap->ensemble, prompts, strats, ns, config.seed, options);
    if (g.out.empty()) {
      std::cout << pg::format_report_csv(records);
    } else {
      std::cerr << "summary " << pg::emit_report(records, g.out) << '\n';
    }
  });

  // sweep-k
  std::string experiment_path;
  auto* sweep_k = app.add_subcommand("sweep-k", "Adaptability sweep: add datasets one at a time");
  sweep_k->add_option("experiment", experiment_path,
                      "JSON {datasets: [{tag, path, backend, member_id?}], initial_k?, calibration_n?, n_values?, "
                      "strategies?, features?, forest?}")
      ->required();
  sweep_k->callback([&] {
    const auto doc = read_json(experiment_path);
    const auto base = std::filesystem::path(experiment_path).parent_path();
    std::vector<pg::DatasetArrival> arrivals;
    for (const auto& d : doc.at("datasets")) {
      auto path = std::filesystem::path(d.at("path").get<std::string>());
      if (path.is_relative()) path = base / path;
      const auto t = d.at("tag").get<std::string>();
      arrivals.push_back({t, pg::ingest_dataset(path.string(), t), d.at("backend"), d.value("member_id", std::string())});
    }
    pg::AdaptabilityConfig cfg;
    const std::uint64_t seed = g.seed.value_or(doc.value("seed", std::uint64_t{0}));
    cfg.initial_k = doc.value("initial_k", cfg.initial_k);
    cfg.calibration_n = doc.value("calibration_n", cfg.calibration_n);
    const auto n_mode = doc.value("n_values", std::string("all"));
    if (n_mode == "calibration") {
      cfg.n_values = [c = cfg.calibration_n](std::size_t k) { return std::vector<std::size_t>{std::min(c, k)}; };
    } else if (n_mode != "all") {
      throw pg::InvalidArgument("n_values must be \"all\" or \"calibration\"");
    }
    if (doc.contains("strategies")) cfg.strategies = parse_strategies(doc["strategies"].get<std::string>());
    cfg.features = parse_feature_set(doc.value("features", std::string()));
    if (doc.contains("forest")) {
      const auto& f = doc["forest"];
      cfg.forest.tree_count = f.value("tree_count", cfg.forest.tree_count);
      if (f.contains("max_depth")) cfg.forest.max_depth = f["max_depth"].get<std::size_t>();
    }
    cfg.forest.seed = seed;
    cfg.partition_seed = seed;
    cfg.ensemble_seed = seed;
    cfg.eval_seed = seed;
    const auto result = pg::run_adaptability_sweep(arrivals, cfg);
    for (const auto& step : result.steps) {
      std::cerr << "k=" << step.k << " calibration=" << step.calibration_size << " test=" << step.test_size
                << " tau=" << step.calibration.best_threshold << " router_acc=" << step.router_training_accuracy
                << '\n';
    }
    if (g.out.empty()) {
      std::cout << pg::format_report_csv(result.records);
    } else {
      std::cerr << "summary " << pg::emit_report(result.records, g.out) << '\n';
    }
  });

  // serve
  std::string listen;
  auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  serve->add_option("--listen", listen, "host:port; overrides the config");
  serve->callback([&] {
    auto config = load_config(g);
    if (!listen.empty()) config.listen = listen;
    pg::GatewayService service(config);
    pg::HttpGateway gateway(service);
    const auto [host, port] = split_listen(config.listen);
    const int bound = gateway.bind(host, port);
    std::cerr << "listening on " << host << ':' << bound << " (k=" << service.snapshot()->ensemble.size() << ")\n";
    g_gateway = &gateway;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    gateway.serve();
    g_gateway = nullptr;
  });

  // update
  std::string url = "http://127.0.0.1:8080", dataset, backend, member_id;
  auto* update = app.add_subcommand("update", "Add a dataset and its member to a running gateway");
  update->add_option("--url", url, "Gateway base URL");
  update->add_option("--dataset", dataset, "Corpus file path as seen by the gateway")->required();
  update->add_option("--tag", tag, "Dataset tag")->required();
  update->add_option("--backend", backend, "Backend descriptor: inline JSON or a file path")->required();
  update->add_option("--member-id", member_id);
  update->callback([&] {
    json descriptor = std::filesystem::exists(backend) ? read_json(backend) : json::parse(backend);
    json body = {{"dataset_path", std::filesystem::absolute(dataset).string()},
                 {"dataset_tag", tag},
                 {"backend", descriptor}};
    if (!member_id.empty()) body["member_id"] = member_id;
    httplib::Client client(url);
    client.set_read_timeout(std::chrono::minutes(10));
    const auto res = client.Post("/v1/update", body.dump(), "application/json");
    if (!res) throw pg::Error("update request failed: " + httplib::to_string(res.error()));
    emit(g, res->body);
    if (res->status != 200) throw pg::Error("gateway answered " + std::to_string(res->status));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
