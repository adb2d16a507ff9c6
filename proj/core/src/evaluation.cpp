#include "promptgate/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <tuple>

#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

constexpr std::size_t kEvalChunk = 1024;

Strategy strategy_for(SweepStrategy s, const LabeledPrompt& prompt) {
  switch (s) {
    case SweepStrategy::router: return Strategy::router();
    case SweepStrategy::random: return Strategy::random();
    case SweepStrategy::ideal: return Strategy::ideal(prompt.dataset_tag);
    case SweepStrategy::baseline: return Strategy::ideal(std::string(kBaseTag));
  }
  return Strategy::router();
}

std::vector<BatchRequest> requests_for(std::span<const LabeledPrompt> prompts, SweepStrategy strategy,
                                       std::uint64_t base_seed) {
  std::vector<BatchRequest> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back({p.prompt, strategy_for(strategy, p), request_seed_for(base_seed, p.id)});
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw ParseError("report line " + std::to_string(line) + ": bad number '" + std::string(field) + "'", {line});
  }
  return v;
}

std::size_t parse_size(std::string_view field, std::size_t line) {
  std::size_t v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw ParseError("report line " + std::to_string(line) + ": bad integer '" + std::string(field) + "'", {line});
  }
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

bool SweepRecord::same_columns(const SweepRecord& o) const {
  return k == o.k && n == o.n && strategy == o.strategy && asr == o.asr && fpr == o.fpr && f1 == o.f1 &&
         threshold == o.threshold && router_accuracy == o.router_accuracy;
}

std::string_view to_string(SweepStrategy strategy) {
  switch (strategy) {
    case SweepStrategy::router: return "router";
    case SweepStrategy::random: return "random";
    case SweepStrategy::ideal: return "ideal";
    case SweepStrategy::baseline: return "baseline";
  }
  return "router";
}

SweepStrategy parse_sweep_strategy(std::string_view text) {
  for (auto s : {SweepStrategy::router, SweepStrategy::random, SweepStrategy::ideal, SweepStrategy::baseline}) {
    if (to_string(s) == text) return s;
  }
  throw InvalidArgument("unknown sweep strategy '" + std::string(text) + "'");
}

Evaluation evaluate_on(const EnsembleState& state, std::span<const LabeledPrompt> prompts, SweepStrategy strategy,
                       std::size_t n, std::uint64_t base_seed, const ClassifyOptions& options) {
  if (strategy == SweepStrategy::baseline) n = 1;
  if (n < 1 || n > state.size()) {
    throw InvalidArgument("selection size n=" + std::to_string(n) + " outside [1, k=" + std::to_string(state.size()) +
                          "]");
  }
  ClassifyOptions opts = options;
  opts.n = n;

  Evaluation out;
  std::size_t routed = 0;
  std::size_t routed_correctly = 0;
  for (std::size_t begin = 0; begin < prompts.size(); begin += kEvalChunk) {
    const auto chunk = prompts.subspan(begin, std::min(kEvalChunk, prompts.size() - begin));
    const auto requests = requests_for(chunk, strategy, base_seed);
    std::vector<Verdict> verdicts;
    try {
      verdicts = classify_batch(state, requests, opts);
    } catch (const BackendError& e) {
      throw EvaluationError(std::string(e.what()) + " after " + std::to_string(begin) + " prompts", begin,
                            out.confusion);
    }
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const bool flagged = verdicts[i].label == Label::malicious;
      if (chunk[i].label == Label::malicious) {
        ++(flagged ? out.confusion.tp : out.confusion.fn);
      } else {
        ++(flagged ? out.confusion.fp : out.confusion.tn);
      }
      if (verdicts[i].router_class) {
        ++routed;
        if (*verdicts[i].router_class == chunk[i].dataset_tag) ++routed_correctly;
      }
    }
  }

  const auto m = metrics(out.confusion);
  out.record.k = state.size();
  out.record.n = n;
  out.record.strategy = std::string(to_string(strategy));
  out.record.asr = m.asr;
  out.record.fpr = m.fpr;
  out.record.f1 = m.f1;
  out.record.threshold = state.threshold;
  if (state.router) {
    out.record.router_accuracy = routed == 0 ? 0.0 : static_cast<double>(routed_correctly) / static_cast<double>(routed);
  }
  out.record.confusion = out.confusion;
  return out;
}

CalibrationReport calibrate_for(const EnsembleState& state, std::span<const LabeledPrompt> calibration,
                                SweepStrategy strategy, std::size_t n, std::uint64_t base_seed,
                                const ClassifyOptions& options) {
  if (strategy == SweepStrategy::baseline) n = 1;
  ClassifyOptions opts = options;
  opts.n = n;
  const auto requests = requests_for(calibration, strategy, base_seed);
  const auto verdicts = classify_batch(state, requests, opts);
  std::vector<ScoredLabel> scored;
  scored.reserve(verdicts.size());
  for (std::size_t i = 0; i < verdicts.size(); ++i) scored.push_back({verdicts[i].score, calibration[i].label});
  return calibrate_threshold(scored);
}

std::vector<SweepRecord> run_selection_sweep(const EnsembleState& state, std::span<const LabeledPrompt> test_set,
                                             std::span<const SweepStrategy> strategies,
                                             std::span<const std::size_t> n_values, std::uint64_t base_seed,
                                             const SelectionSweepOptions& options) {
  for (std::size_t n : n_values) {
    if (n < 1 || n > state.size()) throw InvalidArgument("sweep n=" + std::to_string(n) + " outside [1, k]");
  }
  std::vector<SweepRecord> records;
  for (const auto strategy : strategies) {
    for (std::size_t n : n_values) {
      if (strategy == SweepStrategy::baseline && n != n_values.front()) continue;
      EnsembleState point = state;
      if (!options.calibration.empty()) {
        point.threshold = calibrate_for(state, options.calibration, strategy, n, base_seed, options.classify).best_threshold;
      }
      records.push_back(evaluate_on(point, test_set, strategy, n, base_seed, options.classify).record);
    }
  }
  return records;
}

AdaptabilityResult run_adaptability_sweep(std::span<const DatasetArrival> datasets, const AdaptabilityConfig& config,
                                          const BackendContext& context) {
  if (config.initial_k < 1) throw InvalidArgument("initial_k must be >= 1");
  if (datasets.size() < config.initial_k) {
    throw InvalidArgument("adaptability sweep needs at least " + std::to_string(config.initial_k) + " datasets");
  }

  auto index = std::make_shared<CorpusIndex>();
  for (const auto& d : datasets) index->add(d.prompts);
  BackendContext ctx = context;
  ctx.corpus = index;

  AdaptabilityResult result;
  GlobalSets globals;
  EnsembleState state;
  state.feature_set = config.features;
  state.seed = config.ensemble_seed;

  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& arrival = datasets[i];
    const auto split = partition_dataset(arrival.prompts, derive_seed(config.partition_seed, i));
    globals = update_global_sets(globals, split, arrival.tag);
    PromptCop cop{arrival.member_id.empty() ? "cop-" + arrival.tag : arrival.member_id, arrival.tag, arrival.backend,
                  make_backend(arrival.backend, ctx)};
    state = add_promptcop(state, std::move(cop));

    const std::size_t k = state.size();
    if (k < config.initial_k) continue;

    state.selection_size = std::min(config.calibration_n, k);
    state.router.reset();
    RecalibrationOptions recal;
    recal.base_seed = config.eval_seed;
    recal.training_threads = config.training_threads;
    recal.classify = config.classify;
    auto recalibrated = recalibrate(state, globals.calibration, config.forest, recal);
    state = std::move(recalibrated.state);

    result.steps.push_back({k, globals.calibration.size(), globals.test.size(),
                            recalibrated.router_training_accuracy, recalibrated.report});

    std::vector<std::size_t> ns;
    if (config.n_values) {
      ns = config.n_values(k);
    } else {
      ns.resize(k);
      std::iota(ns.begin(), ns.end(), std::size_t{1});
    }
    for (const auto strategy : config.strategies) {
      for (std::size_t n : ns) {
        if (strategy == SweepStrategy::baseline && n != ns.front()) continue;
        result.records.push_back(
            evaluate_on(state, globals.test, strategy, n, config.eval_seed, config.classify).record);
      }
    }
  }
  return result;
}

std::vector<SweepRecord> sorted_records(std::span<const SweepRecord> records) {
  std::vector<SweepRecord> out(records.begin(), records.end());
  std::stable_sort(out.begin(), out.end(), [](const SweepRecord& a, const SweepRecord& b) {
    return std::tie(a.k, a.strategy, a.n) < std::tie(b.k, b.strategy, b.n);
  });
  return out;
}

std::string format_report_csv(std::span<const SweepRecord> records) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : sorted_records(records)) {
    out += std::to_string(r.k) + ',' + std::to_string(r.n) + ',' + r.strategy + ',' + format_double(r.asr) + ',' +
           format_double(r.fpr) + ',' + format_double(r.f1) + ',' + format_double(r.threshold) + ',' +
           (r.router_accuracy ? format_double(*r.router_accuracy) : std::string()) + '\n';
  }
  return out;
}

std::vector<SweepRecord> parse_report_csv(std::string_view text) {
  std::vector<SweepRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = false;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header) {
      if (line != kReportHeader) throw ParseError("report: unexpected header", {line_no});
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 8) throw ParseError("report line " + std::to_string(line_no) + ": expected 8 fields", {line_no});
    SweepRecord r;
    r.k = parse_size(f[0], line_no);
    r.n = parse_size(f[1], line_no);
    r.strategy = std::string(f[2]);
    r.asr = parse_double(f[3], line_no);
    r.fpr = parse_double(f[4], line_no);
    r.f1 = parse_double(f[5], line_no);
    r.threshold = parse_double(f[6], line_no);
    if (!f[7].empty()) r.router_accuracy = parse_double(f[7], line_no);
    out.push_back(std::move(r));
  }
  if (!header) throw ParseError("report: missing header");
  return out;
}

nlohmann::json report_summary(std::span<const SweepRecord> records) {
  nlohmann::json rows = nlohmann::json::array();
  std::map<std::string, nlohmann::json> best;
  for (const auto& r : sorted_records(records)) {
    const auto& c = r.confusion;
    // 0/0 ratios were reported as 0; flag them.
    const bool degenerate = c.tp + c.fn == 0 || c.fp + c.tn == 0;
    rows.push_back({{"k", r.k},
                    {"n", r.n},
                    {"strategy", r.strategy},
                    {"asr", r.asr},
                    {"fpr", r.fpr},
                    {"f1", r.f1},
                    {"threshold", r.threshold},
                    {"router_accuracy", r.router_accuracy ? nlohmann::json(*r.router_accuracy) : nlohmann::json()},
                    {"confusion", {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}},
                    {"degenerate", degenerate}});
    const std::string key = std::to_string(r.k) + "/" + r.strategy;
    if (!best.contains(key) || best[key]["f1"].get<double>() < r.f1) {
      best[key] = {{"k", r.k}, {"strategy", r.strategy}, {"n", r.n}, {"f1", r.f1}};
    }
  }
  nlohmann::json best_rows = nlohmann::json::array();
  for (auto& [key, row] : best) best_rows.push_back(row);
  return {{"columns", kReportHeader}, {"record_count", records.size()}, {"records", rows}, {"best_f1", best_rows}};
}

std::string emit_report(std::span<const SweepRecord> records, const std::string& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write report '" + path + "'");
    out << format_report_csv(records);
    if (!out) throw Error("failed writing report '" + path + "'");
  }
  std::filesystem::path summary(path);
  summary.replace_extension(".summary.json");
  std::ofstream out(summary, std::ios::binary);
  if (!out) throw Error("cannot write summary '" + summary.string() + "'");
  out << report_summary(records).dump(2) << '\n';
  return summary.string();
}

}  // namespace promptgate
