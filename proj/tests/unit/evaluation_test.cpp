#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ensemble_fixture.hpp"
#include "oracles.hpp"
#include "promptgate/evaluation.hpp"

namespace promptgate {
namespace {

const StructuralProfile kProfiles[] = {StructuralProfile::natural_prose, StructuralProfile::digits_heavy,
                                       StructuralProfile::code_like, StructuralProfile::shouting,
                                       StructuralProfile::encoded};

const testing::RoutedFixture& routed() {
  static const auto f = testing::routed_fixture(kProfiles, 200, 0.2, 13, 3);
  return f;
}

TEST(SweepStrategyNames, RoundTrip) {
  for (auto s : {SweepStrategy::router, SweepStrategy::random, SweepStrategy::ideal, SweepStrategy::baseline}) {
    EXPECT_EQ(parse_sweep_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_sweep_strategy("oracle"), InvalidArgument);
}

TEST(EvaluateOn, MatchesPerPromptRecount) {
  const auto& f = routed();
  for (auto strategy : {SweepStrategy::router, SweepStrategy::random, SweepStrategy::ideal}) {
    for (std::size_t n : {1, 3, 5}) {
      const auto e = evaluate_on(f.state, f.split.test, strategy, n, 99);
      ConfusionMatrix want;
      std::size_t routed_ok = 0;
      for (const auto& p : f.split.test) {
        const Strategy s = strategy == SweepStrategy::router   ? Strategy::router()
                           : strategy == SweepStrategy::random ? Strategy::random()
                                                               : Strategy::ideal(p.dataset_tag);
        const auto v = classify(f.state, p.prompt, s, request_seed_for(99, p.id), {.n = n});
        const bool flagged = v.label == Label::malicious;
        if (p.label == Label::malicious) {
          ++(flagged ? want.tp : want.fn);
        } else {
          ++(flagged ? want.fp : want.tn);
        }
        routed_ok += *v.router_class == p.dataset_tag;
      }
      EXPECT_EQ(e.confusion, want);
      EXPECT_EQ(e.record.k, 5u);
      EXPECT_EQ(e.record.n, n);
      EXPECT_EQ(e.record.f1, metrics(want).f1);
      EXPECT_EQ(e.record.threshold, f.state.threshold);
      ASSERT_TRUE(e.record.router_accuracy);
      EXPECT_DOUBLE_EQ(*e.record.router_accuracy, double(routed_ok) / double(f.split.test.size()));
    }
  }
}

TEST(EvaluateOn, Errors) {
  const auto& f = routed();
  EXPECT_THROW(evaluate_on(f.state, f.split.test, SweepStrategy::router, 6, 0), InvalidArgument);
  // No member is tagged "base".
  EXPECT_THROW(evaluate_on(f.state, f.split.test, SweepStrategy::baseline, 3, 0), InvalidArgument);

  auto broken = f.state;
  for (auto& m : broken.members) m.backend = std::make_shared<testing::FailingScorer>();
  try {
    evaluate_on(broken, f.split.test, SweepStrategy::random, 1, 0);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.completed(), 0u);
    EXPECT_EQ(e.partial().total(), 0u);
  }
}

TEST(EvaluateOn, BaselineUsesTheBaseMemberAlone) {
  auto state = testing::constant_state({0.9, 0.1});
  state.members[1].dataset_tag = std::string(kBaseTag);
  const std::vector<LabeledPrompt> prompts = {{"a", "x", Label::malicious, "t0"}, {"b", "y", Label::benign, "t0"}};
  const auto e = evaluate_on(state, prompts, SweepStrategy::baseline, 2, 0);
  EXPECT_EQ(e.record.n, 1u);
  EXPECT_EQ(e.confusion, (ConfusionMatrix{.tp = 0, .fp = 0, .tn = 1, .fn = 1}));
  EXPECT_FALSE(e.record.router_accuracy);
}

TEST(SelectionSweep, CardinalityAndDegeneracyAtFullSelection) {
  const auto& f = routed();
  const std::vector<SweepStrategy> strategies = {SweepStrategy::router, SweepStrategy::random, SweepStrategy::ideal};
  const std::vector<std::size_t> ns = {1, 2, 3, 4, 5};
  const auto records = run_selection_sweep(f.state, f.split.test, strategies, ns, 4);
  ASSERT_EQ(records.size(), 15u);
  // With every member selected the strategies coincide.
  std::vector<ConfusionMatrix> full;
  for (const auto& r : records) {
    if (r.n == 5) full.push_back(r.confusion);
  }
  ASSERT_EQ(full.size(), 3u);
  EXPECT_EQ(full[0], full[1]);
  EXPECT_EQ(full[1], full[2]);

  const std::vector<std::size_t> bad = {6};
  EXPECT_THROW(run_selection_sweep(f.state, f.split.test, strategies, bad, 4), InvalidArgument);
}

TEST(SelectionSweep, SpecialistAnchoringBeatsRandomAtOneMember) {
  const auto& f = routed();
  const std::vector<SweepStrategy> strategies = {SweepStrategy::ideal, SweepStrategy::random, SweepStrategy::router};
  const std::vector<std::size_t> ns = {1, 2, 3, 4, 5};
  SelectionSweepOptions opts;
  opts.calibration = f.split.calibration;
  const auto records = run_selection_sweep(f.state, f.split.test, strategies, ns, 8, opts);
  auto find = [&](const std::string& s, std::size_t n) {
    for (const auto& r : records) {
      if (r.strategy == s && r.n == n) return r;
    }
    throw std::runtime_error("missing record");
  };
  EXPECT_LT(find("ideal", 1).fpr, find("random", 1).fpr);
  EXPECT_GT(find("ideal", 1).f1, find("random", 1).f1);
  for (std::size_t n : ns) EXPECT_GE(find("router", n).f1, find("random", n).f1 - 0.02) << n;
  // Each point carries its own calibrated threshold.
  for (const auto& r : records) {
    EXPECT_GE(r.threshold, 0.05);
    EXPECT_LE(r.threshold, 0.95);
  }
}

std::vector<DatasetArrival> arrivals(std::size_t count, std::size_t per) {
  std::vector<SyntheticDataset> specs;
  for (std::size_t i = 0; i < count; ++i) {
    const auto p = all_profiles()[i];
    specs.push_back({std::string(to_string(p)), per, 0.5, p});
  }
  const auto corpus = generate_synthetic_corpus(specs, 3);
  std::vector<DatasetArrival> out;
  for (std::size_t i = 0; i < count; ++i) {
    DatasetArrival a;
    a.tag = specs[i].tag;
    for (const auto& p : corpus) {
      if (p.dataset_tag == a.tag) a.prompts.push_back(p);
    }
    a.backend = planted_specialist(a.tag, {0.95, 0.1}, {0.6, 0.3}, 0.1, 50 + i).to_json();
    out.push_back(std::move(a));
  }
  return out;
}

AdaptabilityConfig small_config() {
  AdaptabilityConfig c;
  c.forest.tree_count = 10;
  c.partition_seed = 1;
  c.ensemble_seed = 2;
  c.eval_seed = 3;
  return c;
}

TEST(AdaptabilitySweep, InitialStepOnlyWhenNothingArrivesLater) {
  const auto r = run_adaptability_sweep(arrivals(3, 100), small_config());
  ASSERT_EQ(r.steps.size(), 1u);
  EXPECT_EQ(r.steps[0].k, 3u);
  ASSERT_EQ(r.records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.records[i].k, 3u);
    EXPECT_EQ(r.records[i].n, i + 1);
  }
}

TEST(AdaptabilitySweep, GlobalSetsGrowWithEveryArrival) {
  auto cfg = small_config();
  cfg.n_values = [](std::size_t k) { return std::vector<std::size_t>{1, k}; };
  cfg.strategies = {SweepStrategy::router, SweepStrategy::random};
  const auto r = run_adaptability_sweep(arrivals(5, 100), cfg);
  ASSERT_EQ(r.steps.size(), 3u);
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    EXPECT_EQ(r.steps[i].k, 3 + i);
    // 10 and 20 prompts of every 100-prompt dataset.
    EXPECT_EQ(r.steps[i].calibration_size, 10 * (3 + i));
    EXPECT_EQ(r.steps[i].test_size, 20 * (3 + i));
    EXPECT_EQ(r.steps[i].calibration.evaluation_count(), 20u);
  }
  EXPECT_EQ(r.records.size(), 3u * 2 * 2);
  EXPECT_THROW(run_adaptability_sweep(arrivals(2, 50), small_config()), InvalidArgument);
}

SweepRecord record(std::size_t k, std::size_t n, std::string s, double f1, std::optional<double> acc) {
  SweepRecord r;
  r.k = k;
  r.n = n;
  r.strategy = std::move(s);
  r.asr = 0.125;
  r.fpr = 1.0 / 3.0;
  r.f1 = f1;
  r.threshold = 0.47;
  r.router_accuracy = acc;
  r.confusion = {.tp = 7, .fp = 1, .tn = 2, .fn = 1};
  return r;
}

TEST(Report, CsvShape) {
  EXPECT_EQ(format_report_csv({}), std::string(kReportHeader) + "\n");
  const std::vector<SweepRecord> two = {record(4, 2, "router", 0.9, 0.75), record(3, 1, "random", 0.8, {})};
  const auto csv = format_report_csv(two);
  EXPECT_EQ(csv, std::string(kReportHeader) + "\n3,1,random,0.125,0.3333333333333333,0.8,0.47,\n" +
                     "4,2,router,0.125,0.3333333333333333,0.9,0.47,0.75\n");
}

TEST(Report, CsvRoundTripIsExact) {
  std::vector<SweepRecord> recs;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < 50; ++i) recs.push_back(record(3 + i % 4, 1 + i % 3, i % 2 ? "ideal" : "router", u(rng), u(rng)));
  const auto back = parse_report_csv(format_report_csv(recs));
  const auto sorted = sorted_records(recs);
  ASSERT_EQ(back.size(), sorted.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_TRUE(back[i].same_columns(sorted[i])) << i;
}

TEST(Report, ParseErrorsCarryLineNumbers) {
  EXPECT_THROW(parse_report_csv(""), ParseError);
  EXPECT_THROW(parse_report_csv("k,n\n"), ParseError);
  try {
    parse_report_csv(std::string(kReportHeader) + "\n3,1,router,0.1,0.1,0.1,0.5,\n3,x,router,0.1,0.1,0.1,0.5,\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.lines(), std::vector<std::size_t>{3});
  }
  EXPECT_THROW(parse_report_csv(std::string(kReportHeader) + "\n3,1,router\n"), ParseError);
}

TEST(Report, EmitWritesCsvAndSummary) {
  const auto dir = std::filesystem::temp_directory_path() / "promptgate_report_test";
  std::filesystem::create_directories(dir);
  const auto csv = (dir / "sweep.csv").string();
  const std::vector<SweepRecord> recs = {record(3, 1, "router", 0.7, 0.9), record(3, 2, "router", 0.8, 0.9)};
  const auto summary_path = emit_report(recs, csv);
  EXPECT_EQ(summary_path, (dir / "sweep.summary.json").string());

  std::ifstream in(csv);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);

  std::ifstream sj(summary_path);
  const auto summary = nlohmann::json::parse(sj);
  EXPECT_EQ(summary.at("record_count"), 2);
  EXPECT_EQ(summary.at("best_f1").at(0).at("n"), 2);
  EXPECT_EQ(summary.at("records").at(0).at("confusion").at("tp"), 7);
  EXPECT_FALSE(summary.at("records").at(0).at("degenerate").get<bool>());
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace promptgate
