#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

#include "promptgate/calibration.hpp"
#include "promptgate/ensemble.hpp"
#include "promptgate/features.hpp"
#include "promptgate/forest.hpp"
#include "promptgate/rng.hpp"
#include "promptgate/synthetic.hpp"

namespace pg = promptgate;

namespace {

std::vector<pg::LabeledPrompt> corpus(std::size_t per_profile) {
  std::vector<pg::SyntheticDataset> specs;
  for (auto p : pg::all_profiles()) specs.push_back({std::string(pg::to_string(p)), per_profile, 0.5, p});
  return pg::generate_synthetic_corpus(specs, 1);
}

void BM_ExtractFeatures(benchmark::State& state) {
  const auto prompts = corpus(50);
  std::size_t bytes = 0;
  for (const auto& p : prompts) bytes += p.prompt.size();
  for (auto _ : state) {
    for (const auto& p : prompts) benchmark::DoNotOptimize(pg::extract_features(p.prompt));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * prompts.size()));
}
BENCHMARK(BM_ExtractFeatures);

pg::Forest router(std::size_t trees) {
  std::vector<pg::TrainingSample> samples;
  const pg::FeatureSet full;
  for (const auto& p : corpus(100)) samples.push_back({full.project(pg::extract_features(p.prompt)), p.dataset_tag});
  pg::ForestConfig cfg;
  cfg.tree_count = trees;
  return pg::train_forest(samples, cfg, full.names());
}

void BM_TrainForest(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(router(static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_TrainForest)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_ForestPredict(benchmark::State& state) {
  const auto forest = router(static_cast<std::size_t>(state.range(0)));
  const pg::FeatureSet full;
  std::vector<std::vector<double>> rows;
  for (const auto& p : corpus(20)) rows.push_back(full.project(pg::extract_features(p.prompt)));
  for (auto _ : state) {
    for (const auto& r : rows) benchmark::DoNotOptimize(forest.predict(r));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows.size()));
}
BENCHMARK(BM_ForestPredict)->Arg(10)->Arg(100);

void BM_ClassifyStubEnsemble(benchmark::State& state) {
  const auto prompts = corpus(40);
  auto index = std::make_shared<const pg::CorpusIndex>(prompts);
  pg::EnsembleState ens;
  std::size_t i = 0;
  for (auto p : pg::all_profiles()) {
    const std::string tag(pg::to_string(p));
    const auto profile = pg::planted_specialist(tag, {0.95, 0.1}, {0.6, 0.3}, 0.1, i++);
    ens.members.push_back({"cop-" + tag, tag, profile.to_json(), std::make_shared<pg::StubScorer>(profile, index)});
  }
  ens.selection_size = static_cast<std::size_t>(state.range(0));
  ens.router = std::make_shared<const pg::Forest>(router(30));
  for (auto _ : state) {
    for (const auto& p : prompts) {
      benchmark::DoNotOptimize(pg::classify(ens, p.prompt, pg::Strategy::router(), pg::stable_hash(p.id)));
    }
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * prompts.size()));
}
BENCHMARK(BM_ClassifyStubEnsemble)->Arg(1)->Arg(5)->Arg(9);

void BM_CalibrateThreshold(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.15);
  std::vector<pg::ScoredLabel> scored;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    const bool mal = i % 2 == 0;
    scored.push_back({std::clamp((mal ? 0.7 : 0.3) + noise(rng), 0.0, 1.0), mal ? pg::Label::malicious : pg::Label::benign});
  }
  for (auto _ : state) benchmark::DoNotOptimize(pg::calibrate_threshold(scored));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CalibrateThreshold)->Arg(100)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
