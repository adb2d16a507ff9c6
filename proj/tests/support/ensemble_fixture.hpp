#pragma once

// Small ensembles for unit tests: constant and failing scorers, plus a
// routed state over a few synthetic profiles with planted specialists.

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "promptgate/calibration.hpp"
#include "promptgate/corpus.hpp"
#include "promptgate/ensemble.hpp"
#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"
#include "promptgate/scorer.hpp"
#include "promptgate/synthetic.hpp"

namespace promptgate::testing {

class ConstScorer final : public ScorerBackend {
 public:
  explicit ConstScorer(double value) : value_(value) {}
  std::vector<double> score(std::span<const std::string> prompts) const override {
    calls.fetch_add(1);
    return std::vector<double>(prompts.size(), value_);
  }
  mutable std::atomic<int> calls{0};

 private:
  double value_;
};

class FailingScorer final : public ScorerBackend {
 public:
  std::vector<double> score(std::span<const std::string>) const override { throw Error("connection refused"); }
};

inline PromptCop cop(std::string id, std::string tag, std::shared_ptr<const ScorerBackend> backend) {
  return {std::move(id), std::move(tag), nlohmann::json::object(), std::move(backend)};
}

inline EnsembleState constant_state(const std::vector<double>& values) {
  EnsembleState s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    s.members.push_back(cop("m" + std::to_string(i), "t" + std::to_string(i), std::make_shared<ConstScorer>(values[i])));
  }
  s.selection_size = values.size();
  return s;
}

struct RoutedFixture {
  std::vector<LabeledPrompt> corpus;
  CorpusSplit split;  // pooled over datasets
  EnsembleState state;
  std::shared_ptr<const CorpusIndex> index;
};

// One dataset per profile, tagged by the profile name, each served by a
// planted specialist; router trained and threshold calibrated on the pooled
// calibration parts.
inline RoutedFixture routed_fixture(std::span<const StructuralProfile> profiles, std::size_t per_dataset,
                                    double sigma, std::uint64_t seed, std::size_t n) {
  std::vector<SyntheticDataset> specs;
  for (auto p : profiles) specs.push_back({std::string(to_string(p)), per_dataset, 0.5, p});
  RoutedFixture f;
  f.corpus = generate_synthetic_corpus(specs, seed);
  f.index = std::make_shared<const CorpusIndex>(f.corpus);
  for (std::size_t d = 0; d < specs.size(); ++d) {
    std::vector<LabeledPrompt> part;
    for (const auto& p : f.corpus) {
      if (p.dataset_tag == specs[d].tag) part.push_back(p);
    }
    const auto s = partition_dataset(part, derive_seed(seed, d));
    f.split.train_fit.insert(f.split.train_fit.end(), s.train_fit.begin(), s.train_fit.end());
    f.split.train_val.insert(f.split.train_val.end(), s.train_val.begin(), s.train_val.end());
    f.split.calibration.insert(f.split.calibration.end(), s.calibration.begin(), s.calibration.end());
    f.split.test.insert(f.split.test.end(), s.test.begin(), s.test.end());
    const auto profile = planted_specialist(specs[d].tag, {0.95, 0.1}, {0.6, 0.3}, sigma, derive_seed(seed, 100 + d));
    f.state.members.push_back({"cop-" + specs[d].tag, specs[d].tag, profile.to_json(),
                               std::make_shared<StubScorer>(profile, f.index)});
  }
  f.state.selection_size = n;
  f.state.seed = seed;
  ForestConfig forest;
  forest.tree_count = 20;
  forest.seed = seed;
  RecalibrationOptions opts;
  opts.base_seed = seed;
  f.state = recalibrate(f.state, f.split.calibration, forest, opts).state;
  return f;
}

}  // namespace promptgate::testing
