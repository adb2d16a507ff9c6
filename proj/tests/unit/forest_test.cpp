#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "promptgate/error.hpp"
#include "promptgate/forest.hpp"

namespace promptgate {
namespace {

std::vector<TrainingSample> separated(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> a(-5.0, -0.01), b(1.01, 6.0), noise(0.0, 1.0);
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    out.push_back({{a(rng), noise(rng), noise(rng)}, "A"});
    out.push_back({{b(rng), noise(rng), noise(rng)}, "B"});
  }
  return out;
}

// Single stump: feature 0 <= 0.5 goes to A.
Forest stump() {
  DecisionTree t;
  t.nodes = {TreeNode{0, 0.5, 1, 2, 20, 0.5, {10, 10}}, TreeNode{-1, 0.0, -1, -1, 10, 0.0, {10, 0}},
             TreeNode{-1, 0.0, -1, -1, 10, 0.0, {0, 10}}};
  ForestConfig cfg;
  cfg.tree_count = 1;
  return Forest(cfg, {"f0"}, {"A", "B"}, {t});
}

TEST(Gini, Histogram) {
  EXPECT_DOUBLE_EQ(gini(std::vector<std::uint32_t>{5, 5}), 0.5);
  EXPECT_DOUBLE_EQ(gini(std::vector<std::uint32_t>{7, 0}), 0.0);
  EXPECT_DOUBLE_EQ(gini(std::vector<std::uint32_t>{1, 1, 1, 1}), 0.75);
}

TEST(TrainForest, SingleClassPredictsItWithCertainty) {
  std::vector<TrainingSample> s = {{{1.0, 2.0}, "A"}, {{3.0, 4.0}, "A"}, {{5.0, 0.0}, "A"}};
  ForestConfig cfg;
  cfg.tree_count = 5;
  const auto f = train_forest(s, cfg, {});
  const auto p = f.predict(std::vector<double>{100.0, -3.0});
  EXPECT_EQ(p.label, "A");
  EXPECT_EQ(p.distribution, std::vector<double>{1.0});
  EXPECT_EQ(f.feature_names(), (std::vector<std::string>{"f0", "f1"}));
}

TEST(TrainForest, PerfectlySeparatedTrainingAccuracy) {
  const auto s = separated(100, 1);
  ForestConfig cfg;
  cfg.tree_count = 25;
  cfg.seed = 3;
  const auto f = train_forest(s, cfg, {"x", "n1", "n2"});
  EXPECT_EQ(f.accuracy(s), 1.0);
  // Every training sample reaches a pure leaf of its own class in the
  // trees that split on the separating feature.
  for (const auto& sample : s) {
    const auto p = f.predict(sample.features);
    EXPECT_EQ(p.label, sample.label);
  }
}

TEST(TrainForest, DeterministicGivenSeed) {
  const auto s = separated(60, 2);
  ForestConfig cfg;
  cfg.tree_count = 15;
  cfg.seed = 42;
  const auto a = train_forest(s, cfg, {});
  const auto b = train_forest(s, cfg, {});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  cfg.seed = 43;
  EXPECT_NE(train_forest(s, cfg, {}), a);
}

TEST(TrainForest, ParallelTrainingMatchesSequential) {
  const auto s = separated(80, 5);
  ForestConfig cfg;
  cfg.tree_count = 12;
  cfg.seed = 9;
  EXPECT_EQ(train_forest(s, cfg, {}, 1), train_forest(s, cfg, {}, 4));
  EXPECT_EQ(train_forest(s, cfg, {}, 1), train_forest(s, cfg, {}, 0));
}

TEST(TrainForest, RejectsBadInput) {
  ForestConfig cfg;
  EXPECT_THROW(train_forest({}, cfg, {}), InvalidArgument);
  std::vector<TrainingSample> one = {{{1.0}, "A"}};
  EXPECT_THROW(train_forest(one, cfg, {}), InvalidArgument);
  std::vector<TrainingSample> ragged = {{{1.0, 2.0}, "A"}, {{1.0}, "B"}};
  EXPECT_THROW(train_forest(ragged, cfg, {}), InvalidArgument);
  std::vector<TrainingSample> ok = {{{1.0}, "A"}, {{2.0}, "B"}};
  cfg.features_per_split = 2;
  EXPECT_THROW(train_forest(ok, cfg, {}), InvalidArgument);
  cfg.features_per_split.reset();
  cfg.tree_count = 0;
  EXPECT_THROW(train_forest(ok, cfg, {}), InvalidArgument);
  cfg.tree_count = 1;
  cfg.bootstrap_fraction = 0.0;
  EXPECT_THROW(train_forest(ok, cfg, {}), InvalidArgument);
  cfg.bootstrap_fraction = 1.0;
  EXPECT_THROW(train_forest(ok, cfg, {"a", "b"}), InvalidArgument);
}

TEST(Predict, StumpTrace) {
  const auto f = stump();
  const auto p = f.predict(std::vector<double>{0.9});
  EXPECT_EQ(p.label, "B");
  EXPECT_EQ(p.distribution, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(f.predict(std::vector<double>{0.5}).label, "A");  // threshold goes left
  EXPECT_THROW(f.predict(std::vector<double>{0.1, 0.2}), InvalidArgument);
}

TEST(Predict, TiesGoToLowestClassIndex) {
  // One leaf-only tree whose histogram ties classes 2 and 5.
  DecisionTree t;
  t.nodes = {TreeNode{-1, 0.0, -1, -1, 8, 0.0, {1, 0, 3, 0, 1, 3}}};
  ForestConfig cfg;
  cfg.tree_count = 1;
  const Forest f(cfg, {"f0"}, {"c0", "c1", "c2", "c3", "c4", "c5"}, {t});
  const auto p = f.predict(std::vector<double>{0.0});
  EXPECT_EQ(p.class_index, 2u);
  EXPECT_EQ(p.label, "c2");
}

TEST(Predict, DistributionSumsToOne) {
  const auto s = separated(50, 11);
  ForestConfig cfg;
  cfg.tree_count = 20;
  cfg.bootstrap_fraction = 0.6;
  cfg.max_depth = 2;
  const auto f = train_forest(s, cfg, {});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-6.0, 7.0);
  for (int i = 0; i < 100; ++i) {
    const auto p = f.predict(std::vector<double>{u(rng), u(rng), u(rng)});
    double sum = 0.0;
    for (double d : p.distribution) {
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      sum += d;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(FeatureImportance, OnlySplitFeatureGetsCredit) {
  const auto imp = stump().feature_importance();
  EXPECT_DOUBLE_EQ(imp.at("f0"), 1.0);

  std::vector<TrainingSample> s;
  for (int i = 0; i < 40; ++i) s.push_back({{static_cast<double>(i), 7.0}, i < 20 ? "A" : "B"});
  ForestConfig cfg;
  cfg.tree_count = 10;
  cfg.features_per_split = 2;
  const auto f = train_forest(s, cfg, {"signal", "constant"});
  const auto fi = f.feature_importance();
  EXPECT_DOUBLE_EQ(fi.at("constant"), 0.0);
  EXPECT_NEAR(fi.at("signal"), 1.0, 1e-12);
}

TEST(FeatureImportance, SumsToOneOrAllZero) {
  const auto s = separated(50, 4);
  ForestConfig cfg;
  cfg.tree_count = 10;
  const auto imp = train_forest(s, cfg, {}).feature_importance();
  double sum = 0.0;
  for (const auto& [name, v] : imp) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-9);

  std::vector<TrainingSample> same = {{{1.0}, "A"}, {{2.0}, "A"}};
  for (const auto& [name, v] : train_forest(same, cfg, {}).feature_importance()) EXPECT_EQ(v, 0.0);
}

TEST(ForestProperties, AtLeastSingleTreeAccuracyWhenOneTreeIsPerfect) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = separated(40, 100 + seed);
    ForestConfig one;
    one.tree_count = 1;
    one.features_per_split = 3;
    one.seed = seed;
    ForestConfig many = one;
    many.tree_count = 30;
    EXPECT_GE(train_forest(s, many, {}).accuracy(s), train_forest(s, one, {}).accuracy(s));
  }
}

TEST(ForestSerialization, LosslessRoundTrip) {
  const auto s = separated(40, 8);
  ForestConfig cfg;
  cfg.tree_count = 7;
  cfg.max_depth.reset();
  cfg.features_per_split = 2;
  cfg.seed = 0xFFFFFFFFFFFFFFFFULL;
  const auto f = train_forest(s, cfg, {"x", "y", "z"});
  const auto back = Forest::from_json(nlohmann::json::parse(f.to_json().dump()));
  EXPECT_EQ(back, f);

  const auto path = std::filesystem::temp_directory_path() / "promptgate_forest_test.json";
  f.save(path.string());
  EXPECT_EQ(Forest::load(path.string()), f);
  std::filesystem::remove(path);
}

TEST(ForestSerialization, RejectsCorruptDocuments) {
  auto doc = stump().to_json();
  EXPECT_NO_THROW(Forest::from_json(doc));

  auto wrong_schema = doc;
  wrong_schema["schema"] = "something-else";
  EXPECT_THROW(Forest::from_json(wrong_schema), ParseError);

  auto cycle = doc;
  cycle["trees"][0]["left"][0] = 0;
  EXPECT_THROW(Forest::from_json(cycle), ParseError);

  auto bad_feature = doc;
  bad_feature["trees"][0]["feature"][0] = 3;
  EXPECT_THROW(Forest::from_json(bad_feature), ParseError);

  EXPECT_THROW(Forest::load("/nonexistent/forest.json"), NotFound);
}

}  // namespace
}  // namespace promptgate
