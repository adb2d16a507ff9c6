#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace promptgate {

struct ForestConfig {
  std::size_t tree_count = 100;
  // Unset means unlimited depth.
  std::optional<std::size_t> max_depth = 16;
  std::size_t min_samples_split = 2;
  // Unset means ceil(sqrt(d)) for d input features.
  std::optional<std::size_t> features_per_split;
  double bootstrap_fraction = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const ForestConfig&) const = default;
};

struct TrainingSample {
  std::vector<double> features;
  std::string label;
};

// One node of a CART tree stored in flat arrays. Leaves have feature == -1
// and carry a class-count histogram aligned with Forest::class_labels().
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t samples = 0;
  double impurity = 0.0;
  std::vector<std::uint32_t> counts;

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(std::span<const double> x) const;
  bool operator==(const DecisionTree&) const = default;
};

struct Prediction {
  std::size_t class_index = 0;
  std::string label;
  std::vector<double> distribution;  // aligned with Forest::class_labels()
};

// Random-forest classifier over dense real features. Immutable after
// training; safe for concurrent prediction.
class Forest {
 public:
  Forest(ForestConfig config, std::vector<std::string> feature_names,
         std::vector<std::string> class_labels, std::vector<DecisionTree> trees);

  const ForestConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<std::string>& class_labels() const noexcept { return class_labels_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }

  // Mean of per-tree leaf class frequencies; argmax with ties to the lowest
  // class index. Throws InvalidArgument on a dimension mismatch.
  Prediction predict(std::span<const double> features) const;

  // Fraction of samples whose predicted label equals the sample label.
  double accuracy(std::span<const TrainingSample> samples) const;

  // Mean decrease in Gini impurity per feature, normalized to sum to 1
  // (all zeros when no tree ever splits).
  std::map<std::string, double> feature_importance() const;

  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& doc);

  void save(const std::string& path) const;
  static Forest load(const std::string& path);

  bool operator==(const Forest&) const = default;

 private:
  ForestConfig config_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> class_labels_;
  std::vector<DecisionTree> trees_;
};

// Trains a bootstrap-aggregated CART forest. Class labels are ordered by
// first appearance in `samples`. Deterministic in (samples, config); the
// thread count (0 = hardware concurrency) does not change the result.
Forest train_forest(std::span<const TrainingSample> samples, const ForestConfig& config,
                    std::vector<std::string> feature_names, std::size_t threads = 1);

// Gini impurity of a class-count histogram.
double gini(std::span<const std::uint32_t> counts);

}  // namespace promptgate
