#include "promptgate/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <utility>

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

constexpr const char* kSchema = "promptgate.forest";
constexpr int kSchemaVersion = 1;

struct Labeled {
  double value;
  std::uint32_t cls;
};

struct Split {
  std::int32_t feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<std::uint32_t>& y,
              std::size_t class_count, const ForestConfig& config, std::size_t mtry, Rng rng)
      : x_(x), y_(y), classes_(class_count), config_(config), mtry_(mtry), rng_(std::move(rng)) {}

  DecisionTree build(std::vector<std::uint32_t> sample) {
    DecisionTree tree;
    struct Pending {
      std::int32_t node;
      std::vector<std::uint32_t> rows;
      std::size_t depth;
    };
    std::vector<Pending> stack;
    tree.nodes.push_back(make_node(sample));
    stack.push_back({0, std::move(sample), 0});

    while (!stack.empty()) {
      Pending job = std::move(stack.back());
      stack.pop_back();
      const TreeNode& node = tree.nodes[static_cast<std::size_t>(job.node)];

      const bool depth_exhausted = config_.max_depth && job.depth >= *config_.max_depth;
      if (node.impurity <= 0.0 || depth_exhausted || job.rows.size() < config_.min_samples_split ||
          job.rows.size() < 2) {
        continue;
      }
      const auto split = find_split(job.rows, node.impurity);
      if (!split) continue;

      std::vector<std::uint32_t> left_rows;
      std::vector<std::uint32_t> right_rows;
      for (std::uint32_t r : job.rows) {
        (x_[r][static_cast<std::size_t>(split->feature)] <= split->threshold ? left_rows : right_rows)
            .push_back(r);
      }

      const auto left = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back(make_node(left_rows));
      const auto right = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back(make_node(right_rows));

      TreeNode& parent = tree.nodes[static_cast<std::size_t>(job.node)];
      parent.feature = split->feature;
      parent.threshold = split->threshold;
      parent.left = left;
      parent.right = right;
      parent.counts.clear();

      // Right pushed first so the left subtree is expanded first.
      stack.push_back({right, std::move(right_rows), job.depth + 1});
      stack.push_back({left, std::move(left_rows), job.depth + 1});
    }
    return tree;
  }

 private:
  TreeNode make_node(const std::vector<std::uint32_t>& rows) const {
    TreeNode node;
    node.counts.assign(classes_, 0);
    for (std::uint32_t r : rows) ++node.counts[y_[r]];
    node.samples = static_cast<std::uint32_t>(rows.size());
    node.impurity = gini(node.counts);
    return node;
  }

  std::optional<Split> find_split(const std::vector<std::uint32_t>& rows, double parent_impurity) {
    const std::size_t dims = x_.front().size();
    std::vector<std::size_t> order(dims);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = dims; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng_, i)]);

    const double n = static_cast<double>(rows.size());
    std::optional<Split> best;
    double best_score = n * parent_impurity - 1e-12;

    std::vector<Labeled> column(rows.size());
    std::size_t informative = 0;
    for (std::size_t f : order) {
      if (informative >= mtry_) break;
      for (std::size_t i = 0; i < rows.size(); ++i) column[i] = {x_[rows[i]][f], y_[rows[i]]};
      std::sort(column.begin(), column.end(),
                [](const Labeled& a, const Labeled& b) { return a.value < b.value; });
      if (column.front().value == column.back().value) continue;  // constant here
      ++informative;

      std::vector<double> left(classes_, 0.0);
      std::vector<double> right(classes_, 0.0);
      for (const auto& c : column) right[c.cls] += 1.0;
      double left_sq = 0.0;
      double right_sq = 0.0;
      for (double c : right) right_sq += c * c;

      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        const std::uint32_t cls = column[i].cls;
        left_sq += 2.0 * left[cls] + 1.0;
        left[cls] += 1.0;
        right_sq -= 2.0 * right[cls] - 1.0;
        right[cls] -= 1.0;
        if (!(column[i].value < column[i + 1].value)) continue;

        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        // n_l * (1 - sum_l^2 / n_l^2) + n_r * (1 - sum_r^2 / n_r^2)
        const double score = (nl - left_sq / nl) + (nr - right_sq / nr);
        if (score < best_score) {
          double threshold = 0.5 * (column[i].value + column[i + 1].value);
          if (!(threshold < column[i + 1].value)) threshold = column[i].value;
          best_score = score;
          best = Split{static_cast<std::int32_t>(f), threshold};
        }
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& x_;
  const std::vector<std::uint32_t>& y_;
  std::size_t classes_;
  const ForestConfig& config_;
  std::size_t mtry_;
  Rng rng_;
};

void validate_tree(const DecisionTree& tree, std::size_t dims, std::size_t classes) {
  if (tree.nodes.empty()) throw ParseError("forest: empty tree");
  const auto count = static_cast<std::int32_t>(tree.nodes.size());
  for (std::int32_t i = 0; i < count; ++i) {
    const auto& node = tree.nodes[static_cast<std::size_t>(i)];
    if (node.is_leaf()) {
      if (node.counts.size() != classes) throw ParseError("forest: leaf histogram size mismatch");
      if (std::accumulate(node.counts.begin(), node.counts.end(), std::uint64_t{0}) == 0) {
        throw ParseError("forest: empty leaf histogram");
      }
    } else {
      if (static_cast<std::size_t>(node.feature) >= dims) throw ParseError("forest: feature index out of range");
      // Children always follow their parent, which also rules out cycles.
      if (node.left <= i || node.left >= count || node.right <= i || node.right >= count) {
        throw ParseError("forest: child index out of range");
      }
    }
  }
}

}  // namespace

double gini(std::span<const std::uint32_t> counts) {
  double total = 0.0;
  double sq = 0.0;
  for (std::uint32_t c : counts) {
    total += c;
    sq += static_cast<double>(c) * c;
  }
  if (total == 0.0) return 0.0;
  return 1.0 - sq / (total * total);
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    const bool go_left = x[static_cast<std::size_t>(node->feature)] <= node->threshold;
    node = &nodes[static_cast<std::size_t>(go_left ? node->left : node->right)];
  }
  return *node;
}

Forest::Forest(ForestConfig config, std::vector<std::string> feature_names,
               std::vector<std::string> class_labels, std::vector<DecisionTree> trees)
    : config_(std::move(config)),
      feature_names_(std::move(feature_names)),
      class_labels_(std::move(class_labels)),
      trees_(std::move(trees)) {
  if (trees_.empty()) throw InvalidArgument("forest needs at least one tree");
  if (class_labels_.empty()) throw InvalidArgument("forest needs at least one class");
  for (const auto& tree : trees_) validate_tree(tree, feature_names_.size(), class_labels_.size());
}

Prediction Forest::predict(std::span<const double> features) const {
  if (features.size() != feature_names_.size()) {
    throw InvalidArgument("forest expects " + std::to_string(feature_names_.size()) +
                          " features, got " + std::to_string(features.size()));
  }
  Prediction out;
  out.distribution.assign(class_labels_.size(), 0.0);
  for (const auto& tree : trees_) {
    const TreeNode& leaf = tree.leaf_for(features);
    const double total = std::accumulate(leaf.counts.begin(), leaf.counts.end(), 0.0);
    for (std::size_t c = 0; c < leaf.counts.size(); ++c) out.distribution[c] += leaf.counts[c] / total;
  }
  const double trees = static_cast<double>(trees_.size());
  for (double& p : out.distribution) p /= trees;
  out.class_index = static_cast<std::size_t>(
      std::max_element(out.distribution.begin(), out.distribution.end()) - out.distribution.begin());
  out.label = class_labels_[out.class_index];
  return out;
}

double Forest::accuracy(std::span<const TrainingSample> samples) const {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if (predict(s.features).label == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::map<std::string, double> Forest::feature_importance() const {
  std::vector<double> total(feature_names_.size(), 0.0);
  for (const auto& tree : trees_) {
    std::vector<double> local(feature_names_.size(), 0.0);
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
      const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
      const double decrease = node.samples * node.impurity - l.samples * l.impurity - r.samples * r.impurity;
      local[static_cast<std::size_t>(node.feature)] += std::max(decrease, 0.0);
    }
    const double sum = std::accumulate(local.begin(), local.end(), 0.0);
    if (sum <= 0.0) continue;
    for (std::size_t f = 0; f < local.size(); ++f) total[f] += local[f] / sum;
  }
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  std::map<std::string, double> out;
  for (std::size_t f = 0; f < total.size(); ++f) {
    out[feature_names_[f]] = sum > 0.0 ? total[f] / sum : 0.0;
  }
  return out;
}

nlohmann::json Forest::to_json() const {
  using nlohmann::json;
  json cfg = {
      {"tree_count", config_.tree_count},
      {"max_depth", config_.max_depth ? json(*config_.max_depth) : json(nullptr)},
      {"min_samples_split", config_.min_samples_split},
      {"features_per_split", config_.features_per_split ? json(*config_.features_per_split) : json(nullptr)},
      {"bootstrap_fraction", config_.bootstrap_fraction},
      {"seed", config_.seed},
  };
  json trees = json::array();
  for (const auto& tree : trees_) {
    json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
         samples = json::array(), impurity = json::array(), counts = json::array();
    for (const auto& node : tree.nodes) {
      feature.push_back(node.feature);
      threshold.push_back(node.threshold);
      left.push_back(node.left);
      right.push_back(node.right);
      samples.push_back(node.samples);
      impurity.push_back(node.impurity);
      counts.push_back(node.counts);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"samples", samples},
                     {"impurity", impurity},
                     {"counts", counts}});
  }
  return {{"schema", kSchema},         {"version", kSchemaVersion},
          {"config", cfg},             {"feature_names", feature_names_},
          {"class_labels", class_labels_}, {"trees", trees}};
}

Forest Forest::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != kSchema) throw ParseError("forest: unexpected schema");
    if (doc.at("version").get<int>() != kSchemaVersion) throw ParseError("forest: unsupported version");
    const auto& cfg = doc.at("config");
    ForestConfig config;
    config.tree_count = cfg.at("tree_count").get<std::size_t>();
    if (!cfg.at("max_depth").is_null()) {
      config.max_depth = cfg.at("max_depth").get<std::size_t>();
    } else {
      config.max_depth.reset();
    }
    config.min_samples_split = cfg.at("min_samples_split").get<std::size_t>();
    if (!cfg.at("features_per_split").is_null()) {
      config.features_per_split = cfg.at("features_per_split").get<std::size_t>();
    }
    config.bootstrap_fraction = cfg.at("bootstrap_fraction").get<double>();
    config.seed = cfg.at("seed").get<std::uint64_t>();

    std::vector<DecisionTree> trees;
    for (const auto& t : doc.at("trees")) {
      const auto& feature = t.at("feature");
      const std::size_t count = feature.size();
      for (const char* key : {"threshold", "left", "right", "samples", "impurity", "counts"}) {
        if (t.at(key).size() != count) throw ParseError(std::string("forest: ragged node array '") + key + "'");
      }
      DecisionTree tree;
      tree.nodes.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        auto& node = tree.nodes[i];
        node.feature = feature[i].get<std::int32_t>();
        node.threshold = t["threshold"][i].get<double>();
        node.left = t["left"][i].get<std::int32_t>();
        node.right = t["right"][i].get<std::int32_t>();
        node.samples = t["samples"][i].get<std::uint32_t>();
        node.impurity = t["impurity"][i].get<double>();
        node.counts = t["counts"][i].get<std::vector<std::uint32_t>>();
      }
      trees.push_back(std::move(tree));
    }
    return Forest(config, doc.at("feature_names").get<std::vector<std::string>>(),
                  doc.at("class_labels").get<std::vector<std::string>>(), std::move(trees));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("forest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("forest: ") + e.what());
  }
}

void Forest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << to_json().dump(1) << '\n';
  if (!out) throw Error("failed writing '" + path + "'");
}

Forest Forest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open forest file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("forest '" + path + "': " + e.what());
  }
  return from_json(doc);
}

Forest train_forest(std::span<const TrainingSample> samples, const ForestConfig& config,
                    std::vector<std::string> feature_names, std::size_t threads) {
  if (samples.size() < 2) throw InvalidArgument("train_forest needs at least 2 samples");
  if (config.tree_count == 0) throw InvalidArgument("tree_count must be >= 1");
  if (!(config.bootstrap_fraction > 0.0 && config.bootstrap_fraction <= 1.0)) {
    throw InvalidArgument("bootstrap_fraction must lie in (0, 1]");
  }
  if (config.max_depth && *config.max_depth == 0) throw InvalidArgument("max_depth must be positive");
  if (config.min_samples_split == 0) throw InvalidArgument("min_samples_split must be positive");

  const std::size_t dims = samples.front().features.size();
  if (dims == 0) throw InvalidArgument("samples have no features");
  if (feature_names.empty()) {
    for (std::size_t i = 0; i < dims; ++i) feature_names.push_back("f" + std::to_string(i));
  }
  if (feature_names.size() != dims) throw InvalidArgument("feature_names size does not match sample dimension");

  std::vector<std::string> labels;
  std::unordered_map<std::string, std::uint32_t> label_index;
  std::vector<std::vector<double>> x;
  std::vector<std::uint32_t> y;
  x.reserve(samples.size());
  y.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.features.size() != dims) throw InvalidArgument("inconsistent sample dimensions");
    auto [it, inserted] = label_index.emplace(s.label, static_cast<std::uint32_t>(labels.size()));
    if (inserted) labels.push_back(s.label);
    x.push_back(s.features);
    y.push_back(it->second);
  }

  const std::size_t mtry = config.features_per_split.value_or(
      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dims)))));
  if (mtry == 0 || mtry > dims) throw InvalidArgument("features_per_split must lie in [1, d]");

  const auto n = samples.size();
  const std::size_t draw = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.bootstrap_fraction * static_cast<double>(n))));

  std::vector<DecisionTree> trees(config.tree_count);
  auto grow = [&](std::size_t t) {
    Rng rng(derive_seed(config.seed, t));
    std::vector<std::uint32_t> rows(draw);
    for (auto& r : rows) r = static_cast<std::uint32_t>(uniform_index(rng, n));
    TreeBuilder builder(x, y, labels.size(), config, mtry, std::move(rng));
    trees[t] = builder.build(std::move(rows));
  };

  std::size_t workers = threads == 0 ? std::thread::hardware_concurrency() : threads;
  workers = std::clamp<std::size_t>(workers, 1, config.tree_count);
  if (workers == 1) {
    for (std::size_t t = 0; t < config.tree_count; ++t) grow(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < config.tree_count; t = next++) grow(t);
      });
    }
  }
  return Forest(config, std::move(feature_names), std::move(labels), std::move(trees));
}

}  // namespace promptgate
