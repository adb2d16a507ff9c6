#pragma once

// Redundancy analysis over router features: rank correlation, Ward
// agglomerative clustering on 1 - |rho|, and one representative per cluster.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace promptgate {

using Matrix = std::vector<std::vector<double>>;

// Spearman rho between every pair of columns, midranks for ties. A constant
// column correlates 0 with every other column; the diagonal is 1.
Matrix spearman_matrix(std::span<const std::vector<double>> columns);

struct Merge {
  std::size_t a = 0;  // cluster ids; leaves are 0..n-1, merge s creates n+s
  std::size_t b = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;
};

// Ward linkage on d(i, j) = 1 - |rho(i, j)| via the Lance-Williams update on
// squared distances. Equal candidate merges resolve to the lowest (a, b).
Dendrogram ward_cluster(const Matrix& correlations);

// Clusters left after dropping every merge above `cut_distance`, each as
// leaf indices in ascending order; clusters ordered by their first leaf.
std::vector<std::vector<std::size_t>> cut_clusters(const Dendrogram& dendrogram, double cut_distance);

// The earliest feature (in `feature_names` order) of each cluster at the cut.
std::vector<std::string> select_representatives(const Dendrogram& dendrogram, double cut_distance,
                                                std::span<const std::string> feature_names);

struct FeatureAnalysis {
  std::vector<std::string> feature_names;
  Matrix spearman;
  Dendrogram dendrogram;
  double cut_distance = 0.0;
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::string> retained;

  nlohmann::json to_json() const;
};

FeatureAnalysis analyze_features(std::span<const std::vector<double>> columns,
                                 std::vector<std::string> feature_names, double cut_distance);

}  // namespace promptgate
