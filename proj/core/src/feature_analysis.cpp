#include "promptgate/feature_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "promptgate/error.hpp"

namespace promptgate {

namespace {

std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

Matrix spearman_matrix(std::span<const std::vector<double>> columns) {
  const std::size_t d = columns.size();
  if (d == 0) return {};
  const std::size_t rows = columns.front().size();
  if (rows < 2) throw InvalidArgument("spearman_matrix needs at least 2 observations");
  std::vector<std::vector<double>> ranks;
  ranks.reserve(d);
  for (const auto& column : columns) {
    if (column.size() != rows) throw InvalidArgument("spearman_matrix: columns differ in length");
    ranks.push_back(midranks(column));
  }
  Matrix rho(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) {
    rho[i][i] = 1.0;
    for (std::size_t j = i + 1; j < d; ++j) rho[i][j] = rho[j][i] = pearson(ranks[i], ranks[j]);
  }
  return rho;
}

Dendrogram ward_cluster(const Matrix& correlations) {
  const std::size_t n = correlations.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (correlations[i].size() != n) throw InvalidArgument("ward_cluster: matrix is not square");
    if (std::abs(correlations[i][i] - 1.0) > 1e-9) throw InvalidArgument("ward_cluster: diagonal must be 1");
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(correlations[i][j] - correlations[j][i]) > 1e-12) {
        throw InvalidArgument("ward_cluster: matrix is not symmetric");
      }
    }
  }

  Dendrogram out;
  out.leaves = n;
  if (n < 2) return out;

  // Squared distances between clusters, indexed by cluster id.
  const std::size_t ids = 2 * n - 1;
  Matrix d2(ids, std::vector<double>(ids, 0.0));
  std::vector<std::size_t> size(ids, 1);
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = 1.0 - std::abs(correlations[i][j]);
      d2[i][j] = d * d;
    }
  }

  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const double d = d2[active[x]][active[y]];
        if (d < best) {
          best = d;
          bi = x;
          bj = y;
        }
      }
    }
    const std::size_t a = active[bi];
    const std::size_t b = active[bj];
    const std::size_t merged = n + step;
    size[merged] = size[a] + size[b];

    for (std::size_t k : active) {
      if (k == a || k == b) continue;
      const double na = static_cast<double>(size[a]);
      const double nb = static_cast<double>(size[b]);
      const double nk = static_cast<double>(size[k]);
      const double v = ((na + nk) * d2[k][a] + (nb + nk) * d2[k][b] - nk * d2[a][b]) / (na + nb + nk);
      d2[k][merged] = d2[merged][k] = std::max(v, 0.0);
    }
    out.merges.push_back({a, b, std::sqrt(best), size[merged]});

    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
    active.push_back(merged);
  }
  return out;
}

std::vector<std::vector<std::size_t>> cut_clusters(const Dendrogram& dendrogram, double cut_distance) {
  if (cut_distance < 0.0) throw InvalidArgument("cut distance must be non-negative");
  const std::size_t n = dendrogram.leaves;
  if (n > 0 && dendrogram.merges.size() != n - 1) throw InvalidArgument("dendrogram has the wrong merge count");

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  // Any leaf of each cluster id, used to address it in the union-find.
  std::vector<std::size_t> leaf_of(n + dendrogram.merges.size());
  std::iota(leaf_of.begin(), leaf_of.begin() + static_cast<std::ptrdiff_t>(n), std::size_t{0});
  for (std::size_t s = 0; s < dendrogram.merges.size(); ++s) {
    const auto& m = dendrogram.merges[s];
    if (m.a >= n + s || m.b >= n + s) throw InvalidArgument("dendrogram references a future cluster");
    leaf_of[n + s] = leaf_of[m.a];
    if (m.distance <= cut_distance) {
      const std::size_t ra = find(leaf_of[m.a]);
      const std::size_t rb = find(leaf_of[m.b]);
      parent[std::max(ra, rb)] = std::min(ra, rb);
    }
  }

  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> slot(n, n);
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    const std::size_t root = find(leaf);
    if (slot[root] == n) {
      slot[root] = clusters.size();
      clusters.emplace_back();
    }
    clusters[slot[root]].push_back(leaf);
  }
  return clusters;
}

std::vector<std::string> select_representatives(const Dendrogram& dendrogram, double cut_distance,
                                                std::span<const std::string> feature_names) {
  if (feature_names.size() != dendrogram.leaves) {
    throw InvalidArgument("select_representatives: feature_names size does not match the dendrogram");
  }
  std::vector<std::string> out;
  for (const auto& cluster : cut_clusters(dendrogram, cut_distance)) out.push_back(feature_names[cluster.front()]);
  return out;
}

nlohmann::json FeatureAnalysis::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : dendrogram.merges) {
    merges.push_back({{"a", m.a}, {"b", m.b}, {"distance", m.distance}, {"size", m.size}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& cluster : clusters) {
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t leaf : cluster) members.push_back(feature_names[leaf]);
    groups.push_back(members);
  }
  return {{"feature_names", feature_names}, {"spearman", spearman},   {"merges", merges},
          {"cut_distance", cut_distance},   {"clusters", groups},     {"retained", retained}};
}

FeatureAnalysis analyze_features(std::span<const std::vector<double>> columns,
                                 std::vector<std::string> feature_names, double cut_distance) {
  if (feature_names.size() != columns.size()) throw InvalidArgument("one name per column required");
  FeatureAnalysis out;
  out.feature_names = std::move(feature_names);
  out.spearman = spearman_matrix(columns);
  out.dendrogram = ward_cluster(out.spearman);
  out.cut_distance = cut_distance;
  out.clusters = cut_clusters(out.dendrogram, cut_distance);
  for (const auto& cluster : out.clusters) out.retained.push_back(out.feature_names[cluster.front()]);
  return out;
}

}  // namespace promptgate
