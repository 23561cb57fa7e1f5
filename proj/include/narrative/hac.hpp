#pragma once

// Average-linkage agglomerative clustering under cosine similarity, cut at a
// similarity threshold.

#include <numeric>

#include "core.hpp"

namespace narrative {

struct Merge {
  std::size_t a, b;   // representative point indices
  double similarity;  // average pairwise cosine similarity at merge time
};

/// Full average-linkage dendrogram via the nearest-neighbour chain. Average
/// linkage is reducible, so this yields the same merges as greedy
/// closest-pair agglomeration (up to exact ties) in O(n^2) time.
inline std::vector<Merge> average_linkage_dendrogram(std::span<const FVec> points) {
  const std::size_t n = points.size();
  std::vector<Merge> merges;
  if (n < 2) return merges;
  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    sim[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) sim[i * n + j] = sim[j * n + i] = dot(points[i], points[j]);
  }
  std::vector<std::size_t> size(n, 1);
  std::vector<char> alive(n, 1);
  std::vector<std::size_t> chain;
  chain.reserve(n);
  std::size_t remaining = n;
  std::size_t next_start = 0;

  while (remaining > 1) {
    if (chain.empty()) {
      while (!alive[next_start]) ++next_start;
      chain.push_back(next_start);
    }
    const std::size_t c = chain.back();
    const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
    std::size_t best = n;
    double best_sim = -std::numeric_limits<double>::infinity();
    if (prev != n) {
      best = prev;
      best_sim = sim[c * n + prev];
    }
    for (std::size_t x = 0; x < n; ++x) {
      if (!alive[x] || x == c) continue;
      const double s = sim[c * n + x];
      if (s > best_sim) {
        best_sim = s;
        best = x;
      }
    }
    if (best != prev) {
      chain.push_back(best);
      continue;
    }
    // Reciprocal nearest neighbours: merge c and prev into the lower index.
    chain.pop_back();
    chain.pop_back();
    const std::size_t keep = std::min(c, prev), drop = std::max(c, prev);
    merges.push_back({keep, drop, best_sim});
    const double wk = static_cast<double>(size[keep]), wd = static_cast<double>(size[drop]);
    for (std::size_t x = 0; x < n; ++x) {
      if (!alive[x] || x == keep || x == drop) continue;
      const double s = (wk * sim[keep * n + x] + wd * sim[drop * n + x]) / (wk + wd);
      sim[keep * n + x] = sim[x * n + keep] = s;
    }
    size[keep] += size[drop];
    alive[drop] = 0;
    --remaining;
  }
  return merges;
}

/// Cluster labels 0..k-1, numbered by first occurrence. Merging stops once the
/// closest pair of clusters has average similarity below the threshold.
inline std::vector<int> batch_hac(std::span<const FVec> points, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("threshold must lie in (0,1)");
  const std::size_t n = points.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  // Heights are monotone under average linkage, so the merges above the cut
  // are closed under descendants.
  for (const auto& m : average_linkage_dendrogram(points))
    if (m.similarity >= threshold) parent[find(m.b)] = find(m.a);

  std::vector<int> labels(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    labels[i] = root_label[r];
  }
  return labels;
}

}  // namespace narrative
