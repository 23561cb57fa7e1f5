#pragma once

// Cluster validity: cosine silhouette and the pseudo-F (Calinski-Harabasz)
// index.

#include <limits>
#include <map>

#include "core.hpp"

namespace narrative {

/// Mean silhouette under cosine distance. A point alone in its cluster
/// scores 0.
inline double silhouette(std::span<const FVec> points, std::span<const int> labels) {
  if (points.size() != labels.size()) throw DomainError("silhouette: points/labels length mismatch");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw DomainError("silhouette requires at least two clusters");

  const std::size_t n = points.size();
  std::vector<double> inv_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double nn = norm2(points[i]);
    if (nn == 0.0) throw DomainError("silhouette: zero vector");
    inv_norm[i] = 1.0 / nn;
  }
  // Dense label index for the per-cluster distance sums.
  std::map<int, std::size_t> slot;
  for (const auto& [l, c] : sizes) slot.emplace(l, slot.size());
  std::vector<std::size_t> lab(n), count(sizes.size());
  for (std::size_t i = 0; i < n; ++i) lab[i] = slot[labels[i]];
  for (const auto& [l, c] : sizes) count[slot[l]] = c;

  std::vector<double> dist_sum(sizes.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double sim = std::clamp(dot(points[i], points[j]) * inv_norm[i] * inv_norm[j], -1.0, 1.0);
      dist_sum[lab[j]] += 1.0 - sim;
    }
    const std::size_t own = lab[i];
    if (count[own] == 1) continue;
    const double a = dist_sum[own] / static_cast<double>(count[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count.size(); ++k)
      if (k != own) b = std::min(b, dist_sum[k] / static_cast<double>(count[k]));
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

/// Silhouette over at most max_points points drawn with a seeded RNG.
inline double sampled_silhouette(std::span<const FVec> points, std::span<const int> labels, std::size_t max_points,
                                 std::uint64_t seed) {
  if (points.size() <= max_points) return silhouette(points, labels);
  const auto idx = sample_indices(points.size(), max_points, seed);
  std::vector<FVec> p;
  std::vector<int> l;
  p.reserve(idx.size());
  l.reserve(idx.size());
  for (auto i : idx) {
    p.push_back(points[i]);
    l.push_back(labels[i]);
  }
  return silhouette(p, l);
}

/// Per-cluster sufficient statistics for the pseudo-F index.
struct ScatterStats {
  Vec sum;               // sum of member vectors
  double sum_sq = 0.0;   // sum of squared member norms
  std::size_t n = 0;

  void add(const FVec& x) {
    if (sum.empty()) sum.assign(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) sum[i] += x[i];
    sum_sq += dot(x, x);
    ++n;
  }

  void merge(const ScatterStats& o) {
    if (sum.empty()) sum.assign(o.sum.size(), 0.0);
    for (std::size_t i = 0; i < o.sum.size(); ++i) sum[i] += o.sum[i];
    sum_sq += o.sum_sq;
    n += o.n;
  }
};

/// Calinski-Harabasz from cluster statistics. Zero within-cluster scatter
/// yields +infinity.
inline double pseudo_f(std::span<const ScatterStats> clusters) {
  std::size_t k = 0, n = 0;
  std::size_t dim = 0;
  double total_sq = 0.0;
  for (const auto& c : clusters) {
    if (c.n == 0) continue;
    ++k;
    n += c.n;
    dim = c.sum.size();
    total_sq += c.sum_sq;
  }
  if (k < 2) throw DomainError("pseudo-F requires at least two clusters");
  if (n <= k) throw DomainError("pseudo-F requires more points than clusters");

  Vec grand(dim, 0.0);
  for (const auto& c : clusters)
    for (std::size_t i = 0; i < c.sum.size(); ++i) grand[i] += c.sum[i];
  for (auto& g : grand) g /= static_cast<double>(n);

  double between = 0.0, within = 0.0;
  for (const auto& c : clusters) {
    if (c.n == 0) continue;
    const double nk = static_cast<double>(c.n);
    double d2 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double m = c.sum[i] / nk;
      d2 += (m - grand[i]) * (m - grand[i]);
      s2 += c.sum[i] * c.sum[i];
    }
    between += nk * d2;
    within += c.sum_sq - s2 / nk;
  }
  // The subtraction above leaves rounding residue for identical points.
  if (within <= 1e-12 * std::max(total_sq, 1.0)) return std::numeric_limits<double>::infinity();
  return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

inline double pseudo_f(std::span<const FVec> points, std::span<const int> labels) {
  if (points.size() != labels.size()) throw DomainError("pseudo_f: points/labels length mismatch");
  std::map<int, ScatterStats> stats;
  for (std::size_t i = 0; i < points.size(); ++i) stats[labels[i]].add(points[i]);
  std::vector<ScatterStats> v;
  for (auto& [l, s] : stats) v.push_back(std::move(s));
  return pseudo_f(v);
}

}  // namespace narrative
