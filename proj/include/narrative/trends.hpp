#pragma once

// Trending-story detection: rank clusters by the change in new-member inflow
// relative to the preceding timestep.

#include "stream_cluster.hpp"

namespace narrative {

struct TrendRecord {
  ClusterId cluster_id = 0;
  int timestep = 0;
  long long delta = 0;     // inflow(t) - inflow(t-1)
  std::size_t growth = 0;  // inflow(t)
  std::size_t rank = 0;    // 1-based
};

namespace detail {
inline void rank_records(std::vector<TrendRecord>& recs) {
  std::sort(recs.begin(), recs.end(), [](const TrendRecord& a, const TrendRecord& b) {
    if (a.delta != b.delta) return a.delta > b.delta;
    if (a.growth != b.growth) return a.growth > b.growth;
    return a.cluster_id < b.cluster_id;
  });
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].rank = i + 1;
}
}  // namespace detail

/// Ranked inflow deltas for every cluster alive at t.
inline std::vector<TrendRecord> cluster_deltas(const OnlineAgglomerative& state, int t) {
  if (t < 1) throw DomainError("trend deltas need a preceding timestep (t >= 1)");
  if (t > state.current_timestep()) throw DomainError("timestep " + std::to_string(t) + " not yet clustered");
  std::vector<TrendRecord> out;
  for (const auto& c : state.clusters()) {
    if (!c.alive_at(t)) continue;
    TrendRecord r;
    r.cluster_id = c.id;
    r.timestep = t;
    r.growth = c.inflow(t);
    r.delta = static_cast<long long>(c.inflow(t)) - static_cast<long long>(c.inflow(t - 1));
    out.push_back(r);
  }
  detail::rank_records(out);
  return out;
}

inline std::vector<TrendRecord> top_trending(const OnlineAgglomerative& state, int t, std::size_t k = 5) {
  auto all = cluster_deltas(state, t);
  if (all.size() > k) all.resize(k);
  return all;
}

/// Baseline: rank alive clusters by cumulative size at t (no look-back).
inline std::vector<ClusterId> top_by_size(const OnlineAgglomerative& state, int t, std::size_t k = 5) {
  std::vector<std::pair<std::size_t, ClusterId>> v;
  for (const auto& c : state.clusters())
    if (c.alive_at(t)) v.emplace_back(c.size_at(t), c.id);
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<ClusterId> out;
  for (std::size_t i = 0; i < v.size() && i < k; ++i) out.push_back(v[i].second);
  return out;
}

/// The n_near members closest to the centroid at t (closest first), then up to
/// n_random further members drawn uniformly from the rest.
inline std::vector<DocUnit> sample_cluster(const OnlineAgglomerative& state, ClusterId id, int t,
                                           std::size_t n_near = 10, std::size_t n_random = 5,
                                           std::uint64_t seed = 7) {
  const auto& c = state.cluster(id);
  const auto members = state.members_through(id, t);
  const Vec* cen = c.centroid_at(t);
  if (members.empty() || !cen) throw DomainError("cluster " + std::to_string(id) + " has no members at t");
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(members.size());
  for (auto p : members) scored.emplace_back(dot(state.points()[p].vector, *cen), p);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<DocUnit> out;
  const std::size_t near = std::min(n_near, scored.size());
  for (std::size_t i = 0; i < near; ++i) out.push_back(state.points()[scored[i].second].unit);
  std::vector<std::size_t> rest;
  for (std::size_t i = near; i < scored.size(); ++i) rest.push_back(scored[i].second);
  std::sort(rest.begin(), rest.end());
  for (auto i : sample_indices(rest.size(), n_random, derive_seed(seed, id, static_cast<std::uint64_t>(t))))
    out.push_back(state.points()[rest[i]].unit);
  return out;
}

inline json trend_report(const OnlineAgglomerative& state, int t, std::size_t k, std::uint64_t seed) {
  json rows = json::array();
  for (const auto& r : top_trending(state, t, k)) {
    json samples = json::array();
    for (const auto& u : sample_cluster(state, r.cluster_id, t, 10, 5, seed))
      samples.push_back({{"unit_id", u.unit_id}, {"channel", u.channel_id}, {"text", u.text}});
    rows.push_back({{"rank", r.rank},
                    {"cluster_id", r.cluster_id},
                    {"delta", r.delta},
                    {"growth", r.growth},
                    {"size", state.cluster(r.cluster_id).size_at(t)},
                    {"samples", std::move(samples)}});
  }
  return json{{"timestep", t},
              {"score", "delta of per-timestep inflow (new members at t minus new members at t-1)"},
              {"trending", std::move(rows)}};
}

}  // namespace narrative
