#pragma once

// Channel reference network and seed-guided label propagation.

#include <set>

#include "ingest.hpp"

namespace narrative {

inline const std::string kUnlabeled = "unlabeled";

struct ReferenceGraph {
  std::set<std::string> nodes;
  std::map<std::pair<std::string, std::string>, std::int64_t> edges;  // (from, to) -> w

  void add(const std::string& from, const std::string& to, std::int64_t w = 1) {
    nodes.insert(from);
    nodes.insert(to);
    if (from == to) return;
    edges[{from, to}] += w;
  }
};

/// One edge increment per forward or reference event.
inline ReferenceGraph build_reference_graph(const std::vector<RawPost>& posts) {
  ReferenceGraph g;
  for (const auto& p : posts) {
    g.nodes.insert(p.channel_id);
    if (p.forwarded_from) g.add(p.channel_id, *p.forwarded_from);
    for (const auto& r : p.referenced_channels) g.add(p.channel_id, r);
  }
  return g;
}

struct PartitionLabel {
  std::string channel_id;
  std::string label = kUnlabeled;
  bool seed = false;
};

struct Propagation {
  std::map<std::string, PartitionLabel> labels;
  int rounds = 0;
  bool converged = false;
};

namespace detail {

struct Adjacency {
  std::vector<std::string> names;
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> nbrs;
};

inline Adjacency symmetrize(const ReferenceGraph& g) {
  Adjacency a;
  a.names.assign(g.nodes.begin(), g.nodes.end());
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < a.names.size(); ++i) idx[a.names[i]] = i;
  std::map<std::pair<std::size_t, std::size_t>, std::int64_t> w;
  for (const auto& [e, weight] : g.edges) {
    auto u = idx.at(e.first), v = idx.at(e.second);
    if (u > v) std::swap(u, v);
    w[{u, v}] += weight;
  }
  a.nbrs.resize(a.names.size());
  for (const auto& [e, weight] : w) {
    a.nbrs[e.first].emplace_back(e.second, weight);
    a.nbrs[e.second].emplace_back(e.first, weight);
  }
  return a;
}

}  // namespace detail

/// Synchronous weighted label propagation on the symmetrized graph. Seeds are
/// fixed. A node keeps its label when it is among the tied maxima; other ties
/// go to a draw seeded from (rng_seed, node name, round).
inline Propagation propagate_labels(const ReferenceGraph& g, const std::map<std::string, std::string>& seeds,
                                    int max_iters = 100, std::uint64_t rng_seed = 0) {
  if (seeds.empty()) throw DomainError("label propagation needs at least one seed");
  for (const auto& [ch, label] : seeds) {
    if (!g.nodes.count(ch)) throw DomainError("seed channel '" + ch + "' is not a graph node");
    if (label == kUnlabeled) throw DomainError("seed label may not be '" + kUnlabeled + "'");
  }
  const auto adj = detail::symmetrize(g);
  const std::size_t n = adj.names.size();

  std::vector<std::string> classes;
  for (const auto& [ch, label] : seeds) classes.push_back(label);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  auto class_of = [&](const std::string& l) {
    return static_cast<int>(std::lower_bound(classes.begin(), classes.end(), l) - classes.begin());
  };

  std::vector<int> cur(n, -1);
  std::vector<char> is_seed(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (auto it = seeds.find(adj.names[i]); it != seeds.end()) {
      cur[i] = class_of(it->second);
      is_seed[i] = 1;
    }

  Propagation out;
  std::vector<std::int64_t> tally(classes.size());
  for (int round = 1; round <= max_iters; ++round) {
    std::vector<int> next = cur;
    for (std::size_t u = 0; u < n; ++u) {
      if (is_seed[u]) continue;
      std::fill(tally.begin(), tally.end(), 0);
      bool any = false;
      for (const auto& [v, w] : adj.nbrs[u])
        if (cur[v] >= 0) {
          tally[static_cast<std::size_t>(cur[v])] += w;
          any = true;
        }
      if (!any) continue;
      const auto best = *std::max_element(tally.begin(), tally.end());
      std::vector<int> tied;
      for (std::size_t c = 0; c < tally.size(); ++c)
        if (tally[c] == best) tied.push_back(static_cast<int>(c));
      if (cur[u] >= 0 && std::find(tied.begin(), tied.end(), cur[u]) != tied.end()) continue;
      if (tied.size() == 1) {
        next[u] = tied[0];
      } else {
        Rng rng(derive_seed(rng_seed, fnv1a64(adj.names[u]), static_cast<std::uint64_t>(round)));
        next[u] = tied[rng.index(tied.size())];
      }
    }
    out.rounds = round;
    if (next == cur) {
      out.converged = true;
      break;
    }
    cur = std::move(next);
  }
  for (std::size_t i = 0; i < n; ++i)
    out.labels[adj.names[i]] = {adj.names[i], cur[i] < 0 ? kUnlabeled : classes[static_cast<std::size_t>(cur[i])],
                                is_seed[i] != 0};
  return out;
}

struct PartitionSample {
  std::vector<std::string> channels;
  bool short_class = false;  // fewer members than requested
};

inline PartitionSample partition_sample(const std::map<std::string, PartitionLabel>& partition, const std::string& label,
                                        std::size_t n = 75, std::uint64_t seed = 0) {
  std::vector<std::string> members;
  for (const auto& [ch, pl] : partition)
    if (pl.label == label) members.push_back(ch);
  PartitionSample s;
  s.short_class = members.size() < n;
  for (auto i : sample_indices(members.size(), n, seed)) s.channels.push_back(members[i]);
  return s;
}

// JSONL records

inline std::vector<json> graph_to_jsonl(const ReferenceGraph& g) {
  std::vector<json> rows;
  for (const auto& [e, w] : g.edges) rows.push_back({{"from", e.first}, {"to", e.second}, {"w", w}});
  return rows;
}

inline ReferenceGraph graph_from_jsonl(const std::vector<json>& rows) {
  ReferenceGraph g;
  for (const auto& r : rows) {
    const auto w = r.at("w").get<std::int64_t>();
    if (w <= 0) throw ParseError("edge weight must be positive", r.dump());
    g.add(r.at("from").get<std::string>(), r.at("to").get<std::string>(), w);
  }
  return g;
}

inline std::map<std::string, std::string> seeds_from_jsonl(const std::vector<json>& rows) {
  std::map<std::string, std::string> seeds;
  for (const auto& r : rows) seeds[r.at("channel").get<std::string>()] = r.at("label").get<std::string>();
  return seeds;
}

inline std::vector<json> partition_to_jsonl(const std::map<std::string, PartitionLabel>& p) {
  std::vector<json> rows;
  for (const auto& [ch, pl] : p) rows.push_back({{"channel", ch}, {"label", pl.label}, {"seed", pl.seed}});
  return rows;
}

inline std::map<std::string, PartitionLabel> partition_from_jsonl(const std::vector<json>& rows) {
  std::map<std::string, PartitionLabel> p;
  for (const auto& r : rows) {
    PartitionLabel pl{r.at("channel").get<std::string>(), r.at("label").get<std::string>(), r.value("seed", false)};
    p[pl.channel_id] = pl;
  }
  return p;
}

}  // namespace narrative
