#pragma once

// OnlineAgglomerative: threshold-gated absorption of each new batch into
// existing story clusters, average-linkage clustering of the leftovers, and
// index-gated merging, with per-timestep centroid/size/membership history.

#include <map>
#include <optional>
#include <set>
#include <unordered_map>

#include "embedding.hpp"
#include "hac.hpp"
#include "validity.hpp"

namespace narrative {

using ClusterId = std::uint64_t;

struct StoryCluster {
  ClusterId id = 0;
  int born_at = 0;
  std::optional<ClusterId> merged_into;
  int merged_at = -1;

  // Sparse histories: an entry is written whenever the cluster changes. Reads
  // at a dormant timestep return the latest earlier entry.
  std::map<int, Vec> centroid_history;
  std::map<int, std::size_t> size_history;  // cumulative member count
  // Point indices that arrived at each timestep, including those carried in by
  // a merge at that timestep.
  std::map<int, std::vector<std::size_t>> members;
  std::vector<std::pair<ClusterId, int>> absorbed;  // (cluster, timestep) folded in

  ScatterStats stats;

  bool active() const { return !merged_into.has_value(); }

  /// Alive at t: born and not yet merged away.
  bool alive_at(int t) const { return born_at <= t && (!merged_into || merged_at > t); }

  Vec centroid() const { return normalized(stats.sum); }

  const Vec* centroid_at(int t) const {
    auto it = centroid_history.upper_bound(t);
    if (it == centroid_history.begin()) return nullptr;
    return &std::prev(it)->second;
  }

  std::size_t size_at(int t) const {
    auto it = size_history.upper_bound(t);
    if (it == size_history.begin()) return 0;
    return std::prev(it)->second;
  }

  std::size_t inflow(int t) const {
    auto it = members.find(t);
    return it == members.end() ? 0 : it->second.size();
  }
};

struct MergeProposal {
  ClusterId source = 0;
  ClusterId target = 0;
  int timestep = 0;
  double centroid_similarity = 0.0;
  double linkage_similarity = 0.0;
  double silhouette_before = 0.0;
  double silhouette_after = 0.0;
  double pseudo_f_before = 0.0;
  double pseudo_f_after = 0.0;
  bool indices_defined = true;  // false when the merge would leave fewer than two clusters
  bool accepted = false;
};

struct Absorption {
  std::size_t point;
  ClusterId cluster;
  double similarity;  // against the pre-update centroid
};

struct FitReport {
  int timestep = 0;
  std::size_t batch_size = 0;
  std::vector<Absorption> absorbed;
  std::vector<ClusterId> created;
  std::vector<MergeProposal> proposals;
};

struct ClusterConfig {
  double threshold = 0.85;
  double silhouette_tolerance = 0.01;
  std::size_t silhouette_sample = 512;
  std::uint64_t seed = 42;
  // Also require the average pairwise similarity between the two clusters to
  // meet the threshold, i.e. the same stopping rule batch_hac uses.
  bool linkage_gate = true;
};

/// Clustering state plus the single-writer engine that advances it.
class OnlineAgglomerative {
 public:
  explicit OnlineAgglomerative(ClusterConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.threshold > 0.0 && cfg_.threshold < 1.0)) throw DomainError("threshold must lie in (0,1)");
  }

  const ClusterConfig& config() const { return cfg_; }
  int current_timestep() const { return current_; }
  std::size_t dim() const { return dim_; }
  const std::vector<StoryCluster>& clusters() const { return clusters_; }
  const std::vector<EmbeddedUnit>& points() const { return points_; }

  const StoryCluster& cluster(ClusterId id) const {
    if (id >= clusters_.size()) throw NotFoundError("unknown cluster " + std::to_string(id));
    return clusters_[id];
  }

  bool has_cluster(ClusterId id) const { return id < clusters_.size(); }

  /// Follows merge lineage to the living cluster.
  ClusterId resolve(ClusterId id) const {
    while (clusters_.at(id).merged_into) id = *clusters_[id].merged_into;
    return id;
  }

  /// Current owner of every point (always an active cluster).
  const std::vector<ClusterId>& owners() const { return owner_; }

  std::vector<ClusterId> active_ids() const {
    std::vector<ClusterId> out;
    for (const auto& c : clusters_)
      if (c.active()) out.push_back(c.id);
    return out;
  }

  std::vector<ClusterId> alive_ids(int t) const {
    std::vector<ClusterId> out;
    for (const auto& c : clusters_)
      if (c.alive_at(t) && c.centroid_at(t)) out.push_back(c.id);
    return out;
  }

  /// All point indices owned by the cluster as of timestep t, including
  /// members inherited through merges.
  std::vector<std::size_t> members_through(ClusterId id, int t) const {
    std::vector<std::size_t> out;
    collect_members(id, t, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  FitReport incremental_fit(std::vector<EmbeddedUnit> batch) {
    const int t = current_ + 1;
    FitReport report;
    report.timestep = t;
    report.batch_size = batch.size();
    for (const auto& p : batch) {
      if (dim_ == 0) dim_ = p.vector.size();
      if (p.vector.size() != dim_)
        throw ConfigError("dimension mismatch: expected " + std::to_string(dim_) + ", got " +
                          std::to_string(p.vector.size()));
    }
    if (batch.empty()) {
      current_ = t;
      return report;
    }

    // Absorb against centroids frozen at the end of t-1.
    std::vector<std::pair<ClusterId, Vec>> centroids;
    for (const auto& c : clusters_)
      if (c.active()) centroids.emplace_back(c.id, c.centroid());

    const std::size_t base = points_.size();
    std::vector<std::size_t> leftovers;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      double best = -2.0;
      ClusterId best_id = 0;
      for (const auto& [id, cen] : centroids) {
        const double s = dot(batch[i].vector, cen);
        if (s > best) {
          best = s;
          best_id = id;
        }
      }
      if (!centroids.empty() && best >= cfg_.threshold)
        report.absorbed.push_back({base + i, best_id, best});
      else
        leftovers.push_back(i);
    }

    for (auto& p : batch) points_.push_back(std::move(p));
    owner_.resize(points_.size());
    std::set<ClusterId> touched;
    for (const auto& a : report.absorbed) {
      auto& c = clusters_[a.cluster];
      c.stats.add(points_[a.point].vector);
      c.members[t].push_back(a.point);
      owner_[a.point] = a.cluster;
      touched.insert(a.cluster);
    }

    if (!leftovers.empty()) {
      std::vector<FVec> rest;
      rest.reserve(leftovers.size());
      for (auto i : leftovers) rest.push_back(points_[base + i].vector);
      const auto labels = batch_hac(rest, cfg_.threshold);
      const int k = *std::max_element(labels.begin(), labels.end()) + 1;
      const ClusterId first = clusters_.size();
      for (int l = 0; l < k; ++l) {
        StoryCluster c;
        c.id = first + static_cast<ClusterId>(l);
        c.born_at = t;
        clusters_.push_back(std::move(c));
        report.created.push_back(first + static_cast<ClusterId>(l));
      }
      for (std::size_t j = 0; j < leftovers.size(); ++j) {
        const std::size_t p = base + leftovers[j];
        auto& c = clusters_[first + static_cast<ClusterId>(labels[j])];
        c.stats.add(points_[p].vector);
        c.members[t].push_back(p);
        owner_[p] = c.id;
        touched.insert(c.id);
      }
    }

    report.proposals = evaluate_merges(t, touched);

    for (ClusterId id : touched) {
      auto& c = clusters_[id];
      if (!c.active()) continue;
      c.centroid_history[t] = c.centroid();
      c.size_history[t] = c.stats.n;
    }
    current_ = t;
    return report;
  }

  /// Proposes merges between active clusters whose centroids are at least
  /// threshold-similar, strongest first, and accepts those that do not hurt
  /// either validity index. Clusters changed by a merge are added to touched.
  std::vector<MergeProposal> evaluate_merges(int t, std::set<ClusterId>& touched) {
    std::vector<MergeProposal> out;
    std::set<std::pair<ClusterId, ClusterId>> evaluated;
    std::size_t round = 0;
    for (;;) {
      auto active = active_ids();
      if (active.size() < 2) break;
      std::vector<Vec> cen;
      cen.reserve(active.size());
      for (auto id : active) cen.push_back(clusters_[id].centroid());
      struct Pair {
        double sim;
        ClusterId a, b;
      };
      std::vector<Pair> pairs;
      for (std::size_t i = 0; i < active.size(); ++i)
        for (std::size_t j = i + 1; j < active.size(); ++j) {
          if (evaluated.count({active[i], active[j]})) continue;
          const double s = dot(cen[i], cen[j]);
          if (s >= cfg_.threshold) pairs.push_back({s, active[i], active[j]});
        }
      if (pairs.empty()) break;
      const auto best = *std::min_element(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
        if (x.sim != y.sim) return x.sim > y.sim;
        return std::pair{x.a, x.b} < std::pair{y.a, y.b};
      });
      evaluated.insert({best.a, best.b});
      auto proposal = assess_merge(best.a, best.b, best.sim, t, round++);
      out.push_back(proposal);
      if (!proposal.accepted) continue;
      apply_merge(proposal.source, proposal.target, t);
      touched.insert(proposal.target);
      // The target moved; its pairs need a fresh look.
      for (auto it = evaluated.begin(); it != evaluated.end();)
        it = (it->first == proposal.target || it->second == proposal.target) ? evaluated.erase(it) : std::next(it);
    }
    return out;
  }

  std::vector<MergeProposal> evaluate_merges(int t) {
    std::set<ClusterId> touched;
    auto out = evaluate_merges(t, touched);
    for (ClusterId id : touched) {
      auto& c = clusters_[id];
      c.centroid_history[t] = c.centroid();
      c.size_history[t] = c.stats.n;
    }
    return out;
  }

  /// Installs a new cluster holding the given units, born at t. Used to plant
  /// known structure (fixtures, imports) without going through absorption.
  ClusterId adopt_cluster(const std::vector<EmbeddedUnit>& units, int t) {
    StoryCluster c;
    c.id = clusters_.size();
    c.born_at = t;
    for (const auto& u : units) {
      if (dim_ == 0) dim_ = u.vector.size();
      if (u.vector.size() != dim_) throw ConfigError("dimension mismatch");
      points_.push_back(u);
      owner_.push_back(c.id);
      c.stats.add(u.vector);
      c.members[t].push_back(points_.size() - 1);
    }
    c.centroid_history[t] = c.centroid();
    c.size_history[t] = c.stats.n;
    clusters_.push_back(std::move(c));
    current_ = std::max(current_, t);
    return clusters_.back().id;
  }

  // -------------------------------------------------------------------------
  // Diagnostics

  struct Cohesion {
    double own = 0.0;    // mean similarity of each point to its own centroid
    double other = 0.0;  // mean similarity of each point to other active centroids
  };

  /// Over the points and clusters alive at t.
  Cohesion cohesion(int t) const {
    std::vector<std::pair<ClusterId, const Vec*>> cen;
    for (const auto& c : clusters_)
      if (c.alive_at(t))
        if (const Vec* v = c.centroid_at(t)) cen.emplace_back(c.id, v);
    Cohesion out;
    if (cen.empty()) return out;
    std::size_t n = 0, n_other = 0;
    for (const auto& [id, v] : cen) {
      for (auto p : members_through(id, t)) {
        out.own += dot(points_[p].vector, *v);
        ++n;
        if (cen.size() < 2) continue;
        double s = 0.0;
        for (const auto& [oid, ov] : cen)
          if (oid != id) s += dot(points_[p].vector, *ov);
        out.other += s / static_cast<double>(cen.size() - 1);
        ++n_other;
      }
    }
    if (n) out.own /= static_cast<double>(n);
    if (n_other) out.other /= static_cast<double>(n_other);
    return out;
  }

  // -------------------------------------------------------------------------
  // Persistence

  /// Snapshot record for timestep t: clusters alive at t, plus those merged
  /// away at t with their merge target.
  json snapshot(int t) const {
    json clusters = json::array();
    for (const auto& c : clusters_) {
      const bool merged_now = c.merged_into && c.merged_at == t;
      if (!(c.alive_at(t) || merged_now) || !c.centroid_at(t)) continue;
      clusters.push_back({{"id", c.id},
                          {"size", c.size_at(t)},
                          {"centroid", *c.centroid_at(t)},
                          {"born_at", c.born_at},
                          {"status", merged_now ? "merged-into:" + std::to_string(*c.merged_into) : "active"}});
    }
    return json{{"timestep", t}, {"clusters", std::move(clusters)}};
  }

  /// Assignment log rows for points that arrived at t.
  std::vector<json> assignments(int t) const {
    std::vector<json> rows;
    for (const auto& c : clusters_) {
      auto it = c.members.find(t);
      if (it == c.members.end()) continue;
      for (auto p : it->second)
        rows.push_back({{"unit_id", points_[p].unit.unit_id}, {"cluster_id", c.id}, {"timestep", t}});
    }
    std::sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
      return a["unit_id"].get<std::string>() < b["unit_id"].get<std::string>();
    });
    return rows;
  }

  /// Complete engine state except point vectors, which are referenced by
  /// unit_id and re-supplied on restore.
  json checkpoint() const {
    json pts = json::array();
    for (const auto& p : points_) pts.push_back(p.unit.unit_id);
    json cl = json::array();
    for (const auto& c : clusters_) {
      json cen = json::object(), sz = json::object(), mem = json::object();
      for (const auto& [t, v] : c.centroid_history) cen[std::to_string(t)] = v;
      for (const auto& [t, n] : c.size_history) sz[std::to_string(t)] = n;
      for (const auto& [t, m] : c.members) mem[std::to_string(t)] = m;
      json abs = json::array();
      for (const auto& [id, t] : c.absorbed) abs.push_back({id, t});
      cl.push_back({{"id", c.id},
                    {"born_at", c.born_at},
                    {"merged_into", c.merged_into ? json(*c.merged_into) : json(nullptr)},
                    {"merged_at", c.merged_at},
                    {"centroid_history", std::move(cen)},
                    {"size_history", std::move(sz)},
                    {"members", std::move(mem)},
                    {"absorbed", std::move(abs)},
                    {"sum", c.stats.sum},
                    {"sum_sq", c.stats.sum_sq},
                    {"n", c.stats.n}});
    }
    return json{{"threshold", cfg_.threshold},
                {"current_timestep", current_},
                {"dim", dim_},
                {"points", std::move(pts)},
                {"owners", owner_},
                {"clusters", std::move(cl)}};
  }

  /// Rebuilds state from a checkpoint; lookup maps unit_id to its embedded unit.
  template <typename Lookup>
  static OnlineAgglomerative restore(const json& j, ClusterConfig cfg, Lookup&& lookup) {
    if (j.at("threshold").get<double>() != cfg.threshold)
      throw ConfigError("checkpoint threshold differs from configuration");
    OnlineAgglomerative eng(cfg);
    eng.current_ = j.at("current_timestep").get<int>();
    eng.dim_ = j.at("dim").get<std::size_t>();
    for (const auto& id : j.at("points")) eng.points_.push_back(lookup(id.get<std::string>()));
    eng.owner_ = j.at("owners").get<std::vector<ClusterId>>();
    if (eng.owner_.size() != eng.points_.size()) throw IntegrityError("checkpoint owner table size mismatch");
    for (const auto& cj : j.at("clusters")) {
      StoryCluster c;
      c.id = cj.at("id").get<ClusterId>();
      if (c.id != eng.clusters_.size()) throw IntegrityError("checkpoint cluster ids are not dense");
      c.born_at = cj.at("born_at").get<int>();
      if (!cj.at("merged_into").is_null()) c.merged_into = cj.at("merged_into").get<ClusterId>();
      c.merged_at = cj.at("merged_at").get<int>();
      for (const auto& [k, v] : cj.at("centroid_history").items()) c.centroid_history[std::stoi(k)] = v.template get<Vec>();
      for (const auto& [k, v] : cj.at("size_history").items()) c.size_history[std::stoi(k)] = v.template get<std::size_t>();
      for (const auto& [k, v] : cj.at("members").items())
        c.members[std::stoi(k)] = v.template get<std::vector<std::size_t>>();
      for (const auto& a : cj.at("absorbed")) c.absorbed.emplace_back(a.at(0).get<ClusterId>(), a.at(1).get<int>());
      c.stats.sum = cj.at("sum").get<Vec>();
      c.stats.sum_sq = cj.at("sum_sq").get<double>();
      c.stats.n = cj.at("n").get<std::size_t>();
      eng.clusters_.push_back(std::move(c));
    }
    return eng;
  }

 private:
  void collect_members(ClusterId id, int t, std::vector<std::size_t>& out) const {
    const auto& c = clusters_.at(id);
    for (const auto& [ts, m] : c.members) {
      if (ts > t) break;
      out.insert(out.end(), m.begin(), m.end());
    }
    for (const auto& [src, ts] : c.absorbed)
      if (ts <= t) collect_members(src, ts - 1, out);
  }

  MergeProposal assess_merge(ClusterId a, ClusterId b, double centroid_sim, int t, std::size_t round) const {
    const auto& ca = clusters_[a];
    const auto& cb = clusters_[b];
    MergeProposal p;
    p.timestep = t;
    p.centroid_similarity = centroid_sim;
    // Fold the smaller into the larger; equal sizes fold into the lower id.
    if (ca.stats.n > cb.stats.n || (ca.stats.n == cb.stats.n && a < b)) {
      p.target = a;
      p.source = b;
    } else {
      p.target = b;
      p.source = a;
    }
    p.linkage_similarity = dot(ca.stats.sum, cb.stats.sum) /
                           (static_cast<double>(ca.stats.n) * static_cast<double>(cb.stats.n));
    const bool linkage_ok = !cfg_.linkage_gate || p.linkage_similarity >= cfg_.threshold;

    std::vector<ScatterStats> before, after;
    ScatterStats merged;
    for (const auto& c : clusters_) {
      if (!c.active()) continue;
      before.push_back(c.stats);
      if (c.id == a || c.id == b)
        merged.merge(c.stats);
      else
        after.push_back(c.stats);
    }
    after.push_back(merged);

    const auto sample = sample_indices(points_.size(), cfg_.silhouette_sample, derive_seed(cfg_.seed, t, round));
    std::vector<FVec> pts;
    std::vector<int> lab_before, lab_after;
    std::set<int> distinct_before, distinct_after;
    for (auto i : sample) {
      pts.push_back(points_[i].vector);
      const auto o = static_cast<int>(owner_[i]);
      const int oa = o == static_cast<int>(p.source) ? static_cast<int>(p.target) : o;
      lab_before.push_back(o);
      lab_after.push_back(oa);
      distinct_before.insert(o);
      distinct_after.insert(oa);
    }

    std::size_t n_points = 0;
    for (const auto& s : before) n_points += s.n;
    p.indices_defined = after.size() >= 2 && distinct_before.size() >= 2 && distinct_after.size() >= 2 &&
                        n_points > before.size();
    if (!p.indices_defined) {
      p.accepted = linkage_ok;
      return p;
    }
    p.silhouette_before = silhouette(pts, lab_before);
    p.silhouette_after = silhouette(pts, lab_after);
    p.pseudo_f_before = pseudo_f(before);
    p.pseudo_f_after = pseudo_f(after);
    p.accepted = linkage_ok && p.silhouette_after >= p.silhouette_before - cfg_.silhouette_tolerance &&
                 p.pseudo_f_after >= p.pseudo_f_before;
    return p;
  }

  void apply_merge(ClusterId source, ClusterId target, int t) {
    auto& src = clusters_[source];
    auto& dst = clusters_[target];
    dst.stats.merge(src.stats);
    if (auto it = src.members.find(t); it != src.members.end()) {
      auto& m = dst.members[t];
      m.insert(m.end(), it->second.begin(), it->second.end());
      src.members.erase(it);
    }
    dst.absorbed.emplace_back(source, t);
    src.merged_into = target;
    src.merged_at = t;
    for (auto& o : owner_)
      if (o == source) o = target;
  }

  ClusterConfig cfg_;
  std::vector<StoryCluster> clusters_;
  std::vector<EmbeddedUnit> points_;
  std::vector<ClusterId> owner_;
  std::size_t dim_ = 0;
  int current_ = -1;
};

}  // namespace narrative
