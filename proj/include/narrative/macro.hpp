#pragma once

// Narrative clusters: an analyst-approved set of seed story clusters whose
// mean centroid moves through time and pulls in nearby story clusters.

#include <deque>
#include <set>

#include "stream_cluster.hpp"

namespace narrative {

enum class Decision { pending, approved, rejected };

inline std::string to_string(Decision d) {
  switch (d) {
    case Decision::approved: return "approved";
    case Decision::rejected: return "rejected";
    default: return "pending";
  }
}

inline Decision parse_decision(std::string_view s) {
  if (s == "approved" || s == "approve") return Decision::approved;
  if (s == "rejected" || s == "reject") return Decision::rejected;
  if (s == "pending") return Decision::pending;
  throw DomainError("unknown decision '" + std::string(s) + "'");
}

struct Band {
  double low = 0.7;
  double high = 0.8;
  bool contains(double s) const { return s >= low && s <= high; }
};

struct NarrativeDefinition {
  std::string id;
  std::string name;
  ClusterId initial_seed = 0;
  Band band;
  double attach_threshold = 0.7;
  bool size_weighted = false;
};

struct SeedCandidate {
  ClusterId cluster_id = 0;
  int discovered_at = 0;
  ClusterId via = 0;
  double similarity_to_frontier = 0.0;
  Decision decision = Decision::pending;
  std::optional<std::string> reviewer;
  std::optional<std::string> decided_at;
};

struct DecisionRecord {
  std::string narrative;
  ClusterId cluster = 0;
  Decision decision = Decision::pending;
  std::string reviewer;
  std::string at;
};

class NarrativeCluster {
 public:
  NarrativeCluster(const OnlineAgglomerative& state, NarrativeDefinition def) : def_(std::move(def)) {
    if (!state.has_cluster(def_.initial_seed))
      throw NotFoundError("unknown seed cluster " + std::to_string(def_.initial_seed));
    if (!state.cluster(def_.initial_seed).active())
      throw DomainError("seed cluster " + std::to_string(def_.initial_seed) + " is not active");
    if (def_.band.low > def_.band.high) throw DomainError("band low exceeds band high");
    approved_.insert(def_.initial_seed);
  }

  const NarrativeDefinition& definition() const { return def_; }
  const std::set<ClusterId>& approved_seeds() const { return approved_; }
  const std::vector<SeedCandidate>& candidates() const { return candidates_; }
  const std::map<int, Vec>& centroid_history() const { return centroid_history_; }
  const std::map<int, std::set<ClusterId>>& attached() const { return attached_; }

  const SeedCandidate& candidate(ClusterId cluster) const {
    for (const auto& c : candidates_)
      if (c.cluster_id == cluster) return c;
    throw NotFoundError("no candidate " + std::to_string(cluster) + " in narrative " + def_.id);
  }

  /// Breadth-first discovery from the approved seeds and pending candidates:
  /// any cluster alive at t within the band of a frontier member is queued
  /// once. Returns the newly queued candidates.
  std::vector<SeedCandidate> enqueue_candidates(const OnlineAgglomerative& state, int t) {
    std::set<ClusterId> seen(approved_.begin(), approved_.end());
    std::deque<ClusterId> queue(approved_.begin(), approved_.end());
    for (const auto& c : candidates_) {
      seen.insert(c.cluster_id);
      if (c.decision == Decision::pending) queue.push_back(c.cluster_id);
    }
    const auto alive = state.alive_ids(t);
    std::vector<SeedCandidate> added;
    while (!queue.empty()) {
      const ClusterId f = queue.front();
      queue.pop_front();
      const Vec* fc = state.cluster(f).centroid_at(t);
      if (!fc) continue;
      for (ClusterId x : alive) {
        if (seen.count(x)) continue;
        const double s = dot(*fc, *state.cluster(x).centroid_at(t));
        if (!def_.band.contains(s)) continue;
        SeedCandidate c;
        c.cluster_id = x;
        c.discovered_at = t;
        c.via = f;
        c.similarity_to_frontier = s;
        seen.insert(x);
        queue.push_back(x);
        candidates_.push_back(c);
        added.push_back(c);
      }
    }
    return added;
  }

  /// Re-registers a previously discovered candidate (replay from disk).
  void restore_candidate(const SeedCandidate& c) {
    for (const auto& existing : candidates_)
      if (existing.cluster_id == c.cluster_id) throw ConflictError("candidate already present");
    candidates_.push_back(c);
  }

  void record_decision(ClusterId cluster, Decision d, const std::string& reviewer, const std::string& at = {}) {
    if (d == Decision::pending) throw DomainError("a decision must be approved or rejected");
    auto it = std::find_if(candidates_.begin(), candidates_.end(),
                           [&](const SeedCandidate& c) { return c.cluster_id == cluster; });
    if (it == candidates_.end())
      throw NotFoundError("no candidate " + std::to_string(cluster) + " in narrative " + def_.id);
    if (it->decision != Decision::pending)
      throw ConflictError("candidate " + std::to_string(cluster) + " already " + to_string(it->decision));
    it->decision = d;
    it->reviewer = reviewer;
    if (!at.empty()) it->decided_at = at;
    if (d == Decision::approved) approved_.insert(cluster);
  }

  /// 20 uniform members of the candidate cluster as of its discovery timestep.
  std::vector<DocUnit> review_sample(const OnlineAgglomerative& state, ClusterId cluster, std::size_t n = 20,
                                     std::uint64_t seed = 11) const {
    const auto& c = candidate(cluster);
    const auto members = state.members_through(cluster, c.discovered_at);
    if (members.empty()) throw DomainError("candidate cluster has no members");
    std::vector<DocUnit> out;
    for (auto i : sample_indices(members.size(), n, derive_seed(seed, cluster, static_cast<std::uint64_t>(c.discovered_at))))
      out.push_back(state.points()[members[i]].unit);
    return out;
  }

  /// Normalized mean of the approved seeds' centroids at t (last known value
  /// for seeds that are dormant or merged away).
  Vec narrative_centroid(const OnlineAgglomerative& state, int t) const {
    Vec acc;
    bool any = false;
    for (ClusterId s : approved_) {
      const auto& c = state.cluster(s);
      const Vec* v = c.centroid_at(t);
      if (!v) continue;
      const double w = def_.size_weighted ? static_cast<double>(c.size_at(t)) : 1.0;
      if (acc.empty()) acc.assign(v->size(), 0.0);
      for (std::size_t i = 0; i < v->size(); ++i) acc[i] += w * (*v)[i];
      any = true;
    }
    if (!any) throw DomainError("no seed of narrative " + def_.id + " has a centroid at or before t");
    return normalized(acc);
  }

  /// Attaches every cluster alive at t whose centroid is within
  /// attach_threshold of the narrative centroid, plus every approved seed
  /// alive at t; records both.
  std::set<ClusterId> attach_clusters(const OnlineAgglomerative& state, int t) {
    const Vec cen = narrative_centroid(state, t);
    std::set<ClusterId> out;
    for (ClusterId id : state.alive_ids(t))
      if (approved_.count(id) || dot(cen, *state.cluster(id).centroid_at(t)) >= def_.attach_threshold) out.insert(id);
    centroid_history_[t] = cen;
    attached_[t] = out;
    return out;
  }

  /// Recomputes centroid and attachments for every timestep in [from, to]
  /// where some seed has a centroid.
  void recompute(const OnlineAgglomerative& state, int from, int to) {
    for (int t = from; t <= to; ++t) {
      bool has = false;
      for (ClusterId s : approved_) has = has || state.cluster(s).centroid_at(t) != nullptr;
      if (has) attach_clusters(state, t);
    }
  }

  /// Point indices of units in attached clusters, per timestep.
  std::map<int, std::vector<std::size_t>> units_by_timestep(const OnlineAgglomerative& state) const {
    std::map<int, std::vector<std::size_t>> out;
    for (const auto& [t, ids] : attached_) {
      auto& v = out[t];
      for (ClusterId id : ids) {
        auto it = state.cluster(id).members.find(t);
        if (it != state.cluster(id).members.end()) v.insert(v.end(), it->second.begin(), it->second.end());
      }
      std::sort(v.begin(), v.end());
    }
    return out;
  }

  std::vector<std::size_t> units(const OnlineAgglomerative& state) const {
    std::vector<std::size_t> out;
    for (auto& [t, v] : units_by_timestep(state)) out.insert(out.end(), v.begin(), v.end());
    return out;
  }

  json centroid_series_json() const {
    json rows = json::array();
    for (const auto& [t, v] : centroid_history_) {
      const auto& att = attached_.at(t);
      rows.push_back({{"timestep", t}, {"centroid", v}, {"attached", std::vector<ClusterId>(att.begin(), att.end())}});
    }
    return rows;
  }

  /// Full state, for workspace snapshots.
  json to_json() const;
  static NarrativeCluster from_json(const json& j);

 private:
  NarrativeCluster() = default;

  NarrativeDefinition def_;
  std::set<ClusterId> approved_;
  std::vector<SeedCandidate> candidates_;
  std::map<int, Vec> centroid_history_;
  std::map<int, std::set<ClusterId>> attached_;
};

struct NarrativeSeries {
  std::map<int, std::size_t> per_timestep;
  std::map<std::int64_t, std::size_t> per_day;  // day index since epoch

  std::map<int, double> normalized_timesteps() const {
    std::size_t mx = 0;
    for (const auto& [t, v] : per_timestep) mx = std::max(mx, v);
    std::map<int, double> out;
    for (const auto& [t, v] : per_timestep) out[t] = mx ? static_cast<double>(v) / static_cast<double>(mx) : 0.0;
    return out;
  }
};

/// Post counts of units in attached clusters (the members arriving at each
/// timestep), per timestep from first to last clustered timestep.
inline NarrativeSeries narrative_series(const NarrativeCluster& n, const OnlineAgglomerative& state) {
  NarrativeSeries s;
  for (int t = 0; t <= state.current_timestep(); ++t) s.per_timestep[t] = 0;
  for (const auto& [t, idx] : n.units_by_timestep(state)) {
    s.per_timestep[t] = idx.size();
    for (auto i : idx) ++s.per_day[day_index(state.points()[i].unit.timestamp)];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Records

inline json definition_to_json(const NarrativeDefinition& d) {
  return json{{"id", d.id},
              {"name", d.name},
              {"initial_seed", d.initial_seed},
              {"band", {d.band.low, d.band.high}},
              {"attach_threshold", d.attach_threshold},
              {"size_weighted", d.size_weighted}};
}

inline NarrativeDefinition definition_from_json(const json& j) {
  NarrativeDefinition d;
  d.name = j.at("name").get<std::string>();
  d.id = j.value("id", d.name);
  d.initial_seed = j.at("initial_seed").get<ClusterId>();
  if (auto it = j.find("band"); it != j.end()) d.band = {it->at(0).get<double>(), it->at(1).get<double>()};
  d.attach_threshold = j.value("attach_threshold", 0.7);
  d.size_weighted = j.value("size_weighted", false);
  return d;
}

inline json candidate_to_json(const std::string& narrative, const SeedCandidate& c) {
  return json{{"narrative", narrative},
              {"cluster", c.cluster_id},
              {"discovered_at", c.discovered_at},
              {"via", c.via},
              {"similarity", c.similarity_to_frontier}};
}

inline SeedCandidate candidate_from_json(const json& j) {
  SeedCandidate c;
  c.cluster_id = j.at("cluster").get<ClusterId>();
  c.discovered_at = j.at("discovered_at").get<int>();
  c.via = j.at("via").get<ClusterId>();
  c.similarity_to_frontier = j.at("similarity").get<double>();
  return c;
}

inline json decision_to_json(const DecisionRecord& r) {
  return json{{"narrative", r.narrative},
              {"cluster", r.cluster},
              {"decision", to_string(r.decision)},
              {"reviewer", r.reviewer},
              {"at", r.at}};
}

inline DecisionRecord decision_from_json(const json& j) {
  DecisionRecord r;
  r.narrative = j.at("narrative").get<std::string>();
  r.cluster = j.at("cluster").get<ClusterId>();
  r.decision = parse_decision(j.at("decision").get<std::string>());
  r.reviewer = j.value("reviewer", std::string{});
  r.at = j.value("at", std::string{});
  return r;
}

inline json NarrativeCluster::to_json() const {
  json cands = json::array();
  for (const auto& c : candidates_) {
    auto cj = candidate_to_json(def_.id, c);
    cj["decision"] = to_string(c.decision);
    cj["reviewer"] = c.reviewer ? json(*c.reviewer) : json(nullptr);
    cj["decided_at"] = c.decided_at ? json(*c.decided_at) : json(nullptr);
    cands.push_back(std::move(cj));
  }
  json hist = json::array();
  for (const auto& [t, v] : centroid_history_) {
    const auto& att = attached_.at(t);
    hist.push_back({{"timestep", t}, {"centroid", v}, {"attached", std::vector<ClusterId>(att.begin(), att.end())}});
  }
  return json{{"definition", definition_to_json(def_)},
              {"approved", std::vector<ClusterId>(approved_.begin(), approved_.end())},
              {"candidates", std::move(cands)},
              {"history", std::move(hist)}};
}

inline NarrativeCluster NarrativeCluster::from_json(const json& j) {
  NarrativeCluster n;
  n.def_ = definition_from_json(j.at("definition"));
  for (const auto& id : j.at("approved")) n.approved_.insert(id.get<ClusterId>());
  for (const auto& cj : j.at("candidates")) {
    auto c = candidate_from_json(cj);
    c.decision = parse_decision(cj.at("decision").get<std::string>());
    if (!cj.at("reviewer").is_null()) c.reviewer = cj.at("reviewer").get<std::string>();
    if (!cj.at("decided_at").is_null()) c.decided_at = cj.at("decided_at").get<std::string>();
    n.candidates_.push_back(std::move(c));
  }
  for (const auto& h : j.at("history")) {
    const int t = h.at("timestep").get<int>();
    n.centroid_history_[t] = h.at("centroid").get<Vec>();
    const auto att = h.at("attached").get<std::vector<ClusterId>>();
    n.attached_[t] = std::set<ClusterId>(att.begin(), att.end());
  }
  return n;
}

/// Applies the narrative's records from a decision log in order.
inline void replay_decisions(NarrativeCluster& n, const std::vector<DecisionRecord>& log) {
  for (const auto& r : log)
    if (r.narrative == n.definition().id) n.record_decision(r.cluster, r.decision, r.reviewer, r.at);
}

}  // namespace narrative
