#pragma once

// On-disk workspace: configuration, inputs, checksummed per-timestep
// snapshots, reports, and the append-only decision log.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>

#include "macro.hpp"
#include "themes.hpp"
#include "trends.hpp"

namespace narrative {

struct PipelineConfig {
  std::string corpus_start = "1970-01-01T00:00:00Z";
  std::int64_t window_seconds = 7 * 24 * 3600;
  std::size_t dim = 256;
  double threshold = 0.85;
  double silhouette_tolerance = 0.01;
  std::size_t silhouette_sample = 512;
  std::uint64_t seed = 42;
  std::size_t trend_k = 5;
  bool blocking = false;
  bool classify_themes = false;
  double theme_threshold = 0.7;

  ClusterConfig cluster() const {
    ClusterConfig c;
    c.threshold = threshold;
    c.silhouette_tolerance = silhouette_tolerance;
    c.silhouette_sample = silhouette_sample;
    c.seed = seed;
    return c;
  }

  json to_json() const {
    return json{{"corpus_start", corpus_start},
                {"window_seconds", window_seconds},
                {"dim", dim},
                {"threshold", threshold},
                {"silhouette_tolerance", silhouette_tolerance},
                {"silhouette_sample", silhouette_sample},
                {"seed", seed},
                {"trend_k", trend_k},
                {"mode", blocking ? "blocking" : "non-blocking"},
                {"classify_themes", classify_themes},
                {"theme_threshold", theme_threshold}};
  }

  static PipelineConfig from_json(const json& j) {
    PipelineConfig c;
    try {
      c.corpus_start = j.value("corpus_start", c.corpus_start);
      parse_rfc3339(c.corpus_start);
      c.window_seconds = j.value("window_seconds", c.window_seconds);
      c.dim = j.value("dim", c.dim);
      c.threshold = j.value("threshold", c.threshold);
      c.silhouette_tolerance = j.value("silhouette_tolerance", c.silhouette_tolerance);
      c.silhouette_sample = j.value("silhouette_sample", c.silhouette_sample);
      c.seed = j.value("seed", c.seed);
      c.trend_k = j.value("trend_k", c.trend_k);
      const auto mode = j.value("mode", std::string("non-blocking"));
      if (mode != "blocking" && mode != "non-blocking") throw ConfigError("mode must be blocking or non-blocking");
      c.blocking = mode == "blocking";
      c.classify_themes = j.value("classify_themes", c.classify_themes);
      c.theme_threshold = j.value("theme_threshold", c.theme_threshold);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad config: ") + e.what());
    }
    if (c.window_seconds <= 0) throw ConfigError("window_seconds must be positive");
    if (c.dim == 0) throw ConfigError("dim must be positive");
    if (c.threshold <= 0 || c.threshold > 1) throw ConfigError("threshold must lie in (0, 1]");
    return c;
  }
};

/// Exclusive advisory lock held for the lifetime of the object.
class FileLock {
 public:
  FileLock(const std::filesystem::path& p, bool wait) {
    fd_ = ::open(p.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + p.string());
    if (::flock(fd_, LOCK_EX | (wait ? 0 : LOCK_NB)) != 0) {
      ::close(fd_);
      throw ConflictError("workspace is locked by another run (" + p.string() + ")");
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

inline std::string timestep_tag(int t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "t%04d", t);
  return buf;
}

inline std::string candidate_ref(const std::string& narrative, ClusterId cluster) {
  return narrative + ":" + std::to_string(cluster);
}

inline std::pair<std::string, ClusterId> parse_candidate_ref(const std::string& ref) {
  const auto colon = ref.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == ref.size())
    throw NotFoundError("malformed candidate id '" + ref + "'");
  try {
    std::size_t used = 0;
    const auto id = std::stoull(ref.substr(colon + 1), &used);
    if (used != ref.size() - colon - 1) throw std::invalid_argument("trailing");
    return {ref.substr(0, colon), static_cast<ClusterId>(id)};
  } catch (const std::logic_error&) {
    throw NotFoundError("malformed candidate id '" + ref + "'");
  }
}

class Workspace {
 public:
  static Workspace create(const std::filesystem::path& root, const PipelineConfig& cfg) {
    if (std::filesystem::exists(root / "config.json")) throw ConflictError("workspace already exists at " + root.string());
    std::filesystem::create_directories(root / "narratives");
    write_file_atomic(root / "config.json", cfg.to_json().dump(2) + "\n");
    return open(root);
  }

  static Workspace open(const std::filesystem::path& root) {
    if (!std::filesystem::exists(root / "config.json"))
      throw NotFoundError("no workspace at " + root.string() + " (missing config.json)");
    Workspace ws;
    ws.root_ = root;
    json j;
    try {
      j = json::parse(read_file(root / "config.json"));
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config.json is not valid JSON: ") + e.what());
    }
    ws.config_ = PipelineConfig::from_json(j);
    ws.hash_ = hex64(fnv1a64(ws.config_.to_json().dump()));
    return ws;
  }

  const std::filesystem::path& root() const { return root_; }
  const PipelineConfig& config() const { return config_; }
  const std::string& config_hash() const { return hash_; }

  std::filesystem::path posts_path() const { return root_ / "posts.jsonl"; }
  std::filesystem::path units_path() const { return root_ / "units.jsonl"; }
  std::filesystem::path embeddings_path() const { return root_ / "embeddings.jsonl"; }
  std::filesystem::path decisions_path() const { return root_ / "decisions.jsonl"; }
  std::filesystem::path lock_path() const { return root_ / "run.lock"; }
  std::filesystem::path narratives_dir() const { return root_ / "narratives"; }
  std::filesystem::path snapshot_dir(int t) const { return root_ / "snapshots" / timestep_tag(t); }
  std::filesystem::path reports_dir() const { return root_ / "reports"; }
  std::filesystem::path trend_report_path(int t) const {
    return reports_dir() / "trends" / (timestep_tag(t) + ".json");
  }
  std::filesystem::path assignments_path(int t) const {
    return reports_dir() / "assignments" / (timestep_tag(t) + ".jsonl");
  }
  std::filesystem::path narrative_reports_dir(const std::string& id) const { return reports_dir() / "narratives" / id; }
  std::filesystem::path dictionary_path(const std::string& id) const { return narratives_dir() / (id + ".dictionary.json"); }

  Instant corpus_start() const { return parse_rfc3339(config_.corpus_start); }
  std::chrono::seconds window() const { return std::chrono::seconds{config_.window_seconds}; }

  // Narrative definitions ----------------------------------------------------

  std::vector<NarrativeDefinition> definitions() const {
    std::vector<NarrativeDefinition> out;
    if (!std::filesystem::exists(narratives_dir())) return out;
    for (const auto& e : std::filesystem::directory_iterator(narratives_dir())) {
      const auto name = e.path().filename().string();
      if (e.path().extension() != ".json" || name.find(".dictionary.") != std::string::npos) continue;
      out.push_back(definition_from_json(json::parse(read_file(e.path()))));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

  void define_narrative(const NarrativeDefinition& d) {
    if (d.id.empty() || d.id.find_first_of("/:\\") != std::string::npos || d.id[0] == '.')
      throw DomainError("narrative id must be non-empty without '/', ':' or a leading '.'");
    if (d.band.low > d.band.high) throw DomainError("band low exceeds band high");
    const auto p = narratives_dir() / (d.id + ".json");
    if (std::filesystem::exists(p)) throw ConflictError("narrative '" + d.id + "' already defined");
    write_file_atomic(p, definition_to_json(d).dump(2) + "\n");
  }

  // Decision log ---------------------------------------------------------------

  std::vector<DecisionRecord> decisions() const {
    std::vector<DecisionRecord> out;
    if (!std::filesystem::exists(decisions_path())) return out;
    for_each_jsonl(decisions_path(), [&](const json& j) { out.push_back(decision_from_json(j)); });
    return out;
  }

  /// Appends one record under an exclusive lock on the log. A second decision
  /// for the same (narrative, cluster) is a conflict.
  void append_decision(const DecisionRecord& r) {
    if (r.decision == Decision::pending) throw DomainError("a decision must be approved or rejected");
    std::filesystem::create_directories(root_);
    FileLock lock(root_ / "decisions.lock", true);
    for (const auto& d : decisions())
      if (d.narrative == r.narrative && d.cluster == r.cluster)
        throw ConflictError("candidate " + candidate_ref(r.narrative, r.cluster) + " already " + to_string(d.decision));
    const std::string line = decision_to_json(r).dump() + "\n";
    const int fd = ::open(decisions_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw Error("cannot open decision log");
    const auto n = ::write(fd, line.data(), line.size());
    ::fsync(fd);
    ::close(fd);
    if (n != static_cast<ssize_t>(line.size())) throw Error("short write to decision log");
  }

  // Snapshots ------------------------------------------------------------------

  /// Timesteps with a manifest, ascending.
  std::vector<int> snapshots() const {
    std::vector<int> out;
    const auto dir = root_ / "snapshots";
    if (!std::filesystem::exists(dir)) return out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.size() == 5 && name[0] == 't' && std::filesystem::exists(e.path() / "manifest.json"))
        out.push_back(std::stoi(name.substr(1)));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Checks every file digest listed in the manifest.
  json verify_snapshot(int t) const {
    const auto dir = snapshot_dir(t);
    if (!std::filesystem::exists(dir / "manifest.json")) throw NotFoundError("no snapshot at " + timestep_tag(t));
    json m;
    try {
      m = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::parse_error&) {
      throw IntegrityError("snapshot " + timestep_tag(t) + " manifest is unreadable");
    }
    for (const auto& [name, digest] : m.at("files").items()) {
      if (!std::filesystem::exists(dir / name))
        throw IntegrityError("snapshot " + timestep_tag(t) + " is missing " + name);
      if (file_digest(dir / name) != digest.get<std::string>())
        throw IntegrityError("snapshot " + timestep_tag(t) + " checksum mismatch on " + name);
    }
    if (m.at("config_hash") != hash_)
      throw ConfigError("snapshot " + timestep_tag(t) + " was written under a different configuration");
    return m;
  }

  std::optional<std::string> manifest_digest(int t) const {
    const auto p = snapshot_dir(t) / "manifest.json";
    if (!std::filesystem::exists(p)) return std::nullopt;
    return file_digest(p);
  }

  // Inputs ---------------------------------------------------------------------

  std::vector<DocUnit> units() const {
    if (!std::filesystem::exists(units_path()))
      throw NotFoundError("no units.jsonl in workspace; run `ingest` first");
    return read_units(units_path());
  }

  void load_embeddings(EmbeddingCache& c) const {
    c.load(embeddings_path());
    if (c.size() && c.dim() != config_.dim)
      throw ConfigError("embedding cache has dimension " + std::to_string(c.dim()) + ", config says " +
                        std::to_string(config_.dim));
  }

 private:
  Workspace() = default;

  std::filesystem::path root_;
  PipelineConfig config_;
  std::string hash_;
};

/// Units joined with their cached embeddings, indexed by id and timestep.
struct EmbeddedCorpus {
  std::unordered_map<std::string, EmbeddedUnit> by_id;
  std::map<int, std::vector<std::string>> by_timestep;  // unit ids in file order

  static EmbeddedCorpus load(const Workspace& ws, std::optional<int> from = {}, std::optional<int> to = {}) {
    EmbeddedCorpus c;
    EmbeddingCache cache;
    ws.load_embeddings(cache);
    std::map<int, std::size_t> missing;
    std::size_t total_missing = 0;
    for (auto& u : ws.units()) {
      auto v = cache.get(embedding_key(u.text));
      const bool in_range = (!from || u.timestep >= *from) && (!to || u.timestep <= *to);
      if (!v) {
        if (in_range) {
          ++missing[u.timestep];
          ++total_missing;
        }
        continue;
      }
      c.by_timestep[u.timestep].push_back(u.unit_id);
      const auto id = u.unit_id;
      c.by_id.emplace(id, EmbeddedUnit{std::move(u), std::move(*v)});
    }
    if (total_missing) {
      std::string where;
      for (const auto& [t, n] : missing) where += " " + timestep_tag(t) + "=" + std::to_string(n);
      throw NotFoundError("missing embeddings for " + std::to_string(total_missing) + " units (" + where.substr(1) +
                          "); run `narrative-engine embed` (set EMBED_URL, or use the offline provider) and retry");
    }
    return c;
  }

  std::vector<EmbeddedUnit> batch(int t) const {
    std::vector<EmbeddedUnit> out;
    if (auto it = by_timestep.find(t); it != by_timestep.end())
      for (const auto& id : it->second) out.push_back(by_id.at(id));
    return out;
  }

  int last_timestep() const { return by_timestep.empty() ? -1 : by_timestep.rbegin()->first; }

  EmbeddedUnit lookup(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw IntegrityError("snapshot references unknown unit " + id);
    return it->second;
  }
};

/// Engine plus live narratives as of a snapshot.
struct PipelineState {
  OnlineAgglomerative engine;
  std::map<std::string, NarrativeCluster> narratives;
  std::string stage = "complete";  // or "paused" (candidates enqueued, awaiting review)
};

inline PipelineState load_snapshot(const Workspace& ws, const EmbeddedCorpus& corpus, int t) {
  const auto m = ws.verify_snapshot(t);
  const auto dir = ws.snapshot_dir(t);
  PipelineState s{OnlineAgglomerative::restore(json::parse(read_file(dir / "state.json")), ws.config().cluster(),
                                               [&](const std::string& id) { return corpus.lookup(id); }),
                  {},
                  m.at("stage").get<std::string>()};
  for (const auto& nj : json::parse(read_file(dir / "narratives.json"))) {
    auto n = NarrativeCluster::from_json(nj);
    const auto id = n.definition().id;
    s.narratives.emplace(id, std::move(n));
  }
  return s;
}

/// Lightweight view for readers: narratives only, no engine.
inline std::map<std::string, NarrativeCluster> load_snapshot_narratives(const Workspace& ws, int t) {
  ws.verify_snapshot(t);
  std::map<std::string, NarrativeCluster> out;
  for (const auto& nj : json::parse(read_file(ws.snapshot_dir(t) / "narratives.json"))) {
    auto n = NarrativeCluster::from_json(nj);
    const auto id = n.definition().id;
    out.emplace(id, std::move(n));
  }
  return out;
}

inline void write_snapshot(const Workspace& ws, const PipelineState& s, int t) {
  const auto dir = ws.snapshot_dir(t);
  std::filesystem::create_directories(dir);
  std::filesystem::remove(dir / "manifest.json");
  json narr = json::array();
  for (const auto& [id, n] : s.narratives) narr.push_back(n.to_json());
  write_file_atomic(dir / "state.json", s.engine.checkpoint().dump());
  write_file_atomic(dir / "narratives.json", narr.dump());
  const auto parent = t > 0 ? ws.manifest_digest(t - 1) : std::nullopt;
  json m{{"timestep", t},
         {"stage", s.stage},
         {"config_hash", ws.config_hash()},
         {"parent", parent ? json(*parent) : json(nullptr)},
         {"files", {{"state.json", file_digest(dir / "state.json")}, {"narratives.json", file_digest(dir / "narratives.json")}}}};
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Pipeline

struct RunOptions {
  std::optional<int> from;  // default: resume after the latest snapshot
  std::optional<int> to;    // default: last timestep with units
  std::shared_ptr<ClassifierProvider> classifier;  // default: offline keyword classifier
  // Called at named points inside each timestep; lets tests interrupt a run.
  std::function<void(int, std::string_view)> on_stage;
};

struct RunReport {
  int from = 0;
  int to = -1;
  std::vector<int> completed;
  std::optional<int> paused_at;
  std::size_t pending = 0;
  std::string config_hash;

  json to_json() const {
    return json{{"from", from},
                {"to", to},
                {"completed", completed},
                {"trend_reports", completed.size()},
                {"paused_at", paused_at ? json(*paused_at) : json(nullptr)},
                {"pending", pending},
                {"config_hash", config_hash}};
  }
};

namespace detail {

inline json lineage(const Workspace& ws, int t) {
  const auto parent = t > 0 ? ws.manifest_digest(t - 1) : std::nullopt;
  return json{{"timestep", t}, {"parent_snapshot", parent ? json(*parent) : json(nullptr)}};
}

// Applies logged decisions to candidates that are still pending. Returns
// true if any approval landed.
inline bool apply_logged_decisions(NarrativeCluster& n, const std::vector<DecisionRecord>& log) {
  bool approved = false;
  for (const auto& r : log) {
    if (r.narrative != n.definition().id) continue;
    const auto& cs = n.candidates();
    auto it = std::find_if(cs.begin(), cs.end(), [&](const SeedCandidate& c) { return c.cluster_id == r.cluster; });
    if (it == cs.end() || it->decision != Decision::pending) continue;
    n.record_decision(r.cluster, r.decision, r.reviewer, r.at);
    approved = approved || r.decision == Decision::approved;
  }
  return approved;
}

inline std::size_t pending_count(const NarrativeCluster& n) {
  std::size_t k = 0;
  for (const auto& c : n.candidates()) k += c.decision == Decision::pending;
  return k;
}

}  // namespace detail

/// Advances the workspace one timestep at a time: fit, trend report, candidate
/// enqueue, (blocking pause), attachment, optional theme classification, then
/// a checksummed snapshot. Resumes from the snapshot preceding `from`.
inline RunReport run_pipeline(Workspace& ws, const RunOptions& opt = {}) {
  FileLock lock(ws.lock_path(), false);
  auto stage = [&](int t, std::string_view s) {
    if (opt.on_stage) opt.on_stage(t, s);
  };
  const auto snaps = ws.snapshots();

  int from = 0;
  if (opt.from) {
    from = *opt.from;
  } else if (!snaps.empty()) {
    const int last = snaps.back();
    from = json::parse(read_file(ws.snapshot_dir(last) / "manifest.json")).at("stage") == "paused" ? last : last + 1;
  }
  if (from < 0) throw RangeError("from timestep must be non-negative");

  EmbeddedCorpus corpus = EmbeddedCorpus::load(ws, from, opt.to);
  const int to = opt.to.value_or(corpus.last_timestep());
  RunReport rep;
  rep.from = from;
  rep.to = to;
  rep.config_hash = ws.config_hash();
  if (to < from) return rep;

  // Starting state.
  PipelineState s{OnlineAgglomerative(ws.config().cluster()), {}, "complete"};
  bool resume_paused = false;
  if (std::find(snaps.begin(), snaps.end(), from) != snaps.end() &&
      json::parse(read_file(ws.snapshot_dir(from) / "manifest.json")).at("stage") == "paused") {
    s = load_snapshot(ws, corpus, from);
    resume_paused = true;
  } else if (from > 0) {
    if (std::find(snaps.begin(), snaps.end(), from - 1) == snaps.end())
      throw NotFoundError("cannot start at " + timestep_tag(from) + ": no snapshot at " + timestep_tag(from - 1));
    s = load_snapshot(ws, corpus, from - 1);
    if (s.stage != "complete") throw DomainError("snapshot " + timestep_tag(from - 1) + " is paused; resume there first");
  }

  const auto defs = ws.definitions();
  const auto& cfg = ws.config();
  std::shared_ptr<ClassifierProvider> clf = opt.classifier ? opt.classifier : std::make_shared<KeywordClassifier>();

  for (int t = from; t <= to; ++t) {
    std::map<std::string, bool> approvals;
    const auto log = ws.decisions();
    if (!(resume_paused && t == from)) {
      auto fit = s.engine.incremental_fit(corpus.batch(t));
      if (fit.timestep != t) throw IntegrityError("engine timestep " + std::to_string(fit.timestep) + " != " + std::to_string(t));
      stage(t, "fit");
      write_jsonl(ws.assignments_path(t), s.engine.assignments(t));
      auto trend = t > 0 ? trend_report(s.engine, t, cfg.trend_k, cfg.seed)
                         : json{{"timestep", t}, {"trending", json::array()}, {"note", "no preceding timestep"}};
      trend["config_hash"] = ws.config_hash();
      trend["lineage"] = detail::lineage(ws, t);
      write_file_atomic(ws.trend_report_path(t), trend.dump(2) + "\n");
      stage(t, "trends");

      for (const auto& d : defs) {
        auto it = s.narratives.find(d.id);
        if (it == s.narratives.end()) {
          if (!s.engine.has_cluster(d.initial_seed) || !s.engine.cluster(d.initial_seed).active()) continue;
          it = s.narratives.emplace(d.id, NarrativeCluster(s.engine, d)).first;
        }
        auto added = it->second.enqueue_candidates(s.engine, t);
        std::vector<json> rows;
        for (const auto& c : added) rows.push_back(candidate_to_json(d.id, c));
        write_jsonl(ws.narrative_reports_dir(d.id) / ("candidates_" + timestep_tag(t) + ".jsonl"), rows);
      }
      stage(t, "enqueue");
    }

    std::size_t pending = 0;
    for (auto& [id, n] : s.narratives) {
      approvals[id] = detail::apply_logged_decisions(n, log);
      pending += detail::pending_count(n);
    }
    if (cfg.blocking && pending > 0) {
      s.stage = "paused";
      write_snapshot(ws, s, t);
      rep.paused_at = t;
      rep.pending = pending;
      return rep;
    }
    s.stage = "complete";

    for (auto& [id, n] : s.narratives) {
      if (approvals[id] && !n.centroid_history().empty())
        n.recompute(s.engine, n.centroid_history().begin()->first, t);
      else
        n.attach_clusters(s.engine, t);
      const auto& att = n.attached().at(t);
      json r{{"narrative", id},
             {"timestep", t},
             {"attached", std::vector<ClusterId>(att.begin(), att.end())},
             {"approved_seeds", std::vector<ClusterId>(n.approved_seeds().begin(), n.approved_seeds().end())},
             {"centroid", n.centroid_history().at(t)},
             {"config_hash", ws.config_hash()},
             {"lineage", detail::lineage(ws, t)}};
      write_file_atomic(ws.narrative_reports_dir(id) / ("attached_" + timestep_tag(t) + ".json"), r.dump(2) + "\n");
      write_file_atomic(ws.narrative_reports_dir(id) / "centroid_series.json",
                        json{{"narrative", id}, {"config_hash", ws.config_hash()}, {"series", n.centroid_series_json()}}.dump(2) + "\n");

      if (cfg.classify_themes && std::filesystem::exists(ws.dictionary_path(id))) {
        const auto dict = dictionary_from_json(json::parse(read_file(ws.dictionary_path(id))));
        std::vector<json> rows;
        const auto by_t = n.units_by_timestep(s.engine);
        if (auto ut = by_t.find(t); ut != by_t.end())
          for (auto i : ut->second) rows.push_back(assignment_to_json(classify(*clf, s.engine.points()[i].unit, dict.themes)));
        write_jsonl(ws.narrative_reports_dir(id) / ("themes_" + timestep_tag(t) + ".jsonl"), rows);
      }
    }
    stage(t, "attach");

    write_snapshot(ws, s, t);
    rep.completed.push_back(t);
    stage(t, "snapshot");
  }
  return rep;
}

/// Digest of every report and snapshot file, keyed by relative path.
inline std::map<std::string, std::string> artifact_digests(const Workspace& ws) {
  std::map<std::string, std::string> out;
  for (const auto* sub : {"reports", "snapshots"}) {
    const auto dir = ws.root() / sub;
    if (!std::filesystem::exists(dir)) continue;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() != ".tmp")
        out[std::filesystem::relative(e.path(), ws.root()).string()] = file_digest(e.path());
  }
  return out;
}

}  // namespace narrative
