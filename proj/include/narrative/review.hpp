#pragma once

// JSON-over-HTTP review API over a workspace: candidate queues, review
// samples, decisions, and narrative centroid/attachment views.

#include <climits>

// Eigen must precede httplib.
#include "workspace.hpp"

#include <httplib.h>

namespace narrative {

/// Read model: the latest snapshot with the decision log laid over it.
struct ReviewView {
  std::optional<int> timestep;
  std::optional<OnlineAgglomerative> engine;
  std::map<std::string, NarrativeCluster> narratives;
};

class ReviewService {
 public:
  explicit ReviewService(Workspace ws) : ws_(std::move(ws)) {}

  const Workspace& workspace() const { return ws_; }

  // Handlers return (status, body) so they can be exercised without a socket.

  std::pair<int, json> list_narratives() {
    return guarded([&] {
      auto v = view();
      json out = json::array();
      for (const auto& d : ws_.definitions()) {
        json row = definition_to_json(d);
        auto it = v->narratives.find(d.id);
        row["live"] = it != v->narratives.end();
        row["timestep"] = v->timestep ? json(*v->timestep) : json(nullptr);
        if (it != v->narratives.end()) {
          const auto& seeds = it->second.approved_seeds();
          row["approved_seeds"] = std::vector<ClusterId>(seeds.begin(), seeds.end());
          row["pending"] = detail::pending_count(it->second);
        } else {
          row["approved_seeds"] = json::array();
          row["pending"] = 0;
        }
        out.push_back(std::move(row));
      }
      return std::pair{200, out};
    });
  }

  std::pair<int, json> candidates(const std::string& narrative, std::optional<std::string> status,
                                  std::optional<int> timestep) {
    return guarded([&] {
      auto v = view();
      const auto& n = narrative_of(*v, narrative);
      if (status) parse_decision(*status);
      std::vector<SeedCandidate> cs;
      if (n)
        for (const auto& c : n->candidates())
          if ((!status || to_string(c.decision) == parse_status(*status)) && (!timestep || c.discovered_at == *timestep))
            cs.push_back(c);
      std::stable_sort(cs.begin(), cs.end(),
                       [](const auto& a, const auto& b) { return a.discovered_at < b.discovered_at; });
      json out = json::array();
      for (const auto& c : cs) out.push_back(candidate_json(narrative, c));
      return std::pair{200, out};
    });
  }

  std::pair<int, json> sample(const std::string& ref, std::size_t n) {
    return guarded([&] {
      auto v = view();
      const auto [narrative, cluster] = parse_candidate_ref(ref);
      const auto* nc = narrative_of(*v, narrative);
      if (!nc) throw NotFoundError("narrative '" + narrative + "' has no candidates yet");
      const auto& c = nc->candidate(cluster);
      json texts = json::array();
      for (const auto& u : nc->review_sample(*v->engine, cluster, std::min<std::size_t>(n, kSampleSize), ws_.config().seed))
        texts.push_back({{"unit_id", u.unit_id}, {"channel", u.channel_id}, {"text", u.text}});
      return std::pair{200, json{{"candidate", candidate_json(narrative, c)}, {"texts", std::move(texts)}}};
    });
  }

  std::pair<int, json> decide(const std::string& ref, const json& body) {
    return guarded([&] {
      const auto [narrative, cluster] = parse_candidate_ref(ref);
      if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string())
        throw DomainError("body must be {\"decision\": \"approved\"|\"rejected\", \"reviewer\": \"...\"}");
      const Decision d = parse_decision(body["decision"].get<std::string>());
      if (d == Decision::pending) throw DomainError("decision must be approved or rejected");
      const std::string reviewer = body.value("reviewer", std::string("anonymous"));

      std::lock_guard per_narrative(narrative_mutex(narrative));
      auto v = view();
      const auto* nc = narrative_of(*v, narrative);
      if (!nc) throw NotFoundError("unknown narrative '" + narrative + "'");
      const auto& c = nc->candidate(cluster);
      if (c.decision != Decision::pending)
        throw ConflictError("candidate " + ref + " already " + to_string(c.decision));
      DecisionRecord rec{narrative, cluster, d, reviewer, format_rfc3339(std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()))};
      ws_.append_decision(rec);
      invalidate();
      return std::pair{200, decision_to_json(rec)};
    });
  }

  std::pair<int, json> centroid_series(const std::string& narrative) {
    return guarded([&] {
      auto v = view();
      const auto* n = narrative_of(*v, narrative);
      return std::pair{200, json{{"narrative", narrative}, {"series", n ? n->centroid_series_json() : json::array()}}};
    });
  }

  std::pair<int, json> attached(const std::string& narrative, std::optional<int> timestep) {
    return guarded([&] {
      auto v = view();
      const auto* n = narrative_of(*v, narrative);
      json rows = json::array();
      if (n)
        for (const auto& [t, ids] : n->attached()) {
          if (timestep && t != *timestep) continue;
          std::size_t units = 0;
          for (auto id : ids)
            if (auto it = v->engine->cluster(id).members.find(t); it != v->engine->cluster(id).members.end())
              units += it->second.size();
          rows.push_back({{"timestep", t}, {"clusters", std::vector<ClusterId>(ids.begin(), ids.end())}, {"units", units}});
        }
      if (timestep && rows.empty()) throw NotFoundError("no attachment for " + narrative + " at " + timestep_tag(*timestep));
      return std::pair{200, json{{"narrative", narrative}, {"attached", rows}}};
    });
  }

  void mount(httplib::Server& srv) {
    auto reply = [](httplib::Response& res, const std::pair<int, json>& r) {
      res.status = r.first;
      res.set_content(r.second.dump(), "application/json");
    };
    auto qint = [](const httplib::Request& req, const char* k) -> std::optional<int> {
      if (!req.has_param(k)) return std::nullopt;
      try {
        return std::stoi(req.get_param_value(k));
      } catch (const std::logic_error&) {
        throw DomainError(std::string("query parameter ") + k + " must be an integer");
      }
    };
    auto qstr = [](const httplib::Request& req, const char* k) -> std::optional<std::string> {
      if (!req.has_param(k)) return std::nullopt;
      return req.get_param_value(k);
    };
    auto wrap = [this, reply](auto fn) {
      return [this, reply, fn](const httplib::Request& req, httplib::Response& res) {
        try {
          reply(res, fn(req));
        } catch (const Error& e) {
          reply(res, error_reply(e));
        }
      };
    };
    srv.Get("/narratives", wrap([this](const httplib::Request&) { return list_narratives(); }));
    srv.Get(R"(/narratives/([^/]+)/candidates)", wrap([this, qint, qstr](const httplib::Request& req) {
              return candidates(req.matches[1], qstr(req, "status"), qint(req, "timestep"));
            }));
    srv.Get(R"(/candidates/([^/]+)/sample)", wrap([this, qint](const httplib::Request& req) {
              const auto n = qint(req, "n").value_or(static_cast<int>(kSampleSize));
              if (n <= 0) throw DomainError("n must be positive");
              return sample(req.matches[1], static_cast<std::size_t>(n));
            }));
    srv.Post(R"(/candidates/([^/]+)/decision)", wrap([this](const httplib::Request& req) {
               json body;
               try {
                 body = json::parse(req.body);
               } catch (const json::parse_error&) {
                 throw DomainError("request body is not JSON");
               }
               return decide(req.matches[1], body);
             }));
    srv.Get(R"(/narratives/([^/]+)/centroid-series)",
            wrap([this](const httplib::Request& req) { return centroid_series(req.matches[1]); }));
    srv.Get(R"(/narratives/([^/]+)/attached)", wrap([this, qint](const httplib::Request& req) {
              return attached(req.matches[1], qint(req, "timestep"));
            }));
  }

  static constexpr std::size_t kSampleSize = 20;

 private:
  template <typename F>
  std::pair<int, json> guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return error_reply(e);
    }
  }

  static std::pair<int, json> error_reply(const Error& e) {
    int code = 500;
    if (dynamic_cast<const NotFoundError*>(&e)) code = 404;
    else if (dynamic_cast<const ConflictError*>(&e)) code = 409;
    else if (dynamic_cast<const DomainError*>(&e) || dynamic_cast<const RangeError*>(&e)) code = 400;
    return {code, json{{"error", e.what()}}};
  }

  static std::string parse_status(const std::string& s) { return to_string(parse_decision(s)); }

  json candidate_json(const std::string& narrative, const SeedCandidate& c) const {
    auto j = candidate_to_json(narrative, c);
    j["id"] = candidate_ref(narrative, c.cluster_id);
    j["status"] = to_string(c.decision);
    j["reviewer"] = c.reviewer ? json(*c.reviewer) : json(nullptr);
    return j;
  }

  const NarrativeCluster* narrative_of(const ReviewView& v, const std::string& id) const {
    auto it = v.narratives.find(id);
    if (it != v.narratives.end()) return &it->second;
    for (const auto& d : ws_.definitions())
      if (d.id == id) return nullptr;
    throw NotFoundError("unknown narrative '" + id + "'");
  }

  std::mutex& narrative_mutex(const std::string& id) {
    std::lock_guard g(mu_);
    return per_narrative_[id];
  }

  void invalidate() {
    std::lock_guard g(mu_);
    key_.clear();
  }

  std::shared_ptr<const ReviewView> view() {
    const auto snaps = ws_.snapshots();
    std::string key = "none";
    if (!snaps.empty()) key = std::to_string(snaps.back()) + "/" + ws_.manifest_digest(snaps.back()).value_or("");
    if (std::filesystem::exists(ws_.decisions_path()))
      key += "/" + std::to_string(std::filesystem::file_size(ws_.decisions_path()));
    {
      std::lock_guard g(mu_);
      if (view_ && key == key_) return view_;
    }
    auto v = std::make_shared<ReviewView>();
    if (!snaps.empty()) {
      const int t = snaps.back();
      const auto corpus = EmbeddedCorpus::load(ws_, INT_MAX, INT_MAX);
      auto s = load_snapshot(ws_, corpus, t);
      const auto log = ws_.decisions();
      for (auto& [id, n] : s.narratives) {
        const bool approved = detail::apply_logged_decisions(n, log);
        if (approved && !ws_.config().blocking && !n.centroid_history().empty())
          n.recompute(s.engine, n.centroid_history().begin()->first, n.centroid_history().rbegin()->first);
      }
      v->timestep = t;
      v->engine.emplace(std::move(s.engine));
      v->narratives = std::move(s.narratives);
    }
    std::lock_guard g(mu_);
    view_ = v;
    key_ = key;
    return v;
  }

  Workspace ws_;
  std::mutex mu_;
  std::map<std::string, std::mutex> per_narrative_;
  std::shared_ptr<const ReviewView> view_;
  std::string key_;
};

/// Blocks serving the review API until the server is stopped.
inline void serve_review_api(ReviewService& svc, httplib::Server& srv, const std::string& host, int port) {
  svc.mount(srv);
  if (!srv.listen(host, port)) throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace narrative
