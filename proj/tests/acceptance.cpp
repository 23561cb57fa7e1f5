// Acceptance harness: one PASS/FAIL line per criterion, exit status = number
// of failing criteria.

#include <signal.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

#include "narrative/association.hpp"
#include "pipeline_fixture.hpp"
#include "stats_oracles.hpp"

using namespace narrative;
using namespace narrative::testing;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::map<std::string, int> truth_of(const std::vector<EmbeddedUnit>& batch, const std::vector<int>& labels) {
  std::map<std::string, int> m;
  for (std::size_t i = 0; i < batch.size(); ++i) m[batch[i].unit.unit_id] = labels[i];
  return m;
}

// 1 ------------------------------------------------------------------------
Verdict batch_equivalence() {
  int ok = 0;
  double worst = 0;
  std::mt19937_64 gen(2001);
  for (int trial = 0; trial < 20; ++trial) {
    Sphere sp(16, gen());
    const std::size_t k = 2 + gen() % 7;
    const double kappa = 40.0 + static_cast<double>(gen() % 360);
    const auto means = sp.separated_means(k, 0.5);
    std::vector<std::size_t> counts(k);
    std::size_t total = 0;
    for (auto& c : counts) total += (c = 20 + gen() % 40);
    while (total > 500) {
      for (auto& c : counts)
        if (c > 1 && total > 500) --c, --total;
    }
    auto batch = mixture_batch(sp, means, counts, kappa, 0);
    std::vector<FVec> pts;
    for (const auto& u : batch) pts.push_back(u.vector);
    const auto t0 = std::chrono::steady_clock::now();
    OnlineAgglomerative eng;
    eng.incremental_fit(batch);
    const double secs = seconds_since(t0);
    worst = std::max(worst, secs);
    ok += same_partition(batch_hac(pts, 0.85), eng.owners()) && secs < 5.0;
  }
  return {ok == 20, fmt("%d/20 trials partition-identical to batch HAC, slowest %.3f s", ok, worst)};
}

// 2 and 3 share one stationary stream ---------------------------------------
struct StreamRun {
  std::size_t absorbed = 0, below = 0;
  double own_mean = 0, other_mean = 0, seconds = 0;
  double own_first = 0, own_last = 0;
};

const StreamRun& stationary_stream() {
  static const StreamRun run = [] {
    StreamRun r;
    Sphere sp(32, 15);
    const auto means = sp.separated_means(5, 0.3);
    OnlineAgglomerative eng;
    const auto t0 = std::chrono::steady_clock::now();
    double own = 0, other = 0;
    for (int t = 0; t < 15; ++t) {
      auto rep = eng.incremental_fit(mixture_batch(sp, means, {400, 400, 400, 400, 400}, 400.0, t));
      for (const auto& a : rep.absorbed) {
        ++r.absorbed;
        r.below += a.similarity < 0.85;
      }
      const auto c = eng.cohesion(t);
      own += c.own;
      other += c.other;
      if (t == 0) r.own_first = c.own;
      if (t == 14) r.own_last = c.own;
    }
    r.seconds = seconds_since(t0);
    r.own_mean = own / 15;
    r.other_mean = other / 15;
    return r;
  }();
  return run;
}

Verdict cohesion_separation() {
  const auto& r = stationary_stream();
  const double gap = r.own_mean - r.other_mean;
  const bool pass = r.below == 0 && r.absorbed > 0 && gap >= 0.3 && r.seconds < 60.0;
  return {pass, fmt("%zu absorptions, %zu below 0.85; own %.3f other %.3f gap %.3f; %.1f s", r.absorbed, r.below,
                    r.own_mean, r.other_mean, gap, r.seconds)};
}

Verdict consistency() {
  const auto& r = stationary_stream();
  const double d = std::abs(r.own_last - r.own_first);
  return {d <= 0.02, fmt("cohesion first %.4f last %.4f, |diff| %.4f", r.own_first, r.own_last, d)};
}

// 4 ------------------------------------------------------------------------
Verdict trend_detection() {
  int delta_hits = 0, size_hits = 0;
  std::mt19937_64 gen(4004);
  for (int trial = 0; trial < 100; ++trial) {
    Sphere sp(16, gen());
    const std::size_t K = 8;
    const auto means = sp.separated_means(K, 0.4);
    std::vector<double> rate(K);
    std::uniform_real_distribution<double> ud(10, 40);
    for (auto& r : rate) r = ud(gen);
    const std::size_t burst = gen() % K;
    OnlineAgglomerative eng;
    std::vector<EmbeddedUnit> last;
    std::vector<int> last_truth;
    for (int t = 0; t <= 5; ++t) {
      std::vector<std::size_t> counts(K);
      for (std::size_t k = 0; k < K; ++k)
        counts[k] = std::poisson_distribution<int>(rate[k] * (t == 5 && k == burst ? 5 : 1))(gen);
      last_truth.clear();
      last = mixture_batch(sp, means, counts, 400.0, t, &last_truth);
      eng.incremental_fit(last);
    }
    // Cluster that holds the burst component at t=5.
    std::map<ClusterId, int> votes;
    for (std::size_t i = 0; i < last.size(); ++i)
      if (last_truth[i] == static_cast<int>(burst)) ++votes[eng.resolve(eng.owners()[eng.points().size() - last.size() + i])];
    ClusterId target = 0;
    int best = -1;
    for (auto [id, v] : votes)
      if (v > best) best = v, target = id;
    const auto top = top_trending(eng, 5, 5);
    delta_hits += !top.empty() && top[0].cluster_id == target;
    const auto by_size = top_by_size(eng, 5, 5);
    size_hits += !by_size.empty() && by_size[0] == target;
  }
  return {delta_hits >= 95 && delta_hits > size_hits,
          fmt("burst ranked #1 by delta in %d/100, by size in %d/100", delta_hits, size_hits)};
}

// 5 ------------------------------------------------------------------------
Verdict merge_gating() {
  int dup_merged = 0, impure = 0, accepted = 0, violations = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Sphere sp(16, 500 + s);
    const auto means = sp.separated_means(4, 0.3);
    std::map<std::string, int> truth;
    OnlineAgglomerative eng;
    auto planted = [&](int comp, const std::string& tag) {
      std::vector<EmbeddedUnit> u;
      for (int i = 0; i < 30; ++i) {
        u.push_back(make_unit(tag + std::to_string(i), to_fvec(sp.vmf(means[comp], 400.0))));
        truth[u.back().unit.unit_id] = comp;
      }
      return eng.adopt_cluster(u, 0);
    };
    const auto a = planted(0, "dupA");
    const auto b = planted(0, "dupB");
    for (int k = 1; k < 4; ++k) planted(k, "sep" + std::to_string(k) + "_");
    std::vector<MergeProposal> props = eng.evaluate_merges(0);
    for (int t = 1; t <= 5; ++t) {
      std::vector<int> lab;
      auto batch = mixture_batch(sp, means, {20, 20, 20, 20}, 400.0, t, &lab);
      for (auto& [id, c] : truth_of(batch, lab)) truth[id] = c;
      auto rep = eng.incremental_fit(batch);
      props.insert(props.end(), rep.proposals.begin(), rep.proposals.end());
    }
    dup_merged += eng.resolve(a) == eng.resolve(b);
    for (auto id : eng.active_ids()) {
      std::set<int> comps;
      for (auto p : eng.members_through(id, eng.current_timestep())) comps.insert(truth.at(eng.points()[p].unit.unit_id));
      impure += comps.size() > 1;
    }
    for (const auto& p : props) {
      if (!p.accepted) continue;
      ++accepted;
      const bool ok = p.indices_defined && p.silhouette_after >= p.silhouette_before - eng.config().silhouette_tolerance &&
                      p.pseudo_f_after >= p.pseudo_f_before;
      violations += !ok;
    }
  }
  return {dup_merged == 50 && impure == 0 && violations == 0,
          fmt("duplicates merged in %d/50 streams; %d mixed clusters; %d accepted merges, %d index violations",
              dup_merged, impure, accepted, violations)};
}

// 6 ------------------------------------------------------------------------
NarrativeDefinition narrative_def(ClusterId seed, double attach) {
  NarrativeDefinition d;
  d.id = d.name = "n";
  d.initial_seed = seed;
  d.attach_threshold = attach;
  d.band = {0.0, 0.95};
  return d;
}

Verdict macro_narrative() {
  // Replay.
  bool replay_ok = true;
  for (std::uint64_t s = 0; s < 5 && replay_ok; ++s) {
    Sphere sp(8, 60 + s);
    const auto means = sp.separated_means(6, 0.9);
    OnlineAgglomerative eng(ClusterConfig{.threshold = 0.9});
    for (int t = 0; t < 5; ++t) eng.incremental_fit(mixture_batch(sp, means, {10, 10, 10, 10, 10, 10}, 300.0, t));
    NarrativeCluster live(eng, narrative_def(0, 0.5));
    std::vector<json> log;
    for (int t = 0; t < 5; ++t) {
      live.enqueue_candidates(eng, t);
      for (const auto& c : live.candidates())
        if (c.decision == Decision::pending && c.discovered_at == t) {
          DecisionRecord r{"n", c.cluster_id, (c.cluster_id + s) % 2 ? Decision::approved : Decision::rejected, "rev", "x"};
          live.record_decision(r.cluster, r.decision, r.reviewer, r.at);
          log.push_back(decision_to_json(r));
        }
      live.recompute(eng, 0, t);
    }
    NarrativeCluster replay(eng, narrative_def(0, 0.5));
    for (auto c : live.candidates()) {
      c.decision = Decision::pending;
      c.reviewer.reset();
      c.decided_at.reset();
      replay.restore_candidate(c);
    }
    std::vector<DecisionRecord> parsed;
    for (const auto& j : log) parsed.push_back(decision_from_json(json::parse(j.dump())));
    replay_decisions(replay, parsed);
    replay.recompute(eng, 0, 4);
    replay_ok = replay.centroid_series_json().dump() == live.centroid_series_json().dump();
  }

  // Monotonicity over 1000 draws.
  std::mt19937_64 gen(6006);
  int draws = 0, mono = 0;
  while (draws < 1000) {
    Sphere sp(6, gen());
    OnlineAgglomerative eng(ClusterConfig{.threshold = 0.98});
    const auto mu = sp.random_direction();
    std::vector<EmbeddedUnit> pts;
    for (int i = 0; i < 30; ++i) pts.push_back(make_unit("p" + std::to_string(i), to_fvec(sp.vmf(mu, 5.0))));
    eng.incremental_fit(pts);
    const auto seed = eng.active_ids()[gen() % eng.active_ids().size()];
    for (int k = 0; k < 10; ++k, ++draws) {
      std::uniform_real_distribution<double> ud(0.0, 1.0);
      const double lo = ud(gen), hi = lo + (1 - lo) * ud(gen);
      NarrativeCluster na(eng, narrative_def(seed, lo)), nb(eng, narrative_def(seed, hi));
      const auto sa = na.attach_clusters(eng, 0), sb = nb.attach_clusters(eng, 0);
      mono += std::includes(sa.begin(), sa.end(), sb.begin(), sb.end());
    }
  }

  // Single seed: narrative centroid is the seed centroid, exactly.
  int identical = 0, checked = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Sphere sp(8, 700 + s);
    const auto mu = sp.random_direction();
    OnlineAgglomerative eng;
    for (int t = 0; t < 5; ++t) {
      std::vector<EmbeddedUnit> b;
      for (int i = 0; i < 8; ++i)
        b.push_back(make_unit(std::to_string(t) + "_" + std::to_string(i), to_fvec(sp.vmf(mu, 200.0)), t));
      eng.incremental_fit(b);
    }
    NarrativeCluster n(eng, narrative_def(0, 0.7));
    for (int t = 0; t < 5; ++t, ++checked) identical += n.narrative_centroid(eng, t) == normalized(*eng.cluster(0).centroid_at(t));
  }
  return {replay_ok && mono == 1000 && identical == checked,
          fmt("replay byte-identical: %s; monotone %d/1000; single-seed identity %d/%d", replay_ok ? "yes" : "no", mono,
              identical, checked)};
}

// 7 ------------------------------------------------------------------------
Verdict statistics() {
  std::mt19937_64 gen(7007);
  std::normal_distribution<double> nd;
  std::poisson_distribution<int> pois(3.0);
  double worst_sp = 0, worst_gr = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 30 + gen() % 120;
    const int p = 1 + static_cast<int>(gen() % 3);
    std::vector<double> x(n), y(n);
    for (std::size_t t = 0; t < n; ++t) {
      x[t] = trial % 2 ? pois(gen) : nd(gen);
      y[t] = nd(gen) + (t ? 0.5 * x[t - 1] : 0.0) + (trial % 3 == 0 ? std::round(x[t]) : 0.0);
    }
    const auto c = spearman(x, y);
    worst_sp = std::max({worst_sp, std::abs(c.rho - oracle::spearman_rho(x, y)),
                         std::abs(c.p - oracle::t_two_sided(c.rho, n))});
    const auto g = granger_test(x, y, p);
    const auto o = oracle::granger(x, y, p);
    worst_gr = std::max({worst_gr, std::abs(g.F - o.F) / std::max(1.0, o.F),
                         std::abs(g.rss_unrestricted - o.rss_u) / std::max(1.0, o.rss_u),
                         std::abs(g.rss_restricted - o.rss_r) / std::max(1.0, o.rss_r),
                         std::abs(g.p - oracle::f_upper_tail(o.F, p, static_cast<double>(n - p - 2 * p - 1)))});
  }

  std::vector<double> x(200), y(200);
  for (std::size_t t = 0; t < 200; ++t) {
    x[t] = nd(gen);
    y[t] = (t ? 0.9 * x[t - 1] : 0.0) + nd(gen);
  }
  const double gp = granger_test(x, y, 1).p, rho = lagged_spearman(x, y, 1).rho;

  int false_pos = 0;
  for (int trial = 0; trial < 100; ++trial) {
    for (auto& v : x) v = nd(gen);
    for (auto& v : y) v = nd(gen);
    false_pos += granger_test(x, y, 1).p < 0.01 || lagged_spearman(x, y, 1).rho > 0.3;
  }
  const bool pass = worst_sp <= 1e-9 && worst_gr <= 1e-9 && gp < 0.01 && rho > 0.3 && false_pos <= 5;
  return {pass, fmt("max oracle error spearman %.1e granger %.1e; planted p=%.2e rho=%.3f; noise false positives %d/100",
                    worst_sp, worst_gr, gp, rho, false_pos)};
}

// 8 ------------------------------------------------------------------------
class TableClassifier final : public ClassifierProvider {
 public:
  std::map<std::string, std::vector<double>> table;
  std::vector<double> score(const std::string& text, const std::vector<std::string>& labels) override {
    auto row = table.at(text);
    row.resize(labels.size(), 0.0);
    return row;
  }
};

Verdict theme_coverage() {
  TableClassifier clf;
  const double scores[10][2] = {{0.9, 0.1}, {0.7, 0.0}, {0.2, 0.7}, {0.8, 0.8}, {0.0, 0.75}, {0.71, 0.1},
                                {0.1, 0.99}, {0.69, 0.69}, {0.0, 0.0}, {0.3, 0.2}};
  ThemeDictionary dict;
  dict.themes = {{"economy", "", 0}, {"security", "", 0}};
  std::vector<ThemeAssignment> corpus;
  for (int i = 0; i < 10; ++i) {
    DocUnit u;
    u.unit_id = "u" + std::to_string(i);
    u.text = "text " + std::to_string(i);
    clf.table[u.text] = {scores[i][0], scores[i][1]};
    corpus.push_back(classify(clf, u, dict.themes));
  }
  const double v = tcs(dict, corpus, 0.7);

  std::mt19937_64 gen(8008);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  int mono = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ThemeAssignment> docs;
    for (int i = 0; i < 50; ++i) {
      ThemeAssignment a{"u" + std::to_string(i), {}};
      for (int l = 0; l < 10; ++l) a.scores["t" + std::to_string(l)] = ud(gen);
      docs.push_back(a);
    }
    ThemeDictionary d;
    const double th = ud(gen);
    double prev = 0;
    bool ok = true;
    for (int l = 0; l < 10; ++l) {
      if (gen() % 3 == 0) continue;
      d.themes.push_back({"t" + std::to_string(l), "", 0});
      const double cur = tcs(d, docs, th);
      ok = ok && cur >= prev && cur <= 1.0;
      prev = cur;
    }
    mono += ok;
  }
  return {v == 0.7 && mono == 100, fmt("hand-counted corpus tcs=%.17g; monotone on %d/100 dictionaries", v, mono)};
}

// 9 ------------------------------------------------------------------------
Verdict label_propagation() {
  int ok = 0;
  double worst_acc = 1, worst_t = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    auto pg = planted_two_block(200, 0.1, 0.005, 0.14, 9000 + trial);
    const auto t0 = std::chrono::steady_clock::now();
    auto p = propagate_labels(pg.graph, pg.seeds, 100, trial);
    const double secs = seconds_since(t0);
    std::size_t hit = 0;
    for (const auto& [ch, lab] : pg.truth) hit += p.labels.at(ch).label == lab;
    const double acc = static_cast<double>(hit) / 200.0;
    worst_acc = std::min(worst_acc, acc);
    worst_t = std::max(worst_t, secs);
    ok += acc >= 0.95 && secs < 5.0;
  }
  return {ok == 20, fmt("%d/20 trials at >=95%% accuracy (worst %.3f), slowest %.4f s", ok, worst_acc, worst_t)};
}

// 10 -----------------------------------------------------------------------
Verdict crash_resume() {
  const char* stages[] = {"fit", "trends", "enqueue", "attach", "snapshot"};
  std::mt19937_64 gen(1010);
  int ok = 0;
  std::string note;
  for (int trial = 0; trial < 10; ++trial) {
    const StreamSpec spec{.timesteps = 8, .per_component = 20, .seed = 300 + static_cast<std::uint64_t>(trial)};
    TempDir ref_dir, crash_dir;
    auto ref = seed_workspace(ref_dir.path, spec);
    auto crash = seed_workspace(crash_dir.path, spec);
    for (auto* ws : {&ref, &crash}) {
      ws->append_decision({"alpha", 1, Decision::approved, "script", "2022-01-02T00:00:00Z"});
      ws->append_decision({"alpha", 2, Decision::rejected, "script", "2022-01-02T00:00:00Z"});
    }
    run_pipeline(ref);

    const int kill_t = static_cast<int>(gen() % 8);
    const std::string kill_stage = stages[gen() % 5];
    std::cout.flush();
    const pid_t pid = fork();
    if (pid == 0) {
      RunOptions opt;
      opt.on_stage = [&](int t, std::string_view s) {
        if (t == kill_t && s == kill_stage) ::raise(SIGKILL);
      };
      try {
        run_pipeline(crash, opt);
      } catch (...) {
        _exit(3);
      }
      _exit(0);
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    const bool killed = WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;
    run_pipeline(crash);
    const bool same = artifact_digests(ref) == artifact_digests(crash);
    ok += killed && same;
    if (!(killed && same) && note.empty()) note = fmt("; first failure at t=%d/%s", kill_t, kill_stage.c_str());
  }
  return {ok == 10, fmt("%d/10 killed-and-resumed runs hash-identical to uninterrupted runs%s", ok, note.c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"batch equivalence", batch_equivalence},
      {"cohesion/separation", cohesion_separation},
      {"consistency across timesteps", consistency},
      {"trend detection", trend_detection},
      {"merge gating", merge_gating},
      {"macro-narrative", macro_narrative},
      {"statistics oracles", statistics},
      {"theme coverage score", theme_coverage},
      {"label propagation", label_propagation},
      {"crash-resume", crash_resume},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << v.detail << std::endl;
  }
  return failed;
}
