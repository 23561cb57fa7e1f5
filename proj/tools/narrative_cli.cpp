// narrative-engine: command-line front end over a workspace directory.

#include <CLI11.hpp>
#include <iostream>

#include "narrative/association.hpp"
#include "narrative/graph.hpp"
#include "narrative/providers.hpp"
#include "narrative/review.hpp"

using namespace narrative;

namespace {

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

template <typename V>
json by_timestep(const std::map<int, V>& m) {
  json out = json::object();
  for (const auto& [t, v] : m) out[std::to_string(t)] = v;
  return out;
}

std::shared_ptr<EmbeddingProvider> embedding_provider(const Workspace& ws) {
  if (auto url = env("EMBED_URL")) return std::make_shared<HttpEmbeddingProvider>(*url);
  return std::make_shared<HashingEmbeddingProvider>(ws.config().dim);
}

std::shared_ptr<ClassifierProvider> classifier() {
  if (auto url = env("CLASSIFY_URL")) return std::make_shared<HttpClassifier>(*url);
  return std::make_shared<KeywordClassifier>();
}

std::shared_ptr<GeneratorProvider> generator() {
  if (auto url = env("GENERATE_URL")) return std::make_shared<HttpThemeGenerator>(*url);
  return std::make_shared<FrequentTermGenerator>();
}

int latest_snapshot(const Workspace& ws) {
  const auto s = ws.snapshots();
  if (s.empty()) throw NotFoundError("workspace has no snapshots yet; run `narrative-engine run` first");
  return s.back();
}

// Latest snapshot with logged decisions applied.
PipelineState current_state(const Workspace& ws) {
  const auto corpus = EmbeddedCorpus::load(ws, INT_MAX, INT_MAX);
  auto s = load_snapshot(ws, corpus, latest_snapshot(ws));
  const auto log = ws.decisions();
  for (auto& [id, n] : s.narratives)
    if (detail::apply_logged_decisions(n, log) && !n.centroid_history().empty())
      n.recompute(s.engine, n.centroid_history().begin()->first, n.centroid_history().rbegin()->first);
  return s;
}

NarrativeCluster& narrative_in(PipelineState& s, const std::string& id) {
  auto it = s.narratives.find(id);
  if (it == s.narratives.end()) throw NotFoundError("narrative '" + id + "' is not live in the latest snapshot");
  return it->second;
}

std::vector<json> read_jsonl_or_throw(const std::string& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("no such file: " + path);
  return read_jsonl(path);
}

std::filesystem::path assignments_file(const Workspace& ws, const std::string& id) {
  return ws.narrative_reports_dir(id) / "theme_assignments.jsonl";
}

int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NotFoundError*>(&e)) return 3;
  if (dynamic_cast<const ConflictError*>(&e)) return 4;
  if (dynamic_cast<const IntegrityError*>(&e)) return 5;
  if (dynamic_cast<const DomainError*>(&e)) return 6;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming story clustering, narrative tracking and association analysis"};
  app.require_subcommand(1);
  std::string root = ".";
  app.add_option("-w,--workspace", root, "workspace directory");

  // init
  auto* init = app.add_subcommand("init", "create a workspace");
  PipelineConfig cfg;
  std::string mode = "non-blocking";
  init->add_option("--corpus-start", cfg.corpus_start, "RFC 3339 start of timestep 0");
  init->add_option("--window-seconds", cfg.window_seconds, "timestep width");
  init->add_option("--dim", cfg.dim, "embedding dimension");
  init->add_option("--threshold", cfg.threshold, "similarity threshold");
  init->add_option("--seed", cfg.seed, "RNG seed");
  init->add_option("--trend-k", cfg.trend_k, "clusters per trend report");
  init->add_option("--mode", mode, "blocking | non-blocking")->check(CLI::IsMember({"blocking", "non-blocking"}));
  init->add_flag("--classify-themes", cfg.classify_themes, "classify attached units during runs");

  // ingest / embed
  auto* ingest = app.add_subcommand("ingest", "normalize, dedupe, segment and bucket raw posts");
  std::string posts_path;
  ingest->add_option("posts", posts_path, "posts JSONL")->required();
  auto* embed = app.add_subcommand("embed", "embed every unit into the workspace cache");

  // cluster / trends / run
  auto* cluster = app.add_subcommand("cluster", "print story clusters at a timestep");
  std::optional<int> timestep;
  cluster->add_option("-t,--timestep", timestep, "timestep (default: latest)");
  auto* trends = app.add_subcommand("trends", "print the trend report of a timestep");
  trends->add_option("-t,--timestep", timestep, "timestep (default: latest)");
  auto* run = app.add_subcommand("run", "advance the pipeline (resumes after the latest snapshot)");
  std::optional<int> from, to;
  run->add_option("--from", from, "first timestep");
  run->add_option("--to", to, "last timestep");

  // narrative
  auto* narr = app.add_subcommand("narrative", "narrative clusters");
  narr->require_subcommand(1);
  std::string nid, nname, cand_ref, decision, reviewer = "cli";
  ClusterId seed_cluster = 0;
  double band_lo = 0.7, band_hi = 0.8, attach_th = 0.7;
  bool size_weighted = false;
  auto* ninit = narr->add_subcommand("init", "define a narrative from an initial seed cluster");
  ninit->add_option("--id", nid)->required();
  ninit->add_option("--name", nname);
  ninit->add_option("--seed-cluster", seed_cluster)->required();
  ninit->add_option("--band-low", band_lo);
  ninit->add_option("--band-high", band_hi);
  ninit->add_option("--attach-threshold", attach_th);
  ninit->add_flag("--size-weighted", size_weighted);
  auto* nenq = narr->add_subcommand("enqueue", "list seed candidates (pending by default)");
  nenq->add_option("--id", nid)->required();
  std::string status = "pending";
  nenq->add_option("--status", status, "pending | approved | rejected | all");
  nenq->add_option("-t,--timestep", timestep);
  auto* ndecide = narr->add_subcommand("decide", "record a review decision");
  ndecide->add_option("--candidate", cand_ref, "narrative:cluster")->required();
  ndecide->add_option("--decision", decision)->required()->check(CLI::IsMember({"approved", "rejected"}));
  ndecide->add_option("--reviewer", reviewer);
  auto* nattach = narr->add_subcommand("attach", "attached clusters per timestep");
  nattach->add_option("--id", nid)->required();
  nattach->add_option("-t,--timestep", timestep);
  auto* nseries = narr->add_subcommand("series", "post-count and centroid series");
  nseries->add_option("--id", nid)->required();

  // themes
  auto* themes = app.add_subcommand("themes", "theme dictionaries");
  themes->require_subcommand(1);
  int runs = 15;
  double theme_th = 0.7;
  std::string labels_path;
  auto* tprop = themes->add_subcommand("propose", "generate dictionaries and keep the highest-TCS one");
  tprop->add_option("--id", nid)->required();
  tprop->add_option("--runs", runs);
  tprop->add_option("--threshold", theme_th);
  auto* tclass = themes->add_subcommand("classify", "score every narrative unit against the dictionary");
  tclass->add_option("--id", nid)->required();
  auto* ttcs = themes->add_subcommand("tcs", "theme coverage score of the stored assignments");
  ttcs->add_option("--id", nid)->required();
  ttcs->add_option("--threshold", theme_th);
  auto* tcal = themes->add_subcommand("calibrate", "pick a confidence threshold from labeled scores");
  tcal->add_option("labels", labels_path, "JSONL of {\"score\", \"relevant\"}")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "contributor association");
  stats->require_subcommand(1);
  auto* scan = stats->add_subcommand("scan", "lagged Spearman + Granger per channel");
  std::vector<std::string> channels;
  ScanOptions sopt;
  bool only_passing = false, with_themes = false;
  scan->add_option("--id", nid)->required();
  scan->add_option("--channel", channels, "channel id (repeatable)")->required();
  scan->add_option("--min-lag", sopt.min_lag);
  scan->add_option("--max-lag", sopt.max_lag);
  scan->add_option("--min-rho", sopt.min_rho);
  scan->add_option("--alpha", sopt.alpha);
  scan->add_flag("--passing", only_passing, "only rows passing both filters");
  scan->add_flag("--themes", with_themes, "also slice by each dictionary theme");

  // graph
  auto* graph = app.add_subcommand("graph", "channel reference network");
  graph->require_subcommand(1);
  std::string gpath, spath, ppath, out_path, label;
  int max_iters = 100;
  std::uint64_t rng_seed = 0;
  std::size_t n_sample = 75;
  auto* gbuild = graph->add_subcommand("build", "posts JSONL to edge JSONL");
  gbuild->add_option("--posts", gpath)->required();
  gbuild->add_option("-o,--out", out_path)->required();
  auto* gprop = graph->add_subcommand("propagate", "seeded label propagation");
  gprop->add_option("--graph", gpath)->required();
  gprop->add_option("--seeds", spath)->required();
  gprop->add_option("-o,--out", out_path)->required();
  gprop->add_option("--max-iters", max_iters);
  gprop->add_option("--seed", rng_seed);
  auto* gsample = graph->add_subcommand("sample", "audit sample from one partition class");
  gsample->add_option("--partition", ppath)->required();
  gsample->add_option("--label", label)->required();
  gsample->add_option("-n", n_sample);
  gsample->add_option("--seed", rng_seed);

  // serve
  auto* serve = app.add_subcommand("serve", "review API over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (init->parsed()) {
      cfg.blocking = mode == "blocking";
      auto ws = Workspace::create(root, cfg);
      print({{"workspace", ws.root().string()}, {"config_hash", ws.config_hash()}});
      return 0;
    }
    if (gbuild->parsed()) {
      auto g = build_reference_graph(read_posts(gpath));
      write_jsonl(out_path, graph_to_jsonl(g));
      print({{"nodes", g.nodes.size()}, {"edges", g.edges.size()}});
      return 0;
    }
    if (gprop->parsed()) {
      auto g = graph_from_jsonl(read_jsonl_or_throw(gpath));
      auto p = propagate_labels(g, seeds_from_jsonl(read_jsonl_or_throw(spath)), max_iters, rng_seed);
      write_jsonl(out_path, partition_to_jsonl(p.labels));
      std::map<std::string, std::size_t> counts;
      for (const auto& [ch, pl] : p.labels) ++counts[pl.label];
      print({{"rounds", p.rounds}, {"converged", p.converged}, {"counts", counts}});
      return 0;
    }
    if (gsample->parsed()) {
      auto s = partition_sample(partition_from_jsonl(read_jsonl_or_throw(ppath)), label, n_sample, rng_seed);
      print({{"label", label}, {"channels", s.channels}, {"short_class", s.short_class}});
      return 0;
    }
    if (tcal->parsed()) {
      std::vector<LabeledScore> labeled;
      for (const auto& r : read_jsonl_or_throw(labels_path))
        labeled.push_back({r.at("score").get<double>(), r.at("relevant").get<bool>()});
      auto c = calibrate_confidence(labeled, default_confidence_grid());
      print({{"threshold", c.threshold}, {"precision", c.precision}, {"recall", c.recall}, {"flagged", c.flagged}});
      return 0;
    }

    auto ws = Workspace::open(root);

    if (ingest->parsed()) {
      auto units = ingest_posts(read_posts(posts_path), ws.corpus_start(), ws.window());
      std::vector<json> rows;
      std::map<int, std::size_t> per_t;
      for (const auto& u : units) {
        rows.push_back(unit_to_json(u));
        ++per_t[u.timestep];
      }
      write_jsonl(ws.units_path(), rows);
      print({{"units", units.size()}, {"per_timestep", by_timestep(per_t)}});
    } else if (embed->parsed()) {
      EmbeddingGateway gw(embedding_provider(ws), ws.config().dim);
      ws.load_embeddings(gw.cache());
      const auto units = ws.units();
      if (!units.empty()) gw.embed_batch(units);
      gw.cache().save(ws.embeddings_path());
      print({{"units", units.size()}, {"cached", gw.cache().size()}, {"provider_calls", gw.provider_calls()}});
    } else if (run->parsed()) {
      RunOptions opt;
      opt.from = from;
      opt.to = to;
      opt.classifier = classifier();
      print(run_pipeline(ws, opt).to_json());
    } else if (cluster->parsed()) {
      auto s = current_state(ws);
      print(s.engine.snapshot(timestep.value_or(s.engine.current_timestep())));
    } else if (trends->parsed()) {
      const int t = timestep.value_or(latest_snapshot(ws));
      if (!std::filesystem::exists(ws.trend_report_path(t))) throw NotFoundError("no trend report at " + timestep_tag(t));
      std::cout << read_file(ws.trend_report_path(t));
    } else if (ninit->parsed()) {
      NarrativeDefinition d{nid, nname.empty() ? nid : nname, seed_cluster, {band_lo, band_hi}, attach_th, size_weighted};
      ws.define_narrative(d);
      print(definition_to_json(d));
    } else if (nenq->parsed()) {
      auto s = current_state(ws);
      json out = json::array();
      for (const auto& c : narrative_in(s, nid).candidates()) {
        if (status != "all" && to_string(c.decision) != status) continue;
        if (timestep && c.discovered_at != *timestep) continue;
        auto j = candidate_to_json(nid, c);
        j["id"] = candidate_ref(nid, c.cluster_id);
        j["status"] = to_string(c.decision);
        out.push_back(std::move(j));
      }
      print(out);
    } else if (ndecide->parsed()) {
      ReviewService svc(ws);
      auto [code, body] = svc.decide(cand_ref, {{"decision", decision}, {"reviewer", reviewer}});
      print(body);
      return code == 200 ? 0 : code == 404 ? 3 : code == 409 ? 4 : 6;
    } else if (nattach->parsed()) {
      auto s = current_state(ws);
      json out = json::array();
      for (const auto& [t, ids] : narrative_in(s, nid).attached())
        if (!timestep || t == *timestep) out.push_back({{"timestep", t}, {"clusters", std::vector<ClusterId>(ids.begin(), ids.end())}});
      print(out);
    } else if (nseries->parsed()) {
      auto s = current_state(ws);
      const auto& n = narrative_in(s, nid);
      const auto series = narrative_series(n, s.engine);
      json per_day = json::object();
      for (const auto& [d, c] : series.per_day) per_day[format_day(d)] = c;
      print({{"narrative", nid},
             {"per_timestep", by_timestep(series.per_timestep)},
             {"normalized", by_timestep(series.normalized_timesteps())},
             {"per_day", per_day},
             {"centroids", n.centroid_series_json()}});
    } else if (tprop->parsed()) {
      auto s = current_state(ws);
      const auto& n = narrative_in(s, nid);
      auto gen = generator();
      auto clf = classifier();
      auto dicts = generate_dictionaries(*gen, n, s.engine, runs);
      std::vector<DocUnit> corpus;
      for (auto i : n.units(s.engine)) corpus.push_back(s.engine.points()[i].unit);
      evaluate_dictionaries(dicts, *clf, corpus, theme_th);
      auto best = select_dictionary(dicts);
      write_file_atomic(ws.dictionary_path(nid), dictionary_to_json(best).dump(2) + "\n");
      json scores = json::array();
      for (const auto& d : dicts) scores.push_back({{"run", d.generation_run}, {"themes", d.themes.size()}, {"tcs", *d.tcs}});
      print({{"selected", dictionary_to_json(best)}, {"candidates", scores}});
    } else if (tclass->parsed()) {
      auto s = current_state(ws);
      const auto& n = narrative_in(s, nid);
      if (!std::filesystem::exists(ws.dictionary_path(nid))) throw NotFoundError("no dictionary; run `themes propose` first");
      const auto dict = dictionary_from_json(json::parse(read_file(ws.dictionary_path(nid))));
      auto clf = classifier();
      std::vector<json> rows;
      for (auto i : n.units(s.engine)) rows.push_back(assignment_to_json(classify(*clf, s.engine.points()[i].unit, dict.themes)));
      write_jsonl(assignments_file(ws, nid), rows);
      print({{"narrative", nid}, {"classified", rows.size()}, {"file", assignments_file(ws, nid).string()}});
    } else if (ttcs->parsed()) {
      if (!std::filesystem::exists(ws.dictionary_path(nid))) throw NotFoundError("no dictionary; run `themes propose` first");
      const auto dict = dictionary_from_json(json::parse(read_file(ws.dictionary_path(nid))));
      std::vector<ThemeAssignment> a;
      for (const auto& r : read_jsonl_or_throw(assignments_file(ws, nid).string())) a.push_back(assignment_from_json(r));
      print({{"narrative", nid}, {"threshold", theme_th}, {"tcs", tcs(dict, a, theme_th)}});
    } else if (scan->parsed()) {
      auto s = current_state(ws);
      const auto& n = narrative_in(s, nid);
      AssignmentIndex index;
      std::vector<ThemeFilter> filters;
      if (with_themes) {
        if (!std::filesystem::exists(ws.dictionary_path(nid))) throw NotFoundError("no dictionary; run `themes propose` first");
        const auto dict = dictionary_from_json(json::parse(read_file(ws.dictionary_path(nid))));
        for (const auto& r : read_jsonl_or_throw(assignments_file(ws, nid).string())) {
          auto a = assignment_from_json(r);
          index.emplace(a.unit_id, std::move(a));
        }
        for (const auto& th : dict.themes) filters.push_back({th.label, &index, ws.config().theme_threshold});
      }
      std::cout << association_table(scan_associations(n, s.engine, channels, filters, sopt), only_passing);
    } else if (serve->parsed()) {
      ReviewService svc(ws);
      httplib::Server srv;
      std::cerr << "review API on http://" << host << ":" << port << "\n";
      serve_review_api(svc, srv, host, port);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
