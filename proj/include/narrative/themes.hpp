#pragma once

// Narrative themes: dictionary generation through a generative provider,
// multi-label zero-shot scoring through a classifier provider, Theme Coverage
// Score, confidence calibration, and theme time-series analytics.

#include <unordered_map>

#include "macro.hpp"
#include "stats.hpp"
#include "trends.hpp"

namespace narrative {

struct ThemeProposal {
  std::string label;
  std::string description;
};

struct Theme {
  std::string label;
  std::string description;
  int emerged_at = 0;
};

struct ThemeDictionary {
  std::vector<Theme> themes;
  std::optional<double> tcs;
  int generation_run = 0;

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& t : themes) out.push_back(t.label);
    return out;
  }
};

/// Labels compare after ASCII case folding and trimming.
inline std::string theme_key(std::string_view label) {
  std::string s = detail::collapse_whitespace(label);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

class GeneratorProvider {
 public:
  virtual ~GeneratorProvider() = default;
  virtual std::vector<ThemeProposal> generate(const std::vector<std::string>& samples,
                                              const std::vector<ThemeProposal>& existing) = 0;
};

class ClassifierProvider {
 public:
  virtual ~ClassifierProvider() = default;
  /// One score in [0,1] per label, independently (multi-label).
  virtual std::vector<double> score(const std::string& text, const std::vector<std::string>& labels) = 0;
};

/// Offline classifier: a label scores the fraction of its words present in
/// the text (case-insensitive).
class KeywordClassifier final : public ClassifierProvider {
 public:
  std::vector<double> score(const std::string& text, const std::vector<std::string>& labels) override {
    const std::string hay = " " + theme_key(text) + " ";
    std::vector<double> out;
    for (const auto& l : labels) {
      std::istringstream words(theme_key(l));
      std::string w;
      std::size_t n = 0, hit = 0;
      while (words >> w) {
        ++n;
        if (hay.find(w) != std::string::npos) ++hit;
      }
      out.push_back(n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0);
    }
    return out;
  }
};

/// Offline generator: proposes the most frequent longer words of the samples.
class FrequentTermGenerator final : public GeneratorProvider {
 public:
  explicit FrequentTermGenerator(std::size_t per_call = 3) : per_call_(per_call) {}

  std::vector<ThemeProposal> generate(const std::vector<std::string>& samples,
                                      const std::vector<ThemeProposal>& existing) override {
    std::map<std::string, std::size_t> freq;
    for (const auto& s : samples) {
      std::istringstream in(theme_key(s));
      std::string w;
      while (in >> w) {
        w.erase(std::remove_if(w.begin(), w.end(), [](char c) { return std::ispunct(static_cast<unsigned char>(c)); }),
                w.end());
        if (w.size() >= 6) ++freq[w];
      }
    }
    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (const auto& [w, n] : freq) ranked.emplace_back(n, w);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<ThemeProposal> out = existing;
    for (std::size_t i = 0; i < ranked.size() && i < per_call_; ++i)
      out.push_back({ranked[i].second, "posts mentioning " + ranked[i].second});
    return out;
  }

 private:
  std::size_t per_call_;
};

/// Feeds near-centroid samples of every cluster attached at t, plus the
/// existing themes, to the generator. New labels emerge at t; known labels
/// keep their emergence timestep. Nothing is dropped.
inline ThemeDictionary propose_themes(GeneratorProvider& gen, const NarrativeCluster& narrative,
                                      const OnlineAgglomerative& state, int t, const ThemeDictionary& existing,
                                      int run, std::size_t n_near = 10) {
  auto it = narrative.attached().find(t);
  if (it == narrative.attached().end() || it->second.empty())
    throw DomainError("narrative has no attached clusters at timestep " + std::to_string(t));
  std::vector<std::string> samples;
  for (ClusterId id : it->second)
    for (const auto& u : sample_cluster(state, id, t, n_near, 0)) samples.push_back(u.text);
  std::vector<ThemeProposal> prior;
  for (const auto& th : existing.themes) prior.push_back({th.label, th.description});

  const auto proposed = gen.generate(samples, prior);
  ThemeDictionary out = existing;
  out.generation_run = run;
  out.tcs.reset();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < out.themes.size(); ++i) index.emplace(theme_key(out.themes[i].label), i);
  for (const auto& p : proposed) {
    const auto key = theme_key(p.label);
    if (key.empty()) throw ParseError("generator proposed an empty theme label", json{{"label", p.label}}.dump());
    if (auto f = index.find(key); f != index.end()) {
      if (!p.description.empty()) out.themes[f->second].description = p.description;
      continue;
    }
    index.emplace(key, out.themes.size());
    out.themes.push_back({p.label, p.description, t});
  }
  return out;
}

/// Runs theme proposal over every attached timestep, once per run.
inline std::vector<ThemeDictionary> generate_dictionaries(GeneratorProvider& gen, const NarrativeCluster& narrative,
                                                          const OnlineAgglomerative& state, int runs = 15) {
  std::vector<ThemeDictionary> out;
  for (int r = 0; r < runs; ++r) {
    ThemeDictionary d;
    d.generation_run = r;
    for (const auto& [t, ids] : narrative.attached())
      if (!ids.empty()) d = propose_themes(gen, narrative, state, t, d, r);
    out.push_back(std::move(d));
  }
  return out;
}

struct ThemeAssignment {
  std::string unit_id;
  std::map<std::string, double> scores;

  std::vector<std::string> assigned(double threshold) const {
    std::vector<std::string> out;
    for (const auto& [l, s] : scores)
      if (s >= threshold) out.push_back(l);
    return out;
  }

  bool carries(const std::string& label, double threshold) const {
    auto it = scores.find(label);
    return it != scores.end() && it->second >= threshold;
  }
};

inline ThemeAssignment classify(ClassifierProvider& clf, const DocUnit& unit, const std::vector<Theme>& themes) {
  if (themes.empty()) throw DomainError("classify needs at least one theme");
  std::vector<std::string> labels;
  for (const auto& t : themes) labels.push_back(t.label);
  const auto scores = clf.score(unit.text, labels);
  if (scores.size() != labels.size()) throw ParseError("classifier returned wrong number of scores", "");
  ThemeAssignment a;
  a.unit_id = unit.unit_id;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0))
      throw ParseError("classifier score outside [0,1]", std::to_string(scores[i]));
    a.scores[labels[i]] = scores[i];
  }
  return a;
}

/// Theme Coverage Score: share of units whose best score on any dictionary
/// theme reaches the threshold. Pooling all units equals summing per-timestep
/// qualifying counts over the total.
inline double tcs(const ThemeDictionary& dict, std::span<const ThemeAssignment> corpus, double threshold) {
  if (corpus.empty()) throw DomainError("TCS needs a nonempty corpus");
  if (dict.themes.empty()) return 0.0;
  std::size_t covered = 0;
  for (const auto& a : corpus) {
    for (const auto& t : dict.themes)
      if (a.carries(t.label, threshold)) {
        ++covered;
        break;
      }
  }
  return static_cast<double>(covered) / static_cast<double>(corpus.size());
}

/// Highest TCS; ties prefer fewer themes, then the earliest run.
inline ThemeDictionary select_dictionary(const std::vector<ThemeDictionary>& candidates) {
  if (candidates.empty()) throw DomainError("select_dictionary needs at least one candidate");
  const ThemeDictionary* best = nullptr;
  for (const auto& c : candidates) {
    if (!c.tcs) throw DomainError("candidate dictionary has not been evaluated");
    if (!best || *c.tcs > *best->tcs ||
        (*c.tcs == *best->tcs && (c.themes.size() < best->themes.size() ||
                                  (c.themes.size() == best->themes.size() && c.generation_run < best->generation_run))))
      best = &c;
  }
  return *best;
}

/// Classifies the corpus against each candidate and records its TCS.
inline void evaluate_dictionaries(std::vector<ThemeDictionary>& candidates, ClassifierProvider& clf,
                                  const std::vector<DocUnit>& corpus, double threshold) {
  for (auto& d : candidates) {
    std::vector<ThemeAssignment> a;
    if (!d.themes.empty())
      for (const auto& u : corpus) a.push_back(classify(clf, u, d.themes));
    d.tcs = d.themes.empty() ? 0.0 : tcs(d, a, threshold);
  }
}

struct LabeledScore {
  double score;
  bool relevant;  // human judgement
};

struct Calibration {
  double threshold = 0.7;
  double precision = 0.0;
  double recall = 0.0;
  bool flagged = false;  // no candidate met the recall floor
};

/// Maximizes precision subject to recall >= floor; precision ties go to the
/// higher recall, then the higher threshold.
inline Calibration calibrate_confidence(const std::vector<LabeledScore>& labeled, const std::vector<double>& candidates,
                                        double recall_floor = 0.5) {
  if (labeled.empty()) throw DomainError("calibration needs at least one labeled example");
  if (candidates.empty()) throw DomainError("calibration needs candidate thresholds");
  std::size_t positives = 0;
  for (const auto& l : labeled) positives += l.relevant ? 1 : 0;
  std::vector<Calibration> all;
  for (double t : candidates) {
    std::size_t tp = 0, fp = 0;
    for (const auto& l : labeled) {
      if (l.score < t) continue;
      (l.relevant ? tp : fp)++;
    }
    Calibration c;
    c.threshold = t;
    c.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    c.recall = positives ? static_cast<double>(tp) / static_cast<double>(positives) : 0.0;
    all.push_back(c);
  }
  auto pick = [](const std::vector<Calibration>& v) {
    Calibration best = v.front();
    for (const auto& c : v)
      if (std::tie(c.precision, c.recall, c.threshold) > std::tie(best.precision, best.recall, best.threshold)) best = c;
    return best;
  };
  std::vector<Calibration> feasible;
  for (const auto& c : all)
    if (c.recall >= recall_floor) feasible.push_back(c);
  if (!feasible.empty()) return pick(feasible);
  auto c = pick(all);
  c.flagged = true;
  return c;
}

inline std::vector<double> default_confidence_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 19; ++i) out.push_back(i * 5 / 100.0);
  return out;
}

using AssignmentIndex = std::unordered_map<std::string, ThemeAssignment>;

inline json assignment_to_json(const ThemeAssignment& a) { return json{{"unit_id", a.unit_id}, {"scores", a.scores}}; }

inline ThemeAssignment assignment_from_json(const json& j) {
  ThemeAssignment a;
  a.unit_id = j.at("unit_id").get<std::string>();
  a.scores = j.at("scores").get<std::map<std::string, double>>();
  return a;
}

inline json dictionary_to_json(const ThemeDictionary& d) {
  json themes = json::array();
  for (const auto& t : d.themes)
    themes.push_back({{"label", t.label}, {"description", t.description}, {"emerged_at", t.emerged_at}});
  return json{{"themes", std::move(themes)},
              {"tcs", d.tcs ? json(*d.tcs) : json(nullptr)},
              {"generation_run", d.generation_run}};
}

inline ThemeDictionary dictionary_from_json(const json& j) {
  ThemeDictionary d;
  for (const auto& t : j.at("themes"))
    d.themes.push_back({t.at("label").get<std::string>(), t.value("description", std::string{}), t.value("emerged_at", 0)});
  if (j.contains("tcs") && !j.at("tcs").is_null()) d.tcs = j.at("tcs").get<double>();
  d.generation_run = j.value("generation_run", 0);
  return d;
}

// ---------------------------------------------------------------------------
// Time-series analytics over a narrative's units

struct ThemeSeries {
  std::map<std::int64_t, std::size_t> day_count;
  std::map<std::int64_t, double> day_proportion;
  std::map<int, std::size_t> timestep_count;
  std::map<int, double> timestep_proportion;
};

namespace detail {
inline void require_theme(const ThemeDictionary& dict, const std::string& theme) {
  for (const auto& t : dict.themes)
    if (t.label == theme) return;
  throw NotFoundError("unknown theme '" + theme + "'");
}
}  // namespace detail

/// Count and share of the narrative's units carrying the theme, per day and
/// per timestep.
inline ThemeSeries theme_series(const NarrativeCluster& narrative, const OnlineAgglomerative& state,
                                const AssignmentIndex& assignments, const ThemeDictionary& dict,
                                const std::string& theme, double threshold) {
  detail::require_theme(dict, theme);
  ThemeSeries s;
  std::map<std::int64_t, std::size_t> day_total;
  std::map<int, std::size_t> step_total;
  for (const auto& [t, idx] : narrative.units_by_timestep(state)) {
    step_total[t] += idx.size();
    s.timestep_count.try_emplace(t, 0);
    for (auto i : idx) {
      const auto& u = state.points()[i].unit;
      const auto d = day_index(u.timestamp);
      ++day_total[d];
      s.day_count.try_emplace(d, 0);
      auto it = assignments.find(u.unit_id);
      if (it != assignments.end() && it->second.carries(theme, threshold)) {
        ++s.day_count[d];
        ++s.timestep_count[t];
      }
    }
  }
  for (const auto& [d, n] : day_total) s.day_proportion[d] = static_cast<double>(s.day_count[d]) / static_cast<double>(n);
  for (const auto& [t, n] : step_total)
    s.timestep_proportion[t] = n ? static_cast<double>(s.timestep_count[t]) / static_cast<double>(n) : 0.0;
  return s;
}

/// Zero-filled daily counts of each theme over the narrative's day span.
inline std::map<std::string, DailySeries> theme_daily_series(const NarrativeCluster& narrative,
                                                             const OnlineAgglomerative& state,
                                                             const AssignmentIndex& assignments,
                                                             const ThemeDictionary& dict, double threshold) {
  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
  const auto units = narrative.units(state);
  for (auto i : units) {
    const auto d = day_index(state.points()[i].unit.timestamp);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  std::map<std::string, DailySeries> out;
  if (units.empty()) return out;
  for (const auto& th : dict.themes) {
    auto& s = out[th.label];
    s.start_day = lo;
    s.values.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
  }
  for (auto i : units) {
    const auto& u = state.points()[i].unit;
    auto it = assignments.find(u.unit_id);
    if (it == assignments.end()) continue;
    const auto d = static_cast<std::size_t>(day_index(u.timestamp) - lo);
    for (const auto& th : dict.themes)
      if (it->second.carries(th.label, threshold)) out[th.label].values[d] += 1.0;
  }
  return out;
}

struct CooccurrenceMatrix {
  std::vector<std::string> themes;
  std::vector<std::vector<std::optional<Correlation>>> cells;  // nullopt where undefined
};

/// Spearman correlation between daily theme-count series for every pair.
inline CooccurrenceMatrix theme_cooccurrence(const std::map<std::string, DailySeries>& series) {
  CooccurrenceMatrix m;
  for (const auto& [label, s] : series) m.themes.push_back(label);
  const std::size_t k = m.themes.size();
  m.cells.assign(k, std::vector<std::optional<Correlation>>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) {
      try {
        const auto c = spearman(series.at(m.themes[i]).values, series.at(m.themes[j]).values);
        m.cells[i][j] = m.cells[j][i] = c;
      } catch (const DomainError&) {
      }
    }
  return m;
}

struct FlowRecord {
  std::string from_period;
  std::string to_period;
  std::string source;
  std::string target;
  std::size_t clusters = 0;
};

struct PeriodDominance {
  std::string period;
  std::vector<std::pair<ClusterId, std::vector<std::string>>> clusters;  // most populated first, top themes
};

inline std::string month_of(Instant t) { return format_rfc3339(t).substr(0, 7); }

/// For each calendar month: the top_clusters most populated attached story
/// clusters and their top_themes themes by assignment count; then
/// month-to-month transitions of dominant themes within the same cluster.
inline std::pair<std::vector<PeriodDominance>, std::vector<FlowRecord>> dominant_theme_flow(
    const NarrativeCluster& narrative, const OnlineAgglomerative& state, const AssignmentIndex& assignments,
    double threshold, std::size_t top_clusters = 5, std::size_t top_themes = 2) {
  // period -> cluster -> units
  std::map<std::string, std::map<ClusterId, std::vector<std::size_t>>> grouped;
  for (const auto& [t, ids] : narrative.attached())
    for (ClusterId id : ids) {
      auto it = state.cluster(id).members.find(t);
      if (it == state.cluster(id).members.end()) continue;
      for (auto p : it->second) grouped[month_of(state.points()[p].unit.timestamp)][id].push_back(p);
    }

  std::vector<PeriodDominance> periods;
  for (const auto& [period, by_cluster] : grouped) {
    std::vector<std::pair<std::size_t, ClusterId>> pop;
    for (const auto& [id, pts] : by_cluster) pop.emplace_back(pts.size(), id);
    std::sort(pop.begin(), pop.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    PeriodDominance pd;
    pd.period = period;
    for (std::size_t i = 0; i < pop.size() && i < top_clusters; ++i) {
      std::map<std::string, std::size_t> counts;
      for (auto p : by_cluster.at(pop[i].second)) {
        auto it = assignments.find(state.points()[p].unit.unit_id);
        if (it == assignments.end()) continue;
        for (const auto& l : it->second.assigned(threshold)) ++counts[l];
      }
      std::vector<std::pair<std::size_t, std::string>> ranked;
      for (const auto& [l, n] : counts) ranked.emplace_back(n, l);
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::vector<std::string> top;
      for (std::size_t k = 0; k < ranked.size() && k < top_themes; ++k) top.push_back(ranked[k].second);
      pd.clusters.emplace_back(pop[i].second, std::move(top));
    }
    periods.push_back(std::move(pd));
  }

  std::vector<FlowRecord> flows;
  for (std::size_t p = 0; p + 1 < periods.size(); ++p) {
    std::map<std::pair<std::string, std::string>, std::size_t> edges;
    for (const auto& [id, from] : periods[p].clusters)
      for (const auto& [id2, to] : periods[p + 1].clusters) {
        if (id2 != id) continue;
        for (const auto& a : from)
          for (const auto& b : to) ++edges[{a, b}];
      }
    for (const auto& [e, n] : edges) flows.push_back({periods[p].period, periods[p + 1].period, e.first, e.second, n});
  }
  return {periods, flows};
}

}  // namespace narrative
