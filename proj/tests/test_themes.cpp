#include <gtest/gtest.h>

#include "narrative/themes.hpp"
#include "synthetic.hpp"

using namespace narrative;
using namespace narrative::testing;

namespace {

class TableClassifier final : public ClassifierProvider {
 public:
  std::map<std::string, std::map<std::string, double>> table;  // text -> label -> score
  std::vector<double> score(const std::string& text, const std::vector<std::string>& labels) override {
    std::vector<double> out;
    for (const auto& l : labels) {
      auto it = table.find(text);
      out.push_back(it == table.end() || !it->second.count(l) ? 0.0 : it->second.at(l));
    }
    return out;
  }
};

class FixedGenerator final : public GeneratorProvider {
 public:
  std::vector<ThemeProposal> reply;
  std::vector<std::string> last_samples;
  std::vector<ThemeProposal> generate(const std::vector<std::string>& samples,
                                      const std::vector<ThemeProposal>&) override {
    last_samples = samples;
    return reply;
  }
};

ThemeDictionary dict_of(std::vector<std::string> labels, int run = 0) {
  ThemeDictionary d;
  d.generation_run = run;
  for (auto& l : labels) d.themes.push_back({l, "", 0});
  return d;
}

DocUnit doc(std::string id, std::string text) {
  DocUnit u;
  u.unit_id = std::move(id);
  u.text = std::move(text);
  return u;
}

// A narrative over one planted cluster, units spread over days.
struct Fixture {
  OnlineAgglomerative eng{ClusterConfig{.threshold = 0.95}};
  std::unique_ptr<NarrativeCluster> n;
  Fixture(std::size_t units_per_step, int steps) {
    const Instant base = parse_rfc3339("2022-03-01T00:00:00Z");
    for (int t = 0; t < steps; ++t) {
      std::vector<EmbeddedUnit> b;
      for (std::size_t i = 0; i < units_per_step; ++i)
        b.push_back(make_unit("u" + std::to_string(t) + "_" + std::to_string(i), unit_fvec({1, 0}), t, "c",
                              base + std::chrono::days{t * 7 + static_cast<int>(i % 7)}));
      eng.incremental_fit(b);
    }
    NarrativeDefinition d;
    d.id = "n";
    d.initial_seed = 0;
    n = std::make_unique<NarrativeCluster>(eng, d);
    n->recompute(eng, 0, steps - 1);
  }
};

}  // namespace

TEST(Tcs, HandCountedSevenOfTen) {
  // Scores chosen so exactly units 0..6 reach 0.5 on some theme.
  const double table[10][2] = {{0.9, 0.1}, {0.5, 0.0}, {0.2, 0.7}, {0.6, 0.6}, {0.0, 0.5}, {0.51, 0.1},
                               {0.1, 0.99}, {0.49, 0.49}, {0.0, 0.0}, {0.3, 0.2}};
  std::vector<ThemeAssignment> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back({"u" + std::to_string(i), {{"a", table[i][0]}, {"b", table[i][1]}}});
  EXPECT_DOUBLE_EQ(tcs(dict_of({"a", "b"}), corpus, 0.5), 0.7);
  EXPECT_DOUBLE_EQ(tcs(dict_of({}), corpus, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(tcs(dict_of({"a", "b"}), corpus, 0.0), 1.0);
  EXPECT_THROW(tcs(dict_of({"a"}), std::vector<ThemeAssignment>{}, 0.5), DomainError);
}

TEST(Tcs, MonotoneInThemeSet) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ThemeAssignment> corpus;
    for (int i = 0; i < 40; ++i) {
      ThemeAssignment a{"u" + std::to_string(i), {}};
      for (const auto& l : pool) a.scores[l] = ud(gen);
      corpus.push_back(a);
    }
    std::vector<std::string> labels;
    double prev = 0.0;
    const double th = ud(gen);
    for (const auto& l : pool) {
      if (gen() % 2) continue;
      labels.push_back(l);
      const double v = tcs(dict_of(labels), corpus, th);
      EXPECT_GE(v, prev);
      EXPECT_LE(v, 1.0);
      prev = v;
    }
  }
}

TEST(Classify, StubScores) {
  TableClassifier clf;
  clf.table["t"] = {{"war", 1.0}, {"peace", 0.8}, {"trade", 0.1}};
  clf.table["zero"] = {};
  std::vector<Theme> themes = {{"war", "", 0}, {"peace", "", 0}, {"trade", "", 0}};
  const auto a = classify(clf, doc("1", "t"), themes);
  EXPECT_EQ(a.assigned(1.0), std::vector<std::string>{"war"});
  EXPECT_EQ(a.assigned(0.5), (std::vector<std::string>{"peace", "war"}));
  EXPECT_TRUE(classify(clf, doc("2", "zero"), themes).assigned(0.01).empty());
  EXPECT_THROW(classify(clf, doc("3", "t"), {}), DomainError);
  clf.table["bad"] = {{"war", 1.5}};
  EXPECT_THROW(classify(clf, doc("4", "bad"), themes), ParseError);
  // Same inputs, same assignments.
  EXPECT_EQ(classify(clf, doc("1", "t"), themes).scores, a.scores);
}

TEST(Classify, KeywordClassifierIsMultiLabel) {
  KeywordClassifier clf;
  const auto s = clf.score("Grain exports from the Odesa port resumed", {"grain exports", "port", "football"});
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], 1.0);
  EXPECT_DOUBLE_EQ(s[2], 0.0);
}

TEST(Propose, EmergenceAndRefinement) {
  Fixture f(6, 3);
  FixedGenerator gen;
  gen.reply = {{"Sanctions", "d1"}, {"Energy", "d2"}};
  auto d1 = propose_themes(gen, *f.n, f.eng, 1, ThemeDictionary{}, 0);
  ASSERT_EQ(d1.themes.size(), 2u);
  for (const auto& t : d1.themes) EXPECT_EQ(t.emerged_at, 1);
  EXPECT_FALSE(gen.last_samples.empty());
  EXPECT_LE(gen.last_samples.size(), 10u);

  gen.reply = {{"sanctions", "d1"}, {"Energy", "d2"}};
  auto d2 = propose_themes(gen, *f.n, f.eng, 2, d1, 5);
  EXPECT_EQ(d2.generation_run, 5);
  EXPECT_EQ(dictionary_to_json(d2)["themes"], dictionary_to_json(d1)["themes"]);

  gen.reply = {{"Refugees", "d3"}};
  auto d3 = propose_themes(gen, *f.n, f.eng, 2, d2, 6);
  ASSERT_EQ(d3.themes.size(), 3u);
  EXPECT_EQ(d3.themes[0].emerged_at, 1);
  EXPECT_EQ(d3.themes[2].emerged_at, 2);
  EXPECT_THROW(propose_themes(gen, *f.n, f.eng, 9, d2, 0), DomainError);

  gen.reply = {{"  ", ""}};
  EXPECT_THROW(propose_themes(gen, *f.n, f.eng, 1, d1, 0), ParseError);
}

TEST(Propose, FifteenRuns) {
  Fixture f(6, 3);
  FrequentTermGenerator gen;
  const auto dicts = generate_dictionaries(gen, *f.n, f.eng);
  ASSERT_EQ(dicts.size(), 15u);
  for (int r = 0; r < 15; ++r) EXPECT_EQ(dicts[static_cast<std::size_t>(r)].generation_run, r);
}

TEST(Select, ArgmaxAndTies) {
  auto a = dict_of({"x"}, 0), b = dict_of({"x", "y"}, 1), c = dict_of({"x"}, 2);
  a.tcs = 0.6;
  b.tcs = 0.8;
  c.tcs = 0.7;
  EXPECT_EQ(select_dictionary({a, b, c}).generation_run, 1);
  auto big = dict_of(std::vector<std::string>(12, "t"), 0), small = dict_of(std::vector<std::string>(9, "t"), 1);
  big.tcs = small.tcs = 0.9;
  EXPECT_EQ(select_dictionary({big, small}).themes.size(), 9u);
  auto early = dict_of({"q"}, 3), late = dict_of({"r"}, 7);
  early.tcs = late.tcs = 0.5;
  EXPECT_EQ(select_dictionary({late, early}).generation_run, 3);
  EXPECT_EQ(select_dictionary({a}).generation_run, 0);
  EXPECT_THROW(select_dictionary({dict_of({"z"})}), DomainError);
}

TEST(Calibrate, PrecisionUnderRecallFloor) {
  // Relevant scores in [0.8,0.95], irrelevant in [0.1,0.3]: thresholds 0.35..0.8 all perfect.
  std::vector<LabeledScore> sep = {{0.8, true}, {0.9, true}, {0.95, true}, {0.1, false}, {0.3, false}};
  auto c = calibrate_confidence(sep, default_confidence_grid());
  EXPECT_NEAR(c.threshold, 0.8, 1e-12);
  EXPECT_DOUBLE_EQ(c.precision, 1.0);
  EXPECT_DOUBLE_EQ(c.recall, 1.0);
  EXPECT_FALSE(c.flagged);

  // Enumerated by hand over {0.2,0.5,0.7}: precision 3/5, 2/3, 1/1; recall 1, 2/3, 1/3.
  std::vector<LabeledScore> mix = {{0.9, true}, {0.6, true}, {0.3, true}, {0.55, false}, {0.25, false}};
  auto m = calibrate_confidence(mix, {0.2, 0.5, 0.7});
  EXPECT_DOUBLE_EQ(m.threshold, 0.5);
  auto strict = calibrate_confidence(mix, {0.2, 0.5, 0.7}, 0.9);
  EXPECT_DOUBLE_EQ(strict.threshold, 0.2);

  auto unreachable = calibrate_confidence({{0.1, true}, {0.9, false}}, {0.5, 0.95});
  EXPECT_TRUE(unreachable.flagged);
  EXPECT_THROW(calibrate_confidence({}, {0.5}), DomainError);
}

TEST(Series, ProportionsAndReconciliation) {
  Fixture f(20, 1);
  AssignmentIndex idx;
  const auto units = f.n->units(f.eng);
  ASSERT_EQ(units.size(), 20u);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < units.size(); ++k) {
    const auto& u = f.eng.points()[units[k]].unit;
    const bool on = k % 4 == 0;
    assigned += on;
    idx[u.unit_id] = {u.unit_id, {{"war", on ? 0.9 : 0.1}, {"peace", 0.9}}};
  }
  const auto dict = dict_of({"war", "peace", "never"});
  const auto s = theme_series(*f.n, f.eng, idx, dict, "war", 0.5);
  EXPECT_DOUBLE_EQ(s.timestep_proportion.at(0), 0.25);
  std::size_t sum = 0;
  for (const auto& [d, c] : s.day_count) sum += c;
  EXPECT_EQ(sum, assigned);
  const auto never = theme_series(*f.n, f.eng, idx, dict, "never", 0.5);
  for (const auto& [d, c] : never.day_count) EXPECT_EQ(c, 0u);
  EXPECT_THROW(theme_series(*f.n, f.eng, idx, dict, "missing", 0.5), NotFoundError);
}

TEST(Cooccurrence, SymmetricUnitDiagonal) {
  std::map<std::string, DailySeries> s;
  s["a"] = {0, {1, 3, 2, 5, 4, 6, 8}};
  s["b"] = {0, {1, 3, 2, 5, 4, 6, 8}};
  s["c"] = {0, {2, 2, 2, 2, 2, 2, 2}};
  s["d"] = {0, {5, 1, 4, 2, 6, 3, 0}};
  const auto m = theme_cooccurrence(s);
  ASSERT_EQ(m.themes.size(), 4u);
  EXPECT_DOUBLE_EQ(m.cells[0][1]->rho, 1.0);
  EXPECT_DOUBLE_EQ(m.cells[0][0]->rho, 1.0);
  EXPECT_FALSE(m.cells[2][0].has_value());
  EXPECT_DOUBLE_EQ(m.cells[0][3]->rho, m.cells[3][0]->rho);
}

TEST(Flow, TransitionsWithinSameCluster) {
  OnlineAgglomerative eng(ClusterConfig{.threshold = 0.95});
  const Instant mar = parse_rfc3339("2022-03-10T00:00:00Z"), apr = parse_rfc3339("2022-04-10T00:00:00Z");
  eng.incremental_fit({make_unit("m1", unit_fvec({1, 0}), 0, "c", mar), make_unit("m2", unit_fvec({1, 0}), 0, "c", mar)});
  eng.incremental_fit({make_unit("a1", unit_fvec({1, 0}), 1, "c", apr), make_unit("a2", unit_fvec({1, 0}), 1, "c", apr)});
  NarrativeDefinition d;
  d.id = "n";
  NarrativeCluster n(eng, d);
  n.recompute(eng, 0, 1);
  AssignmentIndex idx;
  for (const auto* id : {"m1", "m2"}) idx[id] = {id, {{"A", 0.9}, {"B", 0.1}}};
  for (const auto* id : {"a1", "a2"}) idx[id] = {id, {{"A", 0.1}, {"B", 0.9}}};
  auto [periods, flows] = dominant_theme_flow(n, eng, idx, 0.5);
  ASSERT_EQ(periods.size(), 2u);
  EXPECT_EQ(periods[0].period, "2022-03");
  ASSERT_EQ(flows.size(), 1u);
  EXPECT_EQ(flows[0].source, "A");
  EXPECT_EQ(flows[0].target, "B");
  EXPECT_EQ(flows[0].clusters, 1u);
}

TEST(Records, AssignmentAndDictionaryRoundTrip) {
  ThemeAssignment a{"u1", {{"x", 0.25}, {"y", 0.1 + 0.2}}};
  const auto back = assignment_from_json(json::parse(assignment_to_json(a).dump()));
  EXPECT_EQ(back.scores, a.scores);
  auto d = dict_of({"x", "y"}, 4);
  d.tcs = 0.1 + 0.2;
  const auto dd = dictionary_from_json(json::parse(dictionary_to_json(d).dump()));
  EXPECT_EQ(*dd.tcs, *d.tcs);
  EXPECT_EQ(dd.generation_run, 4);
}
