#pragma once

// Contributor/narrative association scan: lagged Spearman plus Granger tests
// between one channel's daily posts and everyone else's engagement.

#include "themes.hpp"

namespace narrative {

struct ThemeFilter {
  std::string label;
  const AssignmentIndex* assignments = nullptr;
  double threshold = 0.7;
};

struct SeriesPair {
  DailySeries x;  // the channel's own narrative posts
  DailySeries y;  // narrative posts by every other channel
};

/// Daily series over the corpus day span. The channel's own posts go to x
/// and are excluded from y.
inline SeriesPair build_series_pair(const NarrativeCluster& narrative, const OnlineAgglomerative& state,
                                    const std::string& channel, const std::optional<ThemeFilter>& theme = {}) {
  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
  bool present = false;
  for (const auto& p : state.points()) {
    const auto d = day_index(p.unit.timestamp);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    present = present || p.unit.channel_id == channel;
  }
  if (!present) throw NotFoundError("channel '" + channel + "' not in corpus");
  SeriesPair s;
  s.x.start_day = s.y.start_day = lo;
  s.x.values.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
  s.y.values = s.x.values;
  for (auto i : narrative.units(state)) {
    const auto& u = state.points()[i].unit;
    if (theme) {
      auto it = theme->assignments->find(u.unit_id);
      if (it == theme->assignments->end() || !it->second.carries(theme->label, theme->threshold)) continue;
    }
    const auto d = static_cast<std::size_t>(day_index(u.timestamp) - lo);
    (u.channel_id == channel ? s.x : s.y).values[d] += 1.0;
  }
  return s;
}

struct AssociationResult {
  std::string narrative_id;
  std::optional<std::string> theme;
  std::string channel_id;
  int lag = 1;
  double rho = 0.0;
  double rho_p = 1.0;
  double granger_F = 0.0;
  double granger_p = 1.0;
  bool passes_filter = false;
};

struct SkippedCell {
  std::optional<std::string> theme;
  std::string channel_id;
  int lag = 1;
  std::string reason;
};

struct ScanOptions {
  int min_lag = 1;
  int max_lag = 7;
  double min_rho = 0.3;
  double alpha = 0.01;
};

struct ScanResult {
  std::vector<AssociationResult> results;  // rho descending
  std::vector<SkippedCell> skipped;
};

/// Lagged Spearman (x leads y by `lag` days) and Granger test of lag order
/// `lag` for a single cell.
inline AssociationResult associate(const SeriesPair& s, int lag, const ScanOptions& opt) {
  AssociationResult r;
  r.lag = lag;
  const auto c = lagged_spearman(s.x.values, s.y.values, lag);
  const auto g = granger_test(s.x.values, s.y.values, lag);
  r.rho = c.rho;
  r.rho_p = c.p;
  r.granger_F = g.F;
  r.granger_p = g.p;
  r.passes_filter = r.rho > opt.min_rho && r.rho_p < opt.alpha && r.granger_p < opt.alpha;
  return r;
}

/// Full channel x lag (x theme, or the whole narrative when themes is empty)
/// cross. Cells that cannot be computed are reported as skipped.
inline ScanResult scan_associations(const NarrativeCluster& narrative, const OnlineAgglomerative& state,
                                    const std::vector<std::string>& channels, const std::vector<ThemeFilter>& themes,
                                    const ScanOptions& opt = {}) {
  ScanResult out;
  std::vector<std::optional<ThemeFilter>> slices;
  if (themes.empty()) slices.emplace_back();
  for (const auto& t : themes) slices.emplace_back(t);
  for (const auto& slice : slices) {
    const auto label = slice ? std::optional<std::string>(slice->label) : std::nullopt;
    for (const auto& ch : channels) {
      SeriesPair s;
      try {
        s = build_series_pair(narrative, state, ch, slice);
      } catch (const Error& e) {
        for (int lag = opt.min_lag; lag <= opt.max_lag; ++lag) out.skipped.push_back({label, ch, lag, e.what()});
        continue;
      }
      for (int lag = opt.min_lag; lag <= opt.max_lag; ++lag) {
        try {
          auto r = associate(s, lag, opt);
          r.narrative_id = narrative.definition().id;
          r.theme = label;
          r.channel_id = ch;
          out.results.push_back(std::move(r));
        } catch (const Error& e) {
          out.skipped.push_back({label, ch, lag, e.what()});
        }
      }
    }
  }
  std::sort(out.results.begin(), out.results.end(), [](const AssociationResult& a, const AssociationResult& b) {
    if (a.rho != b.rho) return a.rho > b.rho;
    if (a.channel_id != b.channel_id) return a.channel_id < b.channel_id;
    if (a.lag != b.lag) return a.lag < b.lag;
    return a.theme.value_or("") < b.theme.value_or("");
  });
  return out;
}

/// Tab-separated table: narrative, theme, channel, lag, rho, then p-values
/// and F, with a caveat footer.
inline std::string association_table(const ScanResult& scan, bool only_passing) {
  std::ostringstream os;
  os << "narrative\ttheme\tchannel\tlag\trho\trho_p\tgranger_F\tgranger_p\tpasses\n";
  char buf[256];
  for (const auto& r : scan.results) {
    if (only_passing && !r.passes_filter) continue;
    std::snprintf(buf, sizeof buf, "%d\t%.3f\t%.3g\t%.3f\t%.3g\t%s\n", r.lag, r.rho, r.rho_p, r.granger_F, r.granger_p,
                  r.passes_filter ? "yes" : "no");
    os << r.narrative_id << '\t' << r.theme.value_or("-") << '\t' << r.channel_id << '\t' << buf;
  }
  os << "# skipped cells: " << scan.skipped.size() << "\n";
  os << "# raw daily counts, no stationarity differencing; no multiple-comparison correction applied\n";
  os << "# associations are predictive, not causal\n";
  return os.str();
}

inline json association_to_json(const AssociationResult& r) {
  return json{{"narrative", r.narrative_id},
              {"theme", r.theme ? json(*r.theme) : json(nullptr)},
              {"channel", r.channel_id},
              {"lag", r.lag},
              {"rho", r.rho},
              {"rho_p", r.rho_p},
              {"granger_F", r.granger_F},
              {"granger_p", r.granger_p},
              {"passes_filter", r.passes_filter}};
}

}  // namespace narrative
