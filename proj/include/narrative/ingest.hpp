#pragma once

// Raw post normalization, deduplication, 2-sentence segmentation and
// time bucketing.

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"

namespace narrative {

struct RawPost {
  std::string post_id;
  std::string channel_id;
  std::optional<std::string> author_id;
  Instant timestamp{};
  std::string text;
  std::optional<std::string> forwarded_from;
  std::vector<std::string> referenced_channels;
};

struct DocUnit {
  std::string unit_id;
  std::string post_id;
  std::string channel_id;
  std::optional<std::string> author_id;
  Instant timestamp{};
  int timestep = 0;
  std::string text;
};

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Decodes one UTF-8 sequence starting at s[i]; returns the codepoint and
// advances i. Invalid bytes decode as themselves.
inline char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  auto byte = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | byte(1);
    i += 2;
    return cp;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (byte(1) << 6) | byte(2);
    i += 3;
    return cp;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (byte(1) << 12) | (byte(2) << 6) | byte(3);
    i += 4;
    return cp;
  }
  ++i;
  return b0;
}

struct CodeRange {
  char32_t lo, hi;
};

// Extended_Pictographic plus the emoji modifier/joiner/component codepoints.
inline constexpr CodeRange kEmojiRanges[] = {
    {0x00A9, 0x00A9},   {0x00AE, 0x00AE},   {0x200D, 0x200D},   {0x203C, 0x203C},   {0x2049, 0x2049},
    {0x20E3, 0x20E3},   {0x2122, 0x2122},   {0x2139, 0x2139},   {0x2194, 0x2199},   {0x21A9, 0x21AA},
    {0x231A, 0x231B},   {0x2328, 0x2328},   {0x2388, 0x2388},   {0x23CF, 0x23CF},   {0x23E9, 0x23F3},
    {0x23F8, 0x23FA},   {0x24C2, 0x24C2},   {0x25AA, 0x25AB},   {0x25B6, 0x25B6},   {0x25C0, 0x25C0},
    {0x25FB, 0x25FE},   {0x2600, 0x2605},   {0x2607, 0x2612},   {0x2614, 0x2685},   {0x2690, 0x2705},
    {0x2708, 0x2712},   {0x2714, 0x2714},   {0x2716, 0x2716},   {0x271D, 0x271D},   {0x2721, 0x2721},
    {0x2728, 0x2728},   {0x2733, 0x2734},   {0x2744, 0x2744},   {0x2747, 0x2747},   {0x274C, 0x274C},
    {0x274E, 0x274E},   {0x2753, 0x2755},   {0x2757, 0x2757},   {0x2763, 0x2767},   {0x2795, 0x2797},
    {0x27A1, 0x27A1},   {0x27B0, 0x27B0},   {0x27BF, 0x27BF},   {0x2934, 0x2935},   {0x2B05, 0x2B07},
    {0x2B1B, 0x2B1C},   {0x2B50, 0x2B50},   {0x2B55, 0x2B55},   {0x3030, 0x3030},   {0x303D, 0x303D},
    {0x3297, 0x3297},   {0x3299, 0x3299},   {0xFE0E, 0xFE0F},   {0x1F000, 0x1F0FF}, {0x1F10D, 0x1F10F},
    {0x1F12F, 0x1F12F}, {0x1F16C, 0x1F171}, {0x1F17E, 0x1F17F}, {0x1F18E, 0x1F18E}, {0x1F191, 0x1F19A},
    {0x1F1AD, 0x1F1FF}, {0x1F201, 0x1F20F}, {0x1F21A, 0x1F21A}, {0x1F22F, 0x1F22F}, {0x1F232, 0x1F23A},
    {0x1F23C, 0x1F23F}, {0x1F249, 0x1F64F}, {0x1F680, 0x1F6FF}, {0x1F774, 0x1F77F}, {0x1F7D5, 0x1F7FF},
    {0x1F80C, 0x1F80F}, {0x1F848, 0x1F84F}, {0x1F85A, 0x1F85F}, {0x1F888, 0x1F88F}, {0x1F8AE, 0x1F8FF},
    {0x1F90C, 0x1F93A}, {0x1F93C, 0x1F945}, {0x1F947, 0x1FAFF}, {0x1FC00, 0x1FFFD}, {0xE0020, 0xE007F},
};

inline bool is_emoji(char32_t cp) {
  for (const auto& r : kEmojiRanges) {
    if (cp < r.lo) return false;
    if (cp <= r.hi) return true;
  }
  return false;
}

inline std::string strip_emoji(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t start = i;
    const char32_t cp = decode_utf8(s, i);
    if (!is_emoji(cp)) out.append(s.substr(start, i - start));
  }
  return out;
}

inline bool is_scheme_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '+' || c == '-' ||
         c == '.';
}

inline bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

inline bool at_word_start(std::string_view s, std::size_t i) {
  if (i == 0) return true;
  const auto prev = static_cast<unsigned char>(s[i - 1]);
  return prev < 0x80 && !is_scheme_char(static_cast<char>(prev)) && prev != '/';
}

// Removes scheme://... and www.... runs up to the next whitespace.
inline std::string strip_urls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t url_start = std::string_view::npos;
    if (s.compare(i, 3, "://") == 0) {
      std::size_t j = i;
      while (j > 0 && is_scheme_char(s[j - 1])) --j;
      while (j < i && !is_alpha(s[j])) ++j;  // scheme must start with a letter
      if (j < i && i + 3 < s.size() && !is_space(s[i + 3])) url_start = j;
    } else if ((s[i] == 'w' || s[i] == 'W') && s.size() - i > 4 && at_word_start(s, i)) {
      auto lower = [](char c) { return static_cast<char>(c | 0x20); };
      if (lower(s[i + 1]) == 'w' && lower(s[i + 2]) == 'w' && s[i + 3] == '.' && !is_space(s[i + 4]))
        url_start = i;
    }
    if (url_start == std::string_view::npos) {
      out.push_back(s[i++]);
      continue;
    }
    // Drop the scheme already copied to out.
    out.resize(out.size() - (i - url_start));
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    out.push_back(' ');
    i = j;
  }
  return out;
}

inline std::string strip_hashtags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const bool token_start = i == 0 || is_space(s[i - 1]);
    if (token_start && s[i] == '#' && i + 1 < s.size() && !is_space(s[i + 1])) {
      while (i < s.size() && !is_space(s[i])) ++i;
      continue;
    }
    out.push_back(s[i++]);
  }
  return out;
}

inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Removes URLs, emoji and hashtags, then collapses whitespace. Idempotent.
inline std::string normalize_text(std::string_view raw) {
  std::string s = detail::strip_emoji(raw);
  s = detail::strip_urls(s);
  s = detail::strip_hashtags(s);
  return detail::collapse_whitespace(s);
}

inline std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (detail::is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

/// Keeps the earliest post per (normalized text, author). Posts without an
/// author are keyed by their channel. Output is ordered by (timestamp, post_id).
inline std::vector<RawPost> dedupe(const std::vector<RawPost>& posts) {
  auto earlier = [](const RawPost& a, const RawPost& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.post_id < b.post_id;
  };
  std::unordered_map<std::string, std::size_t> best;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const auto& p = posts[i];
    std::string key = p.author_id.value_or("\x01" + p.channel_id);
    key += '\0';
    key += normalize_text(p.text);
    auto [it, inserted] = best.try_emplace(std::move(key), i);
    if (!inserted && earlier(p, posts[it->second])) it->second = i;
  }
  std::vector<RawPost> out;
  out.reserve(best.size());
  for (const auto& [key, idx] : best) out.push_back(posts[idx]);
  std::sort(out.begin(), out.end(), earlier);
  return out;
}

/// Splits on '.', '!', '?' or U+2026 followed by whitespace (or end of text).
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  auto flush = [&](std::size_t end) {
    auto sentence = detail::collapse_whitespace(text.substr(start, end - start));
    if (!sentence.empty()) out.push_back(std::move(sentence));
    start = end;
  };
  while (i < text.size()) {
    std::size_t next = i;
    const char32_t cp = detail::decode_utf8(text, next);
    const bool terminal = cp == U'.' || cp == U'!' || cp == U'?' || cp == U'…';
    if (terminal && (next == text.size() || detail::is_space(text[next]))) flush(next);
    i = next;
  }
  if (start < text.size()) flush(text.size());
  return out;
}

/// Disjoint consecutive sentence pairs (trailing singleton kept), dropping
/// units under four words. Timestep is left at 0 for bucketize to assign.
inline std::vector<DocUnit> segment(const RawPost& post) {
  const auto sentences = split_sentences(post.text);
  std::vector<DocUnit> out;
  for (std::size_t i = 0, k = 0; i < sentences.size(); i += 2, ++k) {
    std::string text = sentences[i];
    if (i + 1 < sentences.size()) text += ' ' + sentences[i + 1];
    if (word_count(text) < 4) continue;
    DocUnit u;
    u.unit_id = post.post_id + "#" + std::to_string(k);
    u.post_id = post.post_id;
    u.channel_id = post.channel_id;
    u.author_id = post.author_id;
    u.timestamp = post.timestamp;
    u.text = std::move(text);
    out.push_back(std::move(u));
  }
  return out;
}

inline int timestep_of(Instant t, Instant corpus_start, std::chrono::seconds window) {
  if (window.count() <= 0) throw DomainError("window must be positive");
  if (t < corpus_start) throw RangeError("timestamp " + format_rfc3339(t) + " precedes corpus start");
  return static_cast<int>((t - corpus_start) / window);
}

inline std::map<int, std::vector<DocUnit>> bucketize(std::vector<DocUnit> units, Instant corpus_start,
                                                     std::chrono::seconds window) {
  std::map<int, std::vector<DocUnit>> out;
  for (auto& u : units) {
    u.timestep = timestep_of(u.timestamp, corpus_start, window);
    out[u.timestep].push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records

namespace detail {
inline json opt_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }
inline std::optional<std::string> opt_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}
}  // namespace detail

inline RawPost post_from_json(const json& j) {
  RawPost p;
  p.post_id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  p.channel_id = j.at("channel").get<std::string>();
  p.author_id = detail::opt_string(j, "author");
  p.timestamp = parse_rfc3339(j.at("date").get<std::string>());
  p.text = j.value("text", std::string{});
  p.forwarded_from = detail::opt_string(j, "fwd_from");
  if (auto it = j.find("refs"); it != j.end() && it->is_array())
    for (const auto& r : *it) p.referenced_channels.push_back(r.get<std::string>());
  return p;
}

inline json post_to_json(const RawPost& p) {
  return json{{"id", p.post_id},
              {"channel", p.channel_id},
              {"author", detail::opt_json(p.author_id)},
              {"date", format_rfc3339(p.timestamp)},
              {"text", p.text},
              {"fwd_from", detail::opt_json(p.forwarded_from)},
              {"refs", p.referenced_channels}};
}

inline json unit_to_json(const DocUnit& u) {
  return json{{"id", u.post_id},
              {"channel", u.channel_id},
              {"author", detail::opt_json(u.author_id)},
              {"date", format_rfc3339(u.timestamp)},
              {"text", u.text},
              {"fwd_from", nullptr},
              {"refs", json::array()},
              {"unit_id", u.unit_id},
              {"post_id", u.post_id},
              {"timestep", u.timestep}};
}

inline DocUnit unit_from_json(const json& j) {
  DocUnit u;
  u.unit_id = j.at("unit_id").get<std::string>();
  u.post_id = j.value("post_id", j.value("id", std::string{}));
  u.channel_id = j.at("channel").get<std::string>();
  u.author_id = detail::opt_string(j, "author");
  u.timestamp = parse_rfc3339(j.at("date").get<std::string>());
  u.timestep = j.at("timestep").get<int>();
  u.text = j.at("text").get<std::string>();
  return u;
}

inline std::vector<RawPost> read_posts(const std::filesystem::path& p) {
  std::vector<RawPost> out;
  for_each_jsonl(p, [&](const json& j) { out.push_back(post_from_json(j)); });
  return out;
}

inline std::vector<DocUnit> read_units(const std::filesystem::path& p) {
  std::vector<DocUnit> out;
  for_each_jsonl(p, [&](const json& j) { out.push_back(unit_from_json(j)); });
  return out;
}

/// normalize -> dedupe -> segment -> bucketize, flattened in timestep order.
inline std::vector<DocUnit> ingest_posts(const std::vector<RawPost>& posts, Instant corpus_start,
                                         std::chrono::seconds window) {
  std::vector<RawPost> normalized = posts;
  for (auto& p : normalized) p.text = normalize_text(p.text);
  std::vector<DocUnit> units;
  for (const auto& p : dedupe(normalized)) {
    auto segs = segment(p);
    units.insert(units.end(), std::make_move_iterator(segs.begin()), std::make_move_iterator(segs.end()));
  }
  std::vector<DocUnit> out;
  for (auto& [t, batch] : bucketize(std::move(units), corpus_start, window))
    out.insert(out.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
  return out;
}

}  // namespace narrative
