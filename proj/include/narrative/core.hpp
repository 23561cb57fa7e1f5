#pragma once

// Shared plumbing: error types, vector arithmetic, timestamps, hashing and
// newline-delimited JSON helpers used by every other header.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace narrative {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public DomainError {
 public:
  using DomainError::DomainError;
};

class UndefinedCorrelationError : public DomainError {
 public:
  using DomainError::DomainError;
};

class DegenerateInputError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Provider or network failure; callers may retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Malformed payload from an external service. The raw body is kept.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// ---------------------------------------------------------------------------
// Dense vectors

using Vec = std::vector<double>;
using FVec = std::vector<float>;

template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

inline double dot(const Vec& a, const Vec& b) { return dot<double, double>(a, b); }
inline double dot(const FVec& a, const FVec& b) { return dot<float, float>(a, b); }
inline double dot(const Vec& a, const FVec& b) { return dot<double, float>(a, b); }
inline double dot(const FVec& a, const Vec& b) { return dot<float, double>(a, b); }

template <typename T>
double norm2(const std::vector<T>& v) {
  return std::sqrt(dot<T, T>(v, v));
}

inline Vec normalized(const Vec& v) {
  const double n = norm2(v);
  if (n == 0.0) throw DomainError("cannot normalize a zero vector");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

inline Vec to_vec(const FVec& v) { return Vec(v.begin(), v.end()); }

// ---------------------------------------------------------------------------
// Time

using Instant = std::chrono::sys_seconds;

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff](Z|+hh:mm|-hh:mm)". Fractional seconds are
/// truncated.
inline Instant parse_rfc3339(std::string_view s) {
  auto fail = [&] { return RangeError("invalid RFC3339 timestamp: " + std::string(s)); };
  if (s.size() < 20) throw fail();
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (i >= s.size() || s[i] < '0' || s[i] > '9') throw fail();
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || s[13] != ':' ||
      s[16] != ':')
    throw fail();
  const int year = num(0, 4), month = num(5, 2), day = num(8, 2);
  const int hh = num(11, 2), mm = num(14, 2), ss = num(17, 2);
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  }
  if (pos >= s.size()) throw fail();
  int offset_min = 0;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '+' ? 1 : -1;
    if (pos + 6 > s.size() || s[pos + 3] != ':') throw fail();
    offset_min = sign * (num(pos + 1, 2) * 60 + num(pos + 4, 2));
    pos += 6;
  } else {
    throw fail();
  }
  if (pos != s.size()) throw fail();
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) throw fail();
  return std::chrono::sys_days{ymd} + std::chrono::hours{hh} + std::chrono::minutes{mm} +
         std::chrono::seconds{ss} - std::chrono::minutes{offset_min};
}

inline std::string format_rfc3339(Instant t) {
  const auto days = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{t - days};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

/// Day index since the Unix epoch (UTC calendar day).
inline std::int64_t day_index(Instant t) {
  return std::chrono::floor<std::chrono::days>(t).time_since_epoch().count();
}

inline std::string format_day(std::int64_t day) {
  return format_rfc3339(Instant{std::chrono::days{day}}).substr(0, 10);
}

// ---------------------------------------------------------------------------
// Hashing

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// SplitMix64 finalizer; used to derive per-purpose RNG seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(base ^ mix64(a)) ^ b);
}

// ---------------------------------------------------------------------------
// Random numbers
//
// Draws are built directly on mt19937_64 output (whose sequence is fixed by the
// standard) so seeded samples are identical across standard libraries.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform in [0, n).
  std::size_t index(std::size_t n) {
    if (n == 0) throw DomainError("Rng::index on empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// k distinct indices from [0, n) (all of them when k >= n), in draw order.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (k >= n) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  return idx;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write via a temporary sibling and rename, so readers never see a torn file.
inline void write_file_atomic(const std::filesystem::path& p, std::string_view content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

template <typename F>
void for_each_jsonl(const std::filesystem::path& p, F&& fn) {
  std::ifstream in(p);
  if (!in) throw NotFoundError("cannot open " + p.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(p.string() + ":" + std::to_string(lineno) + ": " + e.what(), line);
    }
    fn(j);
  }
}

inline std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::vector<json> out;
  for_each_jsonl(p, [&](const json& j) { out.push_back(j); });
  return out;
}

inline std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline void write_jsonl(const std::filesystem::path& p, const std::vector<json>& rows) {
  write_file_atomic(p, to_jsonl(rows));
}

inline std::string file_digest(const std::filesystem::path& p) { return hex64(fnv1a64(read_file(p))); }

}  // namespace narrative
