#pragma once

// Embedding gateway: provider interface, persistent vector cache, and the
// cosine arithmetic everything downstream relies on.

#include <memory>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "ingest.hpp"

namespace narrative {

struct EmbeddedUnit {
  DocUnit unit;
  FVec vector;  // unit L2 norm
};

/// Returns dot(u,v)/(|u||v|).
template <typename A, typename B>
double cosine_similarity(const std::vector<A>& u, const std::vector<B>& v) {
  if (u.size() != v.size()) throw ConfigError("dimension mismatch in cosine_similarity");
  const double nu = norm2(u), nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) throw DomainError("cosine similarity of a zero vector");
  const double s = dot<A, B>(u, v) / (nu * nv);
  return std::clamp(s, -1.0, 1.0);
}

inline double cosine_distance(double similarity) { return 1.0 - similarity; }

/// External source of raw (not necessarily normalized) embeddings.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string identity() const = 0;
  virtual std::vector<Vec> embed(const std::vector<std::string>& texts) = 0;
};

/// Deterministic offline provider: signed feature hashing of lowercase word
/// unigrams and bigrams. Texts sharing vocabulary get high cosine similarity.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dim = 256, std::uint64_t salt = 0) : dim_(dim), salt_(salt) {}

  std::string identity() const override { return "hashing-bow/" + std::to_string(dim_); }

  std::vector<Vec> embed(const std::vector<std::string>& texts) override {
    std::vector<Vec> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

 private:
  Vec embed_one(const std::string& text) const {
    Vec v(dim_, 0.0);
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
      const auto uc = static_cast<unsigned char>(c);
      if (uc >= 0x80 || std::isalnum(uc)) {
        cur.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : c);
      } else if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    auto add = [&](std::string_view feature, double w) {
      const std::uint64_t h = fnv1a64(feature, 0xcbf29ce484222325ULL ^ salt_);
      v[h % dim_] += ((h >> 63) != 0U ? -w : w);
    };
    for (std::size_t i = 0; i < words.size(); ++i) {
      add(words[i], 1.0);
      if (i + 1 < words.size()) add(words[i] + ' ' + words[i + 1], 0.5);
    }
    if (words.empty()) v[0] = 1.0;
    return v;
  }

  std::size_t dim_;
  std::uint64_t salt_;
};

/// Cache key: content hash of the normalized text.
inline std::string embedding_key(std::string_view text) { return hex64(fnv1a64(normalize_text(text))); }

/// Thread-safe map from content hash to float32 vector, persisted as
/// newline-delimited {"key","dim","vec"} records.
class EmbeddingCache {
 public:
  std::optional<FVec> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& key, FVec v) {
    std::unique_lock lock(mu_);
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw ConfigError("cache dimension mismatch: expected " + std::to_string(dim_));
    auto [it, inserted] = map_.insert_or_assign(key, std::move(v));
    if (inserted) order_.push_back(key);
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return map_.size();
  }

  std::size_t dim() const {
    std::shared_lock lock(mu_);
    return dim_;
  }

  void load(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) return;
    for_each_jsonl(p, [&](const json& j) {
      FVec v = j.at("vec").get<FVec>();
      if (j.at("dim").get<std::size_t>() != v.size()) throw IntegrityError("cache record dim/vec length mismatch");
      put(j.at("key").get<std::string>(), std::move(v));
    });
  }

  void save(const std::filesystem::path& p) const {
    std::shared_lock lock(mu_);
    std::string out;
    for (const auto& key : order_) {
      const auto& v = map_.at(key);
      out += json{{"key", key}, {"dim", v.size()}, {"vec", v}}.dump();
      out += '\n';
    }
    write_file_atomic(p, out);
  }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, FVec> map_;
  std::vector<std::string> order_;
  std::size_t dim_ = 0;
};

class EmbeddingGateway {
 public:
  EmbeddingGateway(std::shared_ptr<EmbeddingProvider> provider, std::size_t dim, std::size_t batch_size = 64)
      : provider_(std::move(provider)), dim_(dim), batch_size_(batch_size) {
    if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
    if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  }

  EmbeddingCache& cache() { return cache_; }
  const EmbeddingCache& cache() const { return cache_; }
  std::size_t dim() const { return dim_; }
  std::size_t provider_calls() const { return provider_calls_; }

  /// One L2-normalized vector per text, in input order. Cache hits skip the
  /// provider.
  std::vector<FVec> embed_texts(const std::vector<std::string>& texts) {
    if (texts.empty()) throw DomainError("embed_batch requires at least one text");
    std::vector<FVec> out(texts.size());
    std::vector<std::string> keys(texts.size());
    std::vector<std::size_t> missing;
    std::unordered_map<std::string, std::size_t> first_missing;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      keys[i] = embedding_key(texts[i]);
      if (auto hit = cache_.get(keys[i])) {
        if (hit->size() != dim_) throw ConfigError("cached vector has dimension " + std::to_string(hit->size()));
        out[i] = std::move(*hit);
      } else if (first_missing.try_emplace(keys[i], i).second) {
        missing.push_back(i);
      }
    }
    for (std::size_t b = 0; b < missing.size(); b += batch_size_) {
      const std::size_t e = std::min(missing.size(), b + batch_size_);
      std::vector<std::string> req;
      for (std::size_t k = b; k < e; ++k) req.push_back(texts[missing[k]]);
      ++provider_calls_;
      auto vecs = provider_->embed(req);
      if (vecs.size() != req.size()) throw ParseError("provider returned wrong number of vectors", "");
      for (std::size_t k = b; k < e; ++k) {
        auto& raw = vecs[k - b];
        if (raw.size() != dim_)
          throw ConfigError("provider returned dimension " + std::to_string(raw.size()) + ", workspace uses " +
                            std::to_string(dim_));
        const Vec n = normalized(raw);
        cache_.put(keys[missing[k]], FVec(n.begin(), n.end()));
      }
    }
    for (std::size_t i = 0; i < texts.size(); ++i)
      if (out[i].empty()) out[i] = *cache_.get(keys[i]);
    return out;
  }

  std::vector<EmbeddedUnit> embed_batch(const std::vector<DocUnit>& units) {
    std::vector<std::string> texts;
    texts.reserve(units.size());
    for (const auto& u : units) texts.push_back(u.text);
    auto vecs = embed_texts(texts);
    std::vector<EmbeddedUnit> out;
    out.reserve(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) out.push_back({units[i], std::move(vecs[i])});
    return out;
  }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  std::size_t dim_;
  std::size_t batch_size_;
  EmbeddingCache cache_;
  std::size_t provider_calls_ = 0;
};

struct LabeledSimilarity {
  double similarity;
  bool similar;  // human judgement
};

/// Candidate threshold maximizing accuracy of (similarity >= t); ties go to
/// the larger threshold.
inline double calibrate_threshold(const std::vector<LabeledSimilarity>& pairs, const std::vector<double>& candidates) {
  if (pairs.empty()) throw DomainError("calibrate_threshold needs at least one labeled pair");
  if (candidates.empty()) throw DomainError("calibrate_threshold needs at least one candidate");
  double best_t = candidates.front();
  std::size_t best_correct = 0;
  bool first = true;
  for (double t : candidates) {
    std::size_t correct = 0;
    for (const auto& p : pairs) correct += ((p.similarity >= t) == p.similar) ? 1 : 0;
    if (first || correct > best_correct || (correct == best_correct && t > best_t)) {
      best_t = t;
      best_correct = correct;
      first = false;
    }
  }
  return best_t;
}

struct LabeledTextPair {
  std::string a, b;
  bool similar;
};

inline double calibrate_threshold(EmbeddingGateway& gw, const std::vector<LabeledTextPair>& pairs,
                                  const std::vector<double>& candidates) {
  if (pairs.empty()) throw DomainError("calibrate_threshold needs at least one labeled pair");
  std::vector<std::string> texts;
  for (const auto& p : pairs) {
    texts.push_back(p.a);
    texts.push_back(p.b);
  }
  const auto vecs = gw.embed_texts(texts);
  std::vector<LabeledSimilarity> sims;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    sims.push_back({cosine_similarity(vecs[2 * i], vecs[2 * i + 1]), pairs[i].similar});
  return calibrate_threshold(sims, candidates);
}

/// 0.60, 0.65, ..., 0.85.
inline std::vector<double> default_threshold_grid() { return {0.60, 0.65, 0.70, 0.75, 0.80, 0.85}; }

}  // namespace narrative
