#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "narrative/providers.hpp"

using namespace narrative;

namespace {

class FixedProvider final : public EmbeddingProvider {
 public:
  explicit FixedProvider(std::size_t dim) : dim_(dim) {}
  std::string identity() const override { return "fixed"; }
  std::vector<Vec> embed(const std::vector<std::string>& texts) override {
    ++calls;
    batches.push_back(texts.size());
    std::vector<Vec> out;
    for (const auto& t : texts) {
      Vec v(dim_, 0.0);
      for (std::size_t i = 0; i < t.size(); ++i) v[i % dim_] += static_cast<unsigned char>(t[i]);
      out.push_back(v);
    }
    return out;
  }
  int calls = 0;
  std::vector<std::size_t> batches;

 private:
  std::size_t dim_;
};

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("narrative_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Cosine, SmallCases) {
  EXPECT_DOUBLE_EQ(cosine_similarity(Vec{1, 0}, Vec{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Vec{1, 0}, Vec{0, 1}), 0.0);
  EXPECT_NEAR(cosine_similarity(Vec{1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}, Vec{1, 0}), 0.70710678, 1e-8);
  EXPECT_THROW(cosine_similarity(Vec{0, 0}, Vec{1, 0}), DomainError);
  EXPECT_THROW(cosine_similarity(Vec{1, 0}, Vec{1, 0, 0}), ConfigError);
}

TEST(Cosine, SymmetryAndChordIdentity) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    Vec u(16), v(16);
    for (auto& x : u) x = nd(gen);
    for (auto& x : v) x = nd(gen);
    EXPECT_DOUBLE_EQ(cosine_similarity(u, v), cosine_similarity(v, u));
    u = normalized(u);
    v = normalized(v);
    EXPECT_NEAR(cosine_similarity(u, u), 1.0, 1e-12);
    double d2 = 0;
    for (std::size_t i = 0; i < u.size(); ++i) d2 += (u[i] - v[i]) * (u[i] - v[i]);
    EXPECT_NEAR(d2, 2.0 * (1.0 - cosine_similarity(u, v)), 1e-12);
  }
}

TEST(Gateway, NormalizesAndCaches) {
  auto prov = std::make_shared<FixedProvider>(8);
  EmbeddingGateway gw(prov, 8, 2);
  auto first = gw.embed_texts({"alpha beta", "gamma", "alpha beta", "delta"});
  ASSERT_EQ(first.size(), 4u);
  for (const auto& v : first) EXPECT_NEAR(norm2(v), 1.0, 1e-6);
  EXPECT_EQ(first[0], first[2]);
  EXPECT_EQ(prov->batches, (std::vector<std::size_t>{2, 1}));
  const Vec raw = prov->embed({"gamma"}).front();
  const Vec expect = normalized(raw);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_FLOAT_EQ(first[1][i], static_cast<float>(expect[i]));

  const int calls = prov->calls;
  auto again = gw.embed_texts({"delta", "gamma"});
  EXPECT_EQ(prov->calls, calls);
  EXPECT_EQ(again[0], first[3]);
  EXPECT_THROW(gw.embed_texts({}), DomainError);
}

TEST(Gateway, DimensionMismatchIsConfigError) {
  EmbeddingGateway gw(std::make_shared<FixedProvider>(4), 8);
  EXPECT_THROW(gw.embed_texts({"x"}), ConfigError);
}

TEST(Gateway, ConcurrentCallsAgree) {
  EmbeddingGateway gw(std::make_shared<HashingEmbeddingProvider>(32), 32);
  const auto ref = gw.embed_texts({"one two three", "four five six"});
  std::vector<std::thread> pool;
  std::atomic<int> mismatches{0};
  for (int k = 0; k < 4; ++k)
    pool.emplace_back([&] {
      for (int r = 0; r < 50; ++r)
        if (gw.cache().get(embedding_key("one two three")) != ref[0]) ++mismatches;
    });
  for (auto& t : pool) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(Cache, RoundTripIsBitIdentical) {
  auto dir = temp_dir("cache");
  EmbeddingGateway gw(std::make_shared<HashingEmbeddingProvider>(64), 64);
  const auto vecs = gw.embed_texts({"first text here", "second text here", "third"});
  gw.cache().save(dir / "emb.jsonl");
  EmbeddingCache reloaded;
  reloaded.load(dir / "emb.jsonl");
  EXPECT_EQ(reloaded.size(), 3u);
  EXPECT_EQ(*reloaded.get(embedding_key("second text here")), vecs[1]);
  EXPECT_EQ(*reloaded.get(embedding_key("first text here")), vecs[0]);
  std::filesystem::remove_all(dir);
}

TEST(Cache, KeyedByNormalizedText) {
  EXPECT_EQ(embedding_key("hello world #tag"), embedding_key("hello   world"));
  EXPECT_NE(embedding_key("hello world"), embedding_key("hello there"));
}

TEST(Calibrate, TieBreaksHighAndSingleCandidate) {
  std::vector<LabeledSimilarity> pairs = {{0.95, true}, {0.91, true}, {0.5, false}, {0.2, false}};
  EXPECT_DOUBLE_EQ(calibrate_threshold(pairs, default_threshold_grid()), 0.85);
  EXPECT_DOUBLE_EQ(calibrate_threshold(pairs, {0.7}), 0.7);
  EXPECT_THROW(calibrate_threshold(std::vector<LabeledSimilarity>{}, {0.7}), DomainError);
  // Accuracy by hand: t=0.6 -> 4/4 only when the 0.62 pair is similar.
  std::vector<LabeledSimilarity> mid = {{0.62, true}, {0.9, true}, {0.3, false}};
  EXPECT_DOUBLE_EQ(calibrate_threshold(mid, default_threshold_grid()), 0.60);
}

TEST(Calibrate, FromTextPairs) {
  EmbeddingGateway gw(std::make_shared<HashingEmbeddingProvider>(256), 256);
  std::vector<LabeledTextPair> pairs = {
      {"troops crossed the river at dawn today", "troops crossed the river at dawn today again", true},
      {"grain exports resumed from the port", "the football match ended in a draw", false}};
  EXPECT_DOUBLE_EQ(calibrate_threshold(gw, pairs, default_threshold_grid()), 0.85);
}

TEST(HttpProvider, RoundTripAndErrors) {
  httplib::Server srv;
  srv.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    json vectors = json::array();
    for (const auto& t : body.at("texts")) vectors.push_back({3.0, 4.0 + static_cast<double>(t.get<std::string>().size() % 2)});
    res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
  });
  srv.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
  srv.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  EmbeddingGateway gw(std::make_shared<HttpEmbeddingProvider>(base + "/embed"), 2);
  auto v = gw.embed_texts({"ab"});
  EXPECT_NEAR(v[0][0], 0.6f, 1e-6);
  EXPECT_NEAR(v[0][1], 0.8f, 1e-6);

  HttpEmbeddingProvider bad(base + "/bad");
  try {
    bad.embed({"x"});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.raw(), "not json");
  }
  HttpEmbeddingProvider fail(base + "/fail");
  EXPECT_THROW(fail.embed({"x"}), TransportError);
  HttpEmbeddingProvider down("http://127.0.0.1:1/none");
  EXPECT_THROW(down.embed({"x"}), TransportError);
  srv.stop();
  th.join();
}
