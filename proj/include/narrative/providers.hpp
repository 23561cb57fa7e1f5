#pragma once

// HTTP JSON clients for the external embedding, zero-shot classification and
// theme generation services.

#include <cstdlib>

// Eigen must precede httplib: <resolv.h> defines a _res macro.
#include "embedding.hpp"
#include "themes.hpp"

#include <httplib.h>

namespace narrative {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // /...
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

class JsonHttpClient {
 public:
  explicit JsonHttpClient(const std::string& url, std::chrono::seconds timeout = std::chrono::seconds{60})
      : endpoint_(parse_endpoint(url)), client_(endpoint_.base) {
    client_.set_connection_timeout(timeout);
    client_.set_read_timeout(timeout);
    client_.set_write_timeout(timeout);
  }

  json post(const json& body) {
    auto res = client_.Post(endpoint_.path, body.dump(), "application/json");
    if (!res) throw TransportError("POST " + endpoint_.base + endpoint_.path + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw TransportError("POST " + endpoint_.base + endpoint_.path + " returned HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("provider returned invalid JSON: ") + e.what(), res->body);
    }
  }

 private:
  Endpoint endpoint_;
  httplib::Client client_;
};

/// POST {"texts":[...]} -> {"vectors":[[...],...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(std::string url) : url_(std::move(url)), client_(url_) {}

  std::string identity() const override { return "http:" + url_; }

  std::vector<Vec> embed(const std::vector<std::string>& texts) override {
    const json res = client_.post({{"texts", texts}});
    try {
      return res.at("vectors").get<std::vector<Vec>>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed embedding response: ") + e.what(), res.dump());
    }
  }

 private:
  std::string url_;
  JsonHttpClient client_;
};

/// POST {"text","labels":[...],"multi_label":true} -> {"scores":[...]}.
class HttpClassifier final : public ClassifierProvider {
 public:
  explicit HttpClassifier(std::string url) : client_(url) {}

  std::vector<double> score(const std::string& text, const std::vector<std::string>& labels) override {
    const json res = client_.post({{"text", text}, {"labels", labels}, {"multi_label", true}});
    try {
      auto scores = res.at("scores").get<std::vector<double>>();
      if (scores.size() != labels.size()) throw ParseError("classifier returned wrong number of scores", res.dump());
      return scores;
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed classifier response: ") + e.what(), res.dump());
    }
  }

 private:
  JsonHttpClient client_;
};

/// POST {"samples":[...],"existing_themes":[...]} -> {"themes":[{"label","description"}]}.
class HttpThemeGenerator final : public GeneratorProvider {
 public:
  explicit HttpThemeGenerator(std::string url) : client_(url) {}

  std::vector<ThemeProposal> generate(const std::vector<std::string>& samples,
                                      const std::vector<ThemeProposal>& existing) override {
    json ex = json::array();
    for (const auto& t : existing) ex.push_back({{"label", t.label}, {"description", t.description}});
    const json res = client_.post({{"samples", samples}, {"existing_themes", ex}});
    try {
      std::vector<ThemeProposal> out;
      for (const auto& t : res.at("themes"))
        out.push_back({t.at("label").get<std::string>(), t.value("description", std::string{})});
      return out;
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed generator response: ") + e.what(), res.dump());
    }
  }

 private:
  JsonHttpClient client_;
};

}  // namespace narrative
