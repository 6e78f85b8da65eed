// Eigen must precede httplib: <resolv.h> defines a `_res` macro that breaks Eigen's headers.
#include "dextog/language.hpp"

#include <cstdlib>
#include <regex>

#include <json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace dextog {

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error(Errc::Config, "malformed LLM endpoint: " + url);
  return Endpoint{m[1].str(), m[2].matched ? m[2].str() : "/"};
}

}  // namespace

HttpProvider::HttpProvider(Options options) : options_(std::move(options)) {
  split_endpoint(options_.endpoint);
  if (options_.timeout_seconds <= 0) throw Error(Errc::Config, "timeout must be positive");
}

HttpProvider HttpProvider::from_environment(int timeout_seconds) {
  const char* endpoint = std::getenv("LLM_ENDPOINT");
  if (!endpoint || !*endpoint) throw Error(Errc::Config, "LLM_ENDPOINT is not set");
  const char* key = std::getenv("LLM_API_KEY");
  return HttpProvider(Options{endpoint, key ? key : "", timeout_seconds});
}

std::string HttpProvider::id() const { return "http:" + options_.endpoint; }

std::vector<std::string> HttpProvider::complete(const PromptRequest& request, int n) {
  if (n < 1) throw Error(Errc::Config, "completion count must be >= 1");
  const auto ep = split_endpoint(options_.endpoint);
  httplib::Client client(ep.base);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  client.set_write_timeout(options_.timeout_seconds, 0);

  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  const nlohmann::json body = {{"prompt", request.text}, {"n", n}};

  auto res = client.Post(ep.path, headers, body.dump(), "application/json");
  if (!res) throw Error(Errc::Provider, "HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(Errc::Provider, "HTTP status " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    auto texts = nlohmann::json::parse(res->body).at("texts").get<std::vector<std::string>>();
    if (texts.size() != static_cast<std::size_t>(n)) {
      throw Error(Errc::Provider, "expected " + std::to_string(n) + " texts, got " + std::to_string(texts.size()));
    }
    return texts;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Provider, std::string("malformed response: ") + e.what());
  }
}

}  // namespace dextog
