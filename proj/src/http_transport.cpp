#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <mutex>

#include <fmt/format.h>

#include "decop/provider.hpp"

namespace decop::provider {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url, std::string_view suffix) {
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  ep.path = prefix + std::string(suffix);
  return ep;
}

class HttpTransport : public Transport {
 public:
  HttpTransport(ProviderKind kind, Endpoint endpoint, httplib::Headers headers)
      : kind_(kind), endpoint_(std::move(endpoint)), headers_(std::move(headers)) {}

  HttpResult post(const json& wire_request) override {
    // httplib clients are not thread-safe; one per request keeps workers independent.
    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(std::chrono::seconds(30));
    client.set_read_timeout(std::chrono::seconds(300));
    auto res = client.Post(endpoint_.path, headers_, wire_request.dump(), "application/json");
    if (!res) {
      throw TransportError(fmt::format("{} request to {}{} failed: {}", corpus::to_string(kind_), endpoint_.origin,
                                       endpoint_.path, httplib::to_string(res.error())));
    }
    HttpResult out;
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("retry-after")) {
      try {
        out.retry_after = std::chrono::milliseconds(
            static_cast<long long>(std::stod(res->get_header_value("retry-after")) * 1000.0));
      } catch (const std::exception&) {
      }
    }
    return out;
  }

 private:
  ProviderKind kind_;
  Endpoint endpoint_;
  httplib::Headers headers_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(const ProviderConfig& cfg) {
  if (cfg.kind == ProviderKind::Mock) {
    throw FatalProviderError("mock providers have no HTTP transport");
  }
  const char* key = cfg.api_key_env.empty() ? nullptr : std::getenv(cfg.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw FatalProviderError(fmt::format("environment variable '{}' with the API key for '{}' is not set",
                                         cfg.api_key_env, cfg.model_name));
  }
  httplib::Headers headers;
  Endpoint ep;
  if (cfg.kind == ProviderKind::AnthropicChat) {
    ep = split_url(cfg.base_url.empty() ? "https://api.anthropic.com/v1" : cfg.base_url, "/messages");
    headers.emplace("x-api-key", key);
    headers.emplace("anthropic-version", "2023-06-01");
  } else {
    ep = split_url(cfg.base_url.empty() ? "https://api.openai.com/v1" : cfg.base_url, "/chat/completions");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  return std::make_shared<HttpTransport>(cfg.kind, std::move(ep), std::move(headers));
}

}  // namespace decop::provider
