#include <cstdlib>

#include <httplib.h>

#include "fedrec/chat_client.hpp"
#include "fedrec/errors.hpp"

namespace fedrec {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix + /v1/chat/completions
};

Endpoint split_base_url(const std::string& base_url) {
  const auto scheme = base_url.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("base_url must include a scheme: '" + base_url + "'");
  }
  const auto slash = base_url.find('/', scheme + 3);
  Endpoint ep;
  ep.origin = base_url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  ep.path = prefix + "/v1/chat/completions";
  return ep;
}

}  // namespace

HttpChatClient::HttpChatClient(HttpClientConfig config) : config_(std::move(config)) {
  split_base_url(config_.base_url);
}

std::string HttpChatClient::complete(const ChatMessagePair& messages,
                                     const RequestOptions& options) {
  const auto ep = split_base_url(config_.base_url);
  // One connection per request; httplib clients are not shared across threads.
  httplib::Client cli(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto body = chat_request_body(messages, config_.model, config_.temperature);
  const auto res = cli.Post(ep.path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("chat request to " + ep.origin + ep.path +
                         " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProtocolError(res->status, res->body.substr(0, 512));
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(res->status, std::string("response is not JSON: ") + e.what());
  }
  return response_content(parsed);
}

}  // namespace fedrec
