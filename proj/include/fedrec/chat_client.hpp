#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrec/prompt.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

struct RequestOptions {
  std::chrono::milliseconds timeout{30000};
};

// A chat-completion backend. Implementations throw TransportError for
// transient failures and ProtocolError for unusable responses.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatMessagePair& messages,
                               const RequestOptions& options) = 0;
};

// Shared cap on the number of requests; every attempt costs one unit.
class RequestBudget {
 public:
  explicit RequestBudget(std::size_t limit) : remaining_(limit) {}
  bool try_acquire();
  std::size_t remaining() const { return remaining_.load(); }

 private:
  std::atomic<std::size_t> remaining_;
};

struct CallLimits {
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
  RequestBudget* budget = nullptr;  // unlimited when null
  // Replaced in tests to avoid real waiting.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// Delay before retry number `attempt` (0-based).
std::chrono::milliseconds backoff_delay(const CallLimits& limits, int attempt);

// Calls `client`, retrying TransportError with exponential backoff up to
// max_retries times. Throws BudgetExhausted when the budget runs dry,
// TransportError once retries are spent, ProtocolError immediately.
std::string chat_complete(ChatClient& client, const ChatMessagePair& messages,
                          const CallLimits& limits);

// Canonical OpenAI-style request body and its transcript key.
nlohmann::json chat_request_body(const ChatMessagePair& messages,
                                 const std::string& model, double temperature);
std::string request_key(const nlohmann::json& body);

// Echoes the prompt's candidate pool in its original order.
class IdentityClient : public ChatClient {
 public:
  std::string complete(const ChatMessagePair& messages,
                       const RequestOptions& options) override;
};

// Test-only: knows the answer and lists it first, the rest in pool order.
class OracleClient : public ChatClient {
 public:
  explicit OracleClient(std::string ground_truth_title)
      : ground_truth_(std::move(ground_truth_title)) {}
  std::string complete(const ChatMessagePair& messages,
                       const RequestOptions& options) override;

 private:
  std::string ground_truth_;
};

// Mixes shuffled real candidates with invented titles, near-duplicates and
// chatter, to exercise closed-world matching.
class AdversarialClient : public ChatClient {
 public:
  explicit AdversarialClient(std::uint64_t seed) : rng_(seed) {}
  std::string complete(const ChatMessagePair& messages,
                       const RequestOptions& options) override;

 private:
  std::mutex mu_;
  Rng rng_;
};

// Replays recorded responses from a JSON-lines transcript:
//   {"key": <request key>, "request": {...}, "response": {...}}
class TranscriptClient : public ChatClient {
 public:
  TranscriptClient(const std::filesystem::path& path, std::string model,
                   double temperature = 0.0);
  std::string complete(const ChatMessagePair& messages,
                       const RequestOptions& options) override;
  std::size_t size() const { return responses_.size(); }

 private:
  std::string model_;
  double temperature_;
  std::map<std::string, nlohmann::json> responses_;
};

// Forwards to another client and appends each exchange to a transcript.
class RecordingClient : public ChatClient {
 public:
  RecordingClient(std::shared_ptr<ChatClient> inner, std::filesystem::path path,
                  std::string model, double temperature = 0.0);
  std::string complete(const ChatMessagePair& messages,
                       const RequestOptions& options) override;

 private:
  std::shared_ptr<ChatClient> inner_;
  std::filesystem::path path_;
  std::string model_;
  double temperature_;
  std::mutex mu_;
};

// Content of choices[0].message.content; ProtocolError if absent.
std::string response_content(const nlohmann::json& response);

struct HttpClientConfig {
  std::string base_url = "https://api.openai.com";
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  std::string api_key_env = "OPENAI_API_KEY";
};

// OpenAI-compatible POST <base_url>/v1/chat/completions.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientConfig config);
  std::string complete(const ChatMessagePair& messages,
                       const RequestOptions& options) override;

  const HttpClientConfig& config() const { return config_; }

 private:
  HttpClientConfig config_;
};

}  // namespace fedrec
