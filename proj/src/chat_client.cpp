#include "fedrec/chat_client.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include "fedrec/errors.hpp"
#include "fedrec/hash.hpp"

namespace fedrec {

namespace {

std::string numbered(const std::vector<std::string>& titles) {
  std::string out;
  for (std::size_t i = 0; i < titles.size(); ++i) {
    out += std::to_string(i + 1) + ". " + titles[i] + "\n";
  }
  return out;
}

}  // namespace

bool RequestBudget::try_acquire() {
  auto cur = remaining_.load();
  while (cur > 0) {
    if (remaining_.compare_exchange_weak(cur, cur - 1)) return true;
  }
  return false;
}

std::chrono::milliseconds backoff_delay(const CallLimits& limits, int attempt) {
  double delay = static_cast<double>(limits.initial_backoff.count());
  for (int i = 0; i < attempt; ++i) delay *= limits.backoff_multiplier;
  delay = std::min(delay, static_cast<double>(limits.max_backoff.count()));
  return std::chrono::milliseconds(static_cast<long long>(delay));
}

std::string chat_complete(ChatClient& client, const ChatMessagePair& messages,
                          const CallLimits& limits) {
  const RequestOptions options{limits.timeout};
  for (int attempt = 0;; ++attempt) {
    if (limits.budget != nullptr && !limits.budget->try_acquire()) {
      throw BudgetExhausted("chat request budget exhausted");
    }
    try {
      return client.complete(messages, options);
    } catch (const TransportError&) {
      if (attempt >= limits.max_retries) throw;
    }
    const auto delay = backoff_delay(limits, attempt);
    if (limits.sleep) {
      limits.sleep(delay);
    } else {
      std::this_thread::sleep_for(delay);
    }
  }
}

nlohmann::json chat_request_body(const ChatMessagePair& messages,
                                 const std::string& model, double temperature) {
  return {{"model", model},
          {"messages",
           nlohmann::json::array({{{"role", "system"}, {"content", messages.system}},
                                  {{"role", "user"}, {"content", messages.user}}})},
          {"temperature", temperature}};
}

std::string request_key(const nlohmann::json& body) {
  return to_hex(fnv1a64(body.dump()));
}

std::string response_content(const nlohmann::json& response) {
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(200, std::string("malformed chat response: ") + e.what());
  }
}

std::string IdentityClient::complete(const ChatMessagePair& messages,
                                     const RequestOptions&) {
  return numbered(extract_candidate_titles(messages.user));
}

std::string OracleClient::complete(const ChatMessagePair& messages,
                                   const RequestOptions&) {
  auto titles = extract_candidate_titles(messages.user);
  const auto it = std::find(titles.begin(), titles.end(), ground_truth_);
  if (it != titles.end()) std::rotate(titles.begin(), it, it + 1);
  return numbered(titles);
}

std::string AdversarialClient::complete(const ChatMessagePair& messages,
                                        const RequestOptions&) {
  auto titles = extract_candidate_titles(messages.user);
  std::lock_guard lock(mu_);
  rng_.shuffle(titles);
  std::vector<std::string> lines;
  lines.push_back("Sure! Here is my ranking based on your history:");
  for (std::size_t i = 0; i < titles.size(); ++i) {
    switch (rng_.uniform_index(5)) {
      case 0:
        lines.push_back("The Phantom Sequel " + std::to_string(rng_.uniform_index(1000)));
        break;
      case 1:
        lines.push_back(titles[i] + " II: Return of " + titles[i]);
        break;
      case 2:
        lines.push_back(titles[i] + " (Director's Cut)");
        break;
      default:
        break;
    }
    if (rng_.uniform_index(4) != 0) lines.push_back(titles[i]);
  }
  lines.push_back("Hallucinated Blockbuster (2031)");
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += std::to_string(i + 1) + ". " + lines[i] + "\n";
  }
  return out;
}

TranscriptClient::TranscriptClient(const std::filesystem::path& path, std::string model,
                                   double temperature)
    : model_(std::move(model)), temperature_(temperature) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open transcript " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto entry = nlohmann::json::parse(line);
      responses_[entry.at("key").get<std::string>()] = std::move(entry.at("response"));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

std::string TranscriptClient::complete(const ChatMessagePair& messages,
                                       const RequestOptions&) {
  const auto key = request_key(chat_request_body(messages, model_, temperature_));
  const auto it = responses_.find(key);
  if (it == responses_.end()) {
    throw ProtocolError(404, "no transcript entry for request " + key);
  }
  return response_content(it->second);
}

RecordingClient::RecordingClient(std::shared_ptr<ChatClient> inner,
                                 std::filesystem::path path, std::string model,
                                 double temperature)
    : inner_(std::move(inner)),
      path_(std::move(path)),
      model_(std::move(model)),
      temperature_(temperature) {}

std::string RecordingClient::complete(const ChatMessagePair& messages,
                                      const RequestOptions& options) {
  auto text = inner_->complete(messages, options);
  const auto body = chat_request_body(messages, model_, temperature_);
  const nlohmann::json response = {
      {"object", "chat.completion"},
      {"model", model_},
      {"choices",
       nlohmann::json::array({{{"index", 0},
                               {"message", {{"role", "assistant"}, {"content", text}}},
                               {"finish_reason", "stop"}}})}};
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error("cannot append to transcript " + path_.string());
  out << nlohmann::json{{"key", request_key(body)}, {"request", body}, {"response", response}}
             .dump()
      << '\n';
  return text;
}

}  // namespace fedrec
