#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace wayfinder {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  std::optional<std::uint64_t> seed;
};

/// A chat-completion backend. complete() returns choices[0].message.content
/// and throws RemoteUnavailable once its retry budget is spent.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

/// Request body in the open chat-completion schema.
std::string chat_request_body(const ChatRequest& request);

/// Extracts choices[0].message.content; nullopt if the body does not match.
std::optional<std::string> chat_response_content(const std::string& body);

/// HTTP(S) chat-completion client with bounded retries, exponential backoff
/// and a cap on concurrent in-flight requests.
class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(std::string endpoint_url, std::string api_key, RetryPolicy retry = {},
                 int max_in_flight = 4, std::chrono::seconds timeout = std::chrono::seconds(120));

  std::string complete(const ChatRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
  std::counting_semaphore<256> in_flight_;
};

/// On-disk response cache: one file per key, file name = hex key.
///
/// Lookups of a key that another thread is computing block until that
/// computation finishes, so a key is never fetched twice.
class ResponseCache {
 public:
  explicit ResponseCache(std::string dir);

  const std::string& dir() const { return dir_; }
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& content);
  std::string get_or_compute(const std::string& key, const std::function<std::string()>& compute);

 private:
  std::string path_for(const std::string& key) const;

  std::string dir_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, bool> in_progress_;
};

/// First fenced code block's body (fence line's info string dropped);
/// nullopt if no complete fence pair exists.
std::optional<std::string> extract_fenced_block(const std::string& reply);

}  // namespace wayfinder
