#include "wayfinder/chat.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"

#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <thread>

namespace wayfinder {

std::string chat_request_body(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = request.model;
  body["temperature"] = request.temperature;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  if (request.seed) body["seed"] = *request.seed;
  return body.dump();
}

std::optional<std::string> chat_response_content(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) return std::nullopt;
  const auto& first = (*choices)[0];
  if (!first.is_object() || !first.contains("message")) return std::nullopt;
  const auto& message = first["message"];
  if (!message.is_object() || !message.contains("content") || !message["content"].is_string()) {
    return std::nullopt;
  }
  return message["content"].get<std::string>();
}

HttpChatClient::HttpChatClient(std::string endpoint_url, std::string api_key, RetryPolicy retry,
                               int max_in_flight, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)),
      retry_(retry),
      timeout_(timeout),
      in_flight_(std::clamp(max_in_flight, 1, 256)) {
  const auto scheme_end = endpoint_url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint url needs a scheme: " + endpoint_url);
  }
  const auto path_begin = endpoint_url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) {
    scheme_host_port_ = endpoint_url;
    path_ = "/";
  } else {
    scheme_host_port_ = endpoint_url.substr(0, path_begin);
    path_ = endpoint_url.substr(path_begin);
  }
}

std::string HttpChatClient::complete(const ChatRequest& request) {
  const std::string body = chat_request_body(request);
  std::string last_error = "no attempt made";
  auto backoff = retry_.initial_backoff;
  for (int attempt = 0; attempt < retry_.attempts; ++attempt) {
    {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<256>& sem;
        ~Release() { sem.release(); }
      } release{in_flight_};

      httplib::Client client(scheme_host_port_);
      client.set_connection_timeout(10);
      client.set_read_timeout(timeout_.count());
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      const auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        last_error = "connection failed: " + httplib::to_string(res.error());
      } else if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
      } else if (auto content = chat_response_content(res->body)) {
        return *content;
      } else {
        last_error = "response does not match the chat-completion schema";
      }
    }
    if (attempt + 1 < retry_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<std::int64_t>(static_cast<double>(backoff.count()) * retry_.multiplier));
    }
  }
  throw RemoteUnavailable("chat endpoint " + scheme_host_port_ + path_ + " unavailable after " +
                          std::to_string(retry_.attempts) + " attempts: " + last_error);
}

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::path_for(const std::string& key) const { return dir_ + "/" + key; }

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const std::string path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_file(path);
}

void ResponseCache::put(const std::string& key, const std::string& content) {
  write_file_atomic(path_for(key), content);
}

std::string ResponseCache::get_or_compute(const std::string& key,
                                          const std::function<std::string()>& compute) {
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !in_progress_.contains(key); });
    if (auto hit = get(key)) return *hit;
    in_progress_[key] = true;
  }
  struct Done {
    ResponseCache& cache;
    const std::string& key;
    ~Done() {
      std::lock_guard lock(cache.mu_);
      cache.in_progress_.erase(key);
      cache.cv_.notify_all();
    }
  } done{*this, key};
  std::string value = compute();
  put(key, value);
  return value;
}

std::optional<std::string> extract_fenced_block(const std::string& reply) {
  const auto open = reply.find("```");
  if (open == std::string::npos) return std::nullopt;
  const auto body_begin = reply.find('\n', open + 3);
  if (body_begin == std::string::npos) return std::nullopt;
  const auto close = reply.find("```", body_begin + 1);
  if (close == std::string::npos) return std::nullopt;
  return reply.substr(body_begin + 1, close - body_begin - 1);
}

}  // namespace wayfinder
