#pragma once

#include "wayfinder/analysis.hpp"
#include "wayfinder/gridworld.hpp"
#include "wayfinder/planner.hpp"

#include <json.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace wayfinder {

enum class SessionMode { Explain, Rate, Navigate };

std::string_view to_string(SessionMode mode);
std::optional<SessionMode> parse_session_mode(std::string_view name);

inline constexpr std::string_view kExplainInstruction =
    "Please send a message to your partner that will help them find the treasure. Remember that "
    "your partner can only see the highlighted area -- they cannot see the whole map.";
inline constexpr std::string_view kRateInstruction =
    "Please evaluate the following messages by rating how helpful they are for finding the "
    "treasure";
inline constexpr std::string_view kNavigateInstruction =
    "Find the treasure in as few steps as possible";

inline constexpr std::size_t kMaxExplanationChars = 2000;

/// A request the service refuses; maps onto an HTTP status and a JSON body
/// {code, message}.
struct ApiError : std::runtime_error {
  ApiError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

struct ServiceConfig {
  std::string maps_dir;
  std::string corpus_path;  // explanations for Rate and Navigate sessions; optional
  std::string bins_path;    // bins.csv from `rank`, for counterbalanced assignment; optional
  std::string store_dir;
  std::string static_dir;  // web UI bundle; optional
  std::string admin_token;
  int fov_radius = 2;
  int budget = 0;  // 0: the engine default for each map
  std::chrono::seconds idle_timeout{30 * 60};
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct Event {
  int seq = 0;
  std::string kind;  // Observed, Acted, Rated, Explained, Completed, Expired
  nlohmann::json payload;
  std::string at;
};

/// One append-only line-delimited log per session. The first line holds the
/// session's immutable metadata; every later line is one Event. Each append
/// is fsynced. A torn final line (crash mid-write) is cut off on load.
class EventStore {
 public:
  explicit EventStore(std::string dir);

  void create(const std::string& id, const nlohmann::json& meta);
  void append(const std::string& id, const Event& event);

  struct Log {
    nlohmann::json meta;
    std::vector<Event> events;
  };
  Log load(const std::string& id);
  std::vector<std::string> list() const;
  const std::string& dir() const { return dir_; }

 private:
  std::string path_for(const std::string& id) const;
  std::string dir_;
};

/// Behavioural-task sessions without any HTTP concerns. Every public method
/// throws ApiError for client mistakes.
class SessionManager {
 public:
  SessionManager(ServiceConfig config, Clock clock = {});

  nlohmann::json maps() const;
  /// {mode, map_id, explanation_id?, participant?, condition?, counterbalance?}
  nlohmann::json create(const nlohmann::json& request);
  /// A non-empty idempotency key already used on the session returns the
  /// first response without applying the request again.
  nlohmann::json act(const std::string& id, const std::string& action,
                     const std::string& idempotency_key = {});
  nlohmann::json rate(const std::string& id, const nlohmann::json& score,
                      const std::string& idempotency_key = {});
  nlohmann::json explain(const std::string& id, const nlohmann::json& text,
                         const std::string& idempotency_key = {});
  /// Current participant payload, for reloads.
  nlohmann::json view(const std::string& id);
  /// Full log; operator use.
  nlohmann::json events(const std::string& id);
  /// Corpus-format records of closed sessions, optionally of one mode.
  std::string export_corpus(std::optional<SessionMode> mode);
  /// Appends Expired to sessions idle longer than the timeout. Returns how
  /// many were expired.
  int expire_idle();

  bool admin_allowed(const std::string& token) const;
  const ServiceConfig& config() const { return config_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id);
  void append(Session& s, std::string kind, nlohmann::json payload);
  nlohmann::json payload(const Session& s) const;
  void restore(const std::string& id);
  void check_open(Session& s);

  ServiceConfig config_;
  Clock clock_;
  std::map<std::string, GridMap> maps_;
  std::map<std::string, Explanation> explanations_;
  std::map<std::pair<std::string, StudyCondition>, std::string> stimuli_;
  EventStore store_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex rotation_mu_;
  std::map<std::string, int> rotation_;  // participant -> sessions assigned so far
};

/// Normalizes runs of whitespace to single spaces and trims.
std::string normalize_whitespace(std::string_view text);

/// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view text);

/// HTTP facade over a SessionManager.
class Service {
 public:
  explicit Service(ServiceConfig config, Clock clock = {});
  ~Service();

  /// Blocks until stop(). Returns false if the socket could not be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port; returns it, or -1.
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  bool is_running() const;
  SessionManager& sessions() { return *manager_; }

 private:
  void routes();
  std::unique_ptr<SessionManager> manager_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace wayfinder
