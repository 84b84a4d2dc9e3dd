#include "wayfinder/service.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"

#include <httplib.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <condition_variable>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace wayfinder {

std::string_view to_string(SessionMode mode) {
  switch (mode) {
    case SessionMode::Explain: return "explain";
    case SessionMode::Rate: return "rate";
    case SessionMode::Navigate: return "navigate";
  }
  return "?";
}

std::optional<SessionMode> parse_session_mode(std::string_view name) {
  for (auto m : {SessionMode::Explain, SessionMode::Rate, SessionMode::Navigate}) {
    if (name == to_string(m)) return m;
  }
  return std::nullopt;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::size_t utf8_length(std::string_view text) {
  return static_cast<std::size_t>(std::count_if(
      text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

namespace {

std::string iso8601(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_all_synced(int fd, const std::string& data, const std::string& path) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw Error("write failed: " + path);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw Error("fsync failed: " + path);
  }
  ::close(fd);
}

void sync_dir(const std::string& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

bool valid_session_id(std::string_view id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

json event_json(const Event& e) {
  return {{"seq", e.seq}, {"kind", e.kind}, {"payload", e.payload}, {"at", e.at}};
}

}  // namespace

EventStore::EventStore(std::string dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string EventStore::path_for(const std::string& id) const { return dir_ + "/" + id + ".jsonl"; }

void EventStore::create(const std::string& id, const json& meta) {
  const std::string path = path_for(id);
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
  if (fd < 0) throw Error("cannot create session log " + path);
  write_all_synced(fd, meta.dump() + "\n", path);
  sync_dir(dir_);
}

void EventStore::append(const std::string& id, const Event& event) {
  const std::string path = path_for(id);
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND);
  if (fd < 0) throw Error("cannot open session log " + path);
  write_all_synced(fd, event_json(event).dump() + "\n", path);
}

EventStore::Log EventStore::load(const std::string& id) {
  const std::string path = path_for(id);
  std::string text = read_file(path);

  // Keep only complete, parseable lines; a crash can leave at most the last
  // one unfinished.
  std::vector<json> records;
  std::size_t good_end = 0;
  std::size_t begin = 0;
  while (begin < text.size()) {
    const std::size_t nl = text.find('\n', begin);
    if (nl == std::string::npos) break;
    auto j = json::parse(text.begin() + static_cast<long>(begin), text.begin() + static_cast<long>(nl),
                         nullptr, false);
    if (j.is_discarded()) {
      if (text.find('\n', nl + 1) != std::string::npos) {
        throw Error("corrupt record in the middle of " + path);
      }
      break;
    }
    records.push_back(std::move(j));
    good_end = nl + 1;
    begin = nl + 1;
  }
  if (good_end < text.size()) fs::resize_file(path, good_end);
  if (records.empty()) throw Error("session log without metadata: " + path);

  Log log;
  log.meta = std::move(records.front());
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    log.events.push_back({r.at("seq").get<int>(), r.at("kind").get<std::string>(), r.at("payload"),
                          r.at("at").get<std::string>()});
  }
  return log;
}

std::vector<std::string> EventStore::list() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() == ".jsonl") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct SessionManager::Session {
  std::mutex mu;
  std::string id;
  SessionMode mode = SessionMode::Navigate;
  std::string map_id;
  std::optional<std::string> explanation_id;
  std::optional<StudyCondition> condition;
  std::string participant;
  std::string created_at;
  int budget = 0;
  std::vector<Event> events;
  std::optional<PlannerState> view;
  bool closed = false;
  std::chrono::system_clock::time_point last_active;
  std::map<std::string, json> replies;
};

namespace {

std::map<std::pair<std::string, StudyCondition>, std::string> load_bins(const std::string& path) {
  std::map<std::pair<std::string, StudyCondition>, std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() < 3) throw Error("bins file: short row '" + line + "'");
    for (auto c : {StudyCondition::Bad, StudyCondition::Medium, StudyCondition::Good}) {
      if (cols[1] == to_string(c)) out[{cols[0], c}] = cols[2];
    }
  }
  return out;
}

std::vector<std::string> map_rows(const GridMap& m) {
  std::vector<std::string> rows;
  std::istringstream in(serialize_map(m));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '@') rows.push_back(line);
  }
  return rows;
}

char seen_char(Seen s) {
  switch (s) {
    case Seen::Wall: return '#';
    case Seen::Floor: return '.';
    case Seen::Goal: return 'G';
    case Seen::Unknown: break;
  }
  return '?';
}

json position_json(Position p) { return {{"row", p.row}, {"col", p.col}}; }

}  // namespace

SessionManager::SessionManager(ServiceConfig config, Clock clock)
    : config_(std::move(config)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::system_clock::now(); })),
      store_(config_.store_dir.empty() ? std::string("sessions") : config_.store_dir) {
  for (auto& m : load_map_dir(config_.maps_dir)) maps_.emplace(m.id(), std::move(m));
  if (!config_.corpus_path.empty()) {
    for (auto& e : load_corpus(config_.corpus_path)) {
      explanations_.emplace(e.explanation.id, std::move(e.explanation));
    }
  }
  if (!config_.bins_path.empty()) stimuli_ = load_bins(config_.bins_path);
  for (const auto& id : store_.list()) restore(id);
}

bool SessionManager::admin_allowed(const std::string& token) const {
  return !config_.admin_token.empty() && token == config_.admin_token;
}

json SessionManager::maps() const {
  json out = json::array();
  for (const auto& [id, m] : maps_) {
    out.push_back({{"id", id}, {"width", m.width()}, {"height", m.height()}, {"pair_id", m.pair_id()}});
  }
  return out;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) {
  std::shared_lock lock(sessions_mu_);
  const auto it = sessions_.find(id);
  if (!valid_session_id(id) || it == sessions_.end()) {
    throw ApiError(404, "not_found", "unknown session");
  }
  return it->second;
}

void SessionManager::append(Session& s, std::string kind, json payload) {
  const auto now = clock_();
  Event e{static_cast<int>(s.events.size()), std::move(kind), std::move(payload), iso8601(now)};
  store_.append(s.id, e);
  s.events.push_back(std::move(e));
  s.last_active = now;
}

void SessionManager::check_open(Session& s) {
  if (!s.closed && clock_() - s.last_active > config_.idle_timeout) {
    append(s, "Expired", {{"reason", "idle"}});
    s.closed = true;
  }
  if (s.closed) throw ApiError(409, "session_closed", "session is already finished");
}

json SessionManager::payload(const Session& s) const {
  const GridMap& m = maps_.at(s.map_id);
  json p;
  p["session_id"] = s.id;
  p["mode"] = to_string(s.mode);
  p["map_id"] = s.map_id;
  p["fov_radius"] = config_.fov_radius;
  p["closed"] = s.closed;
  if (s.explanation_id) {
    p["explanation"] = {{"id", *s.explanation_id}, {"text", explanations_.at(*s.explanation_id).text}};
  }
  auto full_map = [&] {
    return json{{"width", m.width()},
                {"height", m.height()},
                {"rows", map_rows(m)},
                {"start", position_json(m.start())},
                {"goal", position_json(m.goal())}};
  };

  switch (s.mode) {
    case SessionMode::Explain:
      p["instruction"] = kExplainInstruction;
      p["map"] = full_map();
      break;
    case SessionMode::Rate:
      p["instruction"] = kRateInstruction;
      p["map"] = full_map();
      p["scale"] = {{"min", 0}, {"max", 100}};
      break;
    case SessionMode::Navigate: {
      const PlannerState& v = *s.view;
      p["instruction"] = kNavigateInstruction;
      p["width"] = m.width();
      p["height"] = m.height();
      p["budget"] = s.budget;
      p["position"] = position_json(v.position);
      p["steps_taken"] = v.steps_taken;
      json known = json::array();
      for (int r = 0; r < v.height(); ++r) {
        std::string row;
        for (int c = 0; c < v.width(); ++c) row += seen_char(v.known(r, c));
        known.push_back(row);
      }
      p["known"] = known;
      json window = json::array();
      const int rad = config_.fov_radius;
      for (int r = -rad; r <= rad; ++r) {
        std::string row;
        for (int c = -rad; c <= rad; ++c) {
          const Position q{v.position.row + r, v.position.col + c};
          row += in_bounds(v.known, q) ? seen_char(v.known(q.row, q.col)) : ' ';
        }
        window.push_back(row);
      }
      p["window"] = window;
      p["done"] = s.closed;
      p["success"] = v.position == m.goal();
      if (v.position == m.goal()) p["path_length"] = v.steps_taken;
      break;
    }
  }
  for (const auto& e : s.events) {
    if (e.kind == "Rated") p["rating"] = e.payload.at("score");
    if (e.kind == "Explained") p["text"] = e.payload.at("text");
    if (e.kind == "Expired") p["expired"] = e.payload.at("reason");
  }
  return p;
}

json SessionManager::create(const json& request) {
  if (!request.is_object()) throw ApiError(400, "bad_request", "body must be a JSON object");
  const auto mode_field = request.find("mode");
  if (mode_field == request.end() || !mode_field->is_string()) {
    throw ApiError(422, "invalid_mode", "mode must be one of explain, rate, navigate");
  }
  const auto mode = parse_session_mode(mode_field->get<std::string>());
  if (!mode) throw ApiError(422, "invalid_mode", "mode must be one of explain, rate, navigate");
  if (!request.contains("map_id") || !request["map_id"].is_string()) {
    throw ApiError(422, "invalid_map", "map_id is required");
  }
  const std::string map_id = request["map_id"].get<std::string>();
  if (!maps_.contains(map_id)) throw ApiError(404, "unknown_map", "unknown map '" + map_id + "'");

  auto s = std::make_shared<Session>();
  s->id = random_hex(16);
  s->mode = *mode;
  s->map_id = map_id;
  if (request.contains("participant") && request["participant"].is_string()) {
    s->participant = request["participant"].get<std::string>();
  }
  if (request.contains("explanation_id") && !request["explanation_id"].is_null()) {
    if (!request["explanation_id"].is_string()) {
      throw ApiError(422, "invalid_explanation", "explanation_id must be a string");
    }
    s->explanation_id = request["explanation_id"].get<std::string>();
  }
  if (request.contains("condition") && !request["condition"].is_null()) {
    for (auto c : {StudyCondition::None, StudyCondition::Bad, StudyCondition::Medium,
                   StudyCondition::Good}) {
      if (request["condition"] == to_string(c)) s->condition = c;
    }
    if (!s->condition) throw ApiError(422, "invalid_condition", "condition must be None, Bad, Medium or Good");
  }

  if (request.value("counterbalance", false)) {
    if (*mode != SessionMode::Navigate || s->participant.empty() || s->explanation_id) {
      throw ApiError(409, "mode_mismatch",
                     "counterbalancing needs a navigate session, a participant and no explanation_id");
    }
    int k = 0;
    {
      std::lock_guard lock(rotation_mu_);
      k = rotation_[s->participant]++;
    }
    static constexpr StudyCondition kOrder[] = {StudyCondition::Good, StudyCondition::Medium,
                                                StudyCondition::Bad};
    s->condition = kOrder[k % 3];
    const auto it = stimuli_.find({map_id, *s->condition});
    if (it == stimuli_.end()) {
      throw ApiError(409, "no_stimulus", "no " + std::string(to_string(*s->condition)) +
                                             " explanation selected for map '" + map_id + "'");
    }
    s->explanation_id = it->second;
  }

  if (*mode == SessionMode::Rate && !s->explanation_id) {
    throw ApiError(409, "mode_mismatch", "rate sessions need an explanation_id");
  }
  if (*mode == SessionMode::Explain && s->explanation_id) {
    throw ApiError(409, "mode_mismatch", "explain sessions do not take an explanation_id");
  }
  if (s->explanation_id) {
    const auto it = explanations_.find(*s->explanation_id);
    if (it == explanations_.end()) {
      throw ApiError(404, "unknown_explanation", "unknown explanation '" + *s->explanation_id + "'");
    }
    if (it->second.map_id != map_id) {
      throw ApiError(409, "mode_mismatch", "explanation '" + *s->explanation_id +
                                               "' belongs to map '" + it->second.map_id + "'");
    }
  }
  if (*mode == SessionMode::Navigate && !s->condition) {
    s->condition = s->explanation_id ? std::nullopt : std::optional(StudyCondition::None);
  }

  const GridMap& m = maps_.at(map_id);
  EpisodeParams ep;
  ep.budget = config_.budget;
  s->budget = effective_budget(ep, m);
  const auto now = clock_();
  s->created_at = iso8601(now);
  s->last_active = now;

  json meta{{"type", "session"},       {"id", s->id},
            {"mode", to_string(s->mode)}, {"map_id", map_id},
            {"participant", s->participant}, {"created_at", s->created_at},
            {"fov_radius", config_.fov_radius}, {"budget", s->budget}};
  if (s->explanation_id) meta["explanation_id"] = *s->explanation_id;
  if (s->condition) meta["condition"] = to_string(*s->condition);
  store_.create(s->id, meta);

  std::lock_guard session_lock(s->mu);
  if (*mode == SessionMode::Navigate) {
    s->view = ground_state(observe(m, m.start(), config_.fov_radius, 0),
                           initial_state(m.width(), m.height(), config_.fov_radius));
    append(*s, "Observed", {{"row", m.start().row}, {"col", m.start().col}, {"steps", 0}});
  }
  {
    std::unique_lock lock(sessions_mu_);
    sessions_.emplace(s->id, s);
  }
  return {{"session_id", s->id}, {"payload", payload(*s)}};
}

json SessionManager::act(const std::string& id, const std::string& action,
                         const std::string& idempotency_key) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  if (!idempotency_key.empty()) {
    if (auto it = s->replies.find(idempotency_key); it != s->replies.end()) return it->second;
  }
  if (s->mode != SessionMode::Navigate) {
    throw ApiError(409, "mode_mismatch", "actions are only accepted by navigate sessions");
  }
  check_open(*s);
  const auto a = parse_action(action);
  if (!a) throw ApiError(422, "invalid_action", "action must be UP, DOWN, LEFT or RIGHT");

  const GridMap& m = maps_.at(s->map_id);
  const Position from = s->view->position;
  const Position to = step(m, from, *a);
  const int steps = s->view->steps_taken + 1;
  s->view = ground_state(observe(m, to, config_.fov_radius, steps), std::move(*s->view));
  append(*s, "Acted",
         {{"action", to_token(*a)}, {"from", position_json(from)}, {"to", position_json(to)},
          {"blocked", from == to}});
  append(*s, "Observed", {{"row", to.row}, {"col", to.col}, {"steps", steps}});
  if (to == m.goal()) {
    append(*s, "Completed", {{"path_length", steps}});
    s->closed = true;
  } else if (steps >= s->budget) {
    append(*s, "Expired", {{"reason", "budget"}, {"steps", steps}});
    s->closed = true;
  }
  json reply = payload(*s);
  if (!idempotency_key.empty()) s->replies[idempotency_key] = reply;
  return reply;
}

json SessionManager::rate(const std::string& id, const json& score,
                          const std::string& idempotency_key) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  if (!idempotency_key.empty()) {
    if (auto it = s->replies.find(idempotency_key); it != s->replies.end()) return it->second;
  }
  if (s->mode != SessionMode::Rate) {
    throw ApiError(409, "mode_mismatch", "ratings are only accepted by rate sessions");
  }
  check_open(*s);
  if (!score.is_number()) throw ApiError(422, "invalid_score", "score must be a number in [0, 100]");
  const double v = score.get<double>();
  if (!(v >= 0.0 && v <= 100.0)) {
    throw ApiError(422, "invalid_score", "score must be a number in [0, 100]");
  }
  append(*s, "Rated", {{"score", v}});
  s->closed = true;
  json reply = {{"ok", true}, {"payload", payload(*s)}};
  if (!idempotency_key.empty()) s->replies[idempotency_key] = reply;
  return reply;
}

json SessionManager::explain(const std::string& id, const json& text,
                             const std::string& idempotency_key) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  if (!idempotency_key.empty()) {
    if (auto it = s->replies.find(idempotency_key); it != s->replies.end()) return it->second;
  }
  if (s->mode != SessionMode::Explain) {
    throw ApiError(409, "mode_mismatch", "explanations are only accepted by explain sessions");
  }
  check_open(*s);
  if (!text.is_string()) throw ApiError(422, "invalid_text", "text must be a string");
  const std::string normalized = normalize_whitespace(text.get<std::string>());
  if (normalized.empty()) throw ApiError(422, "empty_text", "explanation is empty");
  if (utf8_length(normalized) > kMaxExplanationChars) {
    throw ApiError(413, "text_too_long", "explanation exceeds 2000 characters");
  }
  append(*s, "Explained", {{"text", normalized}});
  s->closed = true;
  json reply = {{"ok", true}, {"payload", payload(*s)}};
  if (!idempotency_key.empty()) s->replies[idempotency_key] = reply;
  return reply;
}

json SessionManager::view(const std::string& id) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  return payload(*s);
}

json SessionManager::events(const std::string& id) {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  json out = json::array();
  for (const auto& e : s->events) out.push_back(event_json(e));
  return {{"session_id", s->id},
          {"mode", to_string(s->mode)},
          {"map_id", s->map_id},
          {"created_at", s->created_at},
          {"events", out}};
}

std::string SessionManager::export_corpus(std::optional<SessionMode> mode) {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::shared_lock lock(sessions_mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return std::tie(a->created_at, a->id) < std::tie(b->created_at, b->id);
  });

  std::string out;
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    if (mode && s->mode != *mode) continue;
    CorpusEntry entry;
    entry.explanation.id = s->id;
    entry.explanation.map_id = s->map_id;
    if (s->explanation_id) entry.explanation.text = explanations_.at(*s->explanation_id).text;
    bool keep = false;
    for (const auto& e : s->events) {
      if (e.kind == "Explained" && s->mode == SessionMode::Explain) {
        entry.explanation.text = e.payload.at("text").get<std::string>();
        keep = true;
      } else if (e.kind == "Rated" && s->mode == SessionMode::Rate) {
        entry.rating = e.payload.at("score").get<double>();
        keep = true;
      } else if (e.kind == "Completed" && s->mode == SessionMode::Navigate) {
        entry.path_length = e.payload.at("path_length").get<int>();
        entry.condition = s->condition;
        keep = true;
      }
    }
    if (!keep) continue;
    auto record = nlohmann::ordered_json::parse(corpus_record(entry));
    record["mode"] = to_string(s->mode);
    if (s->explanation_id) record["explanation_id"] = *s->explanation_id;
    if (!s->participant.empty()) record["participant"] = s->participant;
    out += record.dump() + "\n";
  }
  return out;
}

int SessionManager::expire_idle() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::shared_lock lock(sessions_mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  int expired = 0;
  const auto now = clock_();
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    if (s->closed || now - s->last_active <= config_.idle_timeout) continue;
    append(*s, "Expired", {{"reason", "idle"}});
    s->closed = true;
    ++expired;
  }
  return expired;
}

void SessionManager::restore(const std::string& id) {
  if (!valid_session_id(id)) return;
  auto log = store_.load(id);
  const json& meta = log.meta;
  auto s = std::make_shared<Session>();
  s->id = id;
  s->mode = parse_session_mode(meta.at("mode").get<std::string>()).value();
  s->map_id = meta.at("map_id").get<std::string>();
  if (!maps_.contains(s->map_id)) return;  // map no longer served
  if (meta.contains("explanation_id")) {
    s->explanation_id = meta["explanation_id"].get<std::string>();
    if (!explanations_.contains(*s->explanation_id)) return;
  }
  if (meta.contains("condition")) {
    for (auto c : {StudyCondition::None, StudyCondition::Bad, StudyCondition::Medium,
                   StudyCondition::Good}) {
      if (meta["condition"] == to_string(c)) s->condition = c;
    }
  }
  s->participant = meta.value("participant", "");
  s->created_at = meta.value("created_at", "");
  s->budget = meta.value("budget", 0);
  s->last_active = clock_();

  const GridMap& m = maps_.at(s->map_id);
  const int radius = meta.value("fov_radius", config_.fov_radius);
  if (s->mode == SessionMode::Navigate) {
    s->view = ground_state(observe(m, m.start(), radius, 0),
                           initial_state(m.width(), m.height(), radius));
  }
  for (auto& e : log.events) {
    if (e.kind == "Acted") {
      const auto a = parse_action(e.payload.at("action").get<std::string>());
      const Position to = step(m, s->view->position, a.value());
      s->view = ground_state(observe(m, to, radius, s->view->steps_taken + 1), std::move(*s->view));
    }
    if (e.kind == "Completed" || e.kind == "Expired" || e.kind == "Rated" || e.kind == "Explained") {
      s->closed = true;
    }
    s->events.push_back(std::move(e));
  }
  std::unique_lock lock(sessions_mu_);
  sessions_.emplace(id, std::move(s));
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

json parse_body(const httplib::Request& req) {
  auto body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw ApiError(400, "bad_request", "request body must be a JSON object");
  }
  return body;
}

std::string bearer_token(const httplib::Request& req) {
  const std::string auth = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (auth.rfind(prefix, 0) == 0) return auth.substr(prefix.size());
  return req.get_header_value("X-Admin-Token");
}

}  // namespace

Service::Service(ServiceConfig config, Clock clock)
    : manager_(std::make_unique<SessionManager>(std::move(config), std::move(clock))),
      server_(std::make_unique<httplib::Server>()) {
  routes();
}

Service::~Service() { stop(); }

void Service::routes() {
  auto& srv = *server_;
  SessionManager& m = *manager_;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                               std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const ApiError& e) {
      send_json(res, e.status, {{"code", e.code}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    } catch (...) {
      send_json(res, 500, {{"code", "internal"}, {"message", "unknown error"}});
    }
  });

  srv.Get("/api/maps", [&m](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, m.maps());
  });
  srv.Post("/api/sessions", [&m](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 201, m.create(parse_body(req)));
  });
  srv.Post(R"(/api/sessions/([^/]+)/actions)",
           [&m](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             if (!body.contains("action") || !body["action"].is_string()) {
               throw ApiError(422, "invalid_action", "action must be UP, DOWN, LEFT or RIGHT");
             }
             send_json(res, 200,
                       m.act(req.matches[1], body["action"].get<std::string>(),
                             req.get_header_value("Idempotency-Key")));
           });
  srv.Post(R"(/api/sessions/([^/]+)/rating)",
           [&m](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             send_json(res, 200,
                       m.rate(req.matches[1], body.value("score", json()),
                              req.get_header_value("Idempotency-Key")));
           });
  srv.Post(R"(/api/sessions/([^/]+)/explanation)",
           [&m](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             send_json(res, 200,
                       m.explain(req.matches[1], body.value("text", json()),
                                 req.get_header_value("Idempotency-Key")));
           });
  srv.Get(R"(/api/sessions/([^/]+)/view)", [&m](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, m.view(req.matches[1]));
  });
  srv.Get(R"(/api/sessions/([^/]+))", [&m](const httplib::Request& req, httplib::Response& res) {
    if (!m.admin_allowed(bearer_token(req))) {
      throw ApiError(403, "forbidden", "operator token required");
    }
    send_json(res, 200, m.events(req.matches[1]));
  });
  srv.Get("/api/export", [&m](const httplib::Request& req, httplib::Response& res) {
    if (!m.admin_allowed(bearer_token(req))) {
      throw ApiError(403, "forbidden", "operator token required");
    }
    std::optional<SessionMode> mode;
    if (req.has_param("mode")) {
      mode = parse_session_mode(req.get_param_value("mode"));
      if (!mode) throw ApiError(422, "invalid_mode", "mode must be one of explain, rate, navigate");
    }
    res.status = 200;
    res.set_content(m.export_corpus(mode), "application/x-ndjson; charset=utf-8");
  });

  const auto& static_dir = m.config().static_dir;
  if (!static_dir.empty() && fs::is_directory(static_dir)) srv.set_mount_point("/", static_dir);
}

namespace {

/// Background idle-expiry sweep, one per listening server.
class Sweeper {
 public:
  Sweeper(SessionManager& m, std::chrono::seconds period)
      : thread_([this, &m, period] {
          std::unique_lock lock(mu_);
          while (!cv_.wait_for(lock, period, [this] { return stop_; })) {
            lock.unlock();
            m.expire_idle();
            lock.lock();
          }
        }) {}
  ~Sweeper() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::thread thread_;
};

std::chrono::seconds sweep_period(const ServiceConfig& c) {
  return std::clamp(c.idle_timeout / 4, std::chrono::seconds(1), std::chrono::seconds(60));
}

}  // namespace

bool Service::listen(const std::string& host, int port) {
  Sweeper sweeper(*manager_, sweep_period(manager_->config()));
  return server_->listen(host, port);
}

int Service::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool Service::listen_after_bind() {
  Sweeper sweeper(*manager_, sweep_period(manager_->config()));
  return server_->listen_after_bind();
}

void Service::stop() {
  if (server_) server_->stop();
}

bool Service::is_running() const { return server_->is_running(); }

}  // namespace wayfinder
