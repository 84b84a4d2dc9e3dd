#include "support.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"
#include "wayfinder/service.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <filesystem>
#include <thread>

using namespace wayfinder;
using nlohmann::json;
using wayfinder::test::fixture;
using wayfinder::test::TempDir;

namespace fs = std::filesystem;

namespace {

constexpr const char* kToken = "operator-secret";

ServiceConfig config_for(const TempDir& dir) {
  ServiceConfig c;
  c.maps_dir = fixture("maps");
  c.corpus_path = fixture("corpus/three.jsonl");
  c.store_dir = dir.str("store");
  c.admin_token = kToken;
  return c;
}

class Running {
 public:
  explicit Running(ServiceConfig config) : service_(std::move(config)) {
    port_ = service_.bind_any_port("127.0.0.1");
    thread_ = std::thread([this] { service_.listen_after_bind(); });
    while (!service_.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  std::pair<int, json> post(const std::string& path, const json& body, const httplib::Headers& h = {}) {
    auto res = client().Post(path, h, body.dump(), "application/json");
    if (!res) return {0, json()};
    return {res->status, json::parse(res->body, nullptr, false)};
  }

  std::pair<int, std::string> get(const std::string& path, const httplib::Headers& h = {}) {
    auto res = client().Get(path, h);
    if (!res) return {0, ""};
    return {res->status, res->body};
  }

  std::string create(const json& body) {
    auto [status, reply] = post("/api/sessions", body);
    EXPECT_EQ(status, 201) << reply.dump();
    return reply.value("session_id", "");
  }

 private:
  Service service_;
  int port_ = -1;
  std::thread thread_;
};

httplib::Headers admin() { return {{"Authorization", std::string("Bearer ") + kToken}}; }

std::vector<json> ndjson(const std::string& text) {
  std::vector<json> out;
  std::size_t begin = 0;
  for (std::size_t nl; (nl = text.find('\n', begin)) != std::string::npos; begin = nl + 1) {
    out.push_back(json::parse(text.substr(begin, nl - begin)));
  }
  return out;
}

}  // namespace

TEST(Navigate, CorridorWalkthrough) {
  TempDir dir;
  Running srv(config_for(dir));
  auto [status, created] = srv.post("/api/sessions", {{"mode", "navigate"}, {"map_id", "corridor5"}});
  ASSERT_EQ(status, 201);
  const std::string id = created["session_id"];
  const json& p = created["payload"];
  EXPECT_EQ(p["window"].size(), 5u);
  EXPECT_EQ(p["window"][0].get<std::string>().size(), 5u);
  EXPECT_EQ(p["steps_taken"], 0);
  EXPECT_EQ(p["instruction"], std::string(kNavigateInstruction));

  const std::string act = "/api/sessions/" + id + "/actions";
  auto [s1, r1] = srv.post(act, {{"action", "RIGHT"}});
  ASSERT_EQ(s1, 200);
  EXPECT_EQ(r1["position"], (json{{"row", 1}, {"col", 2}}));
  EXPECT_EQ(r1["steps_taken"], 1);

  auto [s2, r2] = srv.post(act, {{"action", "UP"}});
  ASSERT_EQ(s2, 200);
  EXPECT_EQ(r2["position"], (json{{"row", 1}, {"col", 2}}));
  EXPECT_EQ(r2["steps_taken"], 2);

  EXPECT_EQ(srv.post(act, {{"action", "NORTH"}}).first, 422);

  json last;
  for (const char* a : {"RIGHT", "DOWN", "DOWN", "LEFT", "LEFT"}) {
    auto [s, r] = srv.post(act, {{"action", a}});
    ASSERT_EQ(s, 200);
    last = r;
  }
  EXPECT_TRUE(last["done"].get<bool>());
  EXPECT_TRUE(last["success"].get<bool>());
  EXPECT_EQ(last["path_length"], 7);
  EXPECT_EQ(srv.post(act, {{"action", "UP"}}).first, 409);
}

TEST(Navigate, OptimalPathLength) {
  TempDir dir;
  Running srv(config_for(dir));
  const std::string id = srv.create({{"mode", "navigate"}, {"map_id", "corridor5"}});
  json last;
  for (const char* a : {"RIGHT", "RIGHT", "DOWN", "DOWN", "LEFT", "LEFT"}) {
    last = srv.post("/api/sessions/" + id + "/actions", {{"action", a}}).second;
  }
  EXPECT_TRUE(last["done"].get<bool>());
  EXPECT_EQ(last["path_length"], 6);
}

TEST(Navigate, PayloadNeverLeaksUnrevealedCells) {
  TempDir dir;
  Running srv(config_for(dir));
  const auto m = wayfinder::test::fixture_map("spiral");
  const auto [status, created] = srv.post("/api/sessions", {{"mode", "navigate"}, {"map_id", m.id()}});
  ASSERT_EQ(status, 201);
  const json& p = created["payload"];
  EXPECT_FALSE(p.contains("map"));
  EXPECT_FALSE(p.contains("goal"));
  const auto& known = p["known"];
  ASSERT_EQ(known.size(), static_cast<std::size_t>(m.height()));
  for (int r = 0; r < m.height(); ++r) {
    const std::string row = known[r];
    for (int c = 0; c < m.width(); ++c) {
      const bool in_view = std::abs(r - m.start().row) <= 2 && std::abs(c - m.start().col) <= 2;
      if (!in_view) EXPECT_EQ(row[c], '?') << r << "," << c;
    }
  }
  const bool goal_in_view =
      std::abs(m.goal().row - m.start().row) <= 2 && std::abs(m.goal().col - m.start().col) <= 2;
  ASSERT_FALSE(goal_in_view);
  EXPECT_EQ(known.dump().find('G'), std::string::npos);
}

TEST(Navigate, BudgetExpires) {
  TempDir dir;
  auto config = config_for(dir);
  config.budget = 3;
  Running srv(config);
  const std::string id = srv.create({{"mode", "navigate"}, {"map_id", "corridor5"}});
  json last;
  for (int i = 0; i < 3; ++i) last = srv.post("/api/sessions/" + id + "/actions", {{"action", "UP"}}).second;
  EXPECT_TRUE(last["done"].get<bool>());
  EXPECT_FALSE(last["success"].get<bool>());
  EXPECT_EQ(last["expired"], "budget");
}

TEST(Explain, InstructionAndFullMap) {
  TempDir dir;
  Running srv(config_for(dir));
  const auto [status, created] = srv.post("/api/sessions", {{"mode", "explain"}, {"map_id", "open-room"}});
  ASSERT_EQ(status, 201);
  EXPECT_EQ(created["payload"]["instruction"], std::string(kExplainInstruction));
  EXPECT_TRUE(created["payload"].contains("map"));
}

TEST(Explain, TextValidation) {
  TempDir dir;
  Running srv(config_for(dir));
  auto path = [&](const std::string& id) { return "/api/sessions/" + id + "/explanation"; };

  const std::string a = srv.create({{"mode", "explain"}, {"map_id", "open-room"}});
  EXPECT_EQ(srv.post(path(a), {{"text", " \n\t "}}).first, 422);
  EXPECT_EQ(srv.post(path(a), {{"text", std::string(3000, 'x')}}).first, 413);
  EXPECT_EQ(srv.post(path(a), {{"text", 5}}).first, 422);
  const auto [status, reply] = srv.post(path(a), {{"text", "  go   down\n\ntwice  "}});
  ASSERT_EQ(status, 200);
  EXPECT_EQ(reply["payload"]["text"], "go down twice");
  EXPECT_EQ(srv.post(path(a), {{"text", "again"}}).first, 409);

  const std::string b = srv.create({{"mode", "explain"}, {"map_id", "open-room"}});
  EXPECT_EQ(srv.post(path(b), {{"text", std::string(2000, 'y')}}).first, 200);
}

TEST(Rate, ScoreBounds) {
  TempDir dir;
  Running srv(config_for(dir));
  auto rate = [&](const json& score) {
    const std::string id = srv.create({{"mode", "rate"}, {"map_id", "open-room"}, {"explanation_id", "or-02"}});
    return srv.post("/api/sessions/" + id + "/rating", {{"score", score}}).first;
  };
  EXPECT_EQ(rate(0), 200);
  EXPECT_EQ(rate(100), 200);
  EXPECT_EQ(rate(101), 422);
  EXPECT_EQ(rate(-1), 422);
  EXPECT_EQ(rate("50"), 422);
}

TEST(Rate, PayloadCarriesTheExplanation) {
  TempDir dir;
  Running srv(config_for(dir));
  const auto [status, created] =
      srv.post("/api/sessions", {{"mode", "rate"}, {"map_id", "open-room"}, {"explanation_id", "or-02"}});
  ASSERT_EQ(status, 201);
  const json& p = created["payload"];
  EXPECT_EQ(p["instruction"], std::string(kRateInstruction));
  EXPECT_EQ(p["explanation"]["text"], "the treasure is in the bottom right corner");
  EXPECT_EQ(p["scale"]["max"], 100);
}

TEST(Sessions, CreationErrors) {
  TempDir dir;
  Running srv(config_for(dir));
  EXPECT_EQ(srv.post("/api/sessions", {{"mode", "dance"}, {"map_id", "open-room"}}).first, 422);
  EXPECT_EQ(srv.post("/api/sessions", {{"mode", "navigate"}, {"map_id", "atlantis"}}).first, 404);
  EXPECT_EQ(srv.post("/api/sessions", {{"mode", "rate"}, {"map_id", "open-room"}}).first, 409);
  EXPECT_EQ(
      srv.post("/api/sessions", {{"mode", "rate"}, {"map_id", "open-room"}, {"explanation_id", "zz"}}).first,
      404);
  EXPECT_EQ(
      srv.post("/api/sessions", {{"mode", "navigate"}, {"map_id", "corridor5"}, {"explanation_id", "or-01"}})
          .first,
      409);
  auto res = srv.client().Post("/api/sessions", "{nope", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(srv.get("/api/sessions/0123abcd/view").first, 404);
}

TEST(Sessions, ModeMismatch) {
  TempDir dir;
  Running srv(config_for(dir));
  const std::string id = srv.create({{"mode", "explain"}, {"map_id", "open-room"}});
  EXPECT_EQ(srv.post("/api/sessions/" + id + "/actions", {{"action", "UP"}}).first, 409);
  EXPECT_EQ(srv.post("/api/sessions/" + id + "/rating", {{"score", 4}}).first, 409);
}

TEST(Sessions, IdempotencyKeyAppliesOnce) {
  TempDir dir;
  Running srv(config_for(dir));
  const std::string id = srv.create({{"mode", "navigate"}, {"map_id", "corridor5"}});
  const httplib::Headers key{{"Idempotency-Key", "k1"}};
  const auto first = srv.post("/api/sessions/" + id + "/actions", {{"action", "RIGHT"}}, key);
  const auto again = srv.post("/api/sessions/" + id + "/actions", {{"action", "RIGHT"}}, key);
  EXPECT_EQ(first.second, again.second);
  EXPECT_EQ(again.second["steps_taken"], 1);
  const auto other = srv.post("/api/sessions/" + id + "/actions", {{"action", "RIGHT"}},
                              {{"Idempotency-Key", "k2"}});
  EXPECT_EQ(other.second["steps_taken"], 2);
}

TEST(Sessions, ViewMatchesLastReply) {
  TempDir dir;
  Running srv(config_for(dir));
  const std::string id = srv.create({{"mode", "navigate"}, {"map_id", "corridor5"}});
  const auto reply = srv.post("/api/sessions/" + id + "/actions", {{"action", "RIGHT"}}).second;
  const auto [status, body] = srv.get("/api/sessions/" + id + "/view");
  ASSERT_EQ(status, 200);
  EXPECT_EQ(json::parse(body), reply);
}

TEST(Admin, TokenRequired) {
  TempDir dir;
  Running srv(config_for(dir));
  const std::string id = srv.create({{"mode", "navigate"}, {"map_id", "corridor5"}});
  EXPECT_EQ(srv.get("/api/export").first, 403);
  EXPECT_EQ(srv.get("/api/sessions/" + id).first, 403);
  EXPECT_EQ(srv.get("/api/export", {{"Authorization", "Bearer wrong"}}).first, 403);
  const auto [status, body] = srv.get("/api/sessions/" + id, admin());
  ASSERT_EQ(status, 200);
  const auto log = json::parse(body);
  EXPECT_EQ(log["events"][0]["kind"], "Observed");
}

TEST(Admin, EmptyTokenDisablesAdminRoutes) {
  TempDir dir;
  auto config = config_for(dir);
  config.admin_token.clear();
  Running srv(config);
  EXPECT_EQ(srv.get("/api/export", {{"Authorization", "Bearer "}}).first, 403);
}

TEST(Export, FiltersByMode) {
  TempDir dir;
  Running srv(config_for(dir));
  const std::string e = srv.create({{"mode", "explain"}, {"map_id", "open-room"}, {"participant", "p1"}});
  srv.post("/api/sessions/" + e + "/explanation", {{"text", "go down"}});
  const std::string r = srv.create({{"mode", "rate"}, {"map_id", "open-room"}, {"explanation_id", "or-01"}});
  srv.post("/api/sessions/" + r + "/rating", {{"score", 75}});
  const std::string n = srv.create({{"mode", "navigate"}, {"map_id", "corridor5"}, {"condition", "Good"}});
  for (const char* a : {"RIGHT", "RIGHT", "DOWN", "DOWN", "LEFT", "LEFT"}) {
    srv.post("/api/sessions/" + n + "/actions", {{"action", a}});
  }
  srv.create({{"mode", "navigate"}, {"map_id", "corridor5"}});

  const auto all = ndjson(srv.get("/api/export", admin()).second);
  EXPECT_EQ(all.size(), 3u);

  const auto explains = ndjson(srv.get("/api/export?mode=explain", admin()).second);
  ASSERT_EQ(explains.size(), 1u);
  EXPECT_EQ(explains[0]["text"], "go down");
  EXPECT_EQ(explains[0]["participant"], "p1");

  const auto rates = ndjson(srv.get("/api/export?mode=rate", admin()).second);
  ASSERT_EQ(rates.size(), 1u);
  EXPECT_EQ(rates[0]["rating"], 75.0);
  EXPECT_EQ(rates[0]["explanation_id"], "or-01");

  const auto navs = ndjson(srv.get("/api/export?mode=navigate", admin()).second);
  ASSERT_EQ(navs.size(), 1u);
  EXPECT_EQ(navs[0]["path_length"], 6);
  EXPECT_EQ(navs[0]["condition"], "Good");

  EXPECT_EQ(srv.get("/api/export?mode=juggle", admin()).first, 422);
}

TEST(Counterbalance, RotatesConditions) {
  TempDir dir;
  write_file_atomic(dir.str("bins.csv"),
                    "map_id,bin,selected_explanation_id,size,members\n"
                    "open-room,Bad,or-03,1,or-03\n"
                    "open-room,Medium,or-02,1,or-02\n"
                    "open-room,Good,or-01,1,or-01\n");
  auto config = config_for(dir);
  config.bins_path = dir.str("bins.csv");
  SessionManager m(config);
  std::vector<std::string> got;
  for (int i = 0; i < 4; ++i) {
    const auto r = m.create({{"mode", "navigate"}, {"map_id", "open-room"}, {"participant", "p"},
                             {"counterbalance", true}});
    got.push_back(r["payload"]["explanation"]["id"]);
  }
  EXPECT_EQ(got, (std::vector<std::string>{"or-01", "or-02", "or-03", "or-01"}));
  const auto other = m.create({{"mode", "navigate"}, {"map_id", "open-room"}, {"participant", "q"},
                               {"counterbalance", true}});
  EXPECT_EQ(other["payload"]["explanation"]["id"], "or-01");
}

TEST(Store, RestoreAfterRestart) {
  TempDir dir;
  std::string id;
  {
    SessionManager m(config_for(dir));
    id = m.create({{"mode", "navigate"}, {"map_id", "corridor5"}})["session_id"];
    m.act(id, "RIGHT");
    m.act(id, "RIGHT");
  }
  SessionManager again(config_for(dir));
  const auto v = again.view(id);
  EXPECT_EQ(v["position"], (json{{"row", 1}, {"col", 3}}));
  EXPECT_EQ(v["steps_taken"], 2);
  EXPECT_EQ(again.act(id, "DOWN")["steps_taken"], 3);
}

TEST(Store, TornTailIsCutOff) {
  TempDir dir;
  std::string id;
  {
    SessionManager m(config_for(dir));
    id = m.create({{"mode", "navigate"}, {"map_id", "corridor5"}})["session_id"];
    m.act(id, "RIGHT");
  }
  const std::string path = dir.str("store/" + id + ".jsonl");
  const std::string intact = read_file(path);
  write_file_atomic(path, intact + "{\"seq\":3,\"kind\":\"Act");

  EventStore store(dir.str("store"));
  const auto log = store.load(id);
  EXPECT_EQ(log.events.size(), 3u);
  EXPECT_EQ(read_file(path), intact);

  SessionManager m(config_for(dir));
  EXPECT_EQ(m.view(id)["steps_taken"], 1);
}

TEST(Store, CorruptMiddleLineIsAnError) {
  TempDir dir;
  EventStore store(dir.str("store"));
  store.create("ab", {{"type", "session"}});
  write_file_atomic(dir.str("store/ab.jsonl"), "{\"type\":\"session\"}\n{broken\n{\"x\":1}\n");
  EXPECT_THROW(store.load("ab"), Error);
}

TEST(Expiry, IdleSessionsExpire) {
  TempDir dir;
  auto now = std::chrono::system_clock::time_point(std::chrono::hours(1000));
  auto config = config_for(dir);
  config.idle_timeout = std::chrono::seconds(60);
  SessionManager m(config, [&] { return now; });
  const std::string a = m.create({{"mode", "navigate"}, {"map_id", "corridor5"}})["session_id"];
  now += std::chrono::seconds(30);
  const std::string b = m.create({{"mode", "explain"}, {"map_id", "open-room"}})["session_id"];
  now += std::chrono::seconds(45);
  EXPECT_EQ(m.expire_idle(), 1);
  EXPECT_EQ(m.view(a)["expired"], "idle");
  EXPECT_FALSE(m.view(b)["closed"].get<bool>());
  EXPECT_EQ(m.expire_idle(), 0);

  now += std::chrono::seconds(61);
  try {
    m.explain(b, "late");
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status, 409);
  }
}

TEST(Text, Normalization) {
  EXPECT_EQ(normalize_whitespace("  a \t b\n\nc  "), "a b c");
  EXPECT_EQ(normalize_whitespace(""), "");
  EXPECT_EQ(utf8_length("h\xc3\xa9llo"), 5u);
}
