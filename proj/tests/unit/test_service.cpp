#include <algorithm>
#include <set>
#include <thread>

#include "bslab/common/error.hpp"
#include "bslab/server/client.hpp"
#include "bslab/server/service.hpp"
#include "bslab/server/store.hpp"
#include "doctest.h"
#include "support/registry_fixture.hpp"
#include "support/tempdir.hpp"

using namespace bslab;
using namespace bslab::server;
using nlohmann::json;

namespace {

ServiceOptions fast_options(const std::filesystem::path& store) {
  ServiceOptions o;
  o.port = 0;
  o.store_dir = store;
  o.threads = 2;
  o.session.tick_ms = 2;
  o.session.control_round_seconds = 0.02;   // 10 steps
  o.session.pairwise_round_seconds = 0.01;  // 5 steps
  return o;
}

std::string create(unsigned short port, const std::string& protocol, std::uint64_t seed) {
  const auto res = http_request("127.0.0.1", port, "POST", "/api/sessions",
                                json{{"protocol", protocol}, {"participant_id", "p"}, {"seed", seed}}.dump());
  REQUIRE(res.status == 201);
  return json::parse(res.body).at("session_id").get<std::string>();
}

std::vector<json> session_events(const std::filesystem::path& store, const std::string& id) {
  return read_events(store / (id + ".jsonl"));
}

int count(const std::vector<json>& events, const std::string& name) {
  return static_cast<int>(std::count_if(events.begin(), events.end(), [&](const json& e) { return e["event"] == name; }));
}

}  // namespace

TEST_CASE("health, routing and error statuses") {
  testsupport::TempDir store("svc_routes");
  Service svc(testsupport::tiny_registry(), fast_options(store.path()));
  const auto port = svc.start();
  const auto health = http_request("127.0.0.1", port, "GET", "/api/health");
  CHECK(health.status == 200);
  CHECK(json::parse(health.body)["registry"].size() == 10);
  CHECK(http_request("127.0.0.1", port, "GET", "/api/sessions/nope").status == 404);
  CHECK(http_request("127.0.0.1", port, "GET", "/nowhere").status == 404);
  CHECK(http_request("127.0.0.1", port, "POST", "/api/sessions", "{").status == 400);
  CHECK(http_request("127.0.0.1", port, "POST", "/api/sessions", R"({"participant_id":"p"})").status == 400);
  CHECK(http_request("127.0.0.1", port, "POST", "/api/sessions", R"({"protocol":"Solo","participant_id":"p"})")
            .status == 400);
  const auto csv = http_request("127.0.0.1", port, "GET", "/api/export/rounds.csv");
  CHECK(csv.status == 200);
  CHECK(csv.body == std::string(kRoundsHeader) + "\n");
  const auto id = create(port, "ControlStudy", 1);
  const auto status = http_request("127.0.0.1", port, "GET", "/api/sessions/" + id);
  CHECK(status.status == 200);
  CHECK(json::parse(status.body)["phase"] == "AwaitJoin");
  CHECK(json::parse(status.body)["round_count"] == 20);
}

TEST_CASE("a busy port and missing checkpoints are reported at start") {
  testsupport::TempDir store("svc_busy");
  Service first(testsupport::tiny_registry(), fast_options(store.path()));
  const auto port = first.start();
  auto opts = fast_options(store.path());
  opts.port = port;
  Service second(testsupport::tiny_registry(), opts);
  CHECK_THROWS_AS(second.start(), ConfigError);

  Service empty(std::make_shared<const Registry>(), fast_options(store.path()));
  CHECK_THROWS_AS(empty.start(), ConfigError);
}

TEST_CASE("pairwise sessions need SP checkpoints") {
  testsupport::TempDir store("svc_bs_only");
  std::vector<RegistryEntry> entries;
  for (const auto& layout : env::standard_layout_names()) {
    entries.push_back({layout, std::make_shared<const policy::Checkpoint>(testsupport::tiny_checkpoint(layout, "BS", 1))});
  }
  Service svc(std::make_shared<const Registry>(std::move(entries)), fast_options(store.path()));
  const auto port = svc.start();
  const auto res = http_request("127.0.0.1", port, "POST", "/api/sessions",
                                R"({"protocol":"Pairwise","participant_id":"p","seed":1})");
  CHECK(res.status == 409);
  CHECK(res.body.find("SP") != std::string::npos);
  CHECK(http_request("127.0.0.1", port, "POST", "/api/sessions",
                     R"({"protocol":"ControlStudy","participant_id":"p","seed":1})")
            .status == 201);
}

TEST_CASE("scripted clients complete both protocols over the wire") {
  testsupport::TempDir store("svc_flow");
  Service svc(testsupport::tiny_registry(), fast_options(store.path()));
  const auto port = svc.start();

  const auto control = create(port, "ControlStudy", 2);
  const auto pairwise = create(port, "Pairwise", 3);
  {
    WsClient client("127.0.0.1", port);
    ScriptedParticipant bot(10);
    REQUIRE(drive_over_websocket(client, control, bot));
    CHECK(bot.errors() == 0);
  }
  {
    WsClient client("127.0.0.1", port);
    ScriptedParticipant bot(11);
    REQUIRE(drive_over_websocket(client, pairwise, bot));
    CHECK(bot.errors() == 0);
  }
  const auto c = session_events(store.path(), control);
  CHECK(count(c, "round_end") == 20);
  CHECK(count(c, "survey") == 20);
  CHECK(count(c, "choice") == 2);
  const auto p = session_events(store.path(), pairwise);
  CHECK(count(p, "round_end") == 10);
  CHECK(count(p, "preference") == 5);

  const auto status = json::parse(http_request("127.0.0.1", port, "GET", "/api/sessions/" + control).body);
  CHECK(status["phase"] == "Done");
  const auto csv = http_request("127.0.0.1", port, "GET", "/api/export/rounds.csv").body;
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 20 + 10);
  const auto jsonl = http_request("127.0.0.1", port, "GET", "/api/export/sessions.jsonl").body;
  CHECK(static_cast<std::size_t>(std::count(jsonl.begin(), jsonl.end(), '\n')) == c.size() + p.size());
  for (const auto& r : replay_events(c, false)) CHECK(r.replayed_score == r.logged_score);
}

TEST_CASE("ticks run at the configured rate") {
  testsupport::TempDir store("svc_rate");
  auto opts = fast_options(store.path());
  opts.session.tick_ms = 20;
  opts.session.pairwise_round_seconds = 0.4;  // 20 steps
  Service svc(testsupport::tiny_registry(), opts);
  const auto port = svc.start();
  const auto id = create(port, "Pairwise", 4);
  WsClient client("127.0.0.1", port);
  client.send({{"type", "join"}, {"session_id", id}});
  CHECK(client.receive()->at("type") == "round_intro");
  client.send({{"type", "ready"}});
  int states = 0;
  while (true) {
    const auto m = client.receive();
    REQUIRE(m);
    if (m->at("type") == "state") ++states;
    if (m->at("type") == "round_end") break;
  }
  CHECK(states == 21);  // initial state plus one per tick
  const auto events = session_events(store.path(), id);
  const auto& end = events.back();
  REQUIRE(end["event"] == "round_end");
  const auto& ticks = end["tick_ms"];
  REQUIRE(ticks.size() == 20);
  const double elapsed = ticks.back().get<double>();
  CHECK(elapsed >= 20 * 20 * 0.9);
  CHECK(elapsed <= 20 * 20 * 3.0);
}

TEST_CASE("hidden rounds leak no weights on the wire") {
  testsupport::TempDir store("svc_hidden");
  Service svc(testsupport::tiny_registry(), fast_options(store.path()));
  const auto port = svc.start();
  const auto id = create(port, "ControlStudy", 5);
  WsClient client("127.0.0.1", port);
  ScriptedParticipant bot(12);
  REQUIRE(drive_over_websocket(client, id, bot));
  std::set<int> hidden;
  for (const auto& e : session_events(store.path(), id)) {
    if (e["event"] == "round_end" && !e["spec"]["settings_visible"].get<bool>()) hidden.insert(e["round"].get<int>());
  }
  REQUIRE(hidden.size() >= 6);
  int checked = 0;
  for (const auto& frame : client.frames()) {
    const auto m = json::parse(frame);
    if (!m.contains("round") || !hidden.count(m["round"].get<int>())) continue;
    ++checked;
    if (m["type"] == "state") {
      CHECK(frame.find("\"omega\"") == std::string::npos);
      CHECK_FALSE(m.contains("settings"));
      CHECK_FALSE(m.contains("visible_settings"));
      continue;
    }
    for (const char* leak : {"omega", "dishes", "onions", "visible_settings"}) {
      CAPTURE(frame);
      CHECK(frame.find(leak) == std::string::npos);
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("dropping the socket abandons the round and the session resumes") {
  testsupport::TempDir store("svc_resume");
  auto opts = fast_options(store.path());
  opts.session.tick_ms = 5;
  opts.session.pairwise_round_seconds = 0.25;  // 50 steps
  Service svc(testsupport::tiny_registry(), opts);
  const auto port = svc.start();
  const auto id = create(port, "Pairwise", 6);
  {
    WsClient client("127.0.0.1", port);
    client.send({{"type", "join"}, {"session_id", id}});
    client.receive();
    client.send({{"type", "ready"}});
    for (int i = 0; i < 5; ++i) client.receive();
  }
  for (int i = 0; i < 200; ++i) {
    const auto s = json::parse(http_request("127.0.0.1", port, "GET", "/api/sessions/" + id).body);
    if (s["phase"] == "Intro") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  CHECK(json::parse(http_request("127.0.0.1", port, "GET", "/api/sessions/" + id).body)["phase"] == "Intro");
  WsClient client("127.0.0.1", port);
  ScriptedParticipant bot(13);
  REQUIRE(drive_over_websocket(client, id, bot));
  const auto events = session_events(store.path(), id);
  CHECK(count(events, "round_abandoned") == 1);
  CHECK(count(events, "round_end") == 10);
}

TEST_CASE("stop records in-progress rounds as abandoned") {
  testsupport::TempDir store("svc_stop");
  auto opts = fast_options(store.path());
  opts.session.tick_ms = 50;
  opts.session.pairwise_round_seconds = 10.0;
  opts.drain_seconds = 0.5;
  Service svc(testsupport::tiny_registry(), opts);
  const auto port = svc.start();
  const auto id = create(port, "Pairwise", 7);
  WsClient client("127.0.0.1", port);
  client.send({{"type", "join"}, {"session_id", id}});
  client.receive();
  client.send({{"type", "ready"}});
  client.receive();
  svc.stop();
  CHECK(count(session_events(store.path(), id), "round_abandoned") == 1);
  CHECK(count(session_events(store.path(), id), "round_end") == 0);
}
