#include <doctest.h>

#include "uam/bridge.hpp"
#include "uam/scenario.hpp"

#include <httplib.h>

#include <thread>

using namespace uam;

namespace {

std::string command_frame(std::uint64_t seq, const Json& payload, const std::string& client = "") {
  Json j = bridge_frame("command", seq, payload);
  if (!client.empty()) j["client"] = client;
  return j.dump();
}

// Runs the closed loop on its own thread, a few times faster than real time.
class LiveLoop {
 public:
  LiveLoop(BridgeServer& bridge, const ExperimentConfig& cfg) : bridge_(bridge), sim_(cfg) {
    every_ = static_cast<std::uint64_t>(cfg.bridge_every());
  }
  ~LiveLoop() { stop(); }

  void start() {
    thread_ = std::thread([this] {
      std::size_t cursor = 0;
      while (!stop_) {
        if (sim_.at_control_boundary()) {
          bridge_.service(sim_);
          std::this_thread::sleep_for(std::chrono::microseconds(500));
        }
        sim_.step();
        if (sim_.steps() % every_ == 0) {
          TelemetryRecord r = sim_.snapshot();
          r.events = sim_.events_since(cursor);
          bridge_.publish(r);
        }
      }
    });
  }
  void stop() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }

 private:
  BridgeServer& bridge_;
  Simulation sim_;
  std::uint64_t every_ = 50;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

// Collects SSE telemetry frames until `enough` says stop.
std::vector<Json> read_stream(int port, const std::function<bool(const std::vector<Json>&)>& enough) {
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(5, 0);
  std::vector<Json> frames;
  std::string buf;
  cli.Get("/v1/telemetry", [&](const char* data, std::size_t len) {
    buf.append(data, len);
    std::size_t end;
    while ((end = buf.find("\n\n")) != std::string::npos) {
      const std::string event = buf.substr(0, end);
      buf.erase(0, end + 2);
      if (event.rfind("data: ", 0) == 0) frames.push_back(Json::parse(event.substr(6)));
    }
    return !enough(frames);
  });
  return frames;
}

void wait_for_clients(const BridgeServer& b, std::size_t n) {
  for (int k = 0; k < 500 && b.clients() < n; ++k) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  REQUIRE(b.clients() >= n);
}

}  // namespace

TEST_CASE("frames are parsed and checked") {
  const BridgeMessage m = parse_bridge_message(command_frame(4, {{"cmd", "abort"}}, "console"));
  CHECK(m.kind == "command");
  CHECK(m.seq == 4);
  CHECK(m.client == "console");
  CHECK(bridge_command(m).kind == CommandKind::Abort);

  auto error_ref = [](const std::string& text) -> std::optional<std::uint64_t> {
    try {
      bridge_command(parse_bridge_message(text));
    } catch (const BridgeError& e) {
      return e.ref ? e.ref : std::optional<std::uint64_t>(0);
    }
    FAIL("expected BridgeError");
    return std::nullopt;
  };
  CHECK(error_ref("{not json") == 0u);
  CHECK(error_ref("[1,2]") == 0u);
  Json unknown = bridge_frame("subscribe", 7, Json::object());
  CHECK(error_ref(unknown.dump()) == 7u);
  Json wrong_dir = bridge_frame("telemetry", 8, Json::object());
  CHECK(error_ref(wrong_dir.dump()) == 8u);
  CHECK(error_ref(command_frame(9, {{"cmd", "warp"}})) == 9u);
  Json no_schema = Json::parse(command_frame(10, {{"cmd", "abort"}}));
  no_schema.erase("schema");
  CHECK(error_ref(no_schema.dump()) == 10u);
  Json v2 = Json::parse(command_frame(11, {{"cmd", "abort"}}));
  v2["version"] = 2;
  CHECK(error_ref(v2.dump()) == 11u);
  Json neg = Json::parse(command_frame(1, {{"cmd", "abort"}}));
  neg["seq"] = -1;
  CHECK(error_ref(neg.dump()) == 0u);
}

TEST_CASE("telemetry queue drops the oldest frame and reports the gap") {
  TelemetryQueue q(3);
  for (int k = 1; k <= 5; ++k) q.push(std::make_shared<const Json>(bridge_frame("telemetry", k, Json::object())));
  CHECK(q.size() == 3);
  auto a = q.pop(std::chrono::milliseconds(0));
  REQUIRE(a);
  CHECK((*a->frame)["seq"] == 3);
  CHECK(a->gap == 2);
  CHECK(Json::parse(telemetry_text(*a))["gap"] == 2);
  auto b = q.pop(std::chrono::milliseconds(0));
  REQUIRE(b);
  CHECK(b->gap == 0);
  CHECK_FALSE(Json::parse(telemetry_text(*b)).contains("gap"));
  q.pop(std::chrono::milliseconds(0));
  CHECK_FALSE(q.pop(std::chrono::milliseconds(1)));
  q.close();
  q.push(std::make_shared<const Json>(Json::object()));
  CHECK(q.size() == 0);
}

TEST_CASE("commands are acknowledged by seq; bad frames get an error frame") {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  BridgeServer bridge(cfg.bridge);
  const int port = bridge.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  LiveLoop loop(bridge, cfg);
  loop.start();

  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/v1/command", command_frame(1, {{"cmd", "trigger_next_phase"}}), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  Json ack = Json::parse(res->body);
  CHECK(ack["kind"] == "command_ack");
  CHECK(ack["payload"]["ref"] == 1);
  CHECK(ack["payload"]["accepted"] == true);
  CHECK(ack["payload"]["phase"] == "APPROACH");

  // the mission's own rule comes back as a rejection with its reason
  res = cli.Post("/v1/command", command_frame(2, {{"cmd", "land"}}), "application/json");
  REQUIRE(res);
  ack = Json::parse(res->body);
  CHECK(ack["payload"]["accepted"] == false);
  CHECK(ack["payload"]["reason"] == "land only from HOME");
  CHECK(ack["seq"].get<std::uint64_t>() > 1);

  res = cli.Post("/v1/command", "{\"kind\": ", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(Json::parse(res->body)["kind"] == "error");

  res = cli.Post("/v1/command", bridge_frame("hello", 3, Json::object()).dump(), "application/json");
  REQUIRE(res);
  const Json err = Json::parse(res->body);
  CHECK(err["kind"] == "error");
  CHECK(err["payload"]["ref"] == 3);

  // replayed seq from the same client
  res = cli.Post("/v1/command", command_frame(2, {{"cmd", "abort"}}), "application/json");
  REQUIRE(res);
  CHECK(Json::parse(res->body)["payload"]["message"] == "seq must increase per client");

  // the stream still flows after the errors and shows the new phase
  const auto frames = read_stream(port, [](const std::vector<Json>& f) { return f.size() >= 5; });
  REQUIRE(frames.size() >= 5);
  CHECK(frames.back()["payload"]["phase"] == "APPROACH");
  for (std::size_t i = 1; i < frames.size(); ++i) {
    CHECK(frames[i]["seq"].get<std::uint64_t>() > frames[i - 1]["seq"].get<std::uint64_t>());
  }

  auto status = cli.Get("/v1/status");
  REQUIRE(status);
  CHECK(Json::parse(status->body)["schema"] == "uam.bridge");

  loop.stop();
  bridge.stop();
}

TEST_CASE("two clients receive identical telemetry seq streams") {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  BridgeServer bridge(cfg.bridge);
  const int port = bridge.start("127.0.0.1", 0);
  std::vector<Json> a;
  std::vector<Json> b;
  auto want = [](const std::vector<Json>& f) { return f.size() >= 30; };
  std::thread ta([&] { a = read_stream(port, want); });
  std::thread tb([&] { b = read_stream(port, want); });
  wait_for_clients(bridge, 2);

  LiveLoop loop(bridge, cfg);
  loop.start();
  ta.join();
  tb.join();
  loop.stop();
  bridge.stop();

  REQUIRE(a.size() >= 30);
  REQUIRE(b.size() >= 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(a[i]["seq"] == b[i]["seq"]);
    CHECK(a[i]["payload"]["t"] == b[i]["payload"]["t"]);
    CHECK(a[i]["seq"] == i + 1);
  }
}

TEST_CASE("a command that is never serviced times out with an error frame") {
  BridgeSettings s;
  s.command_timeout = 0.05;
  BridgeServer bridge(s);
  const auto [status, frame] = bridge.submit(command_frame(1, {{"cmd", "abort"}}));
  CHECK(status == 503);
  CHECK(frame["kind"] == "error");
  CHECK(frame["payload"]["ref"] == 1);
}
