#include "uam/bridge.hpp"

#include "uam/scenario.hpp"

#include <httplib.h>

#include <chrono>

namespace uam {

bool is_bridge_kind(const std::string& kind) {
  return kind == "telemetry" || kind == "command" || kind == "command_ack" || kind == "error";
}

Json bridge_frame(const std::string& kind, std::uint64_t seq, Json payload) {
  Json j;
  j["schema"] = kBridgeSchema;
  j["version"] = kBridgeVersion;
  j["kind"] = kind;
  j["seq"] = seq;
  j["payload"] = std::move(payload);
  return j;
}

BridgeMessage parse_bridge_message(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error&) {
    throw BridgeError("frame is not valid JSON", std::nullopt);
  }
  if (!j.is_object()) throw BridgeError("frame must be a JSON object", std::nullopt);

  std::optional<std::uint64_t> ref;
  if (j.contains("seq") && j["seq"].is_number_unsigned()) ref = j["seq"].get<std::uint64_t>();

  for (const auto& [k, v] : j.items()) {
    if (k != "schema" && k != "version" && k != "kind" && k != "seq" && k != "payload" && k != "client") {
      throw BridgeError("unknown frame field '" + k + "'", ref);
    }
  }
  if (!j.contains("schema") || j["schema"] != kBridgeSchema) throw BridgeError("schema must be \"uam.bridge\"", ref);
  if (!j.contains("version") || j["version"] != kBridgeVersion) throw BridgeError("unsupported version", ref);
  if (!j.contains("kind") || !j["kind"].is_string()) throw BridgeError("missing kind", ref);
  if (!ref) throw BridgeError("seq must be a non-negative integer", std::nullopt);

  BridgeMessage m;
  m.kind = j["kind"].get<std::string>();
  if (!is_bridge_kind(m.kind)) throw BridgeError("unknown kind '" + m.kind + "'", ref);
  m.seq = *ref;
  if (j.contains("client")) {
    if (!j["client"].is_string()) throw BridgeError("client must be a string", ref);
    m.client = j["client"].get<std::string>();
  }
  if (!j.contains("payload") || !j["payload"].is_object()) throw BridgeError("payload must be an object", ref);
  m.payload = j["payload"];
  return m;
}

OperatorCommand bridge_command(const BridgeMessage& m) {
  if (m.kind != "command") throw BridgeError("clients may only send kind \"command\"", m.seq);
  try {
    return command_from_json(m.payload, false);
  } catch (const ConfigError& e) {
    throw BridgeError(e.what(), m.seq);
  }
}

void TelemetryQueue::push(std::shared_ptr<const Json> frame) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    frames_.push_back(std::move(frame));
    while (frames_.size() > depth_) {
      frames_.pop_front();
      ++dropped_;
    }
  }
  cv_.notify_one();
}

std::optional<TelemetryQueue::Item> TelemetryQueue::pop(std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, wait, [&] { return closed_ || !frames_.empty(); });
  if (closed_ || frames_.empty()) return std::nullopt;
  Item item{frames_.front(), dropped_};
  frames_.pop_front();
  dropped_ = 0;
  return item;
}

void TelemetryQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool TelemetryQueue::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::size_t TelemetryQueue::size() const {
  std::lock_guard lock(mu_);
  return frames_.size();
}

std::string telemetry_text(const TelemetryQueue::Item& item) {
  if (item.gap == 0) return item.frame->dump();
  Json copy = *item.frame;
  copy["gap"] = item.gap;
  return copy.dump();
}

BridgeServer::BridgeServer(BridgeSettings settings) : settings_(settings) {}

BridgeServer::~BridgeServer() { stop(); }

bool BridgeServer::running() const { return server_ && server_->is_running(); }

std::size_t BridgeServer::clients() const {
  std::lock_guard lock(clients_mu_);
  return clients_.size();
}

Json BridgeServer::error_frame(const std::string& message, std::optional<std::uint64_t> ref) {
  Json p;
  p["ref"] = ref ? Json(*ref) : Json(nullptr);
  p["message"] = message;
  return bridge_frame("error", ++reply_seq_, std::move(p));
}

std::shared_ptr<TelemetryQueue> BridgeServer::attach() {
  auto c = std::make_shared<TelemetryQueue>(static_cast<std::size_t>(settings_.queue_depth));
  std::lock_guard lock(clients_mu_);
  clients_.push_back(c);
  return c;
}

void BridgeServer::detach(const std::shared_ptr<TelemetryQueue>& c) {
  std::lock_guard lock(clients_mu_);
  std::erase(clients_, c);
}

int BridgeServer::start(const std::string& host, int port) {
  if (server_) throw std::logic_error("bridge already started");
  server_ = std::make_unique<httplib::Server>();
  stopping_ = false;

  server_->Get("/v1/status", [this](const httplib::Request&, httplib::Response& res) {
    Json j;
    j["schema"] = kBridgeSchema;
    j["version"] = kBridgeVersion;
    j["clients"] = clients();
    j["telemetry_seq"] = telemetry_seq();
    j["port"] = port_;
    res.set_content(j.dump(), "application/json");
  });

  server_->Post("/v1/command", [this](const httplib::Request& req, httplib::Response& res) {
    auto [status, frame] = submit(req.body);
    res.status = status;
    res.set_content(frame.dump(), "application/json");
  });

  server_->Get("/v1/telemetry", [this](const httplib::Request&, httplib::Response& res) {
    auto client = attach();
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, client](std::size_t, httplib::DataSink& sink) {
          if (client->closed() || stopping_) {
            sink.done();
            return true;
          }
          const auto item = client->pop(std::chrono::milliseconds(200));
          if (!item) {
            if (client->closed()) {
              sink.done();
              return true;
            }
            // keeps the connection probed so a vanished client is noticed
            static const std::string ping = ": ping\n\n";
            return sink.write(ping.data(), ping.size());
          }
          const std::string line = "data: " + telemetry_text(*item) + "\n\n";
          return sink.write(line.data(), line.size());
        },
        [this, client](bool) { detach(client); });
  });

  const int want = port < 0 ? settings_.port : port;
  if (want == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, want) ? want : -1;
  }
  if (port_ < 0) {
    server_.reset();
    throw std::runtime_error("bridge: cannot bind " + host + ":" + std::to_string(want));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void BridgeServer::stop() {
  if (!server_) return;
  stopping_ = true;
  {
    std::lock_guard lock(clients_mu_);
    for (auto& c : clients_) c->close();
  }
  {
    // unblock waiting command handlers
    std::lock_guard lock(cmd_mu_);
    for (auto& p : commands_) {
      if (!p->cancelled) {
        p->cancelled = true;
        p->result.set_exception(std::make_exception_ptr(std::runtime_error("bridge stopping")));
      }
    }
    commands_.clear();
  }
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

std::pair<int, Json> BridgeServer::submit(const std::string& body) {
  BridgeMessage m;
  OperatorCommand cmd;
  try {
    m = parse_bridge_message(body);
    cmd = bridge_command(m);
  } catch (const BridgeError& e) {
    return {400, error_frame(e.what(), e.ref)};
  }

  auto pending = std::make_shared<Pending>();
  pending->cmd = cmd;
  pending->ref = m.seq;
  std::future<CommandResult> fut = pending->result.get_future();
  {
    std::lock_guard lock(cmd_mu_);
    if (stopping_) return {503, error_frame("bridge stopping", m.seq)};
    auto [it, fresh] = last_seq_.try_emplace(m.client, m.seq);
    if (!fresh) {
      if (m.seq <= it->second) return {400, error_frame("seq must increase per client", m.seq)};
      it->second = m.seq;
    }
    if (commands_.size() >= static_cast<std::size_t>(settings_.queue_depth)) {
      return {503, error_frame("command queue full", m.seq)};
    }
    commands_.push_back(pending);
  }

  const auto timeout = std::chrono::duration<double>(settings_.command_timeout);
  if (fut.wait_for(timeout) != std::future_status::ready) {
    std::lock_guard lock(cmd_mu_);
    if (!pending->cancelled && fut.wait_for(std::chrono::seconds(0)) != std::future_status::ready) {
      pending->cancelled = true;
      std::erase(commands_, pending);
      return {503, error_frame("timed out waiting for the simulation", m.seq)};
    }
  }
  try {
    const CommandResult r = fut.get();
    Json p;
    p["ref"] = m.seq;
    p["accepted"] = r.accepted;
    p["reason"] = r.reason;
    p["phase"] = to_string(r.phase);
    return {200, bridge_frame("command_ack", ++reply_seq_, std::move(p))};
  } catch (const std::exception& e) {
    return {503, error_frame(e.what(), m.seq)};
  }
}

void BridgeServer::service(Simulation& sim) {
  std::deque<std::shared_ptr<Pending>> batch;
  {
    std::lock_guard lock(cmd_mu_);
    batch.swap(commands_);
  }
  for (auto& p : batch) {
    // claim under the lock so a concurrent timeout cannot also answer it
    {
      std::lock_guard lock(cmd_mu_);
      if (p->cancelled) continue;
      p->cancelled = true;
    }
    p->result.set_value(sim.apply(p->cmd));
  }
}

void BridgeServer::publish(const TelemetryRecord& r) {
  auto frame = std::make_shared<const Json>(bridge_frame("telemetry", ++telemetry_seq_, record_to_json(r)));
  std::lock_guard lock(clients_mu_);
  for (auto& c : clients_) c->push(frame);
}

}  // namespace uam
