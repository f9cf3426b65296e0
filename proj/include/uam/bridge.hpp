#pragma once

#include "uam/config.hpp"
#include "uam/mission.hpp"
#include "uam/telemetry.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace uam {

class Simulation;

inline constexpr const char* kBridgeSchema = "uam.bridge";
inline constexpr int kBridgeVersion = 1;

/// Frame on the wire:
/// {"schema":"uam.bridge","version":1,"kind":...,"seq":N,"payload":{...}}
/// Clients may add "client":"<id>"; command seq must increase per client id.
struct BridgeMessage {
  std::string kind;  // telemetry | command | command_ack | error
  std::uint64_t seq = 0;
  std::string client;
  Json payload;
};

struct BridgeError : std::runtime_error {
  BridgeError(const std::string& what, std::optional<std::uint64_t> ref_seq)
      : std::runtime_error(what), ref(ref_seq) {}
  std::optional<std::uint64_t> ref;
};

bool is_bridge_kind(const std::string& kind);

Json bridge_frame(const std::string& kind, std::uint64_t seq, Json payload);

/// Parses and checks an inbound frame; throws BridgeError for malformed text,
/// wrong schema/version, unknown kind or a missing field.
BridgeMessage parse_bridge_message(const std::string& text);

/// Command payload -> operator command. Throws BridgeError (with ref) on a bad payload.
OperatorCommand bridge_command(const BridgeMessage& m);

/// Bounded per-client frame queue. A full queue drops its oldest frame; the
/// next frame handed out carries the number dropped since the last one.
class TelemetryQueue {
 public:
  explicit TelemetryQueue(std::size_t depth) : depth_(depth < 1 ? 1 : depth) {}

  struct Item {
    std::shared_ptr<const Json> frame;
    std::uint64_t gap = 0;
  };

  /// Never blocks on the consumer.
  void push(std::shared_ptr<const Json> frame);
  /// Waits up to `wait` for a frame; empty on timeout or once closed.
  std::optional<Item> pop(std::chrono::milliseconds wait);
  void close();
  bool closed() const;
  std::size_t size() const;

 private:
  std::size_t depth_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::shared_ptr<const Json>> frames_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

/// Telemetry frame text as sent to one client, with "gap" added after drops.
std::string telemetry_text(const TelemetryQueue::Item& item);

/// Live endpoint over HTTP:
///   GET  /v1/telemetry  text/event-stream, one telemetry frame per SSE "data:" line
///   POST /v1/command    body: command frame; reply: command_ack or error frame
///   GET  /v1/status     {"schema","version","clients","telemetry_seq","port"}
/// Network threads only touch the two queues; the simulation thread calls
/// service() at control boundaries and publish() at the bridge rate.
class BridgeServer {
 public:
  explicit BridgeServer(BridgeSettings settings);
  ~BridgeServer();
  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  /// Binds and starts serving on a background thread. port 0 picks a free
  /// port; a negative port uses the configured one. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = -1);
  void stop();
  int port() const { return port_; }
  bool running() const;

  /// Simulation side: applies queued commands in arrival order.
  void service(Simulation& sim);
  /// Simulation side: broadcasts one telemetry frame to every client.
  /// Never blocks; a full client queue drops its oldest frame.
  void publish(const TelemetryRecord& r);

  /// Handles one command frame; blocks until the simulation applies it or
  /// the command timeout expires. Returns the reply frame and an HTTP status.
  std::pair<int, Json> submit(const std::string& body);

  std::size_t clients() const;
  std::uint64_t telemetry_seq() const { return telemetry_seq_.load(); }

 private:
  struct Pending {
    OperatorCommand cmd;
    std::uint64_t ref = 0;
    std::promise<CommandResult> result;
    bool cancelled = false;
  };

  std::shared_ptr<TelemetryQueue> attach();
  void detach(const std::shared_ptr<TelemetryQueue>& c);
  Json error_frame(const std::string& message, std::optional<std::uint64_t> ref);

  BridgeSettings settings_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;

  std::mutex cmd_mu_;
  std::deque<std::shared_ptr<Pending>> commands_;
  std::map<std::string, std::uint64_t> last_seq_;  // per client id

  mutable std::mutex clients_mu_;
  std::vector<std::shared_ptr<TelemetryQueue>> clients_;

  std::atomic<std::uint64_t> telemetry_seq_{0};
  std::atomic<std::uint64_t> reply_seq_{0};
  std::atomic<bool> stopping_{false};
};

}  // namespace uam
