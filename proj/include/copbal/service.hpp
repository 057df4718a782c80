#pragma once

#include "copbal/engine.hpp"
#include "copbal/harness.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

namespace copbal {

struct LiveOptions {
  EngineConfig engine{};
  Foot default_lift = Foot::Right;
  double trial_tilt_deg = 3.0;
  std::filesystem::path store_path = "calibration.bin";
  // Foot units talk to the receiver over loopback UDP instead of the
  // in-process channel model.
  bool udp = false;
};

// State of one live robot plus the command protocol. Commands are queued
// and applied at the start of the next control tick, so an ack reflects
// what the following tick will use.
class LiveSession {
public:
  using Json = nlohmann::json;
  using AckCallback = std::function<void(Json)>;
  using FrameListener = std::function<void(const std::string&)>;

  explicit LiveSession(LiveOptions options);
  ~LiveSession();

  // Thread-safe.
  void submit(Json command, AckCallback on_ack);
  Json latest_frame() const;
  void set_frame_listener(FrameListener listener);

  // Applies pending commands, advances one tick and publishes the frame.
  Json tick();

  // Wall-clock paced loop at the control period.
  void run(std::stop_token stop);

  // Applies a command immediately (no queue). Never throws; errors are
  // reported in the returned ack.
  Json apply(const Json& command);

  std::uint32_t now_ms() const;

private:
  void rebuild_engine();
  void start_udp();
  void stop_udp();
  Json frame_from(const TickLog& log) const;
  Json handle(const std::string& cmd, const Json& command);

  LiveOptions options_;
  std::unique_ptr<BalanceEngine> engine_;
  std::optional<TickLog> last_log_;
  std::string mode_ = "idle";
  std::optional<Foot> lifted_;

  mutable std::mutex mutex_;
  std::vector<std::pair<Json, AckCallback>> pending_;
  Json frame_;
  FrameListener listener_;

  struct Udp;
  std::unique_ptr<Udp> udp_;
};

// HTTP + WebSocket front end:
//   GET  /state      latest frame
//   POST /command    one command, replies with its ack
//   GET  /ws         WebSocket; frames are pushed every tick, text messages
//                    are commands and get acks on the same socket
class LiveServer {
public:
  // Binds 127.0.0.1:port; 0 picks an ephemeral port. Throws PortInUse.
  LiveServer(LiveSession& session, std::uint16_t port);
  ~LiveServer();
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  std::uint16_t port() const;
  void start();  // background I/O + simulation threads
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace copbal
