#include "copbal/service.hpp"

#include "copbal/errors.hpp"
#include "copbal/udp_link.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <iostream>
#include <thread>

namespace copbal {

using Json = nlohmann::json;

namespace {

constexpr std::uint32_t kHoldForever = 3'600'000;

Json error_ack(const std::string& code, const std::string& message) {
  return {{"type", "ack"}, {"ok", false}, {"error", {{"code", code}, {"message", message}}}};
}

Json coeffs_json(int slot, const CalibrationCoefficients& c) {
  return {{"cell", slot}, {"gradient", c.gradient}, {"offset", c.offset_counts}};
}

int slot_of(const Json& command) {
  const int slot = command.at("cell").get<int>();
  if (slot < 0 || slot >= kTotalCells) {
    throw ConfigError("cell must be in 0.." + std::to_string(kTotalCells - 1));
  }
  return slot;
}

Foot foot_of(const Json& command, Foot fallback) {
  if (!command.contains("foot")) {
    return fallback;
  }
  const auto name = command.at("foot").get<std::string>();
  if (name == "left") {
    return Foot::Left;
  }
  if (name == "right") {
    return Foot::Right;
  }
  throw ConfigError("foot must be 'left' or 'right'");
}

JointAngles lean_pose(Foot lifted, const PlantParams& params) {
  // Same lean as the scripted trials.
  return standard_lift_script(lifted, params).frames[1].joints;
}

struct UnknownCommand : Error {
  using Error::Error;
};

Support single_support(Foot lifted) {
  return lifted == Foot::Right ? Support::LeftOnly : Support::RightOnly;
}

} // namespace

struct LiveSession::Udp {
  UdpSocket rx;
  UdpSocket tx;
  std::atomic<std::uint32_t> clock_ms{0};
  std::jthread reader;
};

LiveSession::LiveSession(LiveOptions options) : options_(std::move(options)) {
  rebuild_engine();
  if (std::filesystem::exists(options_.store_path)) {
    const auto ack = apply({{"cmd", "load_store"}});
    if (!ack.value("ok", false)) {
      std::cerr << "calibration store not loaded: " << ack["error"]["message"].get<std::string>()
                << "\n";
    }
  }
  TickLog initial;
  initial.t_ms = engine_->now_ms();
  frame_ = frame_from(initial);
}

LiveSession::~LiveSession() { stop_udp(); }

void LiveSession::rebuild_engine() {
  stop_udp();
  std::optional<CalibrationStore> keep;
  if (engine_) {
    keep = engine_->sensors().store();
  }
  auto config = options_.engine;
  if (engine_) {
    config.controller.roll_gains = engine_->config().controller.roll_gains;
    config.control_enabled = engine_->config().control_enabled;
  }
  engine_ = std::make_unique<BalanceEngine>(config, double_support_script(kHoldForever));
  if (keep) {
    for (int slot = 0; slot < kTotalCells; ++slot) {
      engine_->set_calibration(slot, keep->cells[slot]);
    }
  }
  last_log_.reset();
  lifted_.reset();
  mode_ = "idle";
  if (options_.udp) {
    start_udp();
  }
}

void LiveSession::start_udp() {
  udp_ = std::make_unique<Udp>();
  auto* udp = udp_.get();
  const std::uint16_t rx_port = udp->rx.port();
  engine_->set_packet_sink([udp, rx_port](std::vector<std::uint8_t> bytes, std::uint32_t) {
    udp->tx.send_to(bytes, rx_port);
  });
  Receiver* receiver = &engine_->receiver();
  udp->reader = std::jthread([udp, receiver](std::stop_token stop) {
    while (!stop.stop_requested()) {
      if (auto bytes = udp->rx.receive(std::chrono::milliseconds(20))) {
        receiver->accept(*bytes, udp->clock_ms.load());
      }
    }
  });
}

void LiveSession::stop_udp() {
  if (udp_) {
    udp_->reader.request_stop();
    if (udp_->reader.joinable()) {
      udp_->reader.join();
    }
    udp_.reset();
  }
}

std::uint32_t LiveSession::now_ms() const { return engine_->now_ms(); }

void LiveSession::submit(Json command, AckCallback on_ack) {
  std::lock_guard lock(mutex_);
  pending_.emplace_back(std::move(command), std::move(on_ack));
}

Json LiveSession::latest_frame() const {
  std::lock_guard lock(mutex_);
  return frame_;
}

void LiveSession::set_frame_listener(FrameListener listener) {
  std::lock_guard lock(mutex_);
  listener_ = std::move(listener);
}

Json LiveSession::tick() {
  std::vector<std::pair<Json, AckCallback>> queued;
  {
    std::lock_guard lock(mutex_);
    queued.swap(pending_);
  }
  for (auto& [command, on_ack] : queued) {
    Json ack = apply(command);
    if (on_ack) {
      on_ack(std::move(ack));
    }
  }

  if (udp_) {
    udp_->clock_ms.store(engine_->now_ms());
  }
  last_log_ = engine_->tick();
  if (mode_ == "trial" && (engine_->script_finished() || engine_->fallen())) {
    mode_ = engine_->fallen() ? "fallen" : "idle";
  }
  Json frame = frame_from(*last_log_);

  FrameListener listener;
  {
    std::lock_guard lock(mutex_);
    frame_ = frame;
    listener = listener_;
  }
  if (listener) {
    listener(frame.dump());
  }
  return frame;
}

void LiveSession::run(std::stop_token stop) {
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::milliseconds(options_.engine.control_period_ms);
  auto next = clock::now();
  while (!stop.stop_requested()) {
    tick();
    next += period;
    const auto now = clock::now();
    if (next < now) {
      next = now;  // fell behind; do not try to catch up
    }
    std::this_thread::sleep_until(next);
  }
}

Json LiveSession::frame_from(const TickLog& log) const {
  const auto& gains = engine_->config().controller.roll_gains;
  const auto& sp = engine_->controller().setpoints();
  Json joints = Json::object();
  for (int j = 0; j < kJointCount; ++j) {
    joints[std::string(joint_name(static_cast<Joint>(j)))] = log.joints[j];
  }
  return {{"type", "frame"},
          {"t_ms", log.t_ms},
          {"mode", mode_},
          {"cop", {{"x", log.cop.x}, {"y", log.cop.y}, {"f_total", log.cop.f_total}}},
          {"fresh", log.fresh},
          {"cells", log.cells},
          {"joints", joints},
          {"support", to_string(log.support)},
          {"theta_e", log.theta_e},
          {"clamped", log.clamped},
          {"frozen", engine_->controller().last_output().frozen},
          {"control_active", log.control_active},
          {"setpoint", {{"x", sp.cop_set_x}, {"y", sp.cop_set_y}}},
          {"gains", {{"kp", gains.kp}, {"ki", gains.ki}, {"kd", gains.kd}}},
          {"tilt_deg", engine_->config().plant.tilt_deg},
          {"fallen", log.fallen}};
}

Json LiveSession::apply(const Json& command) {
  Json ack;
  std::string cmd;
  try {
    cmd = command.at("cmd").get<std::string>();
    ack = {{"type", "ack"}, {"cmd", cmd}, {"ok", true}, {"applied", handle(cmd, command)}};
  } catch (const Json::exception& e) {
    ack = error_ack("bad_request", e.what());
  } catch (const UnknownCommand& e) {
    ack = error_ack("unknown_command", e.what());
  } catch (const ConfigError& e) {
    ack = error_ack("invalid_argument", e.what());
  } catch (const CorruptStore& e) {
    ack = error_ack("corrupt_store", e.what());
  } catch (const VersionMismatch& e) {
    ack = error_ack("version_mismatch", e.what());
  } catch (const IoFailure& e) {
    ack = error_ack("io_failure", e.what());
  } catch (const Error& e) {
    ack = error_ack("rejected", e.what());
  }
  if (!cmd.empty()) {
    ack["cmd"] = cmd;
  }
  if (command.is_object() && command.contains("id")) {
    ack["id"] = command["id"];
  }
  ack["t_ms"] = engine_->now_ms();
  return ack;
}

Json LiveSession::handle(const std::string& cmd, const Json& command) {
  if (cmd == "set_gains") {
    PidGains gains = engine_->config().controller.roll_gains;
    gains.kp = command.value("kp", gains.kp);
    gains.ki = command.value("ki", gains.ki);
    gains.kd = command.value("kd", gains.kd);
    if (!gains.valid()) {
      throw ConfigError("gains must be finite and non-negative");
    }
    engine_->set_gains(gains);
    return {{"kp", gains.kp}, {"ki", gains.ki}, {"kd", gains.kd}};
  }
  if (cmd == "set_setpoint") {
    const Setpoints sp{command.at("x").get<double>(), command.value("y", 0.0)};
    engine_->set_setpoints(sp);
    return {{"x", sp.cop_set_x}, {"y", sp.cop_set_y}};
  }
  if (cmd == "set_tilt") {
    const double deg = command.at("deg").get<double>();
    engine_->set_tilt_deg(deg);
    return {{"deg", engine_->config().plant.tilt_deg}};
  }
  if (cmd == "set_control") {
    const bool enabled = command.at("enabled").get<bool>();
    engine_->set_control_enabled(enabled);
    return {{"enabled", enabled}};
  }
  if (cmd == "tare") {
    const int slot = slot_of(command);
    return coeffs_json(slot, engine_->tare(slot, command.value("samples", 64)));
  }
  if (cmd == "set_calibration") {
    const int slot = slot_of(command);
    const CalibrationCoefficients c{slot % kCellsPerFoot, command.at("gradient").get<double>(),
                                    command.at("offset").get<double>()};
    engine_->set_calibration(slot, c);
    return coeffs_json(slot, engine_->sensors().store().cells[slot]);
  }
  if (cmd == "save_store") {
    const std::filesystem::path path = command.value("path", options_.store_path.string());
    save_store(engine_->sensors().store(), path);
    return {{"path", path.string()}};
  }
  if (cmd == "load_store") {
    const std::filesystem::path path = command.value("path", options_.store_path.string());
    const CalibrationStore store = load_store(path);
    Json cells = Json::array();
    for (int slot = 0; slot < kTotalCells; ++slot) {
      engine_->set_calibration(slot, store.cells[slot]);
      cells.push_back(coeffs_json(slot, store.cells[slot]));
    }
    return {{"path", path.string()}, {"cells", cells}};
  }
  if (cmd == "get_calibration") {
    Json cells = Json::array();
    for (int slot = 0; slot < kTotalCells; ++slot) {
      cells.push_back(coeffs_json(slot, engine_->sensors().store().cells[slot]));
    }
    return {{"cells", cells}};
  }
  if (cmd == "lift") {
    if (lifted_) {
      throw Error("a foot is already lifted");
    }
    const Foot foot = foot_of(command, options_.default_lift);
    const JointAngles lean = lean_pose(foot, engine_->config().plant);
    MotionScript script;
    script.frames = {{JointAngles{}, 50, Support::Double},
                     {lean, 500, single_support(foot)},
                     {lean, kHoldForever, single_support(foot)}};
    engine_->set_script(script);
    lifted_ = foot;
    mode_ = "lifted";
    return {{"foot", foot == Foot::Left ? "left" : "right"}};
  }
  if (cmd == "lower") {
    if (!lifted_) {
      throw Error("no foot is lifted");
    }
    const JointAngles lean = lean_pose(*lifted_, engine_->config().plant);
    MotionScript script;
    script.frames = {{lean, 50, single_support(*lifted_)},
                     {JointAngles{}, 500, single_support(*lifted_)},
                     {JointAngles{}, kHoldForever, Support::Double}};
    engine_->set_script(script);
    lifted_.reset();
    mode_ = "idle";
    return Json::object();
  }
  if (cmd == "start_trial") {
    const Foot foot = foot_of(command, options_.default_lift);
    const double magnitude = command.value("tilt_deg", options_.trial_tilt_deg);
    rebuild_engine();
    engine_->set_tilt_deg(foot == Foot::Right ? -magnitude : magnitude);
    engine_->set_script(standard_lift_script(foot, engine_->config().plant));
    mode_ = "trial";
    return {{"foot", foot == Foot::Left ? "left" : "right"},
            {"tilt_deg", engine_->config().plant.tilt_deg}};
  }
  if (cmd == "stop_trial" || cmd == "reset") {
    rebuild_engine();
    return Json::object();
  }
  if (cmd == "get_state") {
    return last_log_ ? frame_from(*last_log_) : latest_frame();
  }
  throw UnknownCommand("unknown command '" + cmd + "'");
}

// ---------------------------------------------------------------------------
// HTTP / WebSocket transport

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

class WsSession;

struct ServerState {
  LiveSession& session;
  net::io_context& ioc;
  std::vector<std::weak_ptr<WsSession>> sockets;

  void broadcast(const std::shared_ptr<const std::string>& message);
};

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
  WsSession(tcp::socket socket, ServerState& state) : ws_(std::move(socket)), state_(state) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) {
        return;
      }
      self->state_.sockets.push_back(self);
      self->send(std::make_shared<const std::string>(self->state_.session.latest_frame().dump()));
      self->do_read();
    });
  }

  void send(std::shared_ptr<const std::string> message) {
    if (queue_.size() >= 64) {
      return;  // slow client; drop rather than buffer without bound
    }
    queue_.push_back(std::move(message));
    if (queue_.size() == 1) {
      do_write();
    }
  }

private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        return;
      }
      self->on_message(beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->do_read();
    });
  }

  void on_message(const std::string& text) {
    Json command = Json::parse(text, nullptr, false);
    if (command.is_discarded() || !command.is_object()) {
      send(std::make_shared<const std::string>(
          error_ack("bad_request", "message is not a JSON object").dump()));
      return;
    }
    std::weak_ptr<WsSession> weak = shared_from_this();
    net::io_context& ioc = state_.ioc;
    state_.session.submit(std::move(command), [weak, &ioc](Json ack) {
      net::post(ioc, [weak, text = std::make_shared<const std::string>(ack.dump())] {
        if (auto self = weak.lock()) {
          self->send(text);
        }
      });
    });
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->queue_.clear();
                        return;
                      }
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) {
                        self->do_write();
                      }
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  ServerState& state_;
};

void ServerState::broadcast(const std::shared_ptr<const std::string>& message) {
  std::erase_if(sockets, [](const auto& w) { return w.expired(); });
  for (auto& w : sockets) {
    if (auto s = w.lock()) {
      s->send(message);
    }
  }
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
  HttpSession(tcp::socket socket, ServerState& state) : stream_(std::move(socket)), state_(state) {}

  void run() { do_read(); }

private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) {
                         self->close();
                         return;
                       }
                       self->on_request();
                     });
  }

  void on_request() {
    const std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      if (target != "/ws") {
        respond(http::status::not_found, error_ack("not_found", "websocket lives at /ws"));
        return;
      }
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), state_)->run(std::move(req_));
      return;
    }
    if (req_.method() == http::verb::get && target == "/state") {
      respond(http::status::ok, state_.session.latest_frame());
      return;
    }
    if (req_.method() == http::verb::post && target == "/command") {
      Json command = Json::parse(req_.body(), nullptr, false);
      if (command.is_discarded() || !command.is_object()) {
        respond(http::status::bad_request,
                error_ack("bad_request", "body is not a JSON object"));
        return;
      }
      // The pending ack owns the session until the reply is written.
      net::io_context& ioc = state_.ioc;
      state_.session.submit(std::move(command), [self = shared_from_this(), &ioc](Json ack) {
        net::post(ioc, [self, ack = std::move(ack)] {
          const bool ok = ack.value("ok", false);
          self->respond(ok ? http::status::ok : http::status::unprocessable_entity, ack);
        });
      });
      return;
    }
    if (req_.method() == http::verb::get && target == "/") {
      respond(http::status::ok, Json{{"service", "copbal"},
                                     {"endpoints", {"GET /state", "POST /command", "GET /ws"}}});
      return;
    }
    respond(http::status::not_found, error_ack("not_found", "no route for " + target));
  }

  void respond(http::status status, const Json& body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, "application/json");
    res->set(http::field::access_control_allow_origin, "*");
    res->keep_alive(req_.keep_alive());
    res->body() = body.dump();
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                        if (ec || !res->keep_alive()) {
                          self->close();
                          return;
                        }
                        self->do_read();
                      });
  }

  void close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  ServerState& state_;
};

} // namespace

struct LiveServer::Impl {
  LiveSession& session;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  ServerState state{session, ioc, {}};
  std::thread io_thread;
  std::jthread sim_thread;
  bool running = false;

  explicit Impl(LiveSession& s) : session(s) {}

  void do_accept() {
    acceptor.async_accept(ioc, [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        return;  // acceptor closed
      }
      std::make_shared<HttpSession>(std::move(socket), state)->run();
      do_accept();
    });
  }
};

LiveServer::LiveServer(LiveSession& session, std::uint16_t port)
    : impl_(std::make_unique<Impl>(session)) {
  const tcp::endpoint endpoint(net::ip::make_address("127.0.0.1"), port);
  beast::error_code ec;
  impl_->acceptor.open(endpoint.protocol(), ec);
  if (!ec) {
    // Lets a restarted service rebind while old connections sit in TIME_WAIT.
    impl_->acceptor.set_option(net::socket_base::reuse_address(true), ec);
  }
  if (!ec) {
    impl_->acceptor.bind(endpoint, ec);
  }
  if (ec == net::error::address_in_use) {
    throw PortInUse("port " + std::to_string(port) + " is in use");
  }
  if (!ec) {
    impl_->acceptor.listen(net::socket_base::max_listen_connections, ec);
  }
  if (ec) {
    throw IoFailure("cannot listen on port " + std::to_string(port) + ": " + ec.message());
  }
}

LiveServer::~LiveServer() { stop(); }

std::uint16_t LiveServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void LiveServer::start() {
  if (impl_->running) {
    return;
  }
  impl_->running = true;
  Impl* impl = impl_.get();
  impl->session.set_frame_listener([impl](const std::string& frame) {
    net::post(impl->ioc, [impl, msg = std::make_shared<const std::string>(frame)] {
      impl->state.broadcast(msg);
    });
  });
  impl->do_accept();
  impl->io_thread = std::thread([impl] { impl->ioc.run(); });
  impl->sim_thread = std::jthread([impl](std::stop_token stop) { impl->session.run(stop); });
}

void LiveServer::stop() {
  if (!impl_ || !impl_->running) {
    return;
  }
  impl_->running = false;
  impl_->sim_thread.request_stop();
  if (impl_->sim_thread.joinable()) {
    impl_->sim_thread.join();
  }
  impl_->session.set_frame_listener(nullptr);
  impl_->ioc.stop();
  if (impl_->io_thread.joinable()) {
    impl_->io_thread.join();
  }
}

} // namespace copbal
