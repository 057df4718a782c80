#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace copbal {

// Loopback datagram transport for live mode.
class UdpSocket {
public:
  // Binds 127.0.0.1:port (0 picks an ephemeral port).
  explicit UdpSocket(std::uint16_t port = 0);
  ~UdpSocket();
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;
  UdpSocket(UdpSocket&& other) noexcept;
  UdpSocket& operator=(UdpSocket&& other) noexcept;

  std::uint16_t port() const { return port_; }

  void send_to(std::span<const std::uint8_t> bytes, std::uint16_t port) const;
  std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) const;

private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

} // namespace copbal
