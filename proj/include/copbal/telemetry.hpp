#pragma once

#include "copbal/cop.hpp"

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <variant>
#include <vector>

namespace copbal {

// Wire layout (little-endian):
//   0  "CP"            2
//   2  version = 1     1
//   3  foot id         1
//   4  seq             u16
//   6  timestamp_ms    u32
//  10  per-cell cg     4 x i32
//  26  x_cop milli     i16
//  28  y_cop milli     i16
//  30  f_total cg      i32
//  34  CRC-16/CCITT    u16  (over bytes 0..33)
namespace wire {
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kPayloadSize = 34;
constexpr std::size_t kPacketSize = kPayloadSize + 2;
} // namespace wire

enum class DecodeError { BadMagic, BadVersion, Truncated, BadCrc };

const char* to_string(DecodeError error);

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> encode(const FootCopSample& sample);
std::variant<FootCopSample, DecodeError> decode(std::span<const std::uint8_t> bytes);

// Snaps a sample onto the wire's fixed-point grid (what decode(encode(s)) returns).
FootCopSample quantize(const FootCopSample& sample);

struct ChannelModel {
  double loss_prob = 0.0;
  double latency_base_ms = 0.0;
  double latency_jitter_ms = 0.0;  // uniform in [0, jitter]
  bool reorder = false;
  std::uint64_t seed = 1;
};

struct Datagram {
  std::uint64_t id = 0;
  std::uint32_t submit_ms = 0;
  std::uint32_t deliver_ms = 0;
  std::vector<std::uint8_t> bytes;
};

// Emulated lossy link driven by the simulation clock. Loss and latency are
// drawn at submission, so the schedule depends only on (seed, submissions).
class Channel {
public:
  explicit Channel(ChannelModel model = {});

  void submit(std::vector<std::uint8_t> bytes, std::uint32_t now_ms);

  // Releases every packet whose delivery time is <= now_ms, in delivery order.
  std::vector<Datagram> step(std::uint32_t now_ms);

  const ChannelModel& model() const { return model_; }
  std::uint64_t submitted() const { return next_id_; }
  std::uint64_t dropped() const { return dropped_; }
  std::size_t in_flight() const { return pending_.size(); }

private:
  ChannelModel model_;
  std::mt19937_64 rng_;
  std::vector<Datagram> pending_;
  std::uint64_t next_id_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint32_t last_deliver_ms_ = 0;
};

enum class Freshness { Fresh, Stale };

struct FootReading {
  FootCopSample sample;
  Freshness freshness = Freshness::Stale;
  std::uint32_t arrival_ms = 0;
};

struct ReceiverStats {
  std::uint64_t accepted = 0;
  std::uint64_t discarded_old = 0;
  std::array<std::uint64_t, 4> decode_errors{};
};

// Latest-sample slot per foot. accept() and poll() may run on different threads.
class Receiver {
public:
  explicit Receiver(std::uint32_t staleness_timeout_ms = 250);

  bool accept(std::span<const std::uint8_t> bytes, std::uint32_t arrival_ms);
  bool accept(const FootCopSample& sample, std::uint32_t arrival_ms);

  // Throws NoDataYet until both feet have delivered at least once.
  std::array<FootReading, 2> poll(std::uint32_t now_ms) const;
  std::optional<FootReading> poll(Foot foot, std::uint32_t now_ms) const;

  void reset();
  ReceiverStats stats() const;
  std::uint32_t staleness_timeout_ms() const { return timeout_ms_; }

private:
  struct Slot {
    bool has = false;
    FootCopSample sample;
    std::uint32_t arrival_ms = 0;
  };

  std::uint32_t timeout_ms_;
  mutable std::mutex mutex_;
  std::array<Slot, 2> slots_{};
  ReceiverStats stats_;
};

// True when `candidate` is newer than `reference` under 16-bit serial arithmetic.
bool seq_newer(std::uint16_t candidate, std::uint16_t reference);

} // namespace copbal
