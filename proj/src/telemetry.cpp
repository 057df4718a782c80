#include "copbal/telemetry.hpp"

#include "copbal/bytes.hpp"
#include "copbal/errors.hpp"

#include <boost/crc.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace copbal {

namespace {

std::int32_t to_centigrams(double grams, const char* field) {
  const double cg = std::round(grams * 100.0);
  if (!std::isfinite(cg) || cg > std::numeric_limits<std::int32_t>::max() ||
      cg < std::numeric_limits<std::int32_t>::min()) {
    throw RangeOverflow(std::string(field) + " does not fit in i32 centigrams");
  }
  return static_cast<std::int32_t>(cg);
}

std::int16_t to_milli(double value, const char* field) {
  const double milli = std::round(value * 1000.0);
  if (!std::isfinite(milli) || std::abs(milli) > 1000.0) {
    throw RangeOverflow(std::string(field) + " outside foot-local range [-1, 1]");
  }
  return static_cast<std::int16_t>(milli);
}

} // namespace

const char* to_string(DecodeError error) {
  switch (error) {
  case DecodeError::BadMagic:
    return "BadMagic";
  case DecodeError::BadVersion:
    return "BadVersion";
  case DecodeError::Truncated:
    return "Truncated";
  case DecodeError::BadCrc:
    return "BadCrc";
  }
  return "Unknown";
}

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data) {
  boost::crc_ccitt_type crc;  // poly 0x1021, init 0xFFFF
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

std::vector<std::uint8_t> encode(const FootCopSample& sample) {
  std::vector<std::uint8_t> out;
  out.reserve(wire::kPacketSize);
  out.push_back('C');
  out.push_back('P');
  out.push_back(wire::kVersion);
  out.push_back(static_cast<std::uint8_t>(sample.foot));
  bytes::put_le(out, sample.seq);
  bytes::put_le(out, sample.timestamp_ms);
  for (double m : sample.per_cell) {
    bytes::put_le(out, to_centigrams(m, "per-cell mass"));
  }
  bytes::put_le(out, to_milli(sample.x_cop, "x_cop"));
  bytes::put_le(out, to_milli(sample.y_cop, "y_cop"));
  bytes::put_le(out, to_centigrams(sample.f_total, "f_total"));
  bytes::put_le(out, crc16_ccitt(out));
  return out;
}

std::variant<FootCopSample, DecodeError> decode(std::span<const std::uint8_t> data) {
  if (data.size() < wire::kPacketSize) {
    return DecodeError::Truncated;
  }
  if (data[0] != 'C' || data[1] != 'P') {
    return DecodeError::BadMagic;
  }
  if (data[2] != wire::kVersion) {
    return DecodeError::BadVersion;
  }
  if (crc16_ccitt(data.first(wire::kPayloadSize)) !=
      bytes::get_le<std::uint16_t>(data, wire::kPayloadSize)) {
    return DecodeError::BadCrc;
  }
  if (data[3] > 1) {
    return DecodeError::BadMagic;
  }
  FootCopSample s;
  s.foot = static_cast<Foot>(data[3]);
  s.seq = bytes::get_le<std::uint16_t>(data, 4);
  s.timestamp_ms = bytes::get_le<std::uint32_t>(data, 6);
  for (int i = 0; i < kCellsPerFoot; ++i) {
    s.per_cell[i] = bytes::get_le<std::int32_t>(data, 10 + 4 * i) / 100.0;
  }
  s.x_cop = bytes::get_le<std::int16_t>(data, 26) / 1000.0;
  s.y_cop = bytes::get_le<std::int16_t>(data, 28) / 1000.0;
  s.f_total = bytes::get_le<std::int32_t>(data, 30) / 100.0;
  return s;
}

FootCopSample quantize(const FootCopSample& sample) {
  return std::get<FootCopSample>(decode(encode(sample)));
}

Channel::Channel(ChannelModel model) : model_(model), rng_(model.seed) {}

void Channel::submit(std::vector<std::uint8_t> bytes, std::uint32_t now_ms) {
  const std::uint64_t id = next_id_++;
  // Both draws happen for every packet so the schedule does not shift with loss_prob.
  const double u_loss = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const double u_lat = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  if (u_loss < model_.loss_prob) {
    ++dropped_;
    return;
  }
  const double latency = model_.latency_base_ms + u_lat * model_.latency_jitter_ms;
  auto deliver = now_ms + static_cast<std::uint32_t>(std::lround(latency));
  if (!model_.reorder) {
    deliver = std::max(deliver, last_deliver_ms_);
    last_deliver_ms_ = deliver;
  }
  pending_.push_back({id, now_ms, deliver, std::move(bytes)});
}

std::vector<Datagram> Channel::step(std::uint32_t now_ms) {
  std::vector<Datagram> out;
  auto due = std::stable_partition(pending_.begin(), pending_.end(),
                                   [&](const Datagram& d) { return d.deliver_ms <= now_ms; });
  out.assign(std::make_move_iterator(pending_.begin()), std::make_move_iterator(due));
  pending_.erase(pending_.begin(), due);
  std::sort(out.begin(), out.end(), [](const Datagram& a, const Datagram& b) {
    return a.deliver_ms != b.deliver_ms ? a.deliver_ms < b.deliver_ms : a.id < b.id;
  });
  return out;
}

bool seq_newer(std::uint16_t candidate, std::uint16_t reference) {
  return static_cast<std::int16_t>(static_cast<std::uint16_t>(candidate - reference)) > 0;
}

Receiver::Receiver(std::uint32_t staleness_timeout_ms) : timeout_ms_(staleness_timeout_ms) {}

bool Receiver::accept(std::span<const std::uint8_t> bytes, std::uint32_t arrival_ms) {
  auto decoded = decode(bytes);
  if (auto* err = std::get_if<DecodeError>(&decoded)) {
    std::lock_guard lock(mutex_);
    ++stats_.decode_errors[static_cast<std::size_t>(*err)];
    return false;
  }
  return accept(std::get<FootCopSample>(decoded), arrival_ms);
}

bool Receiver::accept(const FootCopSample& sample, std::uint32_t arrival_ms) {
  std::lock_guard lock(mutex_);
  auto& slot = slots_[static_cast<std::size_t>(sample.foot)];
  if (slot.has && !seq_newer(sample.seq, slot.sample.seq)) {
    ++stats_.discarded_old;
    return false;
  }
  slot.has = true;
  slot.sample = sample;
  slot.arrival_ms = arrival_ms;
  ++stats_.accepted;
  return true;
}

std::optional<FootReading> Receiver::poll(Foot foot, std::uint32_t now_ms) const {
  std::lock_guard lock(mutex_);
  const auto& slot = slots_[static_cast<std::size_t>(foot)];
  if (!slot.has) {
    return std::nullopt;
  }
  const bool stale = now_ms > slot.arrival_ms && now_ms - slot.arrival_ms > timeout_ms_;
  return FootReading{slot.sample, stale ? Freshness::Stale : Freshness::Fresh, slot.arrival_ms};
}

std::array<FootReading, 2> Receiver::poll(std::uint32_t now_ms) const {
  auto left = poll(Foot::Left, now_ms);
  auto right = poll(Foot::Right, now_ms);
  if (!left || !right) {
    throw NoDataYet("no telemetry received yet from both feet");
  }
  return {*left, *right};
}

void Receiver::reset() {
  std::lock_guard lock(mutex_);
  slots_ = {};
  stats_ = {};
}

ReceiverStats Receiver::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

} // namespace copbal
