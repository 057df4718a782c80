#include "copbal/errors.hpp"
#include "copbal/telemetry.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>
#include <string>

using namespace copbal;

namespace {

FootCopSample reference_sample() {
  FootCopSample s;
  s.foot = Foot::Left;
  s.seq = 0;
  s.timestamp_ms = 0;
  s.per_cell = {250.0, 250.0, 250.0, 250.0};
  s.f_total = 1000.0;
  return s;
}

FootCopSample random_sample(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mass(-50.0, 3000.0);
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  FootCopSample s;
  s.foot = rng() & 1 ? Foot::Right : Foot::Left;
  s.seq = static_cast<std::uint16_t>(rng());
  s.timestamp_ms = static_cast<std::uint32_t>(rng());
  for (auto& m : s.per_cell) {
    m = mass(rng);
  }
  s.f_total = mass(rng) * 4.0;
  s.x_cop = pos(rng);
  s.y_cop = pos(rng);
  return s;
}

} // namespace

TEST_CASE("CRC-16 matches the bitwise reference") {
  const std::string check = "123456789";
  const std::vector<std::uint8_t> bytes(check.begin(), check.end());
  CHECK(crc16_ccitt(bytes) == 0x29B1);
  CHECK(oracle::crc16_bitwise(bytes) == 0x29B1);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::uint8_t> data(rng() % 64);
    for (auto& b : data) {
      b = static_cast<std::uint8_t>(rng());
    }
    CHECK(crc16_ccitt(data) == oracle::crc16_bitwise(data));
  }
}

TEST_CASE("encode header and layout") {
  const auto bytes = encode(reference_sample());
  REQUIRE(bytes.size() == wire::kPacketSize);
  CHECK(bytes[0] == 0x43);
  CHECK(bytes[1] == 0x50);
  CHECK(bytes[2] == 0x01);
  CHECK(bytes[3] == 0x00);
  CHECK(bytes[4] == 0x00);
  CHECK(bytes[5] == 0x00);
  // 250 g = 25000 cg, little-endian at offset 10.
  CHECK(bytes[10] == (25000 & 0xFF));
  CHECK(bytes[11] == (25000 >> 8));
  const std::uint16_t crc = bytes[34] | (bytes[35] << 8);
  CHECK(crc == oracle::crc16_bitwise(std::span(bytes).first(34)));
}

TEST_CASE("encode range checks") {
  auto s = reference_sample();
  s.x_cop = 1.44;  // a robot-frame value is not a foot-local CoP
  CHECK_THROWS_AS(encode(s), RangeOverflow);
  s = reference_sample();
  s.f_total = 3e7;
  CHECK_THROWS_AS(encode(s), RangeOverflow);
}

TEST_CASE("codec round trip is the identity on the wire grid") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10000; ++i) {
    const auto q = quantize(random_sample(rng));
    const auto bytes = encode(q);
    const auto back = decode(bytes);
    REQUIRE(std::holds_alternative<FootCopSample>(back));
    CHECK(std::get<FootCopSample>(back) == q);
    CHECK(encode(std::get<FootCopSample>(back)) == bytes);
  }
}

TEST_CASE("decode errors") {
  const auto good = encode(reference_sample());

  auto short_packet = std::vector<std::uint8_t>(good.begin(), good.begin() + 5);
  CHECK(std::get<DecodeError>(decode(short_packet)) == DecodeError::Truncated);

  auto bad_version = good;
  bad_version[2] = 2;
  CHECK(std::get<DecodeError>(decode(bad_version)) == DecodeError::BadVersion);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(std::get<DecodeError>(decode(bad_magic)) == DecodeError::BadMagic);

  auto flipped = good;
  flipped[20] ^= 0x04;
  CHECK(std::get<DecodeError>(decode(flipped)) == DecodeError::BadCrc);
}

TEST_CASE("every single-bit corruption is detected") {
  const auto good = encode(reference_sample());
  for (std::size_t bit = 0; bit < good.size() * 8; ++bit) {
    auto bad = good;
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    CHECK(std::holds_alternative<DecodeError>(decode(bad)));
  }
}

TEST_CASE("lossless zero-latency channel delivers everything in order") {
  Channel ch({0.0, 0.0, 0.0, false, 9});
  for (std::uint32_t t = 0; t < 100; ++t) {
    ch.submit({static_cast<std::uint8_t>(t)}, t);
    const auto out = ch.step(t);
    REQUIRE(out.size() == 1);
    CHECK(out[0].bytes[0] == static_cast<std::uint8_t>(t));
    CHECK(out[0].deliver_ms == t);
  }
  CHECK(ch.dropped() == 0);
}

TEST_CASE("total loss delivers nothing") {
  Channel ch({1.0, 0.0, 0.0, false, 9});
  for (std::uint32_t t = 0; t < 100; ++t) {
    ch.submit({1}, t);
  }
  CHECK(ch.step(1000).empty());
  CHECK(ch.dropped() == 100);
}

TEST_CASE("delivery fraction tracks the loss probability") {
  for (double loss : {0.1, 0.3, 0.5}) {
    Channel ch({loss, 2.0, 6.0, false, 77});
    std::size_t delivered = 0;
    for (std::uint32_t i = 0; i < 10000; ++i) {
      ch.submit({0}, i);
      delivered += ch.step(i).size();
    }
    delivered += ch.step(20000).size();
    CHECK(std::abs(delivered / 10000.0 - (1.0 - loss)) <= 0.02);
  }
}

TEST_CASE("FIFO mode never reorders and respects latency bounds") {
  Channel ch({0.0, 5.0, 20.0, false, 4});
  std::vector<Datagram> all;
  for (std::uint32_t t = 0; t < 2000; t += 3) {
    ch.submit({0}, t);
    for (auto& d : ch.step(t)) {
      all.push_back(std::move(d));
    }
  }
  for (auto& d : ch.step(10000)) {
    all.push_back(std::move(d));
  }
  REQUIRE(all.size() == ch.submitted());
  for (std::size_t i = 1; i < all.size(); ++i) {
    CHECK(all[i].id > all[i - 1].id);
  }
  for (const auto& d : all) {
    CHECK(d.deliver_ms >= d.submit_ms + 5);
  }
}

TEST_CASE("channel schedule is deterministic per seed") {
  const auto run = [](std::uint64_t seed) {
    Channel ch({0.3, 2.0, 10.0, true, seed});
    std::vector<std::pair<std::uint64_t, std::uint32_t>> log;
    for (std::uint32_t t = 0; t < 500; ++t) {
      ch.submit({0}, t);
      for (const auto& d : ch.step(t)) {
        log.emplace_back(d.id, d.deliver_ms);
      }
    }
    return log;
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("receiver freshness, ordering and first data") {
  Receiver rx(250);
  CHECK_THROWS_AS(rx.poll(0), NoDataYet);
  CHECK_FALSE(rx.poll(Foot::Left, 0).has_value());

  auto s = reference_sample();
  s.seq = 10;
  CHECK(rx.accept(encode(s), 0));
  CHECK_THROWS_AS(rx.poll(100), NoDataYet);  // right foot still silent

  CHECK(rx.poll(Foot::Left, 100)->freshness == Freshness::Fresh);
  CHECK(rx.poll(Foot::Left, 300)->freshness == Freshness::Stale);

  auto old = s;
  old.seq = 9;
  old.f_total = 5.0;
  CHECK_FALSE(rx.accept(encode(old), 50));
  CHECK(rx.poll(Foot::Left, 60)->sample.f_total == 1000.0);
  CHECK(rx.stats().discarded_old == 1);

  auto right = s;
  right.foot = Foot::Right;
  CHECK(rx.accept(encode(right), 120));
  const auto both = rx.poll(130);
  CHECK(both[1].freshness == Freshness::Fresh);

  auto corrupt = encode(s);
  corrupt[12] ^= 1;
  CHECK_FALSE(rx.accept(corrupt, 140));
  CHECK(rx.stats().decode_errors[static_cast<int>(DecodeError::BadCrc)] == 1);
}

TEST_CASE("sequence numbers wrap with a half-range window") {
  CHECK(seq_newer(1, 0));
  CHECK_FALSE(seq_newer(0, 1));
  CHECK_FALSE(seq_newer(5, 5));
  CHECK(seq_newer(0, 65535));
  CHECK(seq_newer(10, 65530));
  CHECK(seq_newer(32767, 0));
  CHECK_FALSE(seq_newer(32768, 0));

  Receiver rx;
  auto s = reference_sample();
  s.seq = 65535;
  CHECK(rx.accept(s, 0));
  s.seq = 0;
  CHECK(rx.accept(s, 50));
}
