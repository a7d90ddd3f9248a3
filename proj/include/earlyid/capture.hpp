#pragma once

// Packet ingestion: classic pcap files (reading and writing) and decoding of
// Ethernet / raw-IP framed IPv4+TCP segments.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "earlyid/bytes.hpp"

namespace earlyid {

/// Microseconds since the Unix epoch. Used for every timestamp in the toolkit.
using TimestampMicros = std::int64_t;

struct RawPacket {
  TimestampMicros ts_micros = 0;
  std::uint32_t original_len = 0;
  Bytes data;

  std::uint32_t captured_len() const { return static_cast<std::uint32_t>(data.size()); }
};

struct Ipv4Address {
  std::uint32_t value = 0;  // host order, a.b.c.d == a<<24 | ...

  static Ipv4Address from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    return {(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d};
  }
  static std::optional<Ipv4Address> parse(std::string_view text);
  std::string to_string() const;

  auto operator<=>(const Ipv4Address&) const = default;
};

namespace tcp_flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flags

/// Decoded view of one TCP segment. The payload aliases the RawPacket (or
/// buffer) it was decoded from and must not outlive it.
struct TcpSegmentView {
  TimestampMicros ts_micros = 0;
  Ipv4Address src_ip;
  Ipv4Address dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint8_t flags = 0;  // tcp_flags bits (FIN, SYN, RST, PSH, ACK)
  ByteSpan payload;

  bool has(std::uint8_t flag) const { return (flags & flag) != 0; }
};

namespace link_type {
inline constexpr std::uint32_t kEthernet = 1;
inline constexpr std::uint32_t kRawIp = 101;
inline constexpr std::uint32_t kRawIpAlt = 12;
}  // namespace link_type

class PcapError : public std::runtime_error {
 public:
  enum class Kind { Io, UnknownMagic, TruncatedHeader, TruncatedRecord, OversizedRecord };

  PcapError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Anything that yields raw frames with a link type: the pcap reader, or a
/// live capture backend with the same contract.
class PacketSource {
 public:
  virtual ~PacketSource() = default;
  virtual std::optional<RawPacket> next_packet() = 0;
  virtual std::uint32_t link_type() const = 0;
};

class PcapReader final : public PacketSource {
 public:
  /// Takes ownership of an already-open stream positioned at the global header.
  explicit PcapReader(std::unique_ptr<std::istream> in);
  ~PcapReader() override;

  /// Returns packets in file order, then nullopt. A record whose header claims
  /// more bytes than remain throws PcapError(TruncatedRecord) once; the stream
  /// is finished afterwards.
  std::optional<RawPacket> next_packet() override;
  std::uint32_t link_type() const override { return link_type_; }

  bool nanosecond_resolution() const { return nanos_; }
  bool byte_swapped() const { return swapped_; }
  std::uint32_t snaplen() const { return snaplen_; }

 private:
  std::uint32_t fix(std::uint32_t v) const;

  std::unique_ptr<std::istream> in_;
  std::uint32_t link_type_ = 0;
  std::uint32_t snaplen_ = 0;
  bool swapped_ = false;
  bool nanos_ = false;
  bool finished_ = false;
};

std::unique_ptr<PcapReader> open_pcap(const std::filesystem::path& path);
std::unique_ptr<PcapReader> open_pcap_bytes(ByteSpan bytes);

/// Writes native little-endian microsecond pcap (magic 0xa1b2c3d4).
class PcapWriter {
 public:
  explicit PcapWriter(std::ostream& out, std::uint32_t link = link_type::kEthernet,
                      std::uint32_t snaplen = 262144);
  void write(TimestampMicros ts, ByteSpan frame);
  void write(TimestampMicros ts, ByteSpan frame, std::uint32_t original_len);
  std::uint64_t records_written() const { return records_; }

 private:
  std::ostream& out_;
  std::uint64_t records_ = 0;
};

struct DecodeCounters {
  std::uint64_t decoded = 0;
  std::uint64_t non_ipv4 = 0;
  std::uint64_t non_tcp = 0;
  std::uint64_t truncated = 0;
  std::uint64_t fragments = 0;
  std::uint64_t unsupported_link = 0;

  std::uint64_t rejected() const {
    return non_ipv4 + non_tcp + truncated + fragments + unsupported_link;
  }
};

/// IPv4+TCP only; everything else (IPv6, ARP, UDP, fragments, short frames)
/// yields nullopt and bumps the matching counter.
std::optional<TcpSegmentView> decode_frame(TimestampMicros ts, ByteSpan frame,
                                           std::uint32_t link, DecodeCounters* counters = nullptr);

inline std::optional<TcpSegmentView> decode_frame(const RawPacket& pkt, std::uint32_t link,
                                                  DecodeCounters* counters = nullptr) {
  return decode_frame(pkt.ts_micros, pkt.data, link, counters);
}

}  // namespace earlyid
