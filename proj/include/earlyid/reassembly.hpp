#pragma once

// Per-4-tuple flow demultiplexing with Recently-Accessed-First ordering,
// in-order delivery per direction, and TLS phase accounting.

#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "earlyid/capture.hpp"
#include "earlyid/tls_wire.hpp"

namespace earlyid {

struct Endpoint {
  Ipv4Address ip;
  std::uint16_t port = 0;

  auto operator<=>(const Endpoint&) const = default;
  std::string to_string() const { return ip.to_string() + ":" + std::to_string(port); }
};

/// Canonical 4-tuple: `a` is the lexicographically smaller endpoint, so both
/// orientations of a connection produce the same key.
struct FlowKey {
  Endpoint a;
  Endpoint b;

  static FlowKey from_endpoints(const Endpoint& x, const Endpoint& y) {
    return x < y ? FlowKey{x, y} : FlowKey{y, x};
  }
  static FlowKey from_segment(const TcpSegmentView& seg) {
    return from_endpoints({seg.src_ip, seg.src_port}, {seg.dst_ip, seg.dst_port});
  }

  bool operator==(const FlowKey&) const = default;
  auto operator<=>(const FlowKey&) const = default;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    std::uint64_t h = (std::uint64_t{k.a.ip.value} << 32) ^ k.b.ip.value;
    h ^= (std::uint64_t{k.a.port} << 16 | k.b.port) * 0x9e3779b97f4a7c15ULL;
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return static_cast<std::size_t>(h);
  }
};

enum class Direction : std::uint8_t { Forward, Backward };

inline Direction opposite(Direction d) {
  return d == Direction::Forward ? Direction::Backward : Direction::Forward;
}

struct PacketRecord {
  TimestampMicros ts_micros = 0;
  Direction direction = Direction::Forward;
  std::uint32_t payload_len = 0;

  bool operator==(const PacketRecord&) const = default;
};

enum class FlowPhase { AwaitingHandshake, Handshaking, Data, Ready, Invalid };

enum class InvalidReason { None, MalformedRecord, ReorderOverflow, NoApplicationData };

struct HeldSegment {
  std::uint32_t seq = 0;
  TimestampMicros ts_micros = 0;
  Bytes payload;
};

struct DirectionState {
  tls::RecordCursor cursor;
  std::optional<std::uint32_t> next_seq;
  std::vector<HeldSegment> reorder;
  Bytes handshake_buffer;    // unencrypted handshake bytes until the first message completes
  bool first_message_done = false;
  bool change_cipher_seen = false;
  bool fin = false;
};

struct FlowState {
  FlowKey key;
  Endpoint initiator;  // forward == initiator -> responder
  bool directions_swapped = false;
  // Stream state is kept per sending endpoint so a direction swap only
  // relabels recorded packets.
  DirectionState sent_by_a;
  DirectionState sent_by_b;
  std::vector<PacketRecord> handshake_pkts;
  std::vector<PacketRecord> appdata_pkts;
  std::optional<tls::ClientHelloSummary> client_hello;
  std::optional<tls::ServerHelloSummary> server_hello;
  FlowPhase phase = FlowPhase::AwaitingHandshake;
  InvalidReason invalid_reason = InvalidReason::None;
  bool alert_after_data = false;
  bool terminated = false;
  TimestampMicros first_seen = 0;
  TimestampMicros last_activity = 0;

  DirectionState& sender(const Endpoint& src) { return src == key.a ? sent_by_a : sent_by_b; }
  const DirectionState& sender(const Endpoint& src) const {
    return src == key.a ? sent_by_a : sent_by_b;
  }
  Direction direction_of(const Endpoint& src) const {
    return src == initiator ? Direction::Forward : Direction::Backward;
  }
  Endpoint responder() const { return initiator == key.a ? key.b : key.a; }
  /// Client-oriented "src_ip:src_port-dst_ip:dst_port".
  std::string flow_id() const { return initiator.to_string() + "-" + responder().to_string(); }
};

enum class ReadyReason { Threshold, Fin, Rst, Evicted, EndOfCapture };

const char* to_string(ReadyReason r);

/// Emitted exactly once per flow. The FlowState is frozen at emission.
struct FlowReadyEvent {
  FlowKey key;
  std::shared_ptr<const FlowState> flow;
  ReadyReason reason = ReadyReason::Threshold;
  TimestampMicros ts_micros = 0;
};

struct FlowTableConfig {
  std::size_t capacity = 1'000'000;
  TimestampMicros idle_timeout_micros = 60'000'000;
  std::size_t reorder_limit = 32;
};

struct FlowCounters {
  std::uint64_t created = 0;
  std::uint64_t ready = 0;
  std::uint64_t invalid = 0;
  std::uint64_t malformed = 0;
  std::uint64_t reorder_overflow = 0;
  std::uint64_t evicted = 0;
  std::uint64_t segments = 0;
  std::uint64_t segments_dropped = 0;  // full retransmissions and segments of finished flows
  std::uint64_t bytes_trimmed = 0;     // partially overlapping retransmissions
};

class FlowTable {
 public:
  explicit FlowTable(FlowTableConfig config = {});

  /// Routes a segment to its flow. Returns the flow's ready event when this
  /// segment makes it ready (threshold reached, or termination with at least
  /// one application data packet).
  std::optional<FlowReadyEvent> ingest(const TcpSegmentView& seg, unsigned d_threshold);

  /// Keys, most recently touched first.
  std::vector<FlowKey> touch_order() const;

  /// Drops flows idle longer than the timeout, then trims the recency tail
  /// down to capacity. Unfinished flows holding application data come back as
  /// late ready events.
  std::vector<FlowReadyEvent> evict(TimestampMicros now);

  /// End of input: every unfinished flow with application data becomes ready.
  std::vector<FlowReadyEvent> flush(TimestampMicros now);

  const FlowState* find(const FlowKey& key) const;
  std::size_t size() const { return index_.size(); }
  std::size_t peak_size() const { return peak_size_; }
  const FlowCounters& counters() const { return counters_; }
  const FlowTableConfig& config() const { return config_; }

 private:
  using Recency = std::list<FlowState>;

  Recency::iterator touch(const TcpSegmentView& seg, const FlowKey& key);
  Recency::iterator create(const TcpSegmentView& seg, const FlowKey& key);
  void erase(Recency::iterator it);
  std::optional<FlowReadyEvent> finish(FlowState& flow, ReadyReason reason, TimestampMicros ts);
  std::optional<FlowReadyEvent> deliver(FlowState& flow, const Endpoint& sender,
                                        TimestampMicros ts, ByteSpan bytes, unsigned d_threshold);
  std::optional<FlowReadyEvent> sequence(FlowState& flow, const Endpoint& sender,
                                         const TcpSegmentView& seg, unsigned d_threshold);
  void mark_invalid(FlowState& flow, InvalidReason reason);
  void absorb_handshake(FlowState& flow, const Endpoint& sender, ByteSpan bytes);
  void evict_one(Recency::iterator it, TimestampMicros now, std::vector<FlowReadyEvent>& out);

  FlowTableConfig config_;
  Recency recency_;
  std::unordered_map<FlowKey, Recency::iterator, FlowKeyHash> index_;
  FlowCounters counters_;
  std::size_t peak_size_ = 0;
  tls::ScanResult scratch_;
};

/// True when `later` is after `earlier` in 32-bit sequence space.
inline bool seq_after(std::uint32_t later, std::uint32_t earlier) {
  return static_cast<std::int32_t>(later - earlier) > 0;
}

}  // namespace earlyid
