#pragma once

// TLS record-layer scanning over one direction of a TCP byte stream, and the
// ClientHello / ServerHello field extraction used by the handshake features.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "earlyid/bytes.hpp"

namespace earlyid::tls {

enum class ContentType : std::uint8_t {
  ChangeCipherSpec = 20,
  Alert = 21,
  Handshake = 22,
  ApplicationData = 23,
};

inline constexpr std::size_t kRecordHeaderLen = 5;
inline constexpr std::uint32_t kMaxRecordLen = 16384 + 2048;

inline bool is_known_content_type(std::uint8_t b) { return b >= 20 && b <= 23; }

/// A record header found in the stream. Offsets are relative to the segment
/// in which the header completed; header_offset is negative when the first
/// header bytes arrived in an earlier segment.
struct RecordEvent {
  ContentType content_type{};
  std::uint8_t version_major = 0;
  std::uint8_t version_minor = 0;
  std::uint16_t declared_len = 0;
  std::ptrdiff_t header_offset = 0;
  std::size_t body_offset = 0;
  std::size_t body_bytes_in_segment = 0;

  bool operator==(const RecordEvent&) const = default;
};

/// Attribution of a contiguous byte range of the segment to a record type.
struct RecordChunk {
  ContentType content_type{};
  std::size_t offset = 0;
  std::size_t length = 0;
  bool header = false;
};

/// Per-direction scanning state carried between segments.
struct RecordCursor {
  std::uint32_t bytes_remaining_in_record = 0;
  std::optional<ContentType> current_content_type;
  std::array<std::uint8_t, kRecordHeaderLen> header_stash{};
  std::uint8_t stash_len = 0;  // 0-4 bytes of a header split across segments
  bool failed = false;
};

enum class SegmentPhase { Handshake, ApplicationData, Continuation };

enum class ScanStatus { Ok, MalformedRecord };

struct ScanResult {
  std::vector<RecordEvent> events;
  std::vector<RecordChunk> chunks;
  SegmentPhase phase = SegmentPhase::Continuation;
  // Both handshake-type and application-data bytes were present. Such a
  // segment is reported as ApplicationData.
  bool mixed = false;
  // Type of the record continued by a Continuation segment.
  std::optional<ContentType> continued_type;
  bool saw_alert = false;
  ScanStatus status = ScanStatus::Ok;

  void clear();
};

/// Scans the next in-order bytes of one direction. `out` is overwritten.
void scan_segment(RecordCursor& cursor, ByteSpan payload, ScanResult& out);

inline ScanResult scan_segment(RecordCursor& cursor, ByteSpan payload) {
  ScanResult r;
  scan_segment(cursor, payload, r);
  return r;
}

class MalformedMessage : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClientHelloSummary {
  std::uint8_t session_id_len = 0;
  std::uint16_t cipher_suites_count = 0;
  std::uint32_t extensions_total_len = 0;
  std::optional<std::string> sni;

  bool operator==(const ClientHelloSummary&) const = default;
};

struct ServerHelloSummary {
  std::uint8_t session_id_len = 0;
  std::uint16_t chosen_cipher_suite = 0;
  std::uint32_t extensions_total_len = 0;

  bool operator==(const ServerHelloSummary&) const = default;
};

namespace handshake_type {
inline constexpr std::uint8_t kClientHello = 1;
inline constexpr std::uint8_t kServerHello = 2;
}  // namespace handshake_type

/// `body` starts at the handshake header (type 1, 3-byte length). Throws
/// MalformedMessage when lengths disagree with the available bytes.
ClientHelloSummary parse_client_hello(ByteSpan body);

/// `body` starts at the handshake header (type 2). Throws MalformedMessage.
ServerHelloSummary parse_server_hello(ByteSpan body);

/// Lowercases and strips one trailing dot.
std::string normalize_sni(std::string_view host);

}  // namespace earlyid::tls
