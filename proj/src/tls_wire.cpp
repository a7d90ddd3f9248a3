#include "earlyid/tls_wire.hpp"

#include <algorithm>

namespace earlyid::tls {

void ScanResult::clear() {
  events.clear();
  chunks.clear();
  phase = SegmentPhase::Continuation;
  mixed = false;
  continued_type.reset();
  saw_alert = false;
  status = ScanStatus::Ok;
}

void scan_segment(RecordCursor& cursor, ByteSpan payload, ScanResult& out) {
  out.clear();
  if (cursor.failed) {
    out.status = ScanStatus::MalformedRecord;
    return;
  }

  bool any_appdata = false;
  bool any_other = false;
  bool header_begins_here = false;

  auto attribute = [&](ContentType type, std::size_t offset, std::size_t length, bool header) {
    if (length == 0) return;
    out.chunks.push_back({type, offset, length, header});
    if (type == ContentType::ApplicationData) {
      any_appdata = true;
    } else {
      any_other = true;
      if (type == ContentType::Alert) out.saw_alert = true;
    }
  };

  const std::size_t n = payload.size();
  std::size_t pos = 0;
  while (pos < n) {
    if (cursor.bytes_remaining_in_record > 0) {
      std::size_t take = std::min<std::size_t>(cursor.bytes_remaining_in_record, n - pos);
      if (pos == 0) out.continued_type = cursor.current_content_type;
      attribute(*cursor.current_content_type, pos, take, false);
      pos += take;
      cursor.bytes_remaining_in_record -= static_cast<std::uint32_t>(take);
      if (cursor.bytes_remaining_in_record == 0) cursor.current_content_type.reset();
      continue;
    }

    if (cursor.stash_len == 0) {
      header_begins_here = true;
    } else if (pos == 0) {
      out.continued_type = static_cast<ContentType>(cursor.header_stash[0]);
    }
    std::size_t take = std::min<std::size_t>(kRecordHeaderLen - cursor.stash_len, n - pos);
    std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(pos), take,
                cursor.header_stash.begin() + cursor.stash_len);
    std::uint8_t type_byte = cursor.header_stash[0];
    if (!is_known_content_type(type_byte)) {
      cursor.failed = true;
      out.status = ScanStatus::MalformedRecord;
      return;
    }
    auto type = static_cast<ContentType>(type_byte);
    attribute(type, pos, take, true);
    pos += take;
    cursor.stash_len = static_cast<std::uint8_t>(cursor.stash_len + take);
    if (cursor.stash_len < kRecordHeaderLen) break;

    std::uint16_t declared =
        static_cast<std::uint16_t>((cursor.header_stash[3] << 8) | cursor.header_stash[4]);
    if (declared > kMaxRecordLen) {
      cursor.failed = true;
      out.status = ScanStatus::MalformedRecord;
      return;
    }
    RecordEvent ev;
    ev.content_type = type;
    ev.version_major = cursor.header_stash[1];
    ev.version_minor = cursor.header_stash[2];
    ev.declared_len = declared;
    ev.header_offset = static_cast<std::ptrdiff_t>(pos) - static_cast<std::ptrdiff_t>(kRecordHeaderLen);
    ev.body_offset = pos;
    ev.body_bytes_in_segment = std::min<std::size_t>(declared, n - pos);
    out.events.push_back(ev);

    cursor.stash_len = 0;
    cursor.bytes_remaining_in_record = declared;
    if (declared > 0) {
      cursor.current_content_type = type;
    } else {
      cursor.current_content_type.reset();
    }
  }

  if (any_appdata) {
    out.phase = SegmentPhase::ApplicationData;
    out.mixed = any_other;
  } else if (header_begins_here) {
    out.phase = SegmentPhase::Handshake;
  } else {
    out.phase = SegmentPhase::Continuation;
  }
}

std::string normalize_sni(std::string_view host) {
  std::string out(host);
  for (char& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  if (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

namespace {

[[noreturn]] void malformed(const char* what) { throw MalformedMessage(what); }

// Opens the handshake framing and returns a reader limited to the message.
ByteReader open_message(ByteSpan body, std::uint8_t expected_type, const char* name) {
  ByteReader r(body);
  auto type = r.u8();
  if (!type) malformed("handshake header truncated");
  if (*type != expected_type) throw MalformedMessage(std::string("not a ") + name);
  auto len = r.u24();
  if (!len) malformed("handshake header truncated");
  auto msg = r.take(*len);
  if (!msg) malformed("handshake length exceeds available bytes");
  return ByteReader(*msg);
}

// A host name we are willing to use as a label: printable, no separators.
bool usable_host_name(ByteSpan name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(),
                     [](std::uint8_t b) { return b > 0x20 && b < 0x7f && b != ','; });
}

std::optional<std::string> parse_server_name(ByteSpan ext) {
  ByteReader r(ext);
  auto list_len = r.u16();
  if (!list_len) malformed("server_name list truncated");
  auto list = r.take(*list_len);
  if (!list || !r.empty()) malformed("server_name list length mismatch");
  ByteReader entries(*list);
  while (!entries.empty()) {
    auto name_type = entries.u8();
    auto name_len = entries.u16();
    if (!name_type || !name_len) malformed("server_name entry truncated");
    auto name = entries.take(*name_len);
    if (!name) malformed("server_name entry overruns list");
    if (*name_type == 0) {
      if (!usable_host_name(*name)) return std::nullopt;
      std::string_view text(reinterpret_cast<const char*>(name->data()), name->size());
      std::string host = normalize_sni(text);
      if (host.empty()) return std::nullopt;
      return host;
    }
  }
  return std::nullopt;
}

// Reads an optional extensions block at the end of a hello message. Calls
// `visit(type, data)` for each extension.
template <typename Visit>
std::uint32_t read_extensions(ByteReader& m, Visit&& visit) {
  if (m.empty()) return 0;
  auto ext_len = m.u16();
  if (!ext_len) malformed("extensions length truncated");
  auto block = m.take(*ext_len);
  if (!block) malformed("extensions block overruns message");
  if (!m.empty()) malformed("trailing bytes after extensions");
  ByteReader exts(*block);
  while (!exts.empty()) {
    auto type = exts.u16();
    auto len = exts.u16();
    if (!type || !len) malformed("extension header truncated");
    auto data = exts.take(*len);
    if (!data) malformed("extension overruns block");
    visit(*type, *data);
  }
  return *ext_len;
}

}  // namespace

ClientHelloSummary parse_client_hello(ByteSpan body) {
  ByteReader m = open_message(body, handshake_type::kClientHello, "ClientHello");
  ClientHelloSummary out;
  if (!m.u16() || !m.skip(32)) malformed("ClientHello truncated before session id");
  auto sid_len = m.u8();
  if (!sid_len) malformed("ClientHello truncated at session id");
  if (*sid_len > 32) malformed("session id longer than 32 bytes");
  if (!m.skip(*sid_len)) malformed("session id overruns message");
  out.session_id_len = *sid_len;

  auto cs_len = m.u16();
  if (!cs_len) malformed("ClientHello truncated at cipher suites");
  if (*cs_len < 2 || (*cs_len % 2) != 0) malformed("bad cipher suites length");
  if (!m.skip(*cs_len)) malformed("cipher suites overrun message");
  out.cipher_suites_count = static_cast<std::uint16_t>(*cs_len / 2);

  auto comp_len = m.u8();
  if (!comp_len || !m.skip(*comp_len)) malformed("compression methods truncated");

  out.extensions_total_len = read_extensions(m, [&](std::uint16_t type, ByteSpan data) {
    if (type == 0 && !out.sni) out.sni = parse_server_name(data);
  });
  return out;
}

ServerHelloSummary parse_server_hello(ByteSpan body) {
  ByteReader m = open_message(body, handshake_type::kServerHello, "ServerHello");
  ServerHelloSummary out;
  if (!m.u16() || !m.skip(32)) malformed("ServerHello truncated before session id");
  auto sid_len = m.u8();
  if (!sid_len) malformed("ServerHello truncated at session id");
  if (*sid_len > 32) malformed("session id longer than 32 bytes");
  if (!m.skip(*sid_len)) malformed("session id overruns message");
  out.session_id_len = *sid_len;

  auto suite = m.u16();
  if (!suite) malformed("ServerHello truncated at cipher suite");
  out.chosen_cipher_suite = *suite;
  if (!m.u8()) malformed("ServerHello truncated at compression method");

  out.extensions_total_len = read_extensions(m, [](std::uint16_t, ByteSpan) {});
  return out;
}

}  // namespace earlyid::tls
