#pragma once

// Shared test helpers: a hand-rolled frame encoder, a random TLS flow
// generator that records the phase of every packet it emits, and a batch
// feature oracle written independently of the features module.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "earlyid/capture.hpp"
#include "earlyid/features.hpp"
#include "earlyid/reassembly.hpp"
#include "earlyid/rng.hpp"
#include "earlyid/synth.hpp"
#include "earlyid/tls_wire.hpp"

namespace earlyid::testing {

inline void append(Bytes& out, ByteSpan b) { out.insert(out.end(), b.begin(), b.end()); }

inline Bytes bytes_of(std::initializer_list<int> v) {
  Bytes out;
  for (int b : v) out.push_back(static_cast<std::uint8_t>(b));
  return out;
}

// IPv4 header (no options, checksum left zero) + 20-byte TCP header + payload.
inline Bytes ipv4_tcp(Ipv4Address src, Ipv4Address dst, std::uint16_t sport, std::uint16_t dport,
                      std::uint32_t seq, std::uint8_t flags, ByteSpan payload,
                      std::uint16_t frag_field = 0x4000, std::uint8_t proto = 6) {
  Bytes p;
  put_u8(p, 0x45);
  put_u8(p, 0);
  put_u16(p, static_cast<std::uint16_t>(40 + payload.size()));
  put_u16(p, 1);
  put_u16(p, frag_field);
  put_u8(p, 64);
  put_u8(p, proto);
  put_u16(p, 0);
  put_u32(p, src.value);
  put_u32(p, dst.value);
  put_u16(p, sport);
  put_u16(p, dport);
  put_u32(p, seq);
  put_u32(p, 0);
  put_u8(p, 0x50);
  put_u8(p, flags);
  put_u16(p, 8192);
  put_u16(p, 0);
  put_u16(p, 0);
  append(p, payload);
  return p;
}

inline Bytes ethernet(std::uint16_t ethertype, ByteSpan l3, bool vlan = false) {
  Bytes f = bytes_of({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  if (vlan) {
    put_u16(f, 0x8100);
    put_u16(f, 42);
  }
  put_u16(f, ethertype);
  append(f, l3);
  return f;
}

// Global header + records, little-endian microsecond format unless told otherwise.
struct PcapRecord {
  std::uint32_t sec = 0;
  std::uint32_t frac = 0;
  Bytes data;
};

inline Bytes pcap_file(const std::vector<PcapRecord>& records, bool swapped = false,
                       bool nanos = false, std::uint32_t link = 1) {
  Bytes out;
  auto u32 = [&](std::uint32_t v) {
    if (swapped) {
      put_u32(out, v);
    } else {
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  };
  auto u16 = [&](std::uint16_t v) {
    if (swapped) {
      put_u16(out, v);
    } else {
      out.push_back(static_cast<std::uint8_t>(v));
      out.push_back(static_cast<std::uint8_t>(v >> 8));
    }
  };
  u32(nanos ? 0xa1b23c4d : 0xa1b2c3d4);
  u16(2);
  u16(4);
  u32(0);
  u32(0);
  u32(65535);
  u32(link);
  for (const PcapRecord& r : records) {
    u32(r.sec);
    u32(r.frac);
    u32(static_cast<std::uint32_t>(r.data.size()));
    u32(static_cast<std::uint32_t>(r.data.size()));
    append(out, r.data);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segments and random flows

struct Seg {
  TimestampMicros ts = 0;
  Endpoint src;
  Endpoint dst;
  std::uint32_t seq = 0;
  std::uint8_t flags = 0;
  Bytes payload;

  TcpSegmentView view() const {
    TcpSegmentView v;
    v.ts_micros = ts;
    v.src_ip = src.ip;
    v.dst_ip = dst.ip;
    v.src_port = src.port;
    v.dst_port = dst.port;
    v.seq = seq;
    v.flags = flags;
    v.payload = payload;
    return v;
  }
};

enum class Kind { Control, Handshake, AppData, Ignored };

struct GenPacket {
  TimestampMicros ts = 0;
  bool forward = true;
  std::uint32_t len = 0;
  Kind kind = Kind::Control;
};

struct GenFlow {
  Endpoint client;
  Endpoint server;
  std::vector<Seg> segs;
  std::vector<Kind> kinds;  // parallel to segs
  tls::ClientHelloSummary ch;
  tls::ServerHelloSummary sh;

  std::vector<GenPacket> packets() const {
    std::vector<GenPacket> out;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (kinds[i] == Kind::Control) continue;
      out.push_back({segs[i].ts, segs[i].src == client,
                     static_cast<std::uint32_t>(segs[i].payload.size()), kinds[i]});
    }
    return out;
  }
  std::size_t appdata_count() const {
    return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), Kind::AppData));
  }
};

struct GenOptions {
  unsigned min_appdata = 1;
  unsigned max_appdata = 16;
  bool close = true;
};

// Expected ClientHello extension block size for the synth builder.
inline std::uint32_t expected_client_extensions(const std::string& sni, std::uint16_t target) {
  const std::uint32_t base = (sni.empty() ? 0u : 9u + static_cast<std::uint32_t>(sni.size())) + 10;
  return target >= base + 4 ? target : base;
}

inline GenFlow random_flow(Rng& rng, Endpoint client, Endpoint server, TimestampMicros t,
                           const GenOptions& opt = {}) {
  GenFlow f;
  f.client = client;
  f.server = server;
  std::uint32_t seq[2] = {static_cast<std::uint32_t>(rng.next()),
                          static_cast<std::uint32_t>(rng.next())};
  bool data_seen = false;

  auto emit = [&](bool from_client, std::uint8_t flags, Bytes payload, Kind kind) {
    const int side = from_client ? 0 : 1;
    if (kind == Kind::Handshake && data_seen) kind = Kind::Ignored;
    if (kind == Kind::AppData) data_seen = true;
    if (payload.empty()) kind = Kind::Control;
    Seg s{t, from_client ? client : server, from_client ? server : client, seq[side], flags,
          std::move(payload)};
    seq[side] += static_cast<std::uint32_t>(s.payload.size());
    if (flags & (tcp_flags::kSyn | tcp_flags::kFin)) ++seq[side];
    f.segs.push_back(std::move(s));
    f.kinds.push_back(kind);
    t += rng.below(4) == 0 ? 0 : 1 + static_cast<TimestampMicros>(rng.exponential(5000));
  };
  // Splits `stream` into random-sized segments of one kind.
  auto emit_stream = [&](bool from_client, const Bytes& stream, Kind kind, std::size_t lo,
                         std::size_t hi) {
    for (std::size_t at = 0; at < stream.size();) {
      const std::size_t n = std::min(stream.size() - at, lo + rng.below(hi - lo + 1));
      emit(from_client, tcp_flags::kAck | tcp_flags::kPsh,
           Bytes(stream.begin() + static_cast<std::ptrdiff_t>(at),
                 stream.begin() + static_cast<std::ptrdiff_t>(at + n)),
           kind);
      at += n;
    }
  };
  auto random_bytes = [&](std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng.next());
    return b;
  };
  auto appdata_record = [&] {
    return build_record(23, random_bytes(1 + rng.below(1400)));
  };

  emit(true, tcp_flags::kSyn, {}, Kind::Control);
  emit(false, tcp_flags::kSyn | tcp_flags::kAck, {}, Kind::Control);
  emit(true, tcp_flags::kAck, {}, Kind::Control);

  ClientHelloParams chp;
  chp.sni = rng.below(5) == 0 ? "" : "host" + std::to_string(rng.below(1000)) + ".test";
  chp.session_id_len = static_cast<std::uint8_t>(rng.below(2) ? 32 : rng.below(33));
  chp.cipher_suites_count = static_cast<std::uint16_t>(1 + rng.below(40));
  chp.extensions_len = static_cast<std::uint16_t>(rng.below(700));
  f.ch = {chp.session_id_len, chp.cipher_suites_count,
          expected_client_extensions(chp.sni, chp.extensions_len),
          chp.sni.empty() ? std::nullopt : std::optional<std::string>(chp.sni)};
  emit_stream(true, build_record(22, build_client_hello(chp, rng)), Kind::Handshake, 60, 1448);

  ServerHelloParams shp;
  shp.session_id_len = static_cast<std::uint8_t>(rng.below(2) ? 32 : 0);
  shp.cipher_suite = static_cast<std::uint16_t>(rng.below(65536));
  const std::uint64_t ext_choice = rng.below(3);
  shp.extensions_len =
      static_cast<std::uint16_t>(ext_choice == 0 ? 0 : ext_choice == 1 ? 4 + rng.below(5)
                                                                       : 9 + rng.below(60));
  f.sh = {shp.session_id_len, shp.cipher_suite, shp.extensions_len};
  Bytes flight = build_record(22, build_server_hello(shp, rng));
  Bytes cert{11};
  const std::size_t cert_len = 200 + rng.below(4000);
  put_u24(cert, static_cast<std::uint32_t>(cert_len));
  append(cert, random_bytes(cert_len));
  append(flight, build_record(22, cert));
  append(flight, build_record(22, bytes_of({14, 0, 0, 0})));
  emit_stream(false, flight, Kind::Handshake, 100, 1448);

  Bytes finish = build_record(22, random_bytes(70));
  append(finish, build_record(20, bytes_of({1})));
  append(finish, build_record(22, random_bytes(40)));
  unsigned data_left = opt.min_appdata + static_cast<unsigned>(
                                             rng.below(opt.max_appdata - opt.min_appdata + 1));
  if (data_left > 0 && rng.below(5) == 0) {
    // Finished and the first request in one segment.
    append(finish, appdata_record());
    emit(true, tcp_flags::kAck | tcp_flags::kPsh, finish, Kind::AppData);
    --data_left;
  } else {
    emit(true, tcp_flags::kAck | tcp_flags::kPsh, finish, Kind::Handshake);
  }
  Bytes server_finish = build_record(20, bytes_of({1}));
  append(server_finish, build_record(22, random_bytes(40)));
  emit(false, tcp_flags::kAck | tcp_flags::kPsh, server_finish, Kind::Handshake);

  while (data_left > 0) {
    const bool from_client = rng.below(3) == 0;
    const std::uint64_t shape = rng.below(10);
    if (shape == 0 && data_left >= 2) {
      // One record split over two segments.
      emit_stream(from_client, appdata_record(), Kind::AppData, 1, 700);
      data_left -= std::min<unsigned>(data_left, 1);
      continue;
    }
    Bytes seg = appdata_record();
    if (shape == 1) append(seg, appdata_record());
    emit(from_client, tcp_flags::kAck | tcp_flags::kPsh, seg, Kind::AppData);
    --data_left;
  }
  if (rng.below(20) == 0) {
    emit(false, tcp_flags::kAck | tcp_flags::kPsh, build_record(21, bytes_of({1, 0})),
         Kind::Handshake);
  }
  if (opt.close) {
    emit(true, tcp_flags::kFin | tcp_flags::kAck, {}, Kind::Control);
    emit(false, tcp_flags::kFin | tcp_flags::kAck, {}, Kind::Control);
    emit(true, tcp_flags::kAck, {}, Kind::Control);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Batch oracle

// Smallest value v with at least p% of the values <= v.
inline double oracle_percentile(const std::vector<double>& v, unsigned p) {
  double best = 0;
  bool found = false;
  for (double x : v) {
    std::size_t at_most = 0;
    for (double y : v) at_most += y <= x;
    if (100 * at_most >= p * v.size() && (!found || x < best)) {
      best = x;
      found = true;
    }
  }
  return best;
}

inline void oracle_sizes(const std::vector<double>& v, double* out) {
  if (v.empty()) {
    std::fill(out, out + 6, 0.0);
    return;
  }
  long double sum = 0;
  for (double x : v) sum += x;
  const double mean = static_cast<double>(sum / v.size());
  long double sq = 0;
  for (double x : v) sq += (x - sum / v.size()) * (x - sum / v.size());
  out[0] = mean;
  out[1] = oracle_percentile(v, 25);
  out[2] = oracle_percentile(v, 50);
  out[3] = oracle_percentile(v, 75);
  out[4] = static_cast<double>(sq / v.size());
  out[5] = *std::max_element(v.begin(), v.end());
}

inline FeatureVector oracle_features(const std::vector<GenPacket>& packets,
                                     const tls::ClientHelloSummary& ch,
                                     const tls::ServerHelloSummary& sh, unsigned d) {
  std::vector<double> sizes[2], app[2];
  std::vector<TimestampMicros> times[2];
  unsigned used = 0;
  for (const GenPacket& p : packets) {
    const int dir = p.forward ? 0 : 1;
    if (p.kind == Kind::AppData) {
      if (used == d) continue;
      ++used;
      app[dir].push_back(p.len);
    } else if (p.kind != Kind::Handshake) {
      continue;
    }
    sizes[dir].push_back(p.len);
    times[dir].push_back(p.ts);
  }
  FeatureVector fv{};
  for (int dir = 0; dir < 2; ++dir) {
    double* common = fv.data() + (dir == 0 ? 0 : 9);
    oracle_sizes(sizes[dir], common);
    std::vector<double> gaps;
    std::sort(times[dir].begin(), times[dir].end());
    for (std::size_t i = 1; i < times[dir].size(); ++i) {
      gaps.push_back(static_cast<double>(times[dir][i] - times[dir][i - 1]));
    }
    if (!gaps.empty()) {
      common[6] = oracle_percentile(gaps, 25);
      common[7] = oracle_percentile(gaps, 50);
      common[8] = oracle_percentile(gaps, 75);
    }
    oracle_sizes(app[dir], fv.data() + (dir == 0 ? 24 : 30));
  }
  fv[18] = ch.session_id_len;
  fv[19] = ch.cipher_suites_count;
  fv[20] = ch.extensions_total_len;
  fv[21] = sh.session_id_len;
  fv[22] = sh.chosen_cipher_suite;
  fv[23] = sh.extensions_total_len;
  return fv;
}

// Indices of the mean and variance columns; everything else is an integer.
inline bool oracle_is_real(std::size_t i) {
  for (std::size_t base : {0u, 9u, 24u, 30u}) {
    if (i == base || i == base + 4) return true;
  }
  return false;
}

inline bool close_rel(double a, double b, double rel) {
  return std::fabs(a - b) <= rel * std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Feature vectors equal: integers exactly, means and variances within `rel`.
inline bool features_match(const FeatureVector& got, const FeatureVector& want, double rel,
                           std::size_t* bad = nullptr) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const bool ok = oracle_is_real(i) ? close_rel(got[i], want[i], rel) : got[i] == want[i];
    if (!ok) {
      if (bad) *bad = i;
      return false;
    }
  }
  return true;
}

// Random merge of several segment lists, preserving each list's order.
inline std::vector<const Seg*> interleave(const std::vector<std::vector<Seg>>& lists, Rng& rng) {
  std::vector<std::size_t> pos(lists.size(), 0);
  std::vector<const Seg*> out;
  std::size_t left = 0;
  for (const auto& l : lists) left += l.size();
  while (left > 0) {
    std::size_t pick = rng.below(lists.size());
    while (pos[pick] == lists[pick].size()) pick = (pick + 1) % lists.size();
    out.push_back(&lists[pick][pos[pick]++]);
    --left;
  }
  return out;
}

inline Endpoint endpoint(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d,
                         std::uint16_t port) {
  return {Ipv4Address::from_octets(a, b, c, d), port};
}

}  // namespace earlyid::testing
