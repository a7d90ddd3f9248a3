#include "earlyid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "earlyid/tls_wire.hpp"

namespace earlyid {

namespace {

constexpr std::uint16_t kServerPort = 443;
constexpr std::size_t kMss = 1448;
constexpr std::uint16_t kPaddingExtension = 0x0015;

void put_bytes(Bytes& out, ByteSpan b) { out.insert(out.end(), b.begin(), b.end()); }

void put_random(Bytes& out, std::size_t n, Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(rng.next()));
}

void set_u16(Bytes& b, std::size_t at, std::uint16_t v) {
  b[at] = static_cast<std::uint8_t>(v >> 8);
  b[at + 1] = static_cast<std::uint8_t>(v);
}

// Appends a padding extension bringing the extension block to exactly `target`
// bytes when at least 4 bytes remain.
void pad_extensions(Bytes& ext, std::size_t target) {
  if (ext.size() + 4 > target) return;
  const std::size_t n = target - ext.size() - 4;
  put_u16(ext, kPaddingExtension);
  put_u16(ext, static_cast<std::uint16_t>(n));
  ext.insert(ext.end(), n, 0);
}

Bytes handshake_message(std::uint8_t type, const Bytes& body) {
  Bytes out;
  put_u8(out, type);
  put_u24(out, static_cast<std::uint32_t>(body.size()));
  put_bytes(out, body);
  return out;
}

}  // namespace

Bytes build_record(std::uint8_t content_type, ByteSpan body) {
  Bytes out;
  put_u8(out, content_type);
  put_u16(out, 0x0303);
  put_u16(out, static_cast<std::uint16_t>(body.size()));
  put_bytes(out, body);
  return out;
}

Bytes build_client_hello(const ClientHelloParams& p, Rng& rng) {
  if (p.session_id_len > 32) throw SpecInvalid("session id longer than 32 bytes");
  if (p.cipher_suites_count == 0 || p.cipher_suites_count > 32767) {
    throw SpecInvalid("cipher suite count out of range");
  }
  Bytes body;
  put_u16(body, 0x0303);
  put_random(body, 32, rng);
  put_u8(body, p.session_id_len);
  put_random(body, p.session_id_len, rng);
  put_u16(body, static_cast<std::uint16_t>(2 * p.cipher_suites_count));
  for (std::uint16_t i = 0; i < p.cipher_suites_count; ++i) {
    put_u16(body, static_cast<std::uint16_t>(0xc000 + i));
  }
  put_u8(body, 1);  // compression methods: null only
  put_u8(body, 0);

  Bytes ext;
  if (!p.sni.empty()) {
    const auto n = static_cast<std::uint16_t>(p.sni.size());
    put_u16(ext, 0x0000);
    put_u16(ext, static_cast<std::uint16_t>(n + 5));
    put_u16(ext, static_cast<std::uint16_t>(n + 3));
    put_u8(ext, 0);  // host_name
    put_u16(ext, n);
    ext.insert(ext.end(), p.sni.begin(), p.sni.end());
  }
  put_u16(ext, 0x000a);  // supported_groups: x25519, secp256r1
  put_u16(ext, 6);
  put_u16(ext, 4);
  put_u16(ext, 0x001d);
  put_u16(ext, 0x0017);
  pad_extensions(ext, p.extensions_len);

  put_u16(body, static_cast<std::uint16_t>(ext.size()));
  put_bytes(body, ext);
  return handshake_message(1, body);
}

Bytes build_server_hello(const ServerHelloParams& p, Rng& rng) {
  if (p.session_id_len > 32) throw SpecInvalid("session id longer than 32 bytes");
  if (p.extensions_len != 0 && p.extensions_len < 4) {
    throw SpecInvalid("server extensions length must be 0 or at least 4");
  }
  Bytes body;
  put_u16(body, 0x0303);
  put_random(body, 32, rng);
  put_u8(body, p.session_id_len);
  put_random(body, p.session_id_len, rng);
  put_u16(body, p.cipher_suite);
  put_u8(body, 0);
  if (p.extensions_len > 0) {
    Bytes ext;
    if (p.extensions_len >= 9) {  // renegotiation_info, then pad the rest
      put_u16(ext, 0xff01);
      put_u16(ext, 1);
      put_u8(ext, 0);
    }
    pad_extensions(ext, p.extensions_len);
    put_u16(body, static_cast<std::uint16_t>(ext.size()));
    put_bytes(body, ext);
  }
  return handshake_message(2, body);
}

void SynthServiceSpec::validate() const {
  auto positive = [&](double v, const char* what) {
    if (!(v > 0) || !std::isfinite(v)) throw SpecInvalid(name + ": " + what + " must be positive");
  };
  if (name.empty()) throw SpecInvalid("service name is empty");
  if (tls::normalize_sni(name) != name) throw SpecInvalid(name + ": name is not a normalized host");
  if (archetype.empty()) throw SpecInvalid(name + ": archetype is empty");
  if (client.session_id_len > 32 || server.session_id_len > 32) {
    throw SpecInvalid(name + ": session id longer than 32 bytes");
  }
  if (client.cipher_suites_count == 0) throw SpecInvalid(name + ": no cipher suites");
  if (server.extensions_len != 0 && server.extensions_len < 4) {
    throw SpecInvalid(name + ": server extensions length must be 0 or at least 4");
  }
  positive(server.certificate_len, "certificate length");
  for (const LogNormalDist* d : {&first_request, &request, &response}) {
    positive(d->mu, "size log-mean");
    positive(d->sigma, "size log-sigma");
  }
  if (appdata_min < 1) throw SpecInvalid(name + ": appdata min must be at least 1");
  if (!(appdata_mean >= appdata_min)) throw SpecInvalid(name + ": appdata mean below min");
  if (appdata_max < appdata_min) throw SpecInvalid(name + ": appdata max below min");
  positive(rtt_mean_micros, "rtt");
  positive(iat_fwd_mean_micros, "forward iat");
  positive(iat_bwd_mean_micros, "backward iat");
}

std::vector<SynthServiceSpec> make_service_specs(unsigned services, unsigned archetypes,
                                                 double difficulty, std::uint64_t seed) {
  if (services == 0 || archetypes == 0) throw SpecInvalid("need at least one service and archetype");
  if (archetypes > 26) throw SpecInvalid("at most 26 archetypes");
  if (!(difficulty >= 0) || !std::isfinite(difficulty)) throw SpecInvalid("difficulty must be >= 0");
  Rng rng(seed);
  const unsigned pairs = services * archetypes;

  // Distinct log-spaced slots for the first request and first response of
  // every (service, archetype) pair, assigned by independent permutations.
  std::vector<std::uint32_t> first_slot(pairs), req_slot(pairs), resp_slot(pairs);
  for (auto* slots : {&first_slot, &req_slot, &resp_slot}) {
    std::iota(slots->begin(), slots->end(), 0u);
    rng.shuffle(std::span<std::uint32_t>(*slots));
  }
  const double lo = std::log(120.0), hi = std::log(1400.0);
  auto center = [&](std::uint32_t slot) {
    return pairs == 1 ? (lo + hi) / 2 : lo + (hi - lo) * slot / (pairs - 1);
  };

  static constexpr std::uint16_t kSuites[] = {0xc02f, 0xc030, 0x1301, 0xc02b, 0x009c,
                                              0xc013, 0x1302, 0xcca8, 0x002f, 0xc014};

  // Which two services share a server handshake differs per archetype, as
  // negotiated parameters depend on the client's offer.
  std::vector<std::vector<std::uint32_t>> pairing(archetypes, std::vector<std::uint32_t>(services));
  for (auto& p : pairing) {
    std::iota(p.begin(), p.end(), 0u);
    rng.shuffle(std::span<std::uint32_t>(p));
  }
  const unsigned groups = (services + 1) / 2;

  std::vector<SynthServiceSpec> specs;
  specs.reserve(pairs);
  for (unsigned a = 0; a < archetypes; ++a) {
    for (unsigned s = 0; s < services; ++s) {
      SynthServiceSpec spec;
      char name[48];
      std::snprintf(name, sizeof name, "svc%03u.example.net", s);
      spec.name = name;
      spec.archetype = std::string("browser-") + static_cast<char>('a' + a);
      spec.server_ip = Ipv4Address::from_octets(100, 64, static_cast<std::uint8_t>(s >> 8),
                                                static_cast<std::uint8_t>(s & 0xff));

      spec.client.session_id_len = a % 2 ? 0 : 32;
      spec.client.cipher_suites_count = static_cast<std::uint16_t>(12 + 5 * a);
      spec.client.extensions_len = static_cast<std::uint16_t>(380 + 90 * a);
      spec.client.extensions_jitter = 16;

      const unsigned group = a * groups + pairing[a][s] / 2;
      spec.server.session_id_len = group % 2 ? 0 : 32;
      spec.server.cipher_suite = kSuites[group % std::size(kSuites)];
      spec.server.extensions_len = static_cast<std::uint16_t>(9 + 4 * (group % 7));
      spec.server.certificate_len = 1800 + 397 * (group % 9);
      spec.server.certificate_jitter = 0;

      const unsigned pair = a * services + s;
      spec.first_request = {center(first_slot[pair]), 0.05 + 0.6 * difficulty};
      spec.request = {center(req_slot[pair]), 0.02 + 0.6 * difficulty};
      spec.response = {center(resp_slot[pair]), 0.02 + 0.6 * difficulty};
      spec.appdata_min = 2;
      spec.appdata_mean = 8;
      spec.appdata_max = 30;
      spec.rtt_mean_micros = 40'000;
      spec.iat_fwd_mean_micros = 30'000 * (1 + 0.3 * a);
      spec.iat_bwd_mean_micros = 10'000 * (1 + 0.3 * a);
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

// ---------------------------------------------------------------------------
// Frame rendering

namespace {

std::uint16_t fold_checksum(std::uint32_t sum) {
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

std::uint32_t sum_words(ByteSpan b, std::uint32_t sum = 0) {
  for (std::size_t i = 0; i + 1 < b.size(); i += 2) sum += (b[i] << 8) | b[i + 1];
  if (b.size() % 2) sum += b.back() << 8;
  return sum;
}

void put_mac(Bytes& f, const Ipv4Address& ip) {
  put_u16(f, 0x0200);
  put_u32(f, ip.value);
}

}  // namespace

Bytes build_tcp_frame(const Endpoint& src, const Endpoint& dst, std::uint32_t seq,
                      std::uint32_t ack, std::uint8_t flags, std::uint16_t ip_id,
                      ByteSpan payload) {
  Bytes f;
  f.reserve(54 + payload.size());
  put_mac(f, dst.ip);
  put_mac(f, src.ip);
  put_u16(f, 0x0800);

  const std::size_t ip = f.size();
  put_u8(f, 0x45);
  put_u8(f, 0);
  put_u16(f, static_cast<std::uint16_t>(40 + payload.size()));
  put_u16(f, ip_id);
  put_u16(f, 0x4000);  // don't fragment
  put_u8(f, 64);
  put_u8(f, 6);
  put_u16(f, 0);
  put_u32(f, src.ip.value);
  put_u32(f, dst.ip.value);
  set_u16(f, ip + 10, fold_checksum(sum_words(ByteSpan(f).subspan(ip, 20))));

  const std::size_t tcp = f.size();
  put_u16(f, src.port);
  put_u16(f, dst.port);
  put_u32(f, seq);
  put_u32(f, (flags & tcp_flags::kAck) ? ack : 0);
  put_u8(f, 0x50);
  put_u8(f, flags);
  put_u16(f, 65535);
  put_u16(f, 0);
  put_u16(f, 0);
  put_bytes(f, payload);
  std::uint32_t pseudo = 0;
  pseudo += src.ip.value >> 16;
  pseudo += src.ip.value & 0xffff;
  pseudo += dst.ip.value >> 16;
  pseudo += dst.ip.value & 0xffff;
  pseudo += 6;
  pseudo += static_cast<std::uint32_t>(20 + payload.size());
  set_u16(f, tcp + 16, fold_checksum(sum_words(ByteSpan(f).subspan(tcp), pseudo)));
  return f;
}

namespace {

struct Frame {
  TimestampMicros ts = 0;
  std::uint32_t flow = 0;
  std::uint32_t order = 0;  // position within the flow
  Bytes bytes;
};

class FlowWriter {
 public:
  FlowWriter(Endpoint client, Endpoint server, std::uint32_t flow, Rng& rng)
      : client_(client), server_(server), flow_(flow) {
    seq_[0] = static_cast<std::uint32_t>(rng.next());
    seq_[1] = static_cast<std::uint32_t>(rng.next());
    ip_id_ = static_cast<std::uint16_t>(rng.next());
  }

  void send(bool from_client, TimestampMicros ts, std::uint8_t flags, ByteSpan payload,
            std::vector<Frame>& out) {
    const int side = from_client ? 0 : 1;
    const Endpoint& src = from_client ? client_ : server_;
    const Endpoint& dst = from_client ? server_ : client_;
    Bytes f = build_tcp_frame(src, dst, seq_[side], seq_[1 - side], flags, ip_id_++, payload);
    seq_[side] += static_cast<std::uint32_t>(payload.size());
    if (flags & (tcp_flags::kSyn | tcp_flags::kFin)) ++seq_[side];
    out.push_back({ts, flow_, order_++, std::move(f)});
  }

  /// Splits a byte stream into MSS-sized segments sent back to back.
  TimestampMicros send_stream(bool from_client, TimestampMicros ts, const Bytes& stream,
                              std::vector<Frame>& out) {
    for (std::size_t at = 0; at < stream.size(); at += kMss) {
      const std::size_t n = std::min(kMss, stream.size() - at);
      send(from_client, ts, tcp_flags::kAck | tcp_flags::kPsh, ByteSpan(stream).subspan(at, n),
           out);
      ts += 50;
    }
    return ts;
  }

 private:
  Endpoint client_;
  Endpoint server_;
  std::uint32_t flow_;
  std::uint32_t seq_[2];
  std::uint16_t ip_id_;
  std::uint32_t order_ = 0;
};

std::size_t draw_size(const LogNormalDist& d, Rng& rng, std::size_t lo, std::size_t hi) {
  const double v = std::round(rng.lognormal(d.mu, d.sigma));
  return static_cast<std::size_t>(std::clamp(v, static_cast<double>(lo), static_cast<double>(hi)));
}

Bytes appdata_payload(std::size_t total, Rng& rng) {
  Bytes body;
  put_random(body, total - tls::kRecordHeaderLen, rng);
  return build_record(static_cast<std::uint8_t>(tls::ContentType::ApplicationData), body);
}

void render_flow(const SynthServiceSpec& spec, Endpoint client, TimestampMicros start,
                 std::uint32_t flow, Rng& rng, std::vector<Frame>& out) {
  const Endpoint server{spec.server_ip, kServerPort};
  FlowWriter w(client, server, flow, rng);
  const double rtt = std::max(1000.0, rng.lognormal(std::log(spec.rtt_mean_micros), 0.3));
  auto half = [&] { return static_cast<TimestampMicros>(rtt / 2 + rng.exponential(200)); };
  constexpr auto kAck = tcp_flags::kAck;
  TimestampMicros t = start;

  w.send(true, t, tcp_flags::kSyn, {}, out);
  t += half();
  w.send(false, t, tcp_flags::kSyn | kAck, {}, out);
  t += half();
  w.send(true, t, kAck, {}, out);

  ClientHelloParams ch;
  ch.sni = spec.name;
  ch.session_id_len = spec.client.session_id_len;
  ch.cipher_suites_count = spec.client.cipher_suites_count;
  ch.extensions_len = static_cast<std::uint16_t>(
      spec.client.extensions_len + rng.below(spec.client.extensions_jitter + 1u));
  t += 100;
  w.send(true, t, kAck | tcp_flags::kPsh,
         build_record(22, build_client_hello(ch, rng)), out);

  ServerHelloParams sh;
  sh.session_id_len = spec.server.session_id_len;
  sh.cipher_suite = spec.server.cipher_suite;
  sh.extensions_len = spec.server.extensions_len;
  Bytes flight = build_record(22, build_server_hello(sh, rng));
  Bytes cert;
  put_random(cert, spec.server.certificate_len + rng.below(spec.server.certificate_jitter + 1u),
             rng);
  const Bytes cert_record = build_record(22, handshake_message(11, cert));
  put_bytes(flight, cert_record);
  put_bytes(flight, build_record(22, handshake_message(14, {})));
  t += half();
  t = w.send_stream(false, t, flight, out);

  Bytes client_finish = build_record(22, [&] {
    Bytes kex;
    put_random(kex, 65, rng);
    return handshake_message(16, kex);
  }());
  put_bytes(client_finish, build_record(20, Bytes{1}));
  Bytes fin_body;
  put_random(fin_body, 40, rng);
  put_bytes(client_finish, build_record(22, fin_body));
  t += half();
  w.send(true, t, kAck | tcp_flags::kPsh, client_finish, out);

  Bytes server_finish = build_record(20, Bytes{1});
  fin_body.clear();
  put_random(fin_body, 40, rng);
  put_bytes(server_finish, build_record(22, fin_body));
  t += half();
  w.send(false, t, kAck | tcp_flags::kPsh, server_finish, out);

  // Application data: the first request, a response, then either direction.
  const double stop = 1.0 / (spec.appdata_mean - spec.appdata_min + 1);
  const std::size_t count =
      std::min<std::uint64_t>(spec.appdata_min + rng.geometric(stop), spec.appdata_max);
  t += half();
  for (std::size_t i = 0; i < count; ++i) {
    bool from_client;
    std::size_t size;
    if (i == 0) {
      from_client = true;
      size = draw_size(spec.first_request, rng, 6, kMss);
    } else {
      from_client = i > 1 && rng.uniform() < 0.5;
      size = draw_size(from_client ? spec.request : spec.response, rng, 6, kMss);
    }
    if (i > 0) {
      t += 1 + static_cast<TimestampMicros>(
                   rng.exponential(from_client ? spec.iat_fwd_mean_micros : spec.iat_bwd_mean_micros));
    }
    w.send(from_client, t, kAck | tcp_flags::kPsh, appdata_payload(size, rng), out);
  }

  t += half();
  w.send(true, t, tcp_flags::kFin | kAck, {}, out);
  t += half();
  w.send(false, t, tcp_flags::kFin | kAck, {}, out);
  t += half();
  w.send(true, t, kAck, {}, out);
}

}  // namespace

SynthTrace synth_generate(const std::vector<SynthServiceSpec>& specs, unsigned flows_per_service,
                          std::uint64_t seed) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& s : specs) {
    s.validate();
    if (!seen.emplace(s.name, s.archetype).second) {
      throw SpecInvalid("duplicate spec " + s.name + " / " + s.archetype);
    }
  }
  const std::size_t total = specs.size() * flows_per_service;
  if (total >= (1u << 24)) throw SpecInvalid("too many flows");

  Rng rng(seed);
  SynthTrace trace;
  std::vector<Frame> frames;
  // Flows start at random offsets over a window that grows with the flow count.
  const double window = 20'000.0 * static_cast<double>(total);
  const TimestampMicros base = 1'600'000'000LL * 1'000'000;
  std::uint32_t flow = 0;
  for (const auto& spec : specs) {
    for (unsigned i = 0; i < flows_per_service; ++i, ++flow) {
      const std::uint32_t host = flow + 1;
      Endpoint client{Ipv4Address::from_octets(10, static_cast<std::uint8_t>(host >> 16),
                                               static_cast<std::uint8_t>(host >> 8),
                                               static_cast<std::uint8_t>(host)),
                      static_cast<std::uint16_t>(1024 + rng.below(64512))};
      const auto start = base + static_cast<TimestampMicros>(rng.uniform() * window);
      render_flow(spec, client, start, flow, rng, frames);
      trace.manifest.add(client.to_string() + "-" + Endpoint{spec.server_ip, kServerPort}.to_string(),
                         spec.name);
    }
  }

  std::vector<std::uint32_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
    const Frame& a = frames[x];
    const Frame& b = frames[y];
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.flow != b.flow) return a.flow < b.flow;
    return a.order < b.order;
  });

  std::ostringstream out;
  PcapWriter writer(out);
  for (auto i : order) writer.write(frames[i].ts, frames[i].bytes);
  const std::string data = std::move(out).str();
  trace.pcap.assign(data.begin(), data.end());
  trace.flows = total;
  trace.packets = frames.size();
  return trace;
}

}  // namespace earlyid
