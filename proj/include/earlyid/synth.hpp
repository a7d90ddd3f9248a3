#pragma once

// Deterministic synthetic HTTPS traces: per-service handshake profiles and
// application-data distributions rendered as Ethernet/IPv4/TCP frames in a
// classic pcap, plus a flow -> label manifest.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "earlyid/bytes.hpp"
#include "earlyid/pipeline.hpp"
#include "earlyid/rng.hpp"

namespace earlyid {

class SpecInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LogNormalDist {
  double mu = 0;  // of ln(bytes)
  double sigma = 0;
};

struct ClientHandshakeProfile {
  std::uint8_t session_id_len = 32;
  std::uint16_t cipher_suites_count = 16;
  std::uint16_t extensions_len = 400;  // target, padded with the padding extension
  std::uint16_t extensions_jitter = 0;
};

struct ServerHandshakeProfile {
  std::uint8_t session_id_len = 32;
  std::uint16_t cipher_suite = 0xc02f;
  std::uint16_t extensions_len = 9;
  std::uint32_t certificate_len = 3000;
  std::uint32_t certificate_jitter = 0;
};

struct SynthServiceSpec {
  std::string name;       // SNI and label
  std::string archetype;  // client family
  Ipv4Address server_ip;
  ClientHandshakeProfile client;
  ServerHandshakeProfile server;
  LogNormalDist first_request;  // first application data packet (client)
  LogNormalDist request;        // later client packets
  LogNormalDist response;       // server packets
  unsigned appdata_min = 2;     // application data packets per flow: min + geometric
  double appdata_mean = 8;
  unsigned appdata_max = 30;
  double rtt_mean_micros = 40'000;
  double iat_fwd_mean_micros = 30'000;
  double iat_bwd_mean_micros = 10'000;

  /// Throws SpecInvalid.
  void validate() const;
};

/// `services` x `archetypes` specs. Each (service, archetype) pair gets its own
/// size slots for the first request, later requests and responses;
/// `difficulty` widens the slots until they overlap.
/// Server handshakes are shared by pairs of services and client handshakes by
/// archetype, so the handshake alone is ambiguous.
std::vector<SynthServiceSpec> make_service_specs(unsigned services, unsigned archetypes,
                                                 double difficulty, std::uint64_t seed);

struct SynthTrace {
  Bytes pcap;
  Manifest manifest;
  std::size_t flows = 0;
  std::size_t packets = 0;
};

/// Renders `flows_per_service` flows per spec, interleaved by timestamp.
SynthTrace synth_generate(const std::vector<SynthServiceSpec>& specs, unsigned flows_per_service,
                          std::uint64_t seed);

// Message builders, exposed for tests. Both return a handshake message
// starting at its 4-byte handshake header.

struct ClientHelloParams {
  std::string sni;
  std::uint8_t session_id_len = 32;
  std::uint16_t cipher_suites_count = 16;
  std::uint16_t extensions_len = 0;  // raised to the minimum when too small
};

struct ServerHelloParams {
  std::uint8_t session_id_len = 32;
  std::uint16_t cipher_suite = 0xc02f;
  std::uint16_t extensions_len = 0;  // 0, or >= 4
};

Bytes build_client_hello(const ClientHelloParams& params, Rng& rng);
Bytes build_server_hello(const ServerHelloParams& params, Rng& rng);
/// One TLS 1.2 record around `body`.
Bytes build_record(std::uint8_t content_type, ByteSpan body);

/// Ethernet + IPv4 (DF) + 20-byte TCP header around `payload`, checksums
/// filled in. MACs are derived from the IPs; `ack` is only written with ACK set.
Bytes build_tcp_frame(const Endpoint& src, const Endpoint& dst, std::uint32_t seq,
                      std::uint32_t ack, std::uint8_t flags, std::uint16_t ip_id,
                      ByteSpan payload);

}  // namespace earlyid
