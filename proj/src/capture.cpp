#include "earlyid/capture.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace earlyid {

namespace {

constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
constexpr std::uint32_t kMagicMicrosSwapped = 0xd4c3b2a1;
constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;
constexpr std::uint32_t kMagicNanosSwapped = 0x4d3cb2a1;
constexpr std::size_t kGlobalHeaderLen = 24;
constexpr std::size_t kRecordHeaderLen = 16;
// Largest record we are willing to allocate for; matches the classic snaplen cap.
constexpr std::uint32_t kMaxRecordLen = 262144;

constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
constexpr std::uint16_t kEtherTypeVlan = 0x8100;
constexpr std::uint8_t kProtoTcp = 6;

std::uint32_t load_le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

std::uint32_t bswap32(std::uint32_t v) {
  return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
}

void store_le32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
  p[2] = static_cast<std::uint8_t>(v >> 16);
  p[3] = static_cast<std::uint8_t>(v >> 24);
}

void store_le16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

// Reads up to n bytes; returns how many were actually read.
std::size_t read_some(std::istream& in, std::uint8_t* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount());
}

// ifstream with a larger buffer than the library default.
class BufferedFile : public std::ifstream {
 public:
  explicit BufferedFile(const std::filesystem::path& path) : buffer_(1 << 20) {
    rdbuf()->pubsetbuf(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    open(path, std::ios::binary);
  }

 private:
  std::vector<char> buffer_;
};

}  // namespace

std::optional<Ipv4Address> Ipv4Address::parse(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 4; ++i) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc{} || octet > 255 || next == p) return std::nullopt;
    value = (value << 8) | octet;
    p = next;
    if (i < 3) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return Ipv4Address{value};
}

std::string Ipv4Address::to_string() const {
  std::string out;
  out.reserve(15);
  for (int shift = 24; shift >= 0; shift -= 8) {
    out += std::to_string((value >> shift) & 0xff);
    if (shift) out += '.';
  }
  return out;
}

PcapReader::PcapReader(std::unique_ptr<std::istream> in) : in_(std::move(in)) {
  std::array<std::uint8_t, kGlobalHeaderLen> hdr{};
  std::size_t got = read_some(*in_, hdr.data(), hdr.size());
  if (got < 4) {
    throw PcapError(PcapError::Kind::TruncatedHeader,
                    "pcap global header truncated (" + std::to_string(got) + " bytes)");
  }
  std::uint32_t magic = load_le32(hdr.data());
  switch (magic) {
    case kMagicMicros: break;
    case kMagicMicrosSwapped: swapped_ = true; break;
    case kMagicNanos: nanos_ = true; break;
    case kMagicNanosSwapped: nanos_ = true; swapped_ = true; break;
    default: {
      std::ostringstream msg;
      msg << "not a pcap file (magic 0x" << std::hex << magic << ")";
      throw PcapError(PcapError::Kind::UnknownMagic, msg.str());
    }
  }
  if (got < kGlobalHeaderLen) {
    throw PcapError(PcapError::Kind::TruncatedHeader,
                    "pcap global header truncated (" + std::to_string(got) + " bytes)");
  }
  snaplen_ = fix(load_le32(hdr.data() + 16));
  link_type_ = fix(load_le32(hdr.data() + 20));
}

PcapReader::~PcapReader() = default;

// Header fields were loaded as little-endian; swap when the file says
// otherwise.
std::uint32_t PcapReader::fix(std::uint32_t v) const { return swapped_ ? bswap32(v) : v; }

std::optional<RawPacket> PcapReader::next_packet() {
  if (finished_) return std::nullopt;
  std::array<std::uint8_t, kRecordHeaderLen> rec{};
  std::size_t got = read_some(*in_, rec.data(), rec.size());
  if (got == 0) {
    finished_ = true;
    return std::nullopt;
  }
  if (got < rec.size()) {
    finished_ = true;
    throw PcapError(PcapError::Kind::TruncatedRecord, "pcap record header truncated");
  }
  std::uint32_t ts_sec = fix(load_le32(rec.data()));
  std::uint32_t ts_frac = fix(load_le32(rec.data() + 4));
  std::uint32_t incl_len = fix(load_le32(rec.data() + 8));
  std::uint32_t orig_len = fix(load_le32(rec.data() + 12));
  if (incl_len > kMaxRecordLen) {
    finished_ = true;
    throw PcapError(PcapError::Kind::OversizedRecord,
                    "pcap record length " + std::to_string(incl_len) + " exceeds limit");
  }

  RawPacket pkt;
  std::int64_t micros = nanos_ ? ts_frac / 1000 : ts_frac;
  pkt.ts_micros = static_cast<std::int64_t>(ts_sec) * 1'000'000 + micros;
  pkt.data.resize(incl_len);
  std::size_t body = incl_len ? read_some(*in_, pkt.data.data(), incl_len) : 0;
  if (body < incl_len) {
    finished_ = true;
    throw PcapError(PcapError::Kind::TruncatedRecord,
                    "pcap record claims " + std::to_string(incl_len) + " bytes, " +
                        std::to_string(body) + " remain");
  }
  pkt.original_len = std::max(orig_len, incl_len);
  return pkt;
}

std::unique_ptr<PcapReader> open_pcap(const std::filesystem::path& path) {
  auto in = std::make_unique<BufferedFile>(path);
  if (!*in) throw PcapError(PcapError::Kind::Io, "cannot open " + path.string());
  return std::make_unique<PcapReader>(std::move(in));
}

std::unique_ptr<PcapReader> open_pcap_bytes(ByteSpan bytes) {
  auto in = std::make_unique<std::istringstream>(
      std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()), std::ios::binary);
  return std::make_unique<PcapReader>(std::move(in));
}

PcapWriter::PcapWriter(std::ostream& out, std::uint32_t link, std::uint32_t snaplen) : out_(out) {
  std::array<std::uint8_t, kGlobalHeaderLen> hdr{};
  store_le32(hdr.data(), kMagicMicros);
  store_le16(hdr.data() + 4, 2);
  store_le16(hdr.data() + 6, 4);
  store_le32(hdr.data() + 16, snaplen);
  store_le32(hdr.data() + 20, link);
  out_.write(reinterpret_cast<const char*>(hdr.data()), hdr.size());
}

void PcapWriter::write(TimestampMicros ts, ByteSpan frame) {
  write(ts, frame, static_cast<std::uint32_t>(frame.size()));
}

void PcapWriter::write(TimestampMicros ts, ByteSpan frame, std::uint32_t original_len) {
  std::array<std::uint8_t, kRecordHeaderLen> rec{};
  store_le32(rec.data(), static_cast<std::uint32_t>(ts / 1'000'000));
  store_le32(rec.data() + 4, static_cast<std::uint32_t>(ts % 1'000'000));
  store_le32(rec.data() + 8, static_cast<std::uint32_t>(frame.size()));
  store_le32(rec.data() + 12, original_len);
  out_.write(reinterpret_cast<const char*>(rec.data()), rec.size());
  out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
  ++records_;
}

std::optional<TcpSegmentView> decode_frame(TimestampMicros ts, ByteSpan frame, std::uint32_t link,
                                           DecodeCounters* counters) {
  DecodeCounters scratch;
  DecodeCounters& c = counters ? *counters : scratch;

  ByteSpan ip;
  if (link == link_type::kEthernet) {
    ByteReader eth(frame);
    if (!eth.skip(12)) {
      ++c.truncated;
      return std::nullopt;
    }
    auto ethertype = eth.u16();
    if (ethertype && *ethertype == kEtherTypeVlan) {
      eth.skip(2);  // TCI
      ethertype = eth.u16();
    }
    if (!ethertype) {
      ++c.truncated;
      return std::nullopt;
    }
    if (*ethertype != kEtherTypeIpv4) {
      ++c.non_ipv4;
      return std::nullopt;
    }
    ip = frame.subspan(eth.position());
  } else if (link == link_type::kRawIp || link == link_type::kRawIpAlt) {
    ip = frame;
  } else {
    ++c.unsupported_link;
    return std::nullopt;
  }

  if (ip.empty()) {
    ++c.truncated;
    return std::nullopt;
  }
  if ((ip[0] >> 4) != 4) {
    ++c.non_ipv4;
    return std::nullopt;
  }
  std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
  if (ihl < 20 || ip.size() < ihl) {
    ++c.truncated;
    return std::nullopt;
  }
  std::size_t total_len = (std::size_t{ip[2]} << 8) | ip[3];
  if (total_len < ihl || total_len > ip.size()) {
    ++c.truncated;
    return std::nullopt;
  }
  std::uint16_t frag = static_cast<std::uint16_t>((ip[6] << 8) | ip[7]);
  bool more_fragments = (frag & 0x2000) != 0;
  if ((frag & 0x1fff) != 0 || more_fragments) {
    ++c.fragments;
    return std::nullopt;
  }
  if (ip[9] != kProtoTcp) {
    ++c.non_tcp;
    return std::nullopt;
  }

  TcpSegmentView seg;
  seg.ts_micros = ts;
  seg.src_ip = Ipv4Address::from_octets(ip[12], ip[13], ip[14], ip[15]);
  seg.dst_ip = Ipv4Address::from_octets(ip[16], ip[17], ip[18], ip[19]);

  // Padding after the IPv4 total length (short Ethernet frames) is ignored.
  ByteSpan tcp = ip.subspan(ihl, total_len - ihl);
  if (tcp.size() < 20) {
    ++c.truncated;
    return std::nullopt;
  }
  std::size_t data_offset = static_cast<std::size_t>(tcp[12] >> 4) * 4;
  if (data_offset < 20 || data_offset > tcp.size()) {
    ++c.truncated;
    return std::nullopt;
  }
  seg.src_port = static_cast<std::uint16_t>((tcp[0] << 8) | tcp[1]);
  seg.dst_port = static_cast<std::uint16_t>((tcp[2] << 8) | tcp[3]);
  seg.seq = (std::uint32_t{tcp[4]} << 24) | (std::uint32_t{tcp[5]} << 16) |
            (std::uint32_t{tcp[6]} << 8) | tcp[7];
  seg.flags = tcp[13] & 0x1f;
  seg.payload = tcp.subspan(data_offset);
  ++c.decoded;
  return seg;
}

}  // namespace earlyid
