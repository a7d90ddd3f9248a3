#include "earlyid/reassembly.hpp"

#include <algorithm>

namespace earlyid {

namespace {

// A handshake message we are still collecting may not grow past this; the
// largest ClientHello/ServerHello we care about is far smaller.
constexpr std::size_t kMaxHandshakeBuffer = 1 << 17;

void release_buffers(DirectionState& side) {
  side.reorder.clear();
  side.reorder.shrink_to_fit();
  side.handshake_buffer.clear();
  side.handshake_buffer.shrink_to_fit();
}

}  // namespace

const char* to_string(ReadyReason r) {
  switch (r) {
    case ReadyReason::Threshold: return "threshold";
    case ReadyReason::Fin: return "fin";
    case ReadyReason::Rst: return "rst";
    case ReadyReason::Evicted: return "evicted";
    case ReadyReason::EndOfCapture: return "end_of_capture";
  }
  return "unknown";
}

FlowTable::FlowTable(FlowTableConfig config) : config_(config) {}

std::optional<FlowReadyEvent> FlowTable::ingest(const TcpSegmentView& seg, unsigned d_threshold) {
  ++counters_.segments;
  const FlowKey key = FlowKey::from_segment(seg);
  FlowState& flow = *touch(seg, key);
  flow.last_activity = seg.ts_micros;
  const Endpoint src{seg.src_ip, seg.src_port};

  std::optional<FlowReadyEvent> event;
  const bool finished = flow.phase == FlowPhase::Ready || flow.phase == FlowPhase::Invalid;
  if (!finished) {
    DirectionState& side = flow.sender(src);
    if (seg.has(tcp_flags::kSyn) && !side.next_seq) side.next_seq = seg.seq + 1;
    if (!seg.payload.empty()) event = sequence(flow, src, seg, d_threshold);
  } else if (!seg.payload.empty()) {
    ++counters_.segments_dropped;
  }

  if (seg.has(tcp_flags::kRst)) {
    flow.terminated = true;
    if (!event) event = finish(flow, ReadyReason::Rst, seg.ts_micros);
  } else if (seg.has(tcp_flags::kFin)) {
    flow.sender(src).fin = true;
    if (flow.sent_by_a.fin && flow.sent_by_b.fin) {
      flow.terminated = true;
      if (!event) event = finish(flow, ReadyReason::Fin, seg.ts_micros);
    }
  }
  return event;
}

FlowTable::Recency::iterator FlowTable::touch(const TcpSegmentView& seg, const FlowKey& key) {
  auto found = index_.find(key);
  if (found == index_.end()) return create(seg, key);
  auto it = found->second;
  // A fresh SYN on a closed connection's 4-tuple starts a new flow.
  if (it->terminated && seg.has(tcp_flags::kSyn) && !seg.has(tcp_flags::kAck)) {
    erase(it);
    return create(seg, key);
  }
  if (it != recency_.begin()) recency_.splice(recency_.begin(), recency_, it);
  return it;
}

FlowTable::Recency::iterator FlowTable::create(const TcpSegmentView& seg, const FlowKey& key) {
  recency_.emplace_front();
  FlowState& flow = recency_.front();
  flow.key = key;
  flow.initiator = Endpoint{seg.src_ip, seg.src_port};
  flow.first_seen = seg.ts_micros;
  flow.last_activity = seg.ts_micros;
  index_.emplace(key, recency_.begin());
  ++counters_.created;
  peak_size_ = std::max(peak_size_, index_.size());
  return recency_.begin();
}

void FlowTable::erase(Recency::iterator it) {
  index_.erase(it->key);
  recency_.erase(it);
}

std::optional<FlowReadyEvent> FlowTable::sequence(FlowState& flow, const Endpoint& sender,
                                                  const TcpSegmentView& seg,
                                                  unsigned d_threshold) {
  DirectionState& side = flow.sender(sender);
  if (!side.next_seq) side.next_seq = seg.seq;  // picked up mid-stream
  const std::uint32_t expected = *side.next_seq;
  ByteSpan bytes = seg.payload;

  if (seq_after(seg.seq, expected)) {
    if (side.reorder.size() >= config_.reorder_limit) {
      ++counters_.reorder_overflow;
      mark_invalid(flow, InvalidReason::ReorderOverflow);
      return std::nullopt;
    }
    side.reorder.push_back({seg.seq, seg.ts_micros, Bytes(bytes.begin(), bytes.end())});
    return std::nullopt;
  }
  if (seg.seq != expected) {
    const std::uint32_t end = seg.seq + static_cast<std::uint32_t>(bytes.size());
    if (!seq_after(end, expected)) {
      ++counters_.segments_dropped;
      return std::nullopt;
    }
    const std::uint32_t overlap = expected - seg.seq;
    counters_.bytes_trimmed += overlap;
    bytes = bytes.subspan(overlap);
  }

  side.next_seq = expected + static_cast<std::uint32_t>(bytes.size());
  auto event = deliver(flow, sender, seg.ts_micros, bytes, d_threshold);

  // Drain held segments that have become contiguous.
  while (!event && flow.phase != FlowPhase::Invalid && !side.reorder.empty()) {
    const std::uint32_t next = *side.next_seq;
    auto it = std::find_if(side.reorder.begin(), side.reorder.end(),
                           [next](const HeldSegment& h) { return !seq_after(h.seq, next); });
    if (it == side.reorder.end()) break;
    HeldSegment held = std::move(*it);
    side.reorder.erase(it);
    const std::uint32_t end = held.seq + static_cast<std::uint32_t>(held.payload.size());
    if (!seq_after(end, next)) {
      ++counters_.segments_dropped;
      continue;
    }
    const std::uint32_t overlap = next - held.seq;
    counters_.bytes_trimmed += overlap;
    ByteSpan rest = ByteSpan(held.payload).subspan(overlap);
    side.next_seq = next + static_cast<std::uint32_t>(rest.size());
    event = deliver(flow, sender, held.ts_micros, rest, d_threshold);
  }
  return event;
}

std::optional<FlowReadyEvent> FlowTable::deliver(FlowState& flow, const Endpoint& sender,
                                                 TimestampMicros ts, ByteSpan bytes,
                                                 unsigned d_threshold) {
  if (flow.phase == FlowPhase::Ready || flow.phase == FlowPhase::Invalid) return std::nullopt;
  DirectionState& side = flow.sender(sender);
  tls::scan_segment(side.cursor, bytes, scratch_);
  if (scratch_.status != tls::ScanStatus::Ok) {
    ++counters_.malformed;
    mark_invalid(flow, InvalidReason::MalformedRecord);
    return std::nullopt;
  }
  absorb_handshake(flow, sender, bytes);

  const PacketRecord rec{ts, flow.direction_of(sender), static_cast<std::uint32_t>(bytes.size())};
  if (scratch_.phase == tls::SegmentPhase::ApplicationData) {
    flow.appdata_pkts.push_back(rec);
    flow.phase = FlowPhase::Data;
  } else if (flow.appdata_pkts.empty()) {
    flow.handshake_pkts.push_back(rec);
    flow.phase = FlowPhase::Handshaking;
  } else if (scratch_.saw_alert) {
    flow.alert_after_data = true;
  }

  const std::size_t trigger = std::max(1u, d_threshold);
  if (flow.appdata_pkts.size() >= trigger) return finish(flow, ReadyReason::Threshold, ts);
  return std::nullopt;
}

void FlowTable::absorb_handshake(FlowState& flow, const Endpoint& sender, ByteSpan bytes) {
  DirectionState& side = flow.sender(sender);
  for (const tls::RecordChunk& chunk : scratch_.chunks) {
    if (chunk.content_type == tls::ContentType::ChangeCipherSpec) {
      side.change_cipher_seen = true;
      continue;
    }
    if (chunk.header || chunk.content_type != tls::ContentType::Handshake) continue;
    if (side.first_message_done || side.change_cipher_seen) continue;

    auto part = bytes.subspan(chunk.offset, chunk.length);
    side.handshake_buffer.insert(side.handshake_buffer.end(), part.begin(), part.end());
    if (side.handshake_buffer.size() > kMaxHandshakeBuffer) {
      side.first_message_done = true;
      side.handshake_buffer.clear();
      continue;
    }
    const Bytes& buf = side.handshake_buffer;
    if (buf.size() < 4) continue;
    const std::size_t msg_len = (std::size_t{buf[1]} << 16) | (std::size_t{buf[2]} << 8) | buf[3];
    if (buf.size() < 4 + msg_len) continue;

    side.first_message_done = true;
    ByteSpan msg = ByteSpan(buf).first(4 + msg_len);
    try {
      if (buf[0] == tls::handshake_type::kClientHello && !flow.client_hello) {
        flow.client_hello = tls::parse_client_hello(msg);
        // The ClientHello sender is the client, whoever sent the first segment.
        if (sender != flow.initiator && !flow.directions_swapped) {
          flow.initiator = sender;
          flow.directions_swapped = true;
          for (auto* list : {&flow.handshake_pkts, &flow.appdata_pkts}) {
            for (PacketRecord& p : *list) p.direction = opposite(p.direction);
          }
        }
      } else if (buf[0] == tls::handshake_type::kServerHello && !flow.server_hello) {
        flow.server_hello = tls::parse_server_hello(msg);
      }
    } catch (const tls::MalformedMessage&) {
      // Handshake features for this message stay absent.
    }
    side.handshake_buffer.clear();
    side.handshake_buffer.shrink_to_fit();
  }
}

void FlowTable::mark_invalid(FlowState& flow, InvalidReason reason) {
  flow.phase = FlowPhase::Invalid;
  flow.invalid_reason = reason;
  flow.handshake_pkts.clear();
  flow.appdata_pkts.clear();
  release_buffers(flow.sent_by_a);
  release_buffers(flow.sent_by_b);
  ++counters_.invalid;
}

std::optional<FlowReadyEvent> FlowTable::finish(FlowState& flow, ReadyReason reason,
                                                TimestampMicros ts) {
  if (flow.phase == FlowPhase::Ready || flow.phase == FlowPhase::Invalid) return std::nullopt;
  if (flow.appdata_pkts.empty()) {
    mark_invalid(flow, InvalidReason::NoApplicationData);
    return std::nullopt;
  }

  auto frozen = std::make_shared<FlowState>(std::move(flow));
  frozen->phase = FlowPhase::Ready;
  release_buffers(frozen->sent_by_a);
  release_buffers(frozen->sent_by_b);

  // What stays in the table only tracks liveness until the entry is evicted.
  FlowState tomb;
  tomb.key = frozen->key;
  tomb.initiator = frozen->initiator;
  tomb.directions_swapped = frozen->directions_swapped;
  tomb.sent_by_a.fin = frozen->sent_by_a.fin;
  tomb.sent_by_b.fin = frozen->sent_by_b.fin;
  tomb.terminated = frozen->terminated;
  tomb.first_seen = frozen->first_seen;
  tomb.last_activity = frozen->last_activity;
  tomb.phase = FlowPhase::Ready;
  flow = std::move(tomb);

  ++counters_.ready;
  return FlowReadyEvent{frozen->key, std::move(frozen), reason, ts};
}

std::vector<FlowKey> FlowTable::touch_order() const {
  std::vector<FlowKey> out;
  out.reserve(recency_.size());
  for (const FlowState& f : recency_) out.push_back(f.key);
  return out;
}

void FlowTable::evict_one(Recency::iterator it, TimestampMicros now,
                          std::vector<FlowReadyEvent>& out) {
  if (auto ev = finish(*it, ReadyReason::Evicted, now)) out.push_back(std::move(*ev));
  ++counters_.evicted;
  erase(it);
}

std::vector<FlowReadyEvent> FlowTable::evict(TimestampMicros now) {
  std::vector<FlowReadyEvent> out;
  // Touch order is activity order, so idle flows collect at the tail.
  while (!recency_.empty() &&
         now - recency_.back().last_activity > config_.idle_timeout_micros) {
    evict_one(std::prev(recency_.end()), now, out);
  }
  while (index_.size() > config_.capacity) {
    evict_one(std::prev(recency_.end()), now, out);
  }
  return out;
}

std::vector<FlowReadyEvent> FlowTable::flush(TimestampMicros now) {
  std::vector<FlowReadyEvent> out;
  for (auto it = recency_.rbegin(); it != recency_.rend(); ++it) {
    if (auto ev = finish(*it, ReadyReason::EndOfCapture, now)) out.push_back(std::move(*ev));
  }
  return out;
}

const FlowState* FlowTable::find(const FlowKey& key) const {
  auto found = index_.find(key);
  return found == index_.end() ? nullptr : &*found->second;
}

}  // namespace earlyid
