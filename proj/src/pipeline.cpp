#include "earlyid/pipeline.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace earlyid {

PipelineStats run_pipeline(PacketSource& source, const PipelineOptions& options,
                           const ReadyHandler& on_ready) {
  FlowTable table(options.table);
  PipelineStats stats;
  const std::uint32_t link = source.link_type();
  std::optional<TimestampMicros> last_evict;
  TimestampMicros now = 0;

  auto emit_all = [&](std::vector<FlowReadyEvent>&& events) {
    for (auto& ev : events) on_ready(std::move(ev));
  };

  while (true) {
    std::optional<RawPacket> pkt;
    try {
      pkt = source.next_packet();
    } catch (const PcapError& e) {
      if (e.kind() != PcapError::Kind::TruncatedRecord) throw;
      stats.truncated_tail = true;
      break;
    }
    if (!pkt) break;
    ++stats.packets;
    now = std::max(now, pkt->ts_micros);

    auto seg = decode_frame(*pkt, link, &stats.decode);
    if (seg) {
      if (options.port_filter && seg->src_port != *options.port_filter &&
          seg->dst_port != *options.port_filter) {
        ++stats.port_filtered;
      } else if (auto ev = table.ingest(*seg, options.d)) {
        on_ready(std::move(*ev));
      }
    }

    if (!last_evict) last_evict = now;
    if (table.size() > options.table.capacity ||
        now - *last_evict >= options.evict_interval_micros) {
      emit_all(table.evict(now));
      last_evict = now;
    }
  }
  emit_all(table.flush(now));
  stats.flows = table.counters();
  stats.peak_flows = table.peak_size();
  return stats;
}

void Manifest::add(std::string flow_id, std::string label) {
  auto [it, inserted] = entries_.emplace(flow_id, label);
  if (!inserted) {
    if (it->second == label) return;
    throw ManifestError("conflicting labels for flow " + flow_id);
  }
  ordered_.emplace_back(std::move(flow_id), std::move(label));
}

namespace {

std::string reversed_id(const std::string& id) {
  auto dash = id.find('-');
  if (dash == std::string::npos) return id;
  return id.substr(dash + 1) + "-" + id.substr(0, dash);
}

}  // namespace

const std::string* Manifest::find(const FlowState& flow) const {
  const std::string id = flow.flow_id();
  if (auto it = entries_.find(id); it != entries_.end()) return &it->second;
  if (auto it = entries_.find(reversed_id(id)); it != entries_.end()) return &it->second;
  return nullptr;
}

Manifest Manifest::read(std::istream& in) {
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string id, label, extra;
    if (!(fields >> id >> label) || (fields >> extra) || id.find('-') == std::string::npos) {
      throw ManifestError("manifest line " + std::to_string(line_no) +
                          ": expected '<src>:<port>-<dst>:<port> <label>'");
    }
    m.add(std::move(id), std::move(label));
  }
  return m;
}

void Manifest::write(std::ostream& out) const {
  for (const auto& [id, label] : ordered_) out << id << ' ' << label << '\n';
}

std::optional<std::string> Labeler::label_for(const FlowState& flow) const {
  if (manifest_) {
    if (const std::string* label = manifest_->find(flow)) return *label;
    return std::nullopt;
  }
  if (flow.client_hello && flow.client_hello->sni) return *flow.client_hello->sni;
  return std::nullopt;
}

Corpus collect_corpus(PacketSource& source, const PipelineOptions& options, const Labeler& labeler,
                      const std::string& trace) {
  Corpus corpus;
  corpus.stats = run_pipeline(source, options, [&](FlowReadyEvent&& ev) {
    auto label = labeler.label_for(*ev.flow);
    if (!label) {
      ++corpus.unlabeled;
      return;
    }
    corpus.flows.push_back({std::move(ev.flow), std::move(*label), trace});
  });
  return corpus;
}

LabeledInstance make_instance(const CorpusFlow& flow, unsigned d) {
  LabeledInstance inst;
  inst.features = extract(*flow.flow, d);
  inst.label = flow.label;
  inst.meta.flow = flow.flow->flow_id();
  inst.meta.trace = flow.trace;
  inst.meta.appdata_available = static_cast<std::uint32_t>(flow.flow->appdata_pkts.size());
  inst.meta.d = d;
  return inst;
}

std::vector<LabeledInstance> instances_at(const Corpus& corpus, unsigned d) {
  std::vector<LabeledInstance> out;
  out.reserve(corpus.flows.size());
  for (const CorpusFlow& f : corpus.flows) out.push_back(make_instance(f, d));
  return out;
}

}  // namespace earlyid
