#pragma once

// Capture -> decode -> flow table wiring, labeling of ready flows, and
// conversion of ready flows into labeled feature instances.

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "earlyid/capture.hpp"
#include "earlyid/features.hpp"
#include "earlyid/reassembly.hpp"

namespace earlyid {

struct PipelineOptions {
  unsigned d = 5;
  std::optional<std::uint16_t> port_filter = 443;  // either endpoint; nullopt = all TCP
  FlowTableConfig table;
  TimestampMicros evict_interval_micros = 1'000'000;
};

struct PipelineStats {
  std::uint64_t packets = 0;
  DecodeCounters decode;
  std::uint64_t port_filtered = 0;
  FlowCounters flows;
  std::size_t peak_flows = 0;
  bool truncated_tail = false;
};

using ReadyHandler = std::function<void(FlowReadyEvent&&)>;

/// Pulls every packet from `source`, calling `on_ready` once per ready flow in
/// emission order; flushes the table at end of input. A truncated final pcap
/// record ends the input and sets `truncated_tail`; other PcapErrors propagate.
PipelineStats run_pipeline(PacketSource& source, const PipelineOptions& options,
                           const ReadyHandler& on_ready);

/// Flow id -> label, read from "<src_ip>:<src_port>-<dst_ip>:<dst_port> <label>" lines.
class Manifest {
 public:
  void add(std::string flow_id, std::string label);
  /// Looks up the client-oriented id, then the reversed orientation.
  const std::string* find(const FlowState& flow) const;
  std::size_t size() const { return entries_.size(); }

  static Manifest read(std::istream& in);
  void write(std::ostream& out) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return ordered_; }

 private:
  std::unordered_map<std::string, std::string> entries_;
  std::vector<std::pair<std::string, std::string>> ordered_;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ground truth: the manifest entry when a manifest is given, else the
/// ClientHello SNI.
class Labeler {
 public:
  Labeler() = default;
  explicit Labeler(std::shared_ptr<const Manifest> manifest) : manifest_(std::move(manifest)) {}
  std::optional<std::string> label_for(const FlowState& flow) const;

 private:
  std::shared_ptr<const Manifest> manifest_;
};

/// A ready flow kept whole so features can be taken at any d up to the
/// trigger it was collected with.
struct CorpusFlow {
  std::shared_ptr<const FlowState> flow;
  std::string label;
  std::string trace;
};

struct Corpus {
  std::vector<CorpusFlow> flows;
  std::uint64_t unlabeled = 0;
  PipelineStats stats;
};

/// Runs the pipeline with trigger `options.d` and keeps labeled ready flows.
Corpus collect_corpus(PacketSource& source, const PipelineOptions& options, const Labeler& labeler,
                      const std::string& trace);

/// Features at threshold d for every corpus flow, in corpus order.
std::vector<LabeledInstance> instances_at(const Corpus& corpus, unsigned d);
LabeledInstance make_instance(const CorpusFlow& flow, unsigned d);

}  // namespace earlyid
