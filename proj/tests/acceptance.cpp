// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "earlyid/classifier.hpp"
#include "earlyid/eval.hpp"
#include "earlyid/features.hpp"
#include "earlyid/pipeline.hpp"
#include "earlyid/reassembly.hpp"
#include "earlyid/rng.hpp"
#include "earlyid/synth.hpp"
#include "fuzz_harness.hpp"
#include "support.hpp"

namespace earlyid {
namespace {

using testing::endpoint;
using testing::GenFlow;
using testing::random_flow;
using testing::Seg;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string format(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Parser fidelity against the frozen reference dissection.

Outcome parser_fidelity() {
  const std::string dir = EARLYID_TEST_DATA_DIR;
  std::ifstream ref_file(dir + "/synth50_reference.json");
  if (!ref_file) return {false, "missing reference report"};
  const auto ref = nlohmann::json::parse(ref_file);

  const auto t0 = Clock::now();
  auto reader = open_pcap(dir + "/synth50.pcap");
  PipelineOptions opts;
  opts.d = 1000;
  std::map<std::string, std::shared_ptr<const FlowState>> flows;
  run_pipeline(*reader, opts, [&](FlowReadyEvent&& ev) { flows[ev.flow->flow_id()] = ev.flow; });
  const double elapsed = seconds_since(t0);

  std::size_t agree = 0, total = 0;
  std::string first_mismatch;
  for (const auto& want : ref["flows"]) {
    ++total;
    auto it = flows.find(want["flow"].get<std::string>());
    bool ok = it != flows.end();
    if (ok) {
      const FlowState& f = *it->second;
      ok = f.handshake_pkts.size() == want["handshake_pkts"].get<std::size_t>() &&
           f.appdata_pkts.size() == want["appdata_pkts"].get<std::size_t>();
      ok = ok && f.client_hello.has_value() == want.contains("ch");
      ok = ok && f.server_hello.has_value() == want.contains("sh");
      if (ok && f.client_hello) {
        const auto& ch = want["ch"];
        const auto sni = ch["sni"].is_null() ? std::optional<std::string>()
                                             : std::optional(ch["sni"].get<std::string>());
        ok = f.client_hello->session_id_len == ch["session_id_len"].get<unsigned>() &&
             f.client_hello->cipher_suites_count == ch["cipher_suites_count"].get<unsigned>() &&
             f.client_hello->extensions_total_len == ch["extensions_len"].get<unsigned>() &&
             f.client_hello->sni == sni;
      }
      if (ok && f.server_hello) {
        const auto& sh = want["sh"];
        ok = f.server_hello->session_id_len == sh["session_id_len"].get<unsigned>() &&
             f.server_hello->chosen_cipher_suite == sh["cipher_suite"].get<unsigned>() &&
             f.server_hello->extensions_total_len == sh["extensions_len"].get<unsigned>();
      }
    }
    agree += ok;
    if (!ok && first_mismatch.empty()) first_mismatch = want["flow"].get<std::string>();
  }
  const bool pass = total == 50 && agree == total && flows.size() == total && elapsed < 5.0;
  return {pass, format("%zu/%zu flows agree with the reference dissector, pipeline %zu flows, "
                       "%.3f s%s%s",
                       agree, total, flows.size(), elapsed, first_mismatch.empty() ? "" : ", first mismatch ",
                       first_mismatch.c_str())};
}

// ---------------------------------------------------------------------------
// 2. Streaming features against the batch oracle.

Outcome feature_oracle() {
  Rng rng(2002);
  std::size_t failures = 0, integer_mismatch = 0;
  double worst_rel = 0;
  for (int i = 0; i < 1000; ++i) {
    const GenFlow f = random_flow(rng, endpoint(10, 1, static_cast<std::uint8_t>(i >> 8),
                                                static_cast<std::uint8_t>(i), 40000),
                                  endpoint(10, 2, 0, 1, 443), 1'000'000);
    const unsigned d = static_cast<unsigned>(rng.below(12));
    FlowTable table;
    std::optional<FlowReadyEvent> ev;
    for (const Seg& s : f.segs) {
      if (auto e = table.ingest(s.view(), d)) ev = std::move(e);
    }
    if (!ev) {
      for (auto& e : table.flush(1'000'000'000'000)) ev = std::move(e);
    }
    if (!ev) {
      ++failures;
      continue;
    }
    const FeatureVector got = extract(*ev->flow, d);
    const FeatureVector want = testing::oracle_features(f.packets(), f.ch, f.sh, d);
    bool ok = true;
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      if (testing::oracle_is_real(k)) {
        const double rel = std::fabs(got[k] - want[k]) /
                           std::max({1.0, std::fabs(got[k]), std::fabs(want[k])});
        worst_rel = std::max(worst_rel, rel);
        ok = ok && rel <= 1e-9;
      } else if (got[k] != want[k]) {
        ++integer_mismatch;
        ok = false;
      }
    }
    failures += !ok;
  }
  return {failures == 0, format("1000 flows, %zu mismatching, %zu integer mismatches, worst "
                                "relative error %.3g",
                                failures, integer_mismatch, worst_rel)};
}

// ---------------------------------------------------------------------------
// 3. Reassembly robustness.

struct FlowSummary {
  std::vector<PacketRecord> handshake, appdata;
  std::optional<tls::ClientHelloSummary> ch;
  std::optional<tls::ServerHelloSummary> sh;
  bool operator==(const FlowSummary&) const = default;
};

FlowSummary summarize(const FlowState& f) {
  return {f.handshake_pkts, f.appdata_pkts, f.client_hello, f.server_hello};
}

std::map<FlowKey, FlowSummary> replay(const std::vector<const Seg*>& segs) {
  FlowTable table;
  std::map<FlowKey, FlowSummary> out;
  for (const Seg* s : segs) {
    if (auto ev = table.ingest(s->view(), 1000)) out[ev->key] = summarize(*ev->flow);
  }
  for (auto& ev : table.flush(1'000'000'000'000)) out[ev.key] = summarize(*ev.flow);
  return out;
}

std::vector<const Seg*> pointers(const std::vector<Seg>& segs) {
  std::vector<const Seg*> out;
  for (const Seg& s : segs) out.push_back(&s);
  return out;
}

std::size_t first_fin(const std::vector<Seg>& segs) {
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].flags & tcp_flags::kFin) return i;
  }
  return segs.size();
}

// Full duplicates placed later in the stream, and segments re-sent with a
// prefix of already-delivered bytes.
std::vector<Seg> with_retransmissions(const std::vector<Seg>& segs, Rng& rng) {
  const std::size_t fin = first_fin(segs);
  std::vector<Seg> out;
  std::multimap<std::size_t, Seg> later;
  std::map<std::pair<std::uint32_t, std::uint16_t>, const Seg*> last_payload;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    for (auto [it, end] = later.equal_range(i); it != end; ++it) out.push_back(it->second);
    Seg s = segs[i];
    if (!s.payload.empty() && i < fin) {
      const auto key = std::make_pair(s.src.ip.value, s.src.port);
      const Seg* prev = last_payload.count(key) ? last_payload[key] : nullptr;
      if (prev && prev->seq + prev->payload.size() == s.seq && rng.below(5) == 0) {
        const std::size_t k = 1 + rng.below(prev->payload.size());
        Bytes merged(prev->payload.end() - static_cast<std::ptrdiff_t>(k), prev->payload.end());
        merged.insert(merged.end(), s.payload.begin(), s.payload.end());
        s.seq -= static_cast<std::uint32_t>(k);
        s.payload = std::move(merged);
      }
      last_payload[key] = &segs[i];
      if (rng.below(4) == 0) {
        Seg dup = segs[i];
        dup.ts += 1 + static_cast<TimestampMicros>(rng.below(1000));
        later.emplace(i + 1 + rng.below(fin - i), dup);
      }
    }
    out.push_back(std::move(s));
  }
  for (auto it = later.lower_bound(segs.size()); it != later.end(); ++it) out.push_back(it->second);
  return out;
}

// Shuffles each maximal run of consecutive same-sender payload segments.
std::vector<Seg> permuted_within_runs(std::vector<Seg> segs, Rng& rng) {
  std::size_t i = 0;
  while (i < segs.size()) {
    if (segs[i].payload.empty()) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < segs.size() && j - i < 32 && !segs[j].payload.empty() && segs[j].src == segs[i].src) ++j;
    rng.shuffle(std::span<Seg>(segs.data() + i, j - i));
    i = j;
  }
  return segs;
}

Outcome reassembly_robustness() {
  Rng rng(3003);
  std::size_t violations = 0, flows_checked = 0, reordered = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<GenFlow> flows;
    std::vector<std::vector<Seg>> lists;
    const int n = 2 + static_cast<int>(rng.below(6));
    for (int k = 0; k < n; ++k) {
      flows.push_back(random_flow(rng, endpoint(10, 3, static_cast<std::uint8_t>(trial),
                                                static_cast<std::uint8_t>(k), 2000),
                                  endpoint(10, 4, 0, 1, 443),
                                  static_cast<TimestampMicros>(rng.below(100000))));
      lists.push_back(flows.back().segs);
    }
    const auto together = replay(testing::interleave(lists, rng));
    for (const auto& list : lists) {
      ++flows_checked;
      const auto alone = replay(pointers(list));
      if (alone.size() != 1) {
        ++violations;
        continue;
      }
      const auto& [key, want] = *alone.begin();
      auto it = together.find(key);
      if (it == together.end() || !(it->second == want)) ++violations;

      const auto retrans = with_retransmissions(list, rng);
      const auto r = replay(pointers(retrans));
      if (r.size() != 1 || !(r.begin()->second == want)) ++violations;

      const auto perm = permuted_within_runs(list, rng);
      for (std::size_t i = 0; i < perm.size(); ++i) reordered += perm[i].seq != list[i].seq;
      const auto p = replay(pointers(perm));
      if (p.size() != 1 || !(p.begin()->second == want)) ++violations;
    }
  }
  return {violations == 0,
          format("200 trials, %zu flows x 3 properties, %zu segments displaced, %zu violations",
                 flows_checked, reordered, violations)};
}

// ---------------------------------------------------------------------------
// 4. C4.5 correctness.

double direct_entropy(const std::vector<std::uint64_t>& counts) {
  double n = 0;
  for (auto c : counts) n += static_cast<double>(c);
  double h = 0;
  for (auto c : counts) {
    if (c) h -= (static_cast<double>(c) / n) * std::log2(static_cast<double>(c) / n);
  }
  return h;
}

Dataset random_dataset(Rng& rng) {
  const std::size_t n = 4 + rng.below(60);
  const std::size_t classes = 2 + rng.below(4);
  const std::uint64_t range = 2 + rng.below(12);
  std::vector<LabeledInstance> rows;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledInstance r;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      r.features[f] = static_cast<double>(rng.below(range)) * (f % 2 ? 1.0 : 0.25);
    }
    r.label = "c" + std::to_string(rng.below(classes));
    rows.push_back(r);
  }
  return Dataset(std::move(rows));
}

struct Candidate {
  double value = 0;
  double ratio = 0;
};

std::optional<Candidate> exhaustive_split(const Dataset& d, std::size_t f, bool categorical,
                                          unsigned min_leaf) {
  std::vector<double> values;
  std::map<std::string, std::uint64_t> parent;
  for (const auto& inst : d.instances()) {
    values.push_back(inst.features[f]);
    ++parent[inst.label];
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> tests = values;
  if (!categorical) {
    tests.clear();
    for (std::size_t i = 0; i + 1 < values.size(); ++i) tests.push_back((values[i] + values[i + 1]) / 2);
  }
  auto h = [](const std::map<std::string, std::uint64_t>& m) {
    std::vector<std::uint64_t> c;
    for (const auto& [k, v] : m) c.push_back(v);
    return direct_entropy(c);
  };
  const double n = static_cast<double>(d.size());
  std::optional<Candidate> best;
  for (double t : tests) {
    std::map<std::string, std::uint64_t> l, r;
    double nl = 0;
    for (const auto& inst : d.instances()) {
      const bool left = categorical ? inst.features[f] == t : inst.features[f] <= t;
      ++(left ? l : r)[inst.label];
      nl += left;
    }
    const double nr = n - nl;
    if (nl < min_leaf || nr < min_leaf) continue;
    const double gain = h(parent) - nl / n * h(l) - nr / n * h(r);
    if (gain <= 1e-12) continue;
    const double ratio = gain / (-(nl / n) * std::log2(nl / n) - (nr / n) * std::log2(nr / n));
    if (!best || ratio > best->ratio + 1e-12 * std::max(1.0, best->ratio)) best = Candidate{t, ratio};
  }
  return best;
}

Outcome c45_correctness() {
  Rng rng(4004);
  std::size_t split_mismatch = 0, splits = 0;
  for (int k = 0; k < 50; ++k) {
    const Dataset d = random_dataset(rng);
    std::vector<std::uint32_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), 0u);
    const unsigned min_leaf = 1 + static_cast<unsigned>(rng.below(3));
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const bool categorical = f == feature::kServerCipherSuite;
      const auto got = best_split(d, rows, f, categorical, min_leaf);
      const auto want = exhaustive_split(d, f, categorical, min_leaf);
      splits += want.has_value();
      if (got.has_value() != want.has_value() ||
          (got && (got->test.value != want->value ||
                   std::fabs(got->gain_ratio - want->ratio) > 1e-9))) {
        ++split_mismatch;
      }
    }
  }

  double worst_entropy = 0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<std::uint64_t> counts(1 + rng.below(12));
    for (auto& c : counts) c = rng.below(500);
    counts[0] += 1;
    worst_entropy = std::max(worst_entropy, std::fabs(entropy(counts) - direct_entropy(counts)));
  }

  std::size_t larger = 0;
  for (int k = 0; k < 50; ++k) {
    const Dataset d = random_dataset(rng);
    TrainParams off;
    off.prune = false;
    larger += train(d).node_count() > train(d, off).node_count();
  }

  std::size_t order_mismatch = 0;
  for (int k = 0; k < 20; ++k) {
    const Dataset d = random_dataset(rng);
    std::vector<LabeledInstance> shuffled = d.instances();
    rng.shuffle(std::span<LabeledInstance>(shuffled));
    const DecisionTree a = train(d);
    const DecisionTree b = train(Dataset(std::move(shuffled)));
    for (int i = 0; i < 500; ++i) {
      FeatureVector fv;
      for (auto& v : fv) v = static_cast<double>(rng.below(14)) * 0.25;
      order_mismatch += a.predict(fv).label != b.predict(fv).label;
    }
    for (const auto& inst : d.instances()) {
      order_mismatch += a.predict(inst.features).label != b.predict(inst.features).label;
    }
  }

  const bool pass = split_mismatch == 0 && splits > 0 && worst_entropy <= 1e-12 && larger == 0 &&
                    order_mismatch == 0;
  return {pass, format("split oracle %zu mismatches over 50 datasets (%zu qualifying splits), "
                       "entropy max error %.2g, %zu pruned trees larger, %zu order-dependent "
                       "predictions over 20 datasets",
                       split_mismatch, splits, worst_entropy, larger, order_mismatch)};
}

// ---------------------------------------------------------------------------
// 5-8. Synthetic end-to-end experiments.

constexpr unsigned kServices = 5;
constexpr unsigned kArchetypes = 3;
constexpr unsigned kFlowsPerService = 50;
constexpr std::uint64_t kStudySeed = 7;

struct Study {
  FeatureStore store;
  std::size_t flows = 0;
  double build_seconds = 0;
};

// One trace per archetype, each holding every service; the trace id is the
// archetype name.
Study build_study() {
  const auto t0 = Clock::now();
  const auto specs = make_service_specs(kServices, kArchetypes, 0.0, kStudySeed);
  std::vector<std::string> archetypes;
  for (const auto& s : specs) {
    if (std::find(archetypes.begin(), archetypes.end(), s.archetype) == archetypes.end()) {
      archetypes.push_back(s.archetype);
    }
  }
  Corpus all;
  for (std::size_t i = 0; i < archetypes.size(); ++i) {
    std::vector<SynthServiceSpec> subset;
    for (const auto& s : specs) {
      if (s.archetype == archetypes[i]) subset.push_back(s);
    }
    const SynthTrace trace = synth_generate(subset, kFlowsPerService, kStudySeed + i);
    auto reader = open_pcap_bytes(trace.pcap);
    PipelineOptions opts;
    opts.d = 9;
    Corpus c = collect_corpus(*reader, opts, Labeler{}, archetypes[i]);
    for (auto& f : c.flows) all.flows.push_back(std::move(f));
  }
  const std::vector<unsigned> ds{0, 1, 2, 5, 8, 9};
  Study s;
  s.flows = all.flows.size();
  s.store = FeatureStore::from_corpus(all, ds);
  s.build_seconds = seconds_since(t0);
  return s;
}

ExperimentConfig study_config() {
  ExperimentConfig cfg;
  cfg.folds = 10;
  cfg.seed = 1;
  return cfg;
}

std::string pct(double v) { return format("%.2f%%", 100 * v); }

Outcome synthetic_accuracy(const Study& study) {
  const auto t0 = Clock::now();
  const std::vector<unsigned> ds{5};
  const auto rows = run_d_sweep(study.store, ds, study_config());
  const double elapsed = study.build_seconds + seconds_since(t0);
  const double acc = rows[0].accuracy.mean;
  return {acc >= 0.95 && elapsed < 60 && study.flows == kServices * kArchetypes * kFlowsPerService,
          format("%zu flows, %zu labels, d=5 10-fold accuracy %s +/- %.2f, %.2f s", study.flows,
                 rows[0].labels, pct(acc).c_str(), 100 * rows[0].accuracy.std, elapsed)};
}

Outcome trend(const Study& study) {
  const std::vector<unsigned> ds{0, 1, 5};
  const auto rows = run_d_sweep(study.store, ds, study_config());
  const double a0 = rows[0].accuracy.mean, a1 = rows[1].accuracy.mean, a5 = rows[2].accuracy.mean;
  return {a0 <= a1 + 0.02 && a1 <= a5 + 0.02,
          format("accuracy d=0 %s, d=1 %s, d=5 %s", pct(a0).c_str(), pct(a1).c_str(),
                 pct(a5).c_str())};
}

Outcome matrix_pattern(const Study& study) {
  ExperimentConfig cfg = study_config();
  cfg.train_d = {1, 9};
  cfg.test_d = {1, 2, 8, 9};
  const ResultMatrix m = run_threshold_matrix(study.store, cfg);
  const double c19 = m.cell(1, 9)->mean, c12 = m.cell(1, 2)->mean;
  const double c91 = m.cell(9, 1)->mean, c98 = m.cell(9, 8)->mean;
  return {c19 < c12 - 0.03 && c91 < c98 - 0.05,
          format("train1/test9 %s vs train1/test2 %s; train9/test1 %s vs train9/test8 %s",
                 pct(c19).c_str(), pct(c12).c_str(), pct(c91).c_str(), pct(c98).c_str())};
}

Outcome generic_parity(const Study& study) {
  ExperimentConfig cfg = study_config();
  cfg.train_d = {5};
  const GenericComparison g = run_generic_vs_dedicated(study.store, cfg);
  bool pass = g.partitions.size() == kArchetypes;
  double worst_gap = 0, worst_drop = 1;
  std::string cells;
  for (std::size_t i = 0; i < g.partitions.size(); ++i) {
    const double own = g.dedicated[i][i].mean;
    worst_gap = std::max(worst_gap, std::fabs(g.pooled[i].mean - own));
    for (std::size_t j = 0; j < g.partitions.size(); ++j) {
      if (j != i) worst_drop = std::min(worst_drop, own - g.dedicated[i][j].mean);
    }
    cells += format("%s own %s pooled %s; ", g.partitions[i].c_str(), pct(own).c_str(),
                    pct(g.pooled[i].mean).c_str());
  }
  pass = pass && worst_gap <= 0.03 && worst_drop >= 0.20;
  return {pass, cells + format("largest pooled gap %.2f points, smallest cross-archetype drop "
                               "%.2f points",
                               100 * worst_gap, 100 * worst_drop)};
}

// ---------------------------------------------------------------------------
// 9. Latency and throughput.

Outcome performance() {
  const auto train_specs = make_service_specs(10, 1, 0.3, 99);
  const SynthTrace train_trace = synth_generate(train_specs, 40, 99);
  auto train_reader = open_pcap_bytes(train_trace.pcap);
  PipelineOptions opts;
  opts.d = 5;
  const Corpus corpus = collect_corpus(*train_reader, opts, Labeler{}, "train");
  const DecisionTree tree = train(Dataset(instances_at(corpus, 5)));

  const SynthTrace trace = synth_generate(train_specs, 1000, 100);
  std::vector<double> latency_ms;
  latency_ms.reserve(trace.flows);
  std::size_t hits = 0;
  const auto t0 = Clock::now();
  auto reader = open_pcap_bytes(trace.pcap);
  run_pipeline(*reader, opts, [&](FlowReadyEvent&& ev) {
    const auto a = Clock::now();
    const Prediction p = tree.predict(extract(*ev.flow, 5));
    latency_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - a).count());
    hits += ev.flow->client_hello && ev.flow->client_hello->sni == p.label;
  });
  const double elapsed = seconds_since(t0);
  const double mean = std::accumulate(latency_ms.begin(), latency_ms.end(), 0.0) /
                      static_cast<double>(std::max<std::size_t>(1, latency_ms.size()));
  const double throughput = static_cast<double>(latency_ms.size()) / elapsed;
  return {latency_ms.size() == 10000 && mean <= 2.0 && throughput >= 25000,
          format("%zu flows, %zu packets, mean latency %.4f ms, throughput %.0f flows/s "
                 "(%.3f s), accuracy %s",
                 latency_ms.size(), trace.packets, mean, throughput, elapsed,
                 pct(static_cast<double>(hits) / static_cast<double>(latency_ms.size())).c_str())};
}

// ---------------------------------------------------------------------------
// 10. Fuzzing.

Outcome fuzz_safety() {
  constexpr std::uint64_t kInputs = 1'000'000;
  const auto stats = testing::run_fuzz(2024, kInputs);
  std::string detail = format("in-process: %llu inputs, %llu frames decoded, %llu records, "
                              "%llu hellos, %llu unexpected",
                              static_cast<unsigned long long>(stats.inputs),
                              static_cast<unsigned long long>(stats.decoded),
                              static_cast<unsigned long long>(stats.records),
                              static_cast<unsigned long long>(stats.hellos_parsed),
                              static_cast<unsigned long long>(stats.unexpected));
  bool pass = stats.inputs == kInputs && stats.unexpected == 0;
#ifdef EARLYID_FUZZ_BINARY
  const std::string cmd = std::string(EARLYID_FUZZ_BINARY) + " " + std::to_string(kInputs) +
                          " 2024 > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  pass = pass && rc == 0;
  detail += format("; sanitizer build (address, undefined): exit status %d", rc);
#else
  pass = false;
  detail += "; sanitizer build not configured";
#endif
  if (!stats.first_unexpected.empty()) detail += "; first: " + stats.first_unexpected;
  return {pass, detail};
}

}  // namespace
}  // namespace earlyid

int main() {
  using namespace earlyid;
  int failed = 0;
  auto report = [&](int n, const std::function<Outcome()>& check) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d: %s  %s [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, parser_fidelity);
  report(2, feature_oracle);
  report(3, reassembly_robustness);
  report(4, c45_correctness);
  std::optional<Study> study;
  auto with_study = [&](Outcome (*fn)(const Study&)) {
    return [&, fn] {
      if (!study) study = build_study();
      return fn(*study);
    };
  };
  report(5, with_study(synthetic_accuracy));
  report(6, with_study(trend));
  report(7, with_study(matrix_pattern));
  report(8, with_study(generic_parity));
  report(9, performance);
  report(10, fuzz_safety);
  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
