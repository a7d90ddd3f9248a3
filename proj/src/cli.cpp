#include "earlyid/cli.hpp"

#include <unistd.h>

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "earlyid/classifier.hpp"
#include "earlyid/eval.hpp"
#include "earlyid/pipeline.hpp"
#include "earlyid/synth.hpp"

namespace fs = std::filesystem;

namespace earlyid {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes next to the destination, then renames over it.
void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) {
      f.close();
      fs::remove(tmp);
      throw std::runtime_error("write failed for " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return std::move(s).str();
}

unsigned parse_unsigned(std::string_view text, const std::string& flag) {
  unsigned v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw UsageError(flag + ": '" + std::string(text) + "' is not a non-negative integer");
  }
  return v;
}

/// "1,2,5" or "1-9" or a mix; order kept, duplicates dropped.
std::vector<unsigned> parse_d_list(const std::string& text, const std::string& flag) {
  std::vector<unsigned> out;
  std::set<unsigned> seen;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw UsageError(flag + ": empty list item");
    auto dash = item.find('-');
    unsigned lo, hi;
    if (dash == std::string::npos) {
      lo = hi = parse_unsigned(item, flag);
    } else {
      lo = parse_unsigned(std::string_view(item).substr(0, dash), flag);
      hi = parse_unsigned(std::string_view(item).substr(dash + 1), flag);
      if (hi < lo) throw UsageError(flag + ": descending range " + item);
    }
    if (hi > 1000) throw UsageError(flag + ": d values above 1000 are not supported");
    for (unsigned d = lo; d <= hi; ++d) {
      if (seen.insert(d).second) out.push_back(d);
    }
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

std::optional<std::uint16_t> parse_port_filter(const std::string& text) {
  if (text == "none") return std::nullopt;
  unsigned v = parse_unsigned(text, "--port-filter");
  if (v == 0 || v > 65535) throw UsageError("--port-filter: port out of range");
  return static_cast<std::uint16_t>(v);
}

struct LabelChoice {
  std::optional<fs::path> manifest;
};

LabelChoice parse_labels(const std::string& text) {
  if (text == "sni") return {};
  constexpr std::string_view prefix = "manifest:";
  if (text.rfind(prefix, 0) == 0 && text.size() > prefix.size()) {
    return {fs::path(text.substr(prefix.size()))};
  }
  throw UsageError("--labels must be 'sni' or 'manifest:PATH'");
}

Labeler make_labeler(const LabelChoice& choice) {
  if (!choice.manifest) return Labeler();
  std::ifstream f(*choice.manifest);
  if (!f) throw std::runtime_error("cannot open manifest " + choice.manifest->string());
  return Labeler(std::make_shared<Manifest>(Manifest::read(f)));
}

std::string trace_name(const fs::path& p) { return p.stem().string(); }

std::vector<LabeledInstance> read_features_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  auto rows = read_feature_csv(f);
  for (auto& r : rows) {
    if (r.meta.trace.empty()) r.meta.trace = trace_name(path);
  }
  return rows;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string pcap, d = "5", labels = "sni", port_filter = "443", out, trace;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out, std::ostream& err) {
  const auto ds = parse_d_list(a.d, "--d");
  const auto port = parse_port_filter(a.port_filter);
  const auto label_choice = parse_labels(a.labels);

  Labeler labeler = make_labeler(label_choice);
  auto source = open_pcap(a.pcap);
  PipelineOptions opts;
  opts.d = *std::max_element(ds.begin(), ds.end());
  opts.port_filter = port;
  const Corpus corpus =
      collect_corpus(*source, opts, labeler, a.trace.empty() ? trace_name(a.pcap) : a.trace);

  std::vector<LabeledInstance> rows;
  for (unsigned d : ds) {
    auto at = instances_at(corpus, d);
    rows.insert(rows.end(), std::make_move_iterator(at.begin()), std::make_move_iterator(at.end()));
  }
  std::ostringstream csv;
  write_feature_csv(csv, rows);
  write_file_atomic(a.out, csv.str());

  const auto& s = corpus.stats;
  out << "packets " << s.packets << ", tcp segments " << s.decode.decoded << ", port-filtered "
      << s.port_filtered << '\n';
  out << "flows ready " << s.flows.ready << ", invalid " << s.flows.invalid << ", unlabeled "
      << corpus.unlabeled << ", rows " << rows.size() << '\n';
  if (s.truncated_tail) err << "warning: capture ends with a truncated record\n";
  return rows.empty() ? kExitEmpty : kExitOk;
}

// ---------------------------------------------------------------------------

struct TreeArgs {
  unsigned min_leaf = 2;
  double confidence = 0.25;
  bool no_prune = false;

  TrainParams params() const {
    if (min_leaf < 1) throw UsageError("--min-leaf must be at least 1");
    if (!(confidence > 0 && confidence < 1)) throw UsageError("--confidence must be in (0,1)");
    TrainParams p;
    p.min_leaf = min_leaf;
    p.confidence = confidence;
    p.prune = !no_prune;
    return p;
  }
};

struct TrainArgs {
  std::string features, out;
  std::optional<unsigned> d;
  std::size_t min_instances = 14;
  TreeArgs tree;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const TrainParams params = a.tree.params();
  auto rows = read_features_file(a.features);
  std::set<unsigned> ds;
  for (const auto& r : rows) ds.insert(r.meta.d);
  unsigned d = 0;
  if (a.d) {
    d = *a.d;
  } else if (ds.size() > 1) {
    throw UsageError("feature file holds several d values; choose one with --d");
  } else if (!ds.empty()) {
    d = *ds.begin();
  }
  std::erase_if(rows, [&](const LabeledInstance& r) { return r.meta.d != d; });

  Dataset data = Dataset(std::move(rows)).filter_min_instances(a.min_instances);
  if (data.empty()) {
    err << "no label has at least " << a.min_instances << " instances\n";
    return kExitEmpty;
  }
  DecisionTree tree = train(data, params);
  write_file_atomic(a.out, serialize(tree));

  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    hits += tree.nodes()[tree.predict_index(data.instances()[i].features)].label == data.target(i);
  }
  out << "trained on " << data.size() << " flows, " << data.labels().size() << " labels, d=" << d
      << '\n';
  out << "tree nodes " << tree.node_count() << ", leaves " << tree.leaf_count() << ", depth "
      << tree.depth() << '\n';
  out << "training accuracy "
      << fmt("%.4f", static_cast<double>(hits) / static_cast<double>(data.size())) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

DecisionTree load_model(const fs::path& path) { return deserialize(read_file(path)); }

struct PredictArgs {
  std::string pcap, features, model, out, d = "5", port_filter = "443";
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  if (a.pcap.empty() == a.features.empty()) throw UsageError("give exactly one of --pcap, --features");
  const unsigned d = parse_unsigned(a.d, "--d");
  const auto port = parse_port_filter(a.port_filter);
  const DecisionTree tree = load_model(a.model);

  std::string csv = "flow,predicted,confidence,appdata_used,micros\n";
  std::size_t rows = 0;
  auto emit = [&](const std::string& flow, const FeatureVector& fv, std::uint32_t used,
                  std::chrono::steady_clock::time_point t0) {
    Prediction p = tree.predict(fv);
    const double micros =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    csv += flow + "," + std::string(p.label) + "," + fmt("%.6f", p.confidence) + "," +
           std::to_string(used) + "," + fmt("%.3f", micros) + "\n";
    ++rows;
  };

  if (!a.pcap.empty()) {
    auto source = open_pcap(a.pcap);
    PipelineOptions opts;
    opts.d = d;
    opts.port_filter = port;
    auto stats = run_pipeline(*source, opts, [&](FlowReadyEvent&& ev) {
      const auto t0 = std::chrono::steady_clock::now();
      FeatureVector fv = extract(*ev.flow, d);
      const auto used = static_cast<std::uint32_t>(
          std::min<std::size_t>(d, ev.flow->appdata_pkts.size()));
      emit(ev.flow->flow_id(), fv, used, t0);
    });
    if (stats.truncated_tail) err << "warning: capture ends with a truncated record\n";
  } else {
    for (const auto& r : read_features_file(a.features)) {
      emit(r.meta.flow, r.features, std::min(r.meta.d, r.meta.appdata_available),
           std::chrono::steady_clock::now());
    }
  }
  write_file_atomic(a.out, csv);
  out << "predicted " << rows << " flows\n";
  return rows ? kExitOk : kExitEmpty;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> pcaps, features;
  std::string mode = "matrix", train_d, test_d, labels = "sni", port_filter = "443", out;
  unsigned folds = 10;
  std::uint64_t seed = 1;
  std::size_t min_instances = 14;
  bool whole_set = false;
  TreeArgs tree;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  if (a.pcaps.empty() == a.features.empty()) {
    throw UsageError("give --pcap or --features (repeatable), not both");
  }
  if (a.mode != "sweep" && a.mode != "matrix" && a.mode != "generic") {
    throw UsageError("--mode must be sweep, matrix or generic");
  }
  if (a.folds < 2) throw UsageError("--folds must be at least 2");
  ExperimentConfig cfg;
  cfg.folds = a.folds;
  cfg.seed = a.seed;
  cfg.min_instances_per_label = a.min_instances;
  cfg.whole_set = a.whole_set;
  cfg.train = a.tree.params();
  const std::string default_train = a.mode == "sweep" ? "0-9" : a.mode == "matrix" ? "1-9" : "5";
  cfg.train_d = parse_d_list(a.train_d.empty() ? default_train : a.train_d, "--train-d");
  cfg.test_d = parse_d_list(a.test_d.empty() ? "1-9" : a.test_d, "--test-d");
  const auto port = parse_port_filter(a.port_filter);
  const auto label_choice = parse_labels(a.labels);

  std::set<unsigned> needed(cfg.train_d.begin(), cfg.train_d.end());
  if (a.mode == "matrix") needed.insert(cfg.test_d.begin(), cfg.test_d.end());

  FeatureStore store;
  if (!a.pcaps.empty()) {
    Labeler labeler = make_labeler(label_choice);
    Corpus all;
    for (const auto& p : a.pcaps) {
      auto source = open_pcap(p);
      PipelineOptions opts;
      opts.d = *needed.rbegin();
      opts.port_filter = port;
      Corpus c = collect_corpus(*source, opts, labeler, trace_name(p));
      for (auto& f : c.flows) all.flows.push_back(std::move(f));
    }
    std::vector<unsigned> ds(needed.begin(), needed.end());
    store = FeatureStore::from_corpus(all, ds);
  } else {
    std::vector<LabeledInstance> rows;
    for (const auto& f : a.features) {
      auto part = read_features_file(f);
      rows.insert(rows.end(), std::make_move_iterator(part.begin()),
                  std::make_move_iterator(part.end()));
    }
    store = FeatureStore::from_rows(std::move(rows));
    for (unsigned d : needed) {
      if (!store.has(d)) throw UsageError("feature input has no rows at d=" + std::to_string(d));
    }
  }
  if (store.size() == 0) {
    out << "no labeled flows\n";
    return kExitEmpty;
  }

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  std::string summary;
  if (a.mode == "sweep") {
    auto rows = run_d_sweep(store, cfg.train_d, cfg);
    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    write_file_atomic(dir / "sweep.csv", csv.str());
    summary = format_summary(rows);
  } else if (a.mode == "matrix") {
    auto m = run_threshold_matrix(store, cfg);
    std::ostringstream mean, std_dev;
    write_matrix_csv(mean, m, false);
    write_matrix_csv(std_dev, m, true);
    write_file_atomic(dir / "matrix_mean.csv", mean.str());
    write_file_atomic(dir / "matrix_std.csv", std_dev.str());
    summary = format_summary(m);
  } else {
    auto g = run_generic_vs_dedicated(store, cfg);
    std::ostringstream csv;
    write_generic_csv(csv, g);
    write_file_atomic(dir / "generic.csv", csv.str());
    summary = format_summary(g);
  }
  write_file_atomic(dir / "summary.txt", summary);
  out << summary;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  unsigned services = 5, flows_per_service = 20, archetypes = 1;
  double difficulty = 0;
  std::uint64_t seed = 1;
  std::string out, manifest;
  bool per_archetype = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  if (a.services == 0 || a.flows_per_service == 0 || a.archetypes == 0) {
    throw UsageError("--services, --flows-per-service and --archetypes must be positive");
  }
  if (!(a.difficulty >= 0)) throw UsageError("--difficulty must be >= 0");
  auto specs = make_service_specs(a.services, a.archetypes, a.difficulty, a.seed);

  auto write_trace = [&](const std::vector<SynthServiceSpec>& subset, std::uint64_t seed,
                         const fs::path& pcap, const fs::path& manifest) {
    SynthTrace t = synth_generate(subset, a.flows_per_service, seed);
    std::ostringstream m;
    t.manifest.write(m);
    write_file_atomic(pcap, std::string_view(reinterpret_cast<const char*>(t.pcap.data()),
                                             t.pcap.size()));
    write_file_atomic(manifest, m.str());
    out << pcap.string() << ": " << t.flows << " flows, " << t.packets << " packets\n";
  };

  if (!a.per_archetype) {
    write_trace(specs, a.seed, a.out, a.manifest);
    return kExitOk;
  }
  std::vector<std::string> archetypes;
  for (const auto& s : specs) {
    if (std::find(archetypes.begin(), archetypes.end(), s.archetype) == archetypes.end()) {
      archetypes.push_back(s.archetype);
    }
  }
  for (std::size_t i = 0; i < archetypes.size(); ++i) {
    std::vector<SynthServiceSpec> subset;
    for (const auto& s : specs) {
      if (s.archetype == archetypes[i]) subset.push_back(s);
    }
    auto suffixed = [&](const fs::path& p) {
      fs::path r = p.parent_path() / (p.stem().string() + "-" + archetypes[i]);
      r += p.extension();
      return r;
    };
    write_trace(subset, a.seed + i, suffixed(a.out), suffixed(a.manifest));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string pcap, model, d = "5", port_filter = "443";
  unsigned repeat = 1;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream&) {
  const unsigned d = parse_unsigned(a.d, "--d");
  if (a.repeat == 0) throw UsageError("--repeat must be positive");
  const auto port = parse_port_filter(a.port_filter);
  const DecisionTree tree = load_model(a.model);

  for (unsigned r = 0; r < a.repeat; ++r) {
    std::vector<double> latency_ms;
    std::size_t sink = 0;
    const auto start = std::chrono::steady_clock::now();
    auto source = open_pcap(a.pcap);
    PipelineOptions opts;
    opts.d = d;
    opts.port_filter = port;
    auto stats = run_pipeline(*source, opts, [&](FlowReadyEvent&& ev) {
      const auto t0 = std::chrono::steady_clock::now();
      Prediction p = tree.predict(extract(*ev.flow, d));
      const auto t1 = std::chrono::steady_clock::now();
      sink += p.label.size();
      latency_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    });
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const MeanStd lat = mean_std(latency_ms);
    out << "repeat " << (r + 1) << ": flows " << latency_ms.size() << ", packets "
        << stats.packets << ", latency " << fmt("%.4f", lat.mean) << " +/- "
        << fmt("%.4f", lat.std) << " ms, throughput "
        << fmt("%.0f", seconds > 0 ? static_cast<double>(latency_ms.size()) / seconds : 0.0)
        << " flows/s, peak table " << stats.peak_flows << '\n';
    (void)sink;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Early identification of HTTPS services from flow statistics"};
  app.set_config("--config", "", "Read options from a TOML/INI file; flags override it");
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract", "Pcap -> feature CSV");
  extract_cmd->add_option("--pcap", ex.pcap, "Input capture")->required();
  extract_cmd->add_option("--d", ex.d, "Application data packets per flow (list allowed)")
      ->capture_default_str();
  extract_cmd->add_option("--labels", ex.labels, "sni | manifest:PATH")->capture_default_str();
  extract_cmd->add_option("--port-filter", ex.port_filter, "Server port or 'none'")
      ->capture_default_str();
  extract_cmd->add_option("--trace", ex.trace, "Trace id for meta_trace (default: file stem)");
  extract_cmd->add_option("--out", ex.out, "Output CSV")->required();

  TrainArgs tr;
  auto add_tree = [](CLI::App* cmd, TreeArgs& t) {
    cmd->add_option("--min-leaf", t.min_leaf, "Minimum instances per leaf")->capture_default_str();
    cmd->add_option("--confidence", t.confidence, "Pruning confidence")->capture_default_str();
    cmd->add_flag("--no-prune", t.no_prune, "Disable pessimistic pruning");
  };
  auto* train_cmd = app.add_subcommand("train", "Feature CSV -> model");
  train_cmd->add_option("--features", tr.features, "Feature CSV")->required();
  train_cmd->add_option("--d", tr.d, "Rows to use when the CSV holds several d values");
  train_cmd->add_option("--min-instances", tr.min_instances, "Drop rarer labels")
      ->capture_default_str();
  add_tree(train_cmd, tr.tree);
  train_cmd->add_option("--out", tr.out, "Output model")->required();

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Classify flows");
  predict_cmd->add_option("--pcap", pr.pcap, "Input capture");
  predict_cmd->add_option("--features", pr.features, "Feature CSV");
  predict_cmd->add_option("--model", pr.model, "Model file")->required();
  predict_cmd->add_option("--d", pr.d, "Application data packets per flow")->capture_default_str();
  predict_cmd->add_option("--port-filter", pr.port_filter, "Server port or 'none'")
      ->capture_default_str();
  predict_cmd->add_option("--out", pr.out, "Output CSV")->required();

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Cross-validated experiments");
  eval_cmd->add_option("--pcap", ev.pcaps, "Input capture (repeatable; one partition each)");
  eval_cmd->add_option("--features", ev.features, "Feature CSV (repeatable)");
  eval_cmd->add_option("--mode", ev.mode, "sweep | matrix | generic")->capture_default_str();
  eval_cmd->add_option("--train-d", ev.train_d, "d list, e.g. 1-9 or 1,2,5");
  eval_cmd->add_option("--test-d", ev.test_d, "d list for matrix columns");
  eval_cmd->add_option("--folds", ev.folds, "Cross-validation folds")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "Fold shuffling seed")->capture_default_str();
  eval_cmd->add_option("--min-instances", ev.min_instances, "Drop rarer labels")
      ->capture_default_str();
  eval_cmd->add_flag("--whole-set", ev.whole_set, "Matrix: train and test on all rows");
  eval_cmd->add_option("--labels", ev.labels, "sni | manifest:PATH")->capture_default_str();
  eval_cmd->add_option("--port-filter", ev.port_filter, "Server port or 'none'")
      ->capture_default_str();
  add_tree(eval_cmd, ev.tree);
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic trace");
  synth_cmd->add_option("--services", sy.services, "Number of services")->capture_default_str();
  synth_cmd->add_option("--flows-per-service", sy.flows_per_service, "Flows per service")
      ->capture_default_str();
  synth_cmd->add_option("--archetypes", sy.archetypes, "Client archetypes")->capture_default_str();
  synth_cmd->add_option("--difficulty", sy.difficulty, "Distribution overlap (0 = disjoint)")
      ->capture_default_str();
  synth_cmd->add_option("--seed", sy.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_flag("--per-archetype", sy.per_archetype,
                      "Write one pcap and manifest per archetype");
  synth_cmd->add_option("--out", sy.out, "Output pcap")->required();
  synth_cmd->add_option("--manifest", sy.manifest, "Output manifest")->required();

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Latency and throughput");
  bench_cmd->add_option("--pcap", be.pcap, "Input capture")->required();
  bench_cmd->add_option("--model", be.model, "Model file")->required();
  bench_cmd->add_option("--d", be.d, "Application data packets per flow")->capture_default_str();
  bench_cmd->add_option("--port-filter", be.port_filter, "Server port or 'none'")
      ->capture_default_str();
  bench_cmd->add_option("--repeat", be.repeat, "Repetitions")->capture_default_str();

  std::vector<const char*> argv{"earlyid"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (extract_cmd->parsed()) return cmd_extract(ex, out, err);
    if (train_cmd->parsed()) return cmd_train(tr, out, err);
    if (predict_cmd->parsed()) return cmd_predict(pr, out, err);
    if (eval_cmd->parsed()) return cmd_evaluate(ev, out, err);
    if (synth_cmd->parsed()) return cmd_synth(sy, out, err);
    if (bench_cmd->parsed()) return cmd_bench(be, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

}  // namespace earlyid
