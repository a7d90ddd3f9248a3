#include "earlyid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "earlyid/rng.hpp"

namespace earlyid {

TooFewInstances::TooFewInstances(std::string label, std::size_t count, unsigned folds)
    : EvalError("label '" + label + "' has " + std::to_string(count) + " instances, fewer than " +
                std::to_string(folds) + " folds"),
      label_(std::move(label)) {}

double accuracy(std::span<const std::string> predictions, std::span<const std::string> truth) {
  if (predictions.size() != truth.size()) throw EvalError("prediction/truth length mismatch");
  if (predictions.empty()) throw EvalError("accuracy of an empty list");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<std::vector<std::uint32_t>> stratified_folds(std::span<const std::uint32_t> strata,
                                                         unsigned k, std::uint64_t seed,
                                                         std::span<const std::string> names) {
  if (k < 2) throw EvalError("need at least 2 folds");
  std::map<std::uint32_t, std::vector<std::uint32_t>> members;
  for (std::uint32_t i = 0; i < strata.size(); ++i) members[strata[i]].push_back(i);
  for (const auto& [s, rows] : members) {
    if (rows.size() < k) {
      throw TooFewInstances(s < names.size() ? names[s] : std::to_string(s), rows.size(), k);
    }
  }
  Rng rng(seed);
  std::vector<std::vector<std::uint32_t>> folds(k);
  std::size_t offset = 0;  // keeps overall fold sizes balanced across strata
  for (auto& [s, rows] : members) {
    rng.shuffle(std::span<std::uint32_t>(rows));
    for (std::size_t i = 0; i < rows.size(); ++i) folds[(offset + i) % k].push_back(rows[i]);
    offset = (offset + rows.size()) % k;
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::vector<std::uint32_t>> stratified_folds(const Dataset& data, unsigned k,
                                                         std::uint64_t seed) {
  return stratified_folds(data.targets(), k, seed, data.labels());
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(sq / (n - 1));
  }
  return r;
}

// ---------------------------------------------------------------------------
// FeatureStore

bool FeatureStore::has(unsigned d) const { return features_.count(d) > 0; }

FeatureStore FeatureStore::from_corpus(const Corpus& corpus, std::span<const unsigned> ds) {
  FeatureStore s;
  std::set<unsigned> unique(ds.begin(), ds.end());
  s.ds_.assign(unique.begin(), unique.end());
  for (const CorpusFlow& f : corpus.flows) {
    s.labels_.push_back(f.label);
    s.traces_.push_back(f.trace);
    s.flow_ids_.push_back(f.flow->flow_id());
    s.appdata_.push_back(static_cast<std::uint32_t>(f.flow->appdata_pkts.size()));
  }
  for (unsigned d : s.ds_) {
    auto& column = s.features_[d];
    column.reserve(corpus.flows.size());
    for (const CorpusFlow& f : corpus.flows) column.push_back(extract(*f.flow, d));
  }
  return s;
}

FeatureStore FeatureStore::from_rows(std::vector<LabeledInstance> rows) {
  FeatureStore s;
  std::set<unsigned> unique;
  for (const auto& r : rows) unique.insert(r.meta.d);
  s.ds_.assign(unique.begin(), unique.end());

  // Flow identity across d: (trace, flow id); first-seen order is kept.
  using Key = std::pair<std::string, std::string>;
  std::map<Key, std::size_t> slot;
  std::vector<Key> order;
  std::vector<std::map<unsigned, std::size_t>> at;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Key key{rows[i].meta.trace, rows[i].meta.flow};
    if (key.second.empty()) key.second = "#" + std::to_string(i);  // anonymous rows stand alone
    auto [it, inserted] = slot.emplace(key, order.size());
    if (inserted) {
      order.push_back(key);
      at.emplace_back();
    }
    at[it->second][rows[i].meta.d] = i;
  }
  for (std::size_t f = 0; f < order.size(); ++f) {
    if (at[f].size() != s.ds_.size()) continue;
    const LabeledInstance& first = rows[at[f].begin()->second];
    bool consistent = true;
    for (const auto& [d, i] : at[f]) consistent = consistent && rows[i].label == first.label;
    if (!consistent) throw EvalError("flow " + order[f].second + " has conflicting labels");
    s.labels_.push_back(first.label);
    s.traces_.push_back(first.meta.trace);
    s.flow_ids_.push_back(first.meta.flow);
    s.appdata_.push_back(first.meta.appdata_available);
    for (const auto& [d, i] : at[f]) s.features_[d].push_back(rows[i].features);
  }
  return s;
}

std::vector<LabeledInstance> FeatureStore::instances(unsigned d) const {
  auto it = features_.find(d);
  if (it == features_.end()) throw EvalError("no features at d=" + std::to_string(d));
  std::vector<LabeledInstance> out(size());
  for (std::size_t i = 0; i < size(); ++i) {
    out[i].features = it->second[i];
    out[i].label = labels_[i];
    out[i].meta = {flow_ids_[i], traces_[i], appdata_[i], d};
  }
  return out;
}

FeatureStore FeatureStore::select(std::span<const std::uint32_t> rows) const {
  FeatureStore s;
  s.ds_ = ds_;
  for (auto r : rows) {
    s.labels_.push_back(labels_[r]);
    s.traces_.push_back(traces_[r]);
    s.flow_ids_.push_back(flow_ids_[r]);
    s.appdata_.push_back(appdata_[r]);
  }
  for (const auto& [d, column] : features_) {
    auto& out = s.features_[d];
    for (auto r : rows) out.push_back(column[r]);
  }
  return s;
}

FeatureStore FeatureStore::filter_min_instances(std::size_t min_count) const {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels_) ++counts[l];
  std::vector<std::uint32_t> keep;
  for (std::uint32_t i = 0; i < size(); ++i) {
    if (counts[labels_[i]] >= min_count) keep.push_back(i);
  }
  return select(keep);
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

FeatureStore prepared(const FeatureStore& store, const ExperimentConfig& cfg) {
  FeatureStore s = store.filter_min_instances(cfg.min_instances_per_label);
  if (s.size() == 0) throw EvalError("no label has enough instances");
  return s;
}

double score(const DecisionTree& tree, const std::vector<std::uint32_t>& targets,
             const std::vector<FeatureVector>& features, std::span<const std::uint32_t> rows) {
  if (rows.empty()) throw EvalError("empty test split");
  std::size_t hits = 0;
  for (auto r : rows) {
    const TreeNode& leaf = tree.nodes()[tree.predict_index(features[r])];
    hits += leaf.label == targets[r];
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

std::vector<std::uint32_t> complement(const std::vector<std::uint32_t>& fold, std::size_t n) {
  std::vector<std::uint32_t> out;
  out.reserve(n - fold.size());
  std::size_t j = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (j < fold.size() && fold[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

// Label indices are shared across d because every d holds the same rows.
struct DColumns {
  std::map<unsigned, Dataset> data;
  std::map<unsigned, std::vector<FeatureVector>> features;
  std::vector<std::uint32_t> targets;
};

DColumns columns(const FeatureStore& s, const std::set<unsigned>& ds) {
  DColumns c;
  for (unsigned d : ds) {
    Dataset data = s.dataset(d);
    std::vector<FeatureVector> fv;
    fv.reserve(data.size());
    for (const auto& inst : data.instances()) fv.push_back(inst.features);
    if (c.targets.empty()) c.targets.assign(data.targets().begin(), data.targets().end());
    c.features.emplace(d, std::move(fv));
    c.data.emplace(d, std::move(data));
  }
  return c;
}

}  // namespace

std::vector<DSweepRow> run_d_sweep(const FeatureStore& store, std::span<const unsigned> ds,
                                   const ExperimentConfig& cfg) {
  FeatureStore s = prepared(store, cfg);
  std::set<unsigned> wanted(ds.begin(), ds.end());
  DColumns c = columns(s, wanted);
  const Dataset& any = c.data.begin()->second;
  auto folds = stratified_folds(any, cfg.folds, cfg.seed);

  std::vector<DSweepRow> out;
  for (unsigned d : ds) {
    std::vector<double> per_fold;
    for (const auto& fold : folds) {
      auto tree = train(c.data.at(d), complement(fold, s.size()), cfg.train);
      per_fold.push_back(score(tree, c.targets, c.features.at(d), fold));
    }
    out.push_back({d, mean_std(per_fold), s.size(), any.labels().size()});
  }
  return out;
}

std::optional<MeanStd> ResultMatrix::cell(unsigned train, unsigned test) const {
  auto r = std::find(train_d.begin(), train_d.end(), train);
  auto c = std::find(test_d.begin(), test_d.end(), test);
  if (r == train_d.end() || c == test_d.end()) return std::nullopt;
  return cells[r - train_d.begin()][c - test_d.begin()];
}

ResultMatrix run_threshold_matrix(const FeatureStore& store, const ExperimentConfig& cfg) {
  if (cfg.train_d.empty() || cfg.test_d.empty()) throw EvalError("empty d list");
  FeatureStore s = prepared(store, cfg);
  std::set<unsigned> wanted(cfg.train_d.begin(), cfg.train_d.end());
  wanted.insert(cfg.test_d.begin(), cfg.test_d.end());
  DColumns c = columns(s, wanted);

  ResultMatrix m;
  m.train_d = cfg.train_d;
  m.test_d = cfg.test_d;
  m.cells.assign(m.train_d.size(), std::vector<std::optional<MeanStd>>(m.test_d.size()));

  if (cfg.whole_set) {
    std::vector<std::uint32_t> all(s.size());
    std::iota(all.begin(), all.end(), 0u);
    for (std::size_t r = 0; r < m.train_d.size(); ++r) {
      auto tree = train(c.data.at(m.train_d[r]), all, cfg.train);
      for (std::size_t k = 0; k < m.test_d.size(); ++k) {
        if (m.test_d[k] == m.train_d[r]) continue;
        m.cells[r][k] = MeanStd{score(tree, c.targets, c.features.at(m.test_d[k]), all), 0.0};
      }
    }
    return m;
  }

  auto folds = stratified_folds(c.data.begin()->second, cfg.folds, cfg.seed);
  for (std::size_t r = 0; r < m.train_d.size(); ++r) {
    std::vector<std::vector<double>> per_fold(m.test_d.size());
    for (const auto& fold : folds) {
      auto tree = train(c.data.at(m.train_d[r]), complement(fold, s.size()), cfg.train);
      for (std::size_t k = 0; k < m.test_d.size(); ++k) {
        per_fold[k].push_back(score(tree, c.targets, c.features.at(m.test_d[k]), fold));
      }
    }
    for (std::size_t k = 0; k < m.test_d.size(); ++k) m.cells[r][k] = mean_std(per_fold[k]);
  }
  return m;
}

GenericComparison run_generic_vs_dedicated(const FeatureStore& store,
                                           const ExperimentConfig& cfg) {
  if (cfg.train_d.empty()) throw EvalError("empty d list");
  GenericComparison g;
  g.d = cfg.train_d.front();

  std::set<std::string> parts(store.traces().begin(), store.traces().end());
  if (parts.size() < 2) throw EvalError("need at least two partitions (distinct traces)");
  g.partitions.assign(parts.begin(), parts.end());
  const std::size_t P = g.partitions.size();
  auto part_of = [&](const std::string& trace) {
    return static_cast<std::size_t>(
        std::lower_bound(g.partitions.begin(), g.partitions.end(), trace) - g.partitions.begin());
  };

  // Labels present in every partition with enough instances in each.
  std::map<std::string, std::vector<std::size_t>> counts;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& v = counts[store.labels()[i]];
    v.resize(P, 0);
    ++v[part_of(store.traces()[i])];
  }
  std::set<std::string> shared;
  bool any_common = false;
  for (const auto& [label, per_part] : counts) {
    bool everywhere = std::all_of(per_part.begin(), per_part.end(), [](auto n) { return n > 0; });
    any_common = any_common || everywhere;
    bool enough = std::all_of(per_part.begin(), per_part.end(),
                              [&](auto n) { return n >= cfg.min_instances_per_label; });
    if (everywhere && enough) shared.insert(label);
  }
  if (!any_common) throw DisjointLabels("partitions share no labels");
  if (shared.empty()) throw EvalError("no shared label has enough instances in every partition");
  g.shared_labels.assign(shared.begin(), shared.end());

  std::vector<std::uint32_t> keep;
  for (std::uint32_t i = 0; i < store.size(); ++i) {
    if (shared.count(store.labels()[i])) keep.push_back(i);
  }
  FeatureStore s = store.select(keep);
  DColumns c = columns(s, {g.d});
  const Dataset& data = c.data.at(g.d);
  const auto& fv = c.features.at(g.d);

  std::vector<std::vector<std::uint32_t>> rows_of(P);
  std::vector<std::size_t> part(s.size());
  for (std::uint32_t i = 0; i < s.size(); ++i) {
    part[i] = part_of(s.traces()[i]);
    rows_of[part[i]].push_back(i);
  }

  g.dedicated.assign(P, std::vector<MeanStd>(P));
  for (std::size_t p = 0; p < P; ++p) {
    const auto& own = rows_of[p];
    std::vector<std::uint32_t> own_targets;
    for (auto r : own) own_targets.push_back(c.targets[r]);
    auto folds = stratified_folds(own_targets, cfg.folds, cfg.seed, data.labels());
    std::vector<double> per_fold;
    for (const auto& fold : folds) {
      std::vector<std::uint32_t> test, training;
      for (auto i : fold) test.push_back(own[i]);
      for (auto i : complement(fold, own.size())) training.push_back(own[i]);
      per_fold.push_back(score(train(data, training, cfg.train), c.targets, fv, test));
    }
    g.dedicated[p][p] = mean_std(per_fold);

    auto whole = train(data, own, cfg.train);
    for (std::size_t q = 0; q < P; ++q) {
      if (q != p) g.dedicated[p][q] = MeanStd{score(whole, c.targets, fv, rows_of[q]), 0.0};
    }
  }

  // Pooled model: folds stratified by (label, partition).
  std::vector<std::uint32_t> strata(s.size());
  std::vector<std::string> strata_names;
  for (std::uint32_t i = 0; i < s.size(); ++i) {
    strata[i] = static_cast<std::uint32_t>(c.targets[i] * P + part[i]);
  }
  for (const auto& label : data.labels()) {
    for (const auto& p : g.partitions) strata_names.push_back(label + "@" + p);
  }
  auto folds = stratified_folds(strata, cfg.folds, cfg.seed, strata_names);
  std::vector<std::vector<double>> per_part(P);
  std::vector<double> overall;
  for (const auto& fold : folds) {
    auto tree = train(data, complement(fold, s.size()), cfg.train);
    std::vector<std::vector<std::uint32_t>> test_of(P);
    for (auto r : fold) test_of[part[r]].push_back(r);
    for (std::size_t q = 0; q < P; ++q) {
      per_part[q].push_back(score(tree, c.targets, fv, test_of[q]));
    }
    overall.push_back(score(tree, c.targets, fv, fold));
  }
  for (std::size_t q = 0; q < P; ++q) g.pooled.push_back(mean_std(per_part[q]));
  g.pooled_overall = mean_std(overall);
  return g;
}

// ---------------------------------------------------------------------------
// Reporting

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string pct(const MeanStd& m) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f%% +/- %.2f", 100 * m.mean, 100 * m.std);
  return buf;
}

}  // namespace

void write_matrix_csv(std::ostream& out, const ResultMatrix& m, bool std_dev) {
  out << "train_d";
  for (unsigned d : m.test_d) out << ",test_d=" << d;
  out << '\n';
  for (std::size_t r = 0; r < m.train_d.size(); ++r) {
    out << m.train_d[r];
    for (const auto& cell : m.cells[r]) {
      out << ',';
      if (cell) out << fmt(std_dev ? cell->std : cell->mean);
    }
    out << '\n';
  }
}

void write_sweep_csv(std::ostream& out, std::span<const DSweepRow> rows) {
  out << "d,accuracy_mean,accuracy_std,instances,labels\n";
  for (const auto& r : rows) {
    out << r.d << ',' << fmt(r.accuracy.mean) << ',' << fmt(r.accuracy.std) << ',' << r.instances
        << ',' << r.labels << '\n';
  }
}

void write_generic_csv(std::ostream& out, const GenericComparison& g) {
  out << "model";
  for (const auto& p : g.partitions) out << ",mean:" << p << ",std:" << p;
  out << '\n';
  for (std::size_t i = 0; i < g.partitions.size(); ++i) {
    out << "dedicated:" << g.partitions[i];
    for (const auto& cell : g.dedicated[i]) out << ',' << fmt(cell.mean) << ',' << fmt(cell.std);
    out << '\n';
  }
  out << "pooled";
  for (const auto& cell : g.pooled) out << ',' << fmt(cell.mean) << ',' << fmt(cell.std);
  out << '\n';
}

std::string format_summary(const ResultMatrix& m) {
  std::ostringstream out;
  out << "threshold matrix (rows train_d, cols test_d)\n";
  for (std::size_t r = 0; r < m.train_d.size(); ++r) {
    for (std::size_t k = 0; k < m.test_d.size(); ++k) {
      out << "  train_d=" << m.train_d[r] << " test_d=" << m.test_d[k] << ": ";
      out << (m.cells[r][k] ? pct(*m.cells[r][k]) : std::string("-")) << '\n';
    }
  }
  return out.str();
}

std::string format_summary(std::span<const DSweepRow> rows) {
  std::ostringstream out;
  out << "d sweep\n";
  for (const auto& r : rows) {
    out << "  d=" << r.d << ": " << pct(r.accuracy) << " (" << r.instances << " flows, "
        << r.labels << " labels)\n";
  }
  return out.str();
}

std::string format_summary(const GenericComparison& g) {
  std::ostringstream out;
  out << "generic vs dedicated at d=" << g.d << " over " << g.shared_labels.size()
      << " shared labels\n";
  for (std::size_t i = 0; i < g.partitions.size(); ++i) {
    for (std::size_t j = 0; j < g.partitions.size(); ++j) {
      out << "  dedicated " << g.partitions[i] << " on " << g.partitions[j] << ": "
          << pct(g.dedicated[i][j]) << '\n';
    }
  }
  for (std::size_t j = 0; j < g.partitions.size(); ++j) {
    out << "  pooled on " << g.partitions[j] << ": " << pct(g.pooled[j]) << '\n';
  }
  out << "  pooled overall: " << pct(g.pooled_overall) << '\n';
  return out.str();
}

}  // namespace earlyid
