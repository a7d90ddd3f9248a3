#pragma once

// Evaluation harness: accuracy, stratified k-fold cross validation, d sweeps,
// train/test threshold matrices and dedicated-vs-pooled model comparisons.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "earlyid/classifier.hpp"
#include "earlyid/pipeline.hpp"

namespace earlyid {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TooFewInstances : public EvalError {
 public:
  TooFewInstances(std::string label, std::size_t count, unsigned folds);
  const std::string& label() const { return label_; }

 private:
  std::string label_;
};

class DisjointLabels : public EvalError {
 public:
  using EvalError::EvalError;
};

/// Fraction of positions where the two lists agree. Throws EvalError on empty
/// or unequal-length input.
double accuracy(std::span<const std::string> predictions, std::span<const std::string> truth);

/// Partitions row indices into k folds so that, per stratum, fold sizes differ
/// by at most one. Deterministic in (strata, k, seed). `names` labels the
/// strata for error messages.
std::vector<std::vector<std::uint32_t>> stratified_folds(std::span<const std::uint32_t> strata,
                                                         unsigned k, std::uint64_t seed,
                                                         std::span<const std::string> names);
std::vector<std::vector<std::uint32_t>> stratified_folds(const Dataset& data, unsigned k,
                                                         std::uint64_t seed);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

struct ExperimentConfig {
  unsigned folds = 10;
  std::uint64_t seed = 1;
  std::size_t min_instances_per_label = 14;
  std::vector<unsigned> train_d{5};
  std::vector<unsigned> test_d{5};
  bool whole_set = false;  // matrix: train on all rows at train_d, test on all rows at test_d
  TrainParams train;
};

/// The same flows with features taken at several d values, rows aligned
/// across d.
class FeatureStore {
 public:
  FeatureStore() = default;

  static FeatureStore from_corpus(const Corpus& corpus, std::span<const unsigned> ds);
  /// Groups rows by meta_d and keeps flows (trace, flow id) present at every d.
  static FeatureStore from_rows(std::vector<LabeledInstance> rows);

  std::size_t size() const { return labels_.size(); }
  const std::vector<unsigned>& ds() const { return ds_; }
  bool has(unsigned d) const;
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& traces() const { return traces_; }
  std::vector<LabeledInstance> instances(unsigned d) const;
  Dataset dataset(unsigned d) const { return Dataset(instances(d)); }

  /// Keeps rows whose label has at least `min_count` rows.
  FeatureStore filter_min_instances(std::size_t min_count) const;
  FeatureStore select(std::span<const std::uint32_t> rows) const;

 private:
  std::vector<unsigned> ds_;
  std::vector<std::string> labels_;
  std::vector<std::string> traces_;
  std::vector<std::string> flow_ids_;
  std::vector<std::uint32_t> appdata_;
  std::map<unsigned, std::vector<FeatureVector>> features_;
};

struct DSweepRow {
  unsigned d = 0;
  MeanStd accuracy;
  std::size_t instances = 0;
  std::size_t labels = 0;
};

/// Plain k-fold accuracy at each d (training and testing at the same d).
std::vector<DSweepRow> run_d_sweep(const FeatureStore& store, std::span<const unsigned> ds,
                                   const ExperimentConfig& cfg);

struct ResultMatrix {
  std::vector<unsigned> train_d;
  std::vector<unsigned> test_d;
  std::vector<std::vector<std::optional<MeanStd>>> cells;  // [train][test]; empty = not computed

  std::optional<MeanStd> cell(unsigned train, unsigned test) const;
};

/// Cross validation over shared folds: for each fold a model is trained on
/// features at train_d and scored on the held-out rows at every test_d. In
/// whole-set mode the diagonal is left empty.
ResultMatrix run_threshold_matrix(const FeatureStore& store, const ExperimentConfig& cfg);

struct GenericComparison {
  std::vector<std::string> partitions;
  std::vector<std::string> shared_labels;
  unsigned d = 0;
  /// dedicated[i][j]: model of partition i scored on partition j
  /// (cross validation on the diagonal, whole-partition otherwise).
  std::vector<std::vector<MeanStd>> dedicated;
  /// pooled[j]: cross-validated pooled model scored on partition j's rows.
  std::vector<MeanStd> pooled;
  MeanStd pooled_overall;
};

/// Partitions are the distinct trace ids. Uses cfg.train_d.front() as d.
GenericComparison run_generic_vs_dedicated(const FeatureStore& store, const ExperimentConfig& cfg);

void write_matrix_csv(std::ostream& out, const ResultMatrix& m, bool std_dev);
void write_sweep_csv(std::ostream& out, std::span<const DSweepRow> rows);
void write_generic_csv(std::ostream& out, const GenericComparison& g);
std::string format_summary(const ResultMatrix& m);
std::string format_summary(std::span<const DSweepRow> rows);
std::string format_summary(const GenericComparison& g);

}  // namespace earlyid
