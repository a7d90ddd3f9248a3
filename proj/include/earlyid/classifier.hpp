#pragma once

// C4.5-style decision tree with binary splits: thresholds on numeric
// features, equality tests on categorical ones. Gain-ratio induction,
// pessimistic subtree-replacement pruning, and a line-oriented text format.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "earlyid/features.hpp"

namespace earlyid {

/// Labeled feature vectors with a lexicographically ordered label vocabulary.
/// `targets[i]` indexes `labels` for `instances[i]`.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<LabeledInstance> instances);

  std::size_t size() const { return instances_.size(); }
  bool empty() const { return instances_.empty(); }
  const std::vector<LabeledInstance>& instances() const { return instances_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::span<const std::uint32_t> targets() const { return targets_; }
  std::uint32_t target(std::size_t i) const { return targets_[i]; }
  double value(std::size_t row, std::size_t feature) const {
    return instances_[row].features[feature];
  }
  std::optional<std::uint32_t> label_index(std::string_view label) const;

  /// Labels with at least `min_count` instances, keeping only their rows.
  Dataset filter_min_instances(std::size_t min_count) const;
  std::map<std::string, std::size_t> label_counts() const;

 private:
  std::vector<LabeledInstance> instances_;
  std::vector<std::string> labels_;
  std::vector<std::uint32_t> targets_;
};

class ClassifierError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entropy in bits of a class-count histogram; zero counts are skipped.
/// Throws ClassifierError when the total is zero.
double entropy(std::span<const std::uint64_t> class_counts);
double entropy(const std::map<std::string, std::uint64_t>& class_counts);

enum class SplitKind : std::uint8_t { LessEqual, Equals };

struct SplitTest {
  std::uint8_t feature = 0;
  SplitKind kind = SplitKind::LessEqual;
  double value = 0;

  /// True routes to the left child.
  bool goes_left(const FeatureVector& fv) const {
    return kind == SplitKind::LessEqual ? fv[feature] <= value : fv[feature] == value;
  }
  bool operator==(const SplitTest&) const = default;
};

struct SplitChoice {
  SplitTest test;
  double gain = 0;
  double gain_ratio = 0;
};

/// Relative tolerance under which two gain ratios count as tied.
inline constexpr double kGainTieTolerance = 1e-12;

/// Best qualifying split of `rows` on one feature, or nullopt. Candidates are
/// midpoints between consecutive distinct values (numeric) or Equals(v) for
/// each distinct value (categorical); a candidate qualifies when its gain is
/// positive and both sides hold at least `min_leaf` rows. Ties go to the
/// smaller threshold / code.
std::optional<SplitChoice> best_split(const Dataset& data, std::span<const std::uint32_t> rows,
                                      std::size_t feature, bool categorical, unsigned min_leaf);

struct TrainParams {
  unsigned min_leaf = 2;
  bool prune = true;
  double confidence = 0.25;
  std::set<std::size_t> categorical_features{feature::kServerCipherSuite};
};

struct TreeNode {
  bool leaf = true;
  SplitTest test;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t label = 0;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> class_counts;  // sorted by label index
  std::uint64_t training_errors = 0;

  std::uint64_t total() const;
};

struct Prediction {
  std::string_view label;
  double confidence = 0;
  const TreeNode* leaf = nullptr;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::vector<std::string> labels, std::vector<TreeNode> nodes);

  Prediction predict(const FeatureVector& fv) const;
  std::uint32_t predict_index(const FeatureVector& fv) const;

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const;
  std::size_t depth() const;

 private:
  std::vector<std::string> labels_;
  std::vector<TreeNode> nodes_;  // pre-order, root at 0
};

/// Throws ClassifierError on an empty dataset.
DecisionTree train(const Dataset& data, const TrainParams& params = {});
DecisionTree train(const Dataset& data, std::span<const std::uint32_t> rows,
                   const TrainParams& params = {});

/// Inverse standard normal CDF.
double inverse_normal_cdf(double p);

/// Pessimistic upper bound on a leaf's error rate given `errors` of `n`
/// training cases, at the given confidence level.
double pessimistic_error_rate(double errors, double n, double confidence);

class ModelFormatError : public std::runtime_error {
 public:
  ModelFormatError(std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

std::string serialize(const DecisionTree& tree);
DecisionTree deserialize(std::string_view text);

}  // namespace earlyid
