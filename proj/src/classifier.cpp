#include "earlyid/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace earlyid {

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<LabeledInstance> instances) : instances_(std::move(instances)) {
  std::set<std::string> vocab;
  for (const auto& inst : instances_) vocab.insert(inst.label);
  labels_.assign(vocab.begin(), vocab.end());
  targets_.reserve(instances_.size());
  for (const auto& inst : instances_) targets_.push_back(*label_index(inst.label));
}

std::optional<std::uint32_t> Dataset::label_index(std::string_view label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) return std::nullopt;
  return static_cast<std::uint32_t>(it - labels_.begin());
}

std::map<std::string, std::size_t> Dataset::label_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& inst : instances_) ++out[inst.label];
  return out;
}

Dataset Dataset::filter_min_instances(std::size_t min_count) const {
  auto counts = label_counts();
  std::vector<LabeledInstance> kept;
  for (const auto& inst : instances_) {
    if (counts[inst.label] >= min_count) kept.push_back(inst);
  }
  return Dataset(std::move(kept));
}

// ---------------------------------------------------------------------------
// Split scoring

double entropy(std::span<const std::uint64_t> class_counts) {
  std::uint64_t total = 0;
  for (auto c : class_counts) total += c;
  if (total == 0) throw ClassifierError("entropy of empty class counts");
  const double n = static_cast<double>(total);
  double h = 0;
  for (auto c : class_counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

double entropy(const std::map<std::string, std::uint64_t>& class_counts) {
  std::vector<std::uint64_t> counts;
  counts.reserve(class_counts.size());
  for (const auto& [label, c] : class_counts) counts.push_back(c);
  return entropy(counts);
}

namespace {

constexpr double kMinGain = 1e-12;

// Class histogram restricted to the classes present at a node.
struct NodeClasses {
  std::vector<std::uint32_t> local_of;  // global label -> local slot
  std::vector<std::uint64_t> parent;    // per local slot
  std::uint64_t n = 0;
};

NodeClasses node_classes(const Dataset& data, std::span<const std::uint32_t> rows) {
  NodeClasses nc;
  nc.local_of.assign(data.labels().size(), UINT32_MAX);
  std::vector<std::uint32_t> present;
  for (auto r : rows) {
    auto t = data.target(r);
    if (nc.local_of[t] == UINT32_MAX) {
      nc.local_of[t] = 0;
      present.push_back(t);
    }
  }
  std::sort(present.begin(), present.end());
  for (std::size_t i = 0; i < present.size(); ++i) {
    nc.local_of[present[i]] = static_cast<std::uint32_t>(i);
  }
  nc.parent.assign(present.size(), 0);
  for (auto r : rows) ++nc.parent[nc.local_of[data.target(r)]];
  nc.n = rows.size();
  return nc;
}

double entropy_of(std::span<const std::uint64_t> counts, std::uint64_t total) {
  const double n = static_cast<double>(total);
  double h = 0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

struct Score {
  double gain = 0;
  double ratio = 0;
};

Score score_split(double parent_entropy, std::span<const std::uint64_t> left,
                  std::span<const std::uint64_t> parent, std::uint64_t n_left, std::uint64_t n,
                  std::vector<std::uint64_t>& right_scratch) {
  right_scratch.resize(parent.size());
  for (std::size_t i = 0; i < parent.size(); ++i) right_scratch[i] = parent[i] - left[i];
  const std::uint64_t n_right = n - n_left;
  const double wl = static_cast<double>(n_left) / static_cast<double>(n);
  const double wr = static_cast<double>(n_right) / static_cast<double>(n);
  Score s;
  s.gain = parent_entropy - wl * entropy_of(left, n_left) - wr * entropy_of(right_scratch, n_right);
  const double split_info = -wl * std::log2(wl) - wr * std::log2(wr);
  s.ratio = split_info > 0 ? s.gain / split_info : 0;
  return s;
}

bool clearly_better(double candidate, double incumbent) {
  return candidate > incumbent + kGainTieTolerance * std::max(1.0, std::fabs(incumbent));
}

// Midpoint strictly inside [lo, hi) so that lo goes left and hi goes right.
double midpoint(double lo, double hi) {
  double mid = lo + (hi - lo) / 2;
  if (!(mid >= lo && mid < hi)) mid = lo;
  return mid;
}

}  // namespace

std::optional<SplitChoice> best_split(const Dataset& data, std::span<const std::uint32_t> rows,
                                      std::size_t feature, bool categorical, unsigned min_leaf) {
  if (rows.size() < 2 || feature >= kFeatureCount) return std::nullopt;
  NodeClasses nc = node_classes(data, rows);
  if (nc.parent.size() < 2) return std::nullopt;
  const double parent_h = entropy_of(nc.parent, nc.n);
  const std::uint64_t min_side = std::max(1u, min_leaf);

  struct Item {
    double value;
    std::uint32_t local;
  };
  std::vector<Item> items;
  items.reserve(rows.size());
  for (auto r : rows) items.push_back({data.value(r, feature), nc.local_of[data.target(r)]});
  std::sort(items.begin(), items.end(), [](const Item& x, const Item& y) {
    return x.value < y.value || (x.value == y.value && x.local < y.local);
  });

  std::optional<SplitChoice> best;
  std::vector<std::uint64_t> left(nc.parent.size(), 0);
  std::vector<std::uint64_t> scratch;

  auto consider = [&](SplitTest test, std::uint64_t n_left) {
    if (n_left < min_side || nc.n - n_left < min_side) return;
    Score s = score_split(parent_h, left, nc.parent, n_left, nc.n, scratch);
    if (!(s.gain > kMinGain)) return;
    if (!best || clearly_better(s.ratio, best->gain_ratio)) {
      best = SplitChoice{test, s.gain, s.ratio};
    }
  };

  const auto f = static_cast<std::uint8_t>(feature);
  if (!categorical) {
    std::uint64_t n_left = 0;
    for (std::size_t i = 0; i + 1 < items.size(); ++i) {
      ++left[items[i].local];
      ++n_left;
      if (items[i].value == items[i + 1].value) continue;
      consider({f, SplitKind::LessEqual, midpoint(items[i].value, items[i + 1].value)}, n_left);
    }
  } else {
    std::size_t i = 0;
    while (i < items.size()) {
      std::fill(left.begin(), left.end(), 0);
      std::size_t j = i;
      while (j < items.size() && items[j].value == items[i].value) ++left[items[j++].local];
      consider({f, SplitKind::Equals, items[i].value}, j - i);
      i = j;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Pessimistic error estimate

double inverse_normal_cdf(double p) {
  if (!(p > 0 && p < 1)) throw ClassifierError("inverse_normal_cdf needs p in (0,1)");
  // Acklam's rational approximation followed by one Halley refinement step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

double pessimistic_error_rate(double errors, double n, double confidence) {
  if (n <= 0) return 0;
  const double z = inverse_normal_cdf(1 - confidence);
  const double f = errors / n;
  const double z2 = z * z;
  const double radicand = std::max(0.0, f / n - f * f / n + z2 / (4 * n * n));
  return (f + z2 / (2 * n) + z * std::sqrt(radicand)) / (1 + z2 / n);
}

// ---------------------------------------------------------------------------
// Induction

std::uint64_t TreeNode::total() const {
  std::uint64_t t = 0;
  for (const auto& [label, c] : class_counts) t += c;
  return t;
}

namespace {

struct BuildNode {
  bool leaf = true;
  SplitTest test;
  std::unique_ptr<BuildNode> left;
  std::unique_ptr<BuildNode> right;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> counts;
  std::uint64_t n = 0;
  std::uint32_t label = 0;
  std::uint64_t errors = 0;
};

class Builder {
 public:
  Builder(const Dataset& data, const TrainParams& params) : data_(data), params_(params) {}

  std::unique_ptr<BuildNode> build(std::vector<std::uint32_t> rows) {
    auto node = std::make_unique<BuildNode>();
    std::map<std::uint32_t, std::uint64_t> hist;
    for (auto r : rows) ++hist[data_.target(r)];
    node->counts.assign(hist.begin(), hist.end());
    node->n = rows.size();
    std::uint64_t best = 0;
    for (const auto& [label, c] : node->counts) {
      if (c > best) {  // strict: ties keep the smaller label index
        best = c;
        node->label = label;
      }
    }
    node->errors = node->n - best;

    const std::uint64_t min_leaf = std::max(1u, params_.min_leaf);
    if (node->counts.size() < 2 || node->n < 2 * min_leaf) return node;

    std::optional<SplitChoice> chosen;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const bool categorical = params_.categorical_features.count(f) > 0;
      auto s = best_split(data_, rows, f, categorical, params_.min_leaf);
      if (s && (!chosen || clearly_better(s->gain_ratio, chosen->gain_ratio))) chosen = s;
    }
    if (!chosen) return node;

    std::vector<std::uint32_t> left_rows, right_rows;
    for (auto r : rows) {
      (chosen->test.goes_left(data_.instances()[r].features) ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    node->leaf = false;
    node->test = chosen->test;
    node->left = build(std::move(left_rows));
    node->right = build(std::move(right_rows));
    return node;
  }

  // Returns the pessimistic error estimate of the (possibly collapsed) subtree.
  double prune(BuildNode& node) {
    const double as_leaf =
        static_cast<double>(node.n) *
        pessimistic_error_rate(static_cast<double>(node.errors), static_cast<double>(node.n),
                               params_.confidence);
    if (node.leaf) return as_leaf;
    const double subtree = prune(*node.left) + prune(*node.right);
    if (as_leaf <= subtree) {
      node.leaf = true;
      node.left.reset();
      node.right.reset();
      return as_leaf;
    }
    return subtree;
  }

 private:
  const Dataset& data_;
  const TrainParams& params_;
};

std::uint32_t flatten(BuildNode& node, std::vector<TreeNode>& out) {
  const auto id = static_cast<std::uint32_t>(out.size());
  out.emplace_back();
  {
    TreeNode& t = out.back();
    t.leaf = node.leaf;
    t.label = node.label;
    t.class_counts = std::move(node.counts);
    t.training_errors = node.errors;
    if (!node.leaf) t.test = node.test;
  }
  if (!node.leaf) {
    const std::uint32_t l = flatten(*node.left, out);
    const std::uint32_t r = flatten(*node.right, out);
    out[id].left = l;
    out[id].right = r;
  }
  return id;
}

}  // namespace

DecisionTree train(const Dataset& data, std::span<const std::uint32_t> rows,
                   const TrainParams& params) {
  if (rows.empty()) throw ClassifierError("cannot train on an empty dataset");
  if (!(params.confidence > 0 && params.confidence < 1)) {
    throw ClassifierError("confidence must be in (0,1)");
  }
  Builder builder(data, params);
  auto root = builder.build(std::vector<std::uint32_t>(rows.begin(), rows.end()));
  if (params.prune) builder.prune(*root);
  std::vector<TreeNode> nodes;
  flatten(*root, nodes);
  return DecisionTree(data.labels(), std::move(nodes));
}

DecisionTree train(const Dataset& data, const TrainParams& params) {
  std::vector<std::uint32_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0u);
  return train(data, rows, params);
}

// ---------------------------------------------------------------------------
// Tree

DecisionTree::DecisionTree(std::vector<std::string> labels, std::vector<TreeNode> nodes)
    : labels_(std::move(labels)), nodes_(std::move(nodes)) {}

std::uint32_t DecisionTree::predict_index(const FeatureVector& fv) const {
  std::uint32_t i = 0;
  while (!nodes_[i].leaf) i = nodes_[i].test.goes_left(fv) ? nodes_[i].left : nodes_[i].right;
  return i;
}

Prediction DecisionTree::predict(const FeatureVector& fv) const {
  if (nodes_.empty()) throw ClassifierError("predict on an empty tree");
  const TreeNode& leaf = nodes_[predict_index(fv)];
  const std::uint64_t total = leaf.total();
  std::uint64_t majority = 0;
  for (const auto& [label, c] : leaf.class_counts) majority = std::max(majority, c);
  return {labels_[leaf.label],
          total ? static_cast<double>(majority) / static_cast<double>(total) : 0.0, &leaf};
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.leaf; }));
}

std::size_t DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::size_t> depth_of(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {  // pre-order: parents precede children
    deepest = std::max(deepest, depth_of[i]);
    if (!nodes_[i].leaf) {
      depth_of[nodes_[i].left] = depth_of[i] + 1;
      depth_of[nodes_[i].right] = depth_of[i] + 1;
    }
  }
  return deepest;
}

}  // namespace earlyid
