#include <charconv>
#include <cmath>

#include "earlyid/classifier.hpp"

namespace earlyid {

ModelFormatError::ModelFormatError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error("model line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

namespace {

constexpr std::string_view kMagic = "c45-model v1";

void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

template <typename T>
void append_int(std::string& out, T v) {
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

}  // namespace

std::string serialize(const DecisionTree& tree) {
  std::string out;
  out += kMagic;
  out += " features=";
  append_int(out, kFeatureCount);
  out += " labels=";
  append_int(out, tree.labels().size());
  out += '\n';
  for (std::size_t i = 0; i < tree.labels().size(); ++i) {
    out += "label ";
    append_int(out, i);
    out += ' ';
    out += tree.labels()[i];
    out += '\n';
  }
  const auto& nodes = tree.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    out += "node ";
    append_int(out, i);
    if (n.leaf) {
      out += " leaf label=";
      append_int(out, n.label);
      out += " counts=";
      for (std::size_t k = 0; k < n.class_counts.size(); ++k) {
        if (k) out += ',';
        append_int(out, n.class_counts[k].first);
        out += ':';
        append_int(out, n.class_counts[k].second);
      }
    } else {
      out += " split f=";
      append_int(out, static_cast<unsigned>(n.test.feature));
      out += n.test.kind == SplitKind::LessEqual ? " kind=le" : " kind=eq";
      out += " v=";
      append_double(out, n.test.value);
      out += " l=";
      append_int(out, n.left);
      out += " r=";
      append_int(out, n.right);
    }
    out += '\n';
  }
  return out;
}

namespace {

// Tokenizer over one line; tokens are separated by single spaces.
class LineReader {
 public:
  LineReader(std::string_view line, std::size_t line_no) : line_(line), line_no_(line_no) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ModelFormatError(line_no_, token_col_, what);
  }

  std::string_view token() {
    token_col_ = pos_ + 1;
    if (pos_ >= line_.size()) fail("unexpected end of line");
    std::size_t end = line_.find(' ', pos_);
    if (end == std::string_view::npos) end = line_.size();
    std::string_view t = line_.substr(pos_, end - pos_);
    if (t.empty()) fail("empty token");
    pos_ = end == line_.size() ? end : end + 1;
    if (end + 1 == line_.size()) fail("trailing space");
    return t;
  }

  std::string_view rest() {
    token_col_ = pos_ + 1;
    std::string_view r = line_.substr(std::min(pos_, line_.size()));
    pos_ = line_.size();
    return r;
  }

  void expect(std::string_view literal) {
    if (token() != literal) fail("expected '" + std::string(literal) + "'");
  }

  // Parses "key=<value>" and returns the value part.
  std::string_view field(std::string_view key) {
    std::string_view t = token();
    if (t.size() <= key.size() || t.substr(0, key.size()) != key || t[key.size()] != '=') {
      fail("expected field '" + std::string(key) + "='");
    }
    return t.substr(key.size() + 1);
  }

  template <typename T>
  T integer(std::string_view text) const {
    T v{};
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size()) {
      fail("bad integer '" + std::string(text) + "'");
    }
    return v;
  }

  double real(std::string_view text) const {
    double v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size() || !std::isfinite(v)) {
      fail("bad number '" + std::string(text) + "'");
    }
    return v;
  }

  void finish() const {
    if (pos_ < line_.size()) {
      throw ModelFormatError(line_no_, pos_ + 1, "unexpected trailing content");
    }
  }

 private:
  std::string_view line_;
  std::size_t line_no_;
  std::size_t pos_ = 0;
  std::size_t token_col_ = 1;
};

}  // namespace

DecisionTree deserialize(std::string_view text) {
  std::vector<std::string_view> lines;
  {
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      lines.push_back(text.substr(pos, end - pos));
      pos = end + 1;
    }
  }
  if (lines.empty()) throw ModelFormatError(1, 1, "empty model");

  std::size_t ln = 0;
  auto next_line = [&](const char* what) -> LineReader {
    if (ln >= lines.size()) throw ModelFormatError(ln + 1, 1, std::string("missing ") + what);
    std::string_view l = lines[ln];
    ++ln;
    if (l.empty()) throw ModelFormatError(ln, 1, "blank line");
    return LineReader(l, ln);
  };

  LineReader header = next_line("header");
  header.expect("c45-model");
  header.expect("v1");
  if (header.integer<std::size_t>(header.field("features")) != kFeatureCount) {
    header.fail("feature count must be 36");
  }
  const auto label_count = header.integer<std::size_t>(header.field("labels"));
  if (label_count == 0) header.fail("model needs at least one label");
  header.finish();

  std::vector<std::string> labels;
  std::set<std::string_view> seen_labels;
  for (std::size_t i = 0; i < label_count; ++i) {
    LineReader r = next_line("label line");
    r.expect("label");
    if (r.integer<std::size_t>(r.token()) != i) r.fail("label indices must be consecutive");
    std::string_view name = r.rest();
    if (name.empty()) r.fail("empty label name");
    if (!seen_labels.insert(name).second) r.fail("duplicate label '" + std::string(name) + "'");
    labels.emplace_back(name);
  }

  std::vector<TreeNode> nodes;
  std::vector<std::size_t> node_line;
  while (ln < lines.size()) {
    LineReader r = next_line("node line");
    r.expect("node");
    if (r.integer<std::size_t>(r.token()) != nodes.size()) r.fail("node ids must be consecutive");
    TreeNode n;
    std::string_view kind = r.token();
    if (kind == "split") {
      n.leaf = false;
      auto f = r.integer<unsigned>(r.field("f"));
      if (f >= kFeatureCount) r.fail("feature index out of range");
      n.test.feature = static_cast<std::uint8_t>(f);
      std::string_view k = r.field("kind");
      if (k == "le") {
        n.test.kind = SplitKind::LessEqual;
      } else if (k == "eq") {
        n.test.kind = SplitKind::Equals;
      } else {
        r.fail("split kind must be le or eq");
      }
      n.test.value = r.real(r.field("v"));
      n.left = r.integer<std::uint32_t>(r.field("l"));
      n.right = r.integer<std::uint32_t>(r.field("r"));
    } else if (kind == "leaf") {
      n.label = r.integer<std::uint32_t>(r.field("label"));
      if (n.label >= label_count) r.fail("leaf label index out of range");
      std::string_view counts = r.field("counts");
      std::size_t pos = 0;
      std::uint64_t majority = 0;
      while (pos <= counts.size()) {
        std::size_t end = counts.find(',', pos);
        if (end == std::string_view::npos) end = counts.size();
        std::string_view item = counts.substr(pos, end - pos);
        std::size_t colon = item.find(':');
        if (colon == std::string_view::npos) r.fail("count entry needs idx:n");
        auto idx = r.integer<std::uint32_t>(item.substr(0, colon));
        auto c = r.integer<std::uint64_t>(item.substr(colon + 1));
        if (idx >= label_count) r.fail("count label index out of range");
        if (c == 0) r.fail("zero count");
        if (!n.class_counts.empty() && idx <= n.class_counts.back().first) {
          r.fail("count entries must be sorted by label index");
        }
        n.class_counts.emplace_back(idx, c);
        if (idx == n.label) majority = c;
        pos = end + 1;
      }
      n.training_errors = n.total() - majority;
    } else {
      r.fail("node kind must be split or leaf");
    }
    r.finish();
    nodes.push_back(std::move(n));
    node_line.push_back(ln);
  }
  if (nodes.empty()) throw ModelFormatError(ln + 1, 1, "model has no nodes");

  // The node list must be exactly one pre-order traversal rooted at 0.
  std::vector<std::uint32_t> pending{0};
  std::uint32_t expected = 0;
  while (!pending.empty()) {
    std::uint32_t id = pending.back();
    pending.pop_back();
    if (id != expected || id >= nodes.size()) {
      std::size_t at = id < nodes.size() ? node_line[id] : ln;
      throw ModelFormatError(at, 1, "child references do not form a pre-order tree");
    }
    ++expected;
    if (!nodes[id].leaf) {
      pending.push_back(nodes[id].right);
      pending.push_back(nodes[id].left);
    }
  }
  if (expected != nodes.size()) {
    throw ModelFormatError(node_line[expected], 1, "unreachable node");
  }
  return DecisionTree(std::move(labels), std::move(nodes));
}

}  // namespace earlyid
